#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <vector>

namespace rplgmr {

/// Per-pixel integer label map. Label 0 marks outlier/unlabeled pixels;
/// positive labels are planar regions. Optionally carries the fitted plane
/// for each label, expressed in (u, v, s/Z) space as n . p = offset.
struct Segmentation {
  int width = 0;
  int height = 0;
  std::vector<int32_t> labels;  // row-major, size width*height

  struct Plane {
    Eigen::Vector3d normal = Eigen::Vector3d::Zero();  // unit length
    double offset = 0.0;
  };
  std::map<int32_t, Plane> planes;

  int32_t label_at(int u, int v) const { return labels[static_cast<size_t>(v) * width + u]; }
  int32_t& label_at(int u, int v) { return labels[static_cast<size_t>(v) * width + u]; }
};

}  // namespace rplgmr
