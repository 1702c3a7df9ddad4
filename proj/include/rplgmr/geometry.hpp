#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "rplgmr/error.hpp"
#include "rplgmr/segmentation.hpp"

namespace rplgmr {

/// Dense depth image in sensor units. A pixel is valid only if it carries a
/// finite, strictly positive depth; zero-return / dropout pixels are invalid.
struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<double> depth;   // row-major, size width*height
  std::vector<uint8_t> valid;  // row-major, 1 = usable return

  DepthImage() = default;
  DepthImage(int w, int h)
      : width(w), height(h),
        depth(static_cast<size_t>(w) * h, 0.0),
        valid(static_cast<size_t>(w) * h, 0) {}

  size_t size() const { return depth.size(); }
  double depth_at(int u, int v) const { return depth[static_cast<size_t>(v) * width + u]; }
  bool valid_at(int u, int v) const { return valid[static_cast<size_t>(v) * width + u] != 0; }

  /// Marks (u,v) valid with the given depth; non-finite or non-positive
  /// depths mark the pixel invalid instead.
  void set(int u, int v, double d);
};

/// Scaled inverse-depth samples: one (x, y) pair per valid pixel with
/// x = (column, row) and y = s / Z.
struct SampleSet {
  int width = 0;   // source image dims; origin indices are row-major in these
  int height = 0;
  double s = 0.0;  // the scale factor actually applied
  std::vector<Eigen::Vector2d> x;
  std::vector<double> y;
  std::vector<int32_t> origin;  // per-sample source pixel index v*width + u

  size_t size() const { return y.size(); }

  /// Inverse map pixel index -> sample index, -1 where no sample exists.
  std::vector<int32_t> pixel_to_sample() const;
};

/// Test scene: planes defined directly in response space, so the plane
/// z-value at (u,v) is the ideal s/Z response the pipeline should recover.
struct SyntheticScene {
  struct Plane {
    Eigen::Vector3d normal = Eigen::Vector3d(0, 0, 1);  // unit, in (u,v,response)
    double offset = 0.0;                                // normal . p = offset
    std::vector<Eigen::Vector2d> polygon;               // support in pixel space
  };
  std::vector<Plane> planes;
  double scale = 1.0;            // response-to-depth conversion: depth = scale / response
  double noise_sigma = 0.0;      // response-noise standard deviation
  double outlier_fraction = 0.0; // fraction of covered pixels replaced by clutter

  /// Response of plane p at pixel (u,v).
  static double plane_response(const Plane& p, double u, double v);
};

/// s = ((rows+cols)/2) / ((1/z)_max - (1/z)_min) over valid pixels.
double scale_factor(const DepthImage& depth);

/// One sample per valid pixel, x = (column, row), y = s / depth.
SampleSet to_samples(const DepthImage& depth, double s);

struct RenderedScene {
  DepthImage depth;
  Segmentation ground_truth;
};

/// Deterministic synthetic rendering. Plane pixels get response-space noise
/// before conversion back to depth; outlier pixels get uniform random depths
/// and ground-truth label 0.
RenderedScene render_scene(const SyntheticScene& scene, int width, int height,
                           uint64_t seed);

/// Scene description from a JSON document (see README for the schema).
SyntheticScene scene_from_json(const std::string& json_text);
std::string scene_to_json(const SyntheticScene& scene);

/// Full scene document as consumed by the CLI: the scene plus render size
/// and seed, all from one JSON object.
struct SceneDocument {
  SyntheticScene scene;
  int width = 0;
  int height = 0;
  uint64_t seed = 0;
};
SceneDocument scene_document_from_json(const std::string& json_text);

}  // namespace rplgmr
