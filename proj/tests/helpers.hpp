// Shared builders for the test suites.
#pragma once

#include <Eigen/Core>
#include <functional>
#include <limits>
#include <vector>

#include "rplgmr/geometry.hpp"
#include "rplgmr/model.hpp"

namespace testutil {

/// Full-grid sample set with y = f(u, v); origin and dims filled in.
inline rplgmr::SampleSet grid_samples(int width, int height,
                                      const std::function<double(double, double)>& f,
                                      double s = 1.0) {
  rplgmr::SampleSet set;
  set.width = width;
  set.height = height;
  set.s = s;
  for (int v = 0; v < height; ++v)
    for (int u = 0; u < width; ++u) {
      set.x.emplace_back(u, v);
      set.y.push_back(f(u, v));
      set.origin.push_back(v * width + u);
    }
  return set;
}

/// Normalized table with hard assignments (weight 1 on one component).
inline rplgmr::ResponsibilityTable binary_table(const std::vector<int>& assign, int k) {
  rplgmr::ResponsibilityTable t;
  int n = static_cast<int>(assign.size());
  t.weights.setZero(n, k);
  t.log_rn.assign(n, 0.0);
  t.map_comp.assign(n, 0);
  t.log_u_map.assign(n, 0.0);
  t.kept.assign(n, 1);
  for (int i = 0; i < n; ++i) {
    t.weights(i, assign[i]) = 1.0;
    t.map_comp[i] = assign[i];
  }
  t.normalized = true;
  t.recompute_comp_weights();
  return t;
}

/// Scene with vertical-strip plane supports spanning the full frame.
inline rplgmr::SyntheticScene strip_scene(int width, int height,
                                          const std::vector<Eigen::Vector3d>& normals,
                                          const std::vector<double>& offsets,
                                          double scale = 1.0) {
  rplgmr::SyntheticScene scene;
  scene.scale = scale;
  size_t k = normals.size();
  double strip = static_cast<double>(width) / k;
  for (size_t i = 0; i < k; ++i) {
    rplgmr::SyntheticScene::Plane p;
    p.normal = normals[i].normalized();
    p.offset = offsets[i];
    double u0 = i * strip, u1 = (i + 1) * strip;
    // polygon slightly past the pixel centers so edge pixels are covered
    p.polygon = {{u0 - 0.5, -0.5},
                 {u1 - 0.5, -0.5},
                 {u1 - 0.5, height - 0.5},
                 {u0 - 0.5, height - 0.5}};
    scene.planes.push_back(std::move(p));
  }
  return scene;
}

inline bool near_rel(double a, double b, double tol, double scale = 0.0) {
  double m = std::max({std::abs(a), std::abs(b), scale});
  return std::abs(a - b) <= tol * std::max(m, 1e-300);
}

}  // namespace testutil
