#pragma once

#include <Eigen/Core>
#include <array>
#include <map>
#include <string>
#include <vector>

#include "rplgmr/em.hpp"
#include "rplgmr/model.hpp"
#include "rplgmr/segmentation.hpp"

namespace rplgmr {

/// Responsibility-weighted plane summary of one component (or a fused set):
/// moments of (u, v, y) triples, with the principal-axis decomposition used
/// by the fusion criteria. The smallest eigenvalue of the scatter is the
/// mean squared deviation perpendicular to the best-fit plane.
struct PlaneStats {
  double weight = 0.0;                              // effective point count
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
  double mse = 0.0;                                 // smallest eigenvalue
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();  // its unit eigenvector

  struct Axis {
    double value = 0.0;        // eigenvalue
    Eigen::Vector3d dir = Eigen::Vector3d::Zero();
  };
  std::array<Axis, 2> axes;    // remaining pairs, descending eigenvalue
};

struct AdjacencyGraph {
  std::vector<int> nodes;                     // live component indices
  std::vector<std::pair<int, int>> edges;     // unordered adjacent pairs, i < j
};

struct FusionConfig {
  double t_mse = 5.0;    // combined-MSE ceiling
  double t_proj = 10.0;  // protrusion multiplier
  double c_dm = 2.1;     // ellipse scale for adjacency
};

/// Maps original component index -> fused plane label (contiguous from 1).
struct MergeMap {
  std::map<int, int> parent;
};

/// Stats of one component over kept samples. Throws DegenerateScatter when
/// the effective weight is below 3.
PlaneStats plane_stats(int comp_index, const ResponsibilityTable& table,
                       const SampleSet& samples);

/// Exact intersection/containment test for the two Mahalanobis ellipses
/// {x : (x-c)' Gamma^-1 (x-c) <= c_dm^2}, by sign analysis of the cubic
/// characteristic polynomial of the ellipse pencil. Tangency counts as
/// overlap.
bool ellipses_overlap(const Component& a, const Component& b, double c_dm);

/// Stats of the hypothetical merge of components i and j, weighted by
/// r_ni + r_nj. Returns the smallest-eigenvalue MSE together with the stats.
std::pair<double, PlaneStats> combined_mse(int i, int j, const ResponsibilityTable& table,
                                           const SampleSet& samples);

/// Protrusion test: every projection of the two scaled principal axes of
/// either plane onto the other plane's normal must stay within
/// t_proj * sqrt(mse of the plane projected onto). Inclusive at the bound.
bool projection_check(const PlaneStats& a, const PlaneStats& b, double t_proj);

/// Adjacency graph over live components (prior > 0, weight >= 3).
AdjacencyGraph build_adjacency(const Mixture& mix, const ResponsibilityTable& table,
                               const SampleSet& samples, double c_dm);

struct FusionResult {
  MergeMap merge;
  std::vector<PlaneStats> planes;  // per fused label, label 1 first
};

/// Greedy fusion loop: repeatedly picks the unexhausted node with the
/// smallest MSE, tries its best-combined-MSE neighbor against the MSE and
/// projection criteria, and merges on success. Optional trace receives one
/// JSON line per decision.
FusionResult fuse_all(const Mixture& mix, const ResponsibilityTable& table,
                      const SampleSet& samples, const FusionConfig& cfg,
                      std::vector<std::string>* trace = nullptr);

/// Paints each kept sample with the fused label of its MAP component;
/// trimmed samples, invalid pixels, and samples of removed components get
/// label 0. Plane parameters are attached from the fused stats when given.
Segmentation segmentation_from(const MergeMap& merge, const ResponsibilityTable& table,
                               const SampleSet& samples, int width, int height,
                               const std::vector<PlaneStats>* planes = nullptr);

}  // namespace rplgmr
