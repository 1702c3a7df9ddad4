#pragma once

#include <cstdint>
#include <vector>

#include "rplgmr/model.hpp"

namespace rplgmr {

struct FitConfig {
  int k = 200;             // initial component count
  double alpha = 0.98;     // kept fraction per iteration, (0, 1]
  double epsilon = 1e-5;   // relative convergence tolerance
  int max_iters = 50;
  double t_rho = 0.5;      // density-check threshold
  double c_dm = 2.1;       // Mahalanobis ellipse scale (shared with fusion)
  uint64_t seed = 0;
  int kmeans_restarts = 1;
  int kmeans_max_iters = 100;

  void validate() const;
};

struct IterationRecord {
  int iter = 0;
  double ll = 0.0;
  size_t trimmed = 0;
  int live_components = 0;
};

struct FitState {
  Mixture mixture;            // post-convergence, density-checked; removed
                              // components stay in place with prior 0
  ResponsibilityTable table;  // final expectation over all samples, normalized
  double ll = 0.0;            // last observed log-likelihood over kept samples
  int iter = 0;
  std::vector<int> removed_components;  // original indices, density check or emptiness
  std::vector<IterationRecord> history;
};

/// Euclidean k-means on (u, v, y) triples, clusters converted to components
/// via the M-step formulas with binary responsibilities.
Mixture kmeans_init(const SampleSet& samples, const FitConfig& cfg);

/// Expectation over all samples; normalization deferred to the loop.
ResponsibilityTable e_step(const Mixture& mix, const SampleSet& samples);

/// Marks the (1-alpha) fraction of lowest-confidence samples trimmed, ranked
/// by the MAP-component likelihood, then trims further by ascending log r_n
/// until the kept log-likelihood exceeds prev_ll. prev_ll == 0.0 is the
/// first-iteration sentinel and disables the top-up. Recomputes r_k.
void trim(ResponsibilityTable& table, const SampleSet& samples, double alpha,
          double prev_ll);

struct MStepResult {
  Mixture mixture;
  std::vector<int> dropped;  // indices (into the input table) deleted for weight < 3
};

/// Weighted-moment / weighted-least-squares updates over kept samples.
MStepResult m_step(const ResponsibilityTable& table, const SampleSet& samples);

/// Removes components whose Mahalanobis ellipse contains too few of their own
/// kept, MAP-assigned pixels. Removed components keep their slot with prior
/// set to 0; surviving priors are renormalized.
Mixture density_check(const Mixture& mix, const ResponsibilityTable& table,
                      const SampleSet& samples, double t_rho, double c_dm);

/// Full fitting loop: init, trimmed EM to convergence, then the
/// post-processing normalization and density check. Deterministic given the
/// seed. Progress goes to stderr when verbose.
FitState fit(const SampleSet& samples, const FitConfig& cfg, bool verbose = false);

/// Run-length-encoded kept mask, the binary sidecar of a fit checkpoint.
std::string kept_mask_to_rle(const std::vector<uint8_t>& kept);
std::vector<uint8_t> kept_mask_from_rle(const std::string& bytes);

}  // namespace rplgmr
