#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "rplgmr/error.hpp"
#include "rplgmr/geometry.hpp"

namespace rplgmr {

/// Noise variance never drops below this; noiseless planar data legitimately
/// drives the response variance to zero otherwise.
inline constexpr double kSigmaFloor = 1e-12;
/// X-covariance conditioning: ridge of kRidgeScale*trace added once the
/// condition number exceeds kMaxCondition.
inline constexpr double kRidgeScale = 1e-9;
inline constexpr double kMaxCondition = 1e12;

/// One planar mixture component: an affine map y ~ slope*x + intercept with
/// Gaussian response noise, localized by a Gaussian over pixel space.
struct Component {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();     // X-space mean
  Eigen::Matrix2d xcov = Eigen::Matrix2d::Identity();   // X-space covariance
  Eigen::RowVector2d slope = Eigen::RowVector2d::Zero();
  double intercept = 0.0;
  double noise_var = 1.0;  // response noise VARIANCE
  double prior = 1.0;
};

struct Mixture {
  std::vector<Component> components;
  int k() const { return static_cast<int>(components.size()); }
};

/// Mean and covariance of the implied trivariate Gaussian over (x, y).
struct JointMoments {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
};

/// Returns a copy of cov with the conditioning ridge applied when needed.
Eigen::Matrix2d conditioned_cov(const Eigen::Matrix2d& cov);

/// log of N(y; slope*x + intercept, noise_var) * N(x; center, xcov), the
/// per-component likelihood without the prior.
double log_component_weighted_density(const Component& comp, const Eigen::Vector2d& x,
                                      double y);

/// u = N(y; slope*x + intercept, noise_var) * N(x; center, xcov).
double component_weighted_density(const Component& comp, const Eigen::Vector2d& x,
                                  double y);

JointMoments joint_moments(const Component& comp);

/// N x K responsibility table. Densities are evaluated in log space; the
/// matrix holds log(prior * u) until normalize() turns it into normalized
/// responsibilities with per-row max subtraction.
class ResponsibilityTable {
public:
  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Matrix weights;                 // log(prior*u) before normalize(), r_nk after
  std::vector<double> log_rn;     // log sum_k prior_k * u_nk
  std::vector<int> map_comp;      // argmax_k prior_k * u_nk, ties to lowest k
  std::vector<double> log_u_map;  // log u at the MAP component
  std::vector<uint8_t> kept;      // false = trimmed (or zero row)
  std::vector<double> comp_weight;  // r_k over kept rows, valid once normalized
  bool normalized = false;

  int n() const { return static_cast<int>(weights.rows()); }
  int k() const { return static_cast<int>(weights.cols()); }

  size_t kept_count() const;

  /// Turns log(prior*u) rows into normalized responsibilities. Rows whose
  /// total density underflows to zero are flagged trimmed (ZeroRow) and then
  /// recomputes comp_weight over kept rows.
  void normalize();

  /// r_k over kept rows, fixed sample order. Requires normalized.
  void recompute_comp_weights();
};

namespace detail {
/// Expectation pass without normalization; weights hold log(prior*u).
ResponsibilityTable fill_table(const Mixture& mix, const SampleSet& samples);
}  // namespace detail

/// Full expectation pass: densities for every sample against every
/// component, already normalized. kept = false only for zero rows.
ResponsibilityTable responsibilities(const Mixture& mix, const SampleSet& samples);

/// Sum over kept samples of log r_n; the quantity the fit loop tracks.
double observed_log_likelihood(const ResponsibilityTable& table);

/// Expected complete-data log-likelihood with the per-component 1/r_k
/// weighting, over kept samples. Diagnostic only; the fit loop converges on
/// observed_log_likelihood.
double expected_complete_ll(const Mixture& mix, const ResponsibilityTable& table,
                            const SampleSet& samples);

std::string mixture_to_json(const Mixture& mix);
Mixture mixture_from_json(const std::string& json_text);

}  // namespace rplgmr
