// Independent brute-force oracles for the unit and acceptance suites. These
// deliberately avoid the library's evaluation paths: densities are direct
// formula products (no log space), the M-step oracle is a literal
// transcription of the update equations with an SVD pseudo-inverse, and the
// ellipse oracle samples boundaries.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "rplgmr/geometry.hpp"
#include "rplgmr/model.hpp"

namespace oracle {

inline double gauss1(double y, double mu, double var) {
  double d = y - mu;
  return std::exp(-0.5 * d * d / var) / std::sqrt(2.0 * M_PI * var);
}

inline double gauss2(const Eigen::Vector2d& x, const Eigen::Vector2d& c,
                     const Eigen::Matrix2d& cov) {
  double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
  Eigen::Matrix2d inv;
  inv << cov(1, 1), -cov(0, 1), -cov(1, 0), cov(0, 0);
  inv /= det;
  Eigen::Vector2d d = x - c;
  double q = d.dot(inv * d);
  return std::exp(-0.5 * q) / (2.0 * M_PI * std::sqrt(det));
}

inline double weighted_density(const rplgmr::Component& comp, const Eigen::Vector2d& x,
                               double y) {
  double mu = comp.slope.dot(x) + comp.intercept;
  return gauss1(y, mu, std::max(comp.noise_var, rplgmr::kSigmaFloor)) *
         gauss2(x, comp.center, comp.xcov);
}

// Per-sample ratio form: r_nk = pi_k u_nk / sum_i pi_i u_ni.
inline Eigen::MatrixXd responsibilities(const rplgmr::Mixture& mix,
                                        const rplgmr::SampleSet& samples) {
  int n = static_cast<int>(samples.size());
  int k = mix.k();
  Eigen::MatrixXd r(n, k);
  for (int i = 0; i < n; ++i) {
    double total = 0.0;
    for (int j = 0; j < k; ++j) {
      double u = weighted_density(mix.components[j], samples.x[i], samples.y[i]);
      r(i, j) = mix.components[j].prior * u;
      total += r(i, j);
    }
    r.row(i) /= total;
  }
  return r;
}

struct MStepComponent {
  Eigen::Vector2d c;
  Eigen::Matrix2d gamma;  // pre-ridge weighted scatter
  Eigen::RowVector2d a;
  double b = 0.0;
  double sigma = 0.0;  // pre-floor
  double pi = 0.0;
  double rk = 0.0;
};

// Literal update equations with binary kept flags and normalized weights.
inline std::vector<MStepComponent> m_step(const Eigen::MatrixXd& r,
                                          const std::vector<uint8_t>& kept,
                                          const rplgmr::SampleSet& samples) {
  int n = static_cast<int>(samples.size());
  int k = static_cast<int>(r.cols());
  std::vector<MStepComponent> out(k);
  double total_rk = 0.0;
  for (int j = 0; j < k; ++j) {
    double rk = 0.0;
    for (int i = 0; i < n; ++i)
      if (kept[i]) rk += r(i, j);
    out[j].rk = rk;
    total_rk += rk;

    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    double ybar = 0.0;
    for (int i = 0; i < n; ++i) {
      if (!kept[i]) continue;
      c += (r(i, j) / rk) * samples.x[i];
      ybar += (r(i, j) / rk) * samples.y[i];
    }
    out[j].c = c;

    Eigen::Matrix2d gamma = Eigen::Matrix2d::Zero();
    for (int i = 0; i < n; ++i) {
      if (!kept[i]) continue;
      Eigen::Vector2d d = samples.x[i] - c;
      gamma += (r(i, j) / rk) * (d * d.transpose());
    }
    out[j].gamma = gamma;

    // A_k = Ybar Xbar^+, rows sqrt(r)(x-c) and sqrt(r)(y-ybar).
    std::vector<int> rows;
    for (int i = 0; i < n; ++i)
      if (kept[i]) rows.push_back(i);
    Eigen::MatrixXd xbar(2, rows.size());
    Eigen::RowVectorXd ybarv(rows.size());
    for (size_t m = 0; m < rows.size(); ++m) {
      int i = rows[m];
      double w = std::sqrt(r(i, j));
      xbar.col(m) = w * (samples.x[i] - c);
      ybarv[m] = w * (samples.y[i] - ybar);
    }
    Eigen::MatrixXd pinv =
        xbar.completeOrthogonalDecomposition().pseudoInverse();  // (N,2)
    out[j].a = ybarv * pinv;

    double b = 0.0;
    for (int i = 0; i < n; ++i) {
      if (!kept[i]) continue;
      b += (r(i, j) / rk) * (samples.y[i] - out[j].a.dot(samples.x[i]));
    }
    out[j].b = b;

    double sigma = 0.0;
    for (int i = 0; i < n; ++i) {
      if (!kept[i]) continue;
      double res = samples.y[i] - out[j].a.dot(samples.x[i]) - b;
      sigma += (r(i, j) / rk) * res * res;
    }
    out[j].sigma = sigma;
  }
  for (int j = 0; j < k; ++j) out[j].pi = out[j].rk / total_rk;
  return out;
}

// Boundary-sampling overlap oracle, with the margin of the decision
// reported so callers can skip razor-edge trials. Positive margin means the
// verdict is robust.
struct OverlapVerdict {
  bool overlap = false;
  double margin = 0.0;
};

inline OverlapVerdict ellipse_overlap_sampled(const rplgmr::Component& a,
                                              const rplgmr::Component& b, double c_dm,
                                              int samples_per_boundary = 10000) {
  auto quad = [c_dm](const rplgmr::Component& e, const Eigen::Vector2d& p) {
    Eigen::Vector2d d = p - e.center;
    return d.dot(e.xcov.inverse() * d) / (c_dm * c_dm);
  };
  // Inside the other ellipse: quad < 1.
  double best_a_in_b = quad(b, a.center);  // also covers center containment
  double best_b_in_a = quad(a, b.center);
  auto boundary = [c_dm](const rplgmr::Component& e, double theta) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(e.xcov);
    Eigen::Vector2d axis = Eigen::Vector2d(std::cos(theta), std::sin(theta));
    Eigen::Vector2d scaled =
        es.eigenvectors() * (es.eigenvalues().cwiseSqrt().asDiagonal() * axis);
    return (e.center + c_dm * scaled).eval();
  };
  for (int i = 0; i < samples_per_boundary; ++i) {
    double theta = 2.0 * M_PI * i / samples_per_boundary;
    best_a_in_b = std::min(best_a_in_b, quad(b, boundary(a, theta)));
    best_b_in_a = std::min(best_b_in_a, quad(a, boundary(b, theta)));
  }
  double best = std::min(best_a_in_b, best_b_in_a);
  OverlapVerdict v;
  v.overlap = best <= 1.0;
  v.margin = std::abs(best - 1.0);
  return v;
}

inline std::mt19937_64 rng(uint64_t seed) { return std::mt19937_64(seed); }

inline Eigen::Matrix2d random_spd2(std::mt19937_64& g, double lo = 0.5, double hi = 4.0) {
  std::uniform_real_distribution<double> angle(0.0, M_PI);
  std::uniform_real_distribution<double> scale(lo, hi);
  double t = angle(g);
  Eigen::Matrix2d rot;
  rot << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
  Eigen::Vector2d ev(scale(g), scale(g));
  return rot * ev.asDiagonal() * rot.transpose();
}

inline rplgmr::Component random_component(std::mt19937_64& g, double sigma_lo = 0.05,
                                          double sigma_hi = 2.0) {
  std::uniform_real_distribution<double> pos(-5.0, 5.0);
  std::uniform_real_distribution<double> slope(-2.0, 2.0);
  std::uniform_real_distribution<double> sig(sigma_lo, sigma_hi);
  rplgmr::Component c;
  c.center = Eigen::Vector2d(pos(g), pos(g));
  c.xcov = random_spd2(g);
  c.slope = Eigen::RowVector2d(slope(g), slope(g));
  c.intercept = pos(g);
  c.noise_var = sig(g);
  c.prior = 1.0;
  return c;
}

}  // namespace oracle
