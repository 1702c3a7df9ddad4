#include "rplgmr/model.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <json.hpp>

#include "rplgmr/parallel.hpp"

namespace rplgmr {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Eig2 {
  double lo = 0.0;
  double hi = 0.0;
};

Eig2 sym2_eigenvalues(const Eigen::Matrix2d& m) {
  double tr = m(0, 0) + m(1, 1);
  double diff = m(0, 0) - m(1, 1);
  double disc = std::sqrt(diff * diff + 4.0 * m(0, 1) * m(1, 0));
  return {0.5 * (tr - disc), 0.5 * (tr + disc)};
}

// Precomputed per-component quantities for density evaluation.
struct CompEval {
  Eigen::Matrix2d xcov_inv;
  Eigen::Vector2d center;
  Eigen::RowVector2d slope;
  double intercept;
  double log_norm_x;  // -log(2pi) - 0.5*logdet(xcov)
  double sigma;       // floored variance
  double log_norm_y;  // -0.5*log(2pi*sigma)
  double log_prior;
};

CompEval prepare(const Component& comp) {
  CompEval e;
  Eigen::Matrix2d cov = conditioned_cov(comp.xcov);
  double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
  Eig2 ev = sym2_eigenvalues(cov);
  if (!(ev.lo > 0.0) || !(det > 0.0))
    throw Error(ErrorCode::SingularCovariance, "X covariance not invertible after ridge");
  e.xcov_inv << cov(1, 1), -cov(0, 1), -cov(1, 0), cov(0, 0);
  e.xcov_inv /= det;
  e.center = comp.center;
  e.slope = comp.slope;
  e.intercept = comp.intercept;
  e.log_norm_x = -kLog2Pi - 0.5 * std::log(det);
  e.sigma = std::max(comp.noise_var, kSigmaFloor);
  e.log_norm_y = -0.5 * (kLog2Pi + std::log(e.sigma));
  e.log_prior = comp.prior > 0.0 ? std::log(comp.prior) : kNegInf;
  return e;
}

double log_density(const CompEval& e, const Eigen::Vector2d& x, double y) {
  Eigen::Vector2d d = x - e.center;
  double qx = d.dot(e.xcov_inv * d);
  double ry = y - (e.slope.dot(x) + e.intercept);
  double qy = ry * ry / e.sigma;
  return e.log_norm_x + e.log_norm_y - 0.5 * (qx + qy);
}

}  // namespace

Eigen::Matrix2d conditioned_cov(const Eigen::Matrix2d& cov) {
  Eig2 ev = sym2_eigenvalues(cov);
  bool ill = !(ev.lo > 0.0) || ev.hi > kMaxCondition * ev.lo;
  if (!ill) return cov;
  double tr = cov.trace();
  double ridge = tr > 0.0 ? kRidgeScale * tr : kRidgeScale;
  return cov + ridge * Eigen::Matrix2d::Identity();
}

double log_component_weighted_density(const Component& comp, const Eigen::Vector2d& x,
                                      double y) {
  return log_density(prepare(comp), x, y);
}

double component_weighted_density(const Component& comp, const Eigen::Vector2d& x,
                                  double y) {
  return std::exp(log_component_weighted_density(comp, x, y));
}

JointMoments joint_moments(const Component& comp) {
  JointMoments m;
  m.mean.head<2>() = comp.center;
  m.mean[2] = comp.slope.dot(comp.center) + comp.intercept;
  Eigen::Vector2d cross = comp.xcov * comp.slope.transpose();
  m.cov.topLeftCorner<2, 2>() = comp.xcov;
  m.cov.block<2, 1>(0, 2) = cross;
  m.cov.block<1, 2>(2, 0) = cross.transpose();
  m.cov(2, 2) = comp.noise_var + comp.slope.dot(cross);
  return m;
}

size_t ResponsibilityTable::kept_count() const {
  size_t c = 0;
  for (uint8_t f : kept) c += f;
  return c;
}

void ResponsibilityTable::normalize() {
  if (normalized) return;
  int rows = n(), cols = k();
  parallel_for(rows, [&](int begin, int end) {
    for (int i = begin; i < end; ++i) {
      auto row = weights.row(i);
      double m = row.maxCoeff();
      if (m == kNegInf) {  // ZeroRow: total density underflowed
        row.setZero();
        kept[i] = 0;
        continue;
      }
      double sum = 0.0;
      for (int j = 0; j < cols; ++j) {
        double e = std::exp(row[j] - m);
        row[j] = e;
        sum += e;
      }
      row /= sum;
    }
  });
  normalized = true;
  recompute_comp_weights();
}

void ResponsibilityTable::recompute_comp_weights() {
  comp_weight.assign(k(), 0.0);
  for (int i = 0; i < n(); ++i) {
    if (!kept[i]) continue;
    for (int j = 0; j < k(); ++j) comp_weight[j] += weights(i, j);
  }
}

namespace detail {

// Shared by the one-shot responsibilities() and the EM e_step.
ResponsibilityTable fill_table(const Mixture& mix, const SampleSet& samples) {
  if (mix.k() < 1) throw Error(ErrorCode::BadFormat, "mixture needs at least one component");
  int rows = static_cast<int>(samples.size());
  int cols = mix.k();
  std::vector<CompEval> evals;
  evals.reserve(cols);
  for (const auto& c : mix.components) evals.push_back(prepare(c));

  ResponsibilityTable table;
  table.weights.resize(rows, cols);
  table.log_rn.assign(rows, kNegInf);
  table.map_comp.assign(rows, 0);
  table.log_u_map.assign(rows, kNegInf);
  table.kept.assign(rows, 1);
  table.normalized = false;

  parallel_for(rows, [&](int begin, int end) {
    for (int i = begin; i < end; ++i) {
      const Eigen::Vector2d& x = samples.x[i];
      double y = samples.y[i];
      double row_max = kNegInf;
      int arg = 0;
      double log_u_at_arg = kNegInf;
      for (int j = 0; j < cols; ++j) {
        double lu = log_density(evals[j], x, y);
        double lw = evals[j].log_prior + lu;
        table.weights(i, j) = lw;
        if (lw > row_max) {
          row_max = lw;
          arg = j;
          log_u_at_arg = lu;
        }
      }
      table.map_comp[i] = arg;
      table.log_u_map[i] = log_u_at_arg;
      if (row_max == kNegInf) {
        table.kept[i] = 0;  // total density underflowed for this sample
        continue;
      }
      double acc = 0.0;
      for (int j = 0; j < cols; ++j) acc += std::exp(table.weights(i, j) - row_max);
      table.log_rn[i] = row_max + std::log(acc);
    }
  });
  return table;
}

}  // namespace detail

ResponsibilityTable responsibilities(const Mixture& mix, const SampleSet& samples) {
  ResponsibilityTable table = detail::fill_table(mix, samples);
  table.normalize();
  return table;
}

double observed_log_likelihood(const ResponsibilityTable& table) {
  double sum = 0.0;
  size_t kept = 0;
  for (int i = 0; i < table.n(); ++i) {
    if (!table.kept[i]) continue;
    sum += table.log_rn[i];
    ++kept;
  }
  if (kept == 0) throw Error(ErrorCode::EmptyKeptSet, "no kept samples");
  return sum;
}

double expected_complete_ll(const Mixture& mix, const ResponsibilityTable& table,
                            const SampleSet& samples) {
  if (!table.normalized)
    throw Error(ErrorCode::BadFormat, "expected_complete_ll needs a normalized table");
  std::vector<CompEval> evals;
  evals.reserve(mix.k());
  for (const auto& c : mix.components) evals.push_back(prepare(c));
  double total = 0.0;
  for (int j = 0; j < table.k(); ++j) {
    double rk = table.comp_weight[j];
    if (!(rk > 0.0)) continue;  // empty components are skipped
    double acc = 0.0;
    for (int i = 0; i < table.n(); ++i) {
      if (!table.kept[i]) continue;
      double r = table.weights(i, j);
      if (r == 0.0) continue;
      acc += r * (evals[j].log_prior + log_density(evals[j], samples.x[i], samples.y[i]));
    }
    total += acc / rk;
  }
  return total;
}

std::string mixture_to_json(const Mixture& mix) {
  nlohmann::json out;
  out["components"] = nlohmann::json::array();
  for (const auto& c : mix.components) {
    nlohmann::json cj;
    cj["c"] = {c.center[0], c.center[1]};
    cj["Gamma"] = {c.xcov(0, 0), c.xcov(0, 1), c.xcov(1, 0), c.xcov(1, 1)};
    cj["A"] = {c.slope[0], c.slope[1]};
    cj["b"] = c.intercept;
    cj["sigma"] = c.noise_var;
    cj["pi"] = c.prior;
    out["components"].push_back(std::move(cj));
  }
  return out.dump(2);
}

Mixture mixture_from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  Mixture mix;
  for (const auto& cj : j.at("components")) {
    Component c;
    c.center = Eigen::Vector2d(cj.at("c").at(0), cj.at("c").at(1));
    const auto& g = cj.at("Gamma");
    c.xcov << double(g.at(0)), double(g.at(1)), double(g.at(2)), double(g.at(3));
    c.slope = Eigen::RowVector2d(cj.at("A").at(0), cj.at("A").at(1));
    c.intercept = cj.at("b");
    c.noise_var = cj.at("sigma");
    c.prior = cj.at("pi");
    mix.components.push_back(c);
  }
  if (mix.k() < 1) throw Error(ErrorCode::BadFormat, "mixture JSON has no components");
  return mix;
}

}  // namespace rplgmr
