#include "rplgmr/em.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/Dense>

#include "rplgmr/parallel.hpp"

namespace rplgmr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

uint64_t splitmix64(uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Moore-Penrose pseudo-inverse of a symmetric 2x2 scatter.
Eigen::Matrix2d pinv_sym2(const Eigen::Matrix2d& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(m);
  Eigen::Vector2d ev = es.eigenvalues();
  double cut = 1e-12 * std::max(std::abs(ev[0]), std::abs(ev[1]));
  Eigen::Matrix2d out = Eigen::Matrix2d::Zero();
  for (int i = 0; i < 2; ++i) {
    if (ev[i] > cut)
      out += (1.0 / ev[i]) * es.eigenvectors().col(i) * es.eigenvectors().col(i).transpose();
  }
  return out;
}

// Eqs-style weighted plane fit for one k-means cluster (unit weights).
Component fit_cluster(const std::vector<int>& members, const SampleSet& samples,
                      size_t n_total) {
  Component comp;
  double s0 = static_cast<double>(members.size());
  Eigen::Vector2d sx = Eigen::Vector2d::Zero();
  double sy = 0.0;
  for (int i : members) {
    sx += samples.x[i];
    sy += samples.y[i];
  }
  comp.center = sx / s0;
  double ybar = sy / s0;

  Eigen::Matrix2d sxx = Eigen::Matrix2d::Zero();
  Eigen::Vector2d sxy = Eigen::Vector2d::Zero();
  for (int i : members) {
    Eigen::Vector2d d = samples.x[i] - comp.center;
    sxx += d * d.transpose();
    sxy += d * (samples.y[i] - ybar);
  }
  comp.xcov = conditioned_cov(sxx / s0);
  comp.slope = (sxy.transpose() * pinv_sym2(sxx)).eval();
  comp.intercept = (sy - comp.slope.dot(sx)) / s0;

  double ss = 0.0;
  for (int i : members) {
    double r = samples.y[i] - (comp.slope.dot(samples.x[i]) + comp.intercept);
    ss += r * r;
  }
  comp.noise_var = std::max(ss / s0, kSigmaFloor);
  comp.prior = s0 / static_cast<double>(n_total);
  return comp;
}

struct KMeansRun {
  std::vector<int> assign;
  std::vector<Eigen::Vector3d> centers;
  double inertia = std::numeric_limits<double>::infinity();
};

KMeansRun run_kmeans(const std::vector<Eigen::Vector3d>& data, int k, int max_iters,
                     uint64_t seed) {
  int n = static_cast<int>(data.size());
  std::mt19937_64 rng(seed);

  // Uniform seeding from the samples, without replacement.
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  KMeansRun run;
  run.centers.resize(k);
  for (int c = 0; c < k; ++c) {
    std::uniform_int_distribution<int> pick(c, n - 1);
    std::swap(idx[c], idx[pick(rng)]);
    run.centers[c] = data[idx[c]];
  }

  run.assign.assign(n, 0);
  std::vector<int> counts(k, 0);
  std::vector<int> nearest(n, -1);
  for (int iter = 0; iter < max_iters; ++iter) {
    // Assignment; ties go to the lowest center index.
    parallel_for(n, [&](int begin, int end) {
      for (int i = begin; i < end; ++i) {
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (int c = 0; c < k; ++c) {
          double d = (data[i] - run.centers[c]).squaredNorm();
          if (d < best) {
            best = d;
            arg = c;
          }
        }
        nearest[i] = arg;
      }
    });
    bool changed = false;
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < n; ++i) {
      if (nearest[i] != run.assign[i]) changed = true;
      run.assign[i] = nearest[i];
      ++counts[nearest[i]];
    }

    // Empty clusters are reseeded from the farthest point.
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      double far_d = -1.0;
      int far_i = -1;
      for (int i = 0; i < n; ++i) {
        if (counts[run.assign[i]] <= 1) continue;  // don't empty a singleton
        double d = (data[i] - run.centers[run.assign[i]]).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far_i = i;
        }
      }
      if (far_i < 0) break;
      --counts[run.assign[far_i]];
      run.assign[far_i] = c;
      ++counts[c];
      run.centers[c] = data[far_i];
      changed = true;
    }

    if (!changed) break;

    for (int c = 0; c < k; ++c)
      if (counts[c] > 0) run.centers[c].setZero();
    for (int i = 0; i < n; ++i) run.centers[run.assign[i]] += data[i];
    for (int c = 0; c < k; ++c)
      if (counts[c] > 0) run.centers[c] /= counts[c];
  }

  run.inertia = 0.0;
  for (int i = 0; i < n; ++i)
    run.inertia += (data[i] - run.centers[run.assign[i]]).squaredNorm();
  return run;
}

}  // namespace

void FitConfig::validate() const {
  if (k < 1) throw Error(ErrorCode::BadFormat, "k must be >= 1");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(ErrorCode::BadFormat, "alpha must be in (0,1]");
  if (!(epsilon > 0.0)) throw Error(ErrorCode::BadFormat, "epsilon must be positive");
  if (max_iters < 1) throw Error(ErrorCode::BadFormat, "max_iters must be >= 1");
  if (!(t_rho > 0.0 && t_rho <= 1.0)) throw Error(ErrorCode::BadFormat, "t_rho must be in (0,1]");
  if (!(c_dm > 0.0)) throw Error(ErrorCode::BadFormat, "c_dm must be positive");
  if (kmeans_restarts < 1 || kmeans_max_iters < 1)
    throw Error(ErrorCode::BadFormat, "k-means controls must be >= 1");
}

Mixture kmeans_init(const SampleSet& samples, const FitConfig& cfg) {
  int n = static_cast<int>(samples.size());
  if (n < cfg.k)
    throw Error(ErrorCode::TooFewSamples,
                "need at least k samples, have " + std::to_string(n));

  std::vector<Eigen::Vector3d> data(n);
  for (int i = 0; i < n; ++i)
    data[i] = Eigen::Vector3d(samples.x[i][0], samples.x[i][1], samples.y[i]);

  uint64_t stream = cfg.seed;
  KMeansRun best;
  for (int r = 0; r < cfg.kmeans_restarts; ++r) {
    KMeansRun run = run_kmeans(data, cfg.k, cfg.kmeans_max_iters, splitmix64(stream));
    if (run.inertia < best.inertia) best = std::move(run);
  }

  std::vector<std::vector<int>> members(cfg.k);
  for (int i = 0; i < n; ++i) members[best.assign[i]].push_back(i);

  Mixture mix;
  mix.components.reserve(cfg.k);
  for (int c = 0; c < cfg.k; ++c)
    mix.components.push_back(fit_cluster(members[c], samples, samples.size()));
  return mix;
}

ResponsibilityTable e_step(const Mixture& mix, const SampleSet& samples) {
  return detail::fill_table(mix, samples);
}

void trim(ResponsibilityTable& table, const SampleSet& samples, double alpha,
          double prev_ll) {
  (void)samples;
  if (!table.normalized) throw Error(ErrorCode::BadFormat, "trim needs a normalized table");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(ErrorCode::BadFormat, "alpha must be in (0,1]");
  int n = table.n();

  // Every sample re-enters consideration each iteration; only zero rows stay out.
  size_t zero_rows = 0;
  for (int i = 0; i < n; ++i) {
    table.kept[i] = table.log_rn[i] != kNegInf;
    if (!table.kept[i]) ++zero_rows;
  }

  size_t base = static_cast<size_t>((1.0 - alpha) * n);
  if (base > zero_rows) {
    std::vector<int> order;
    order.reserve(n - zero_rows);
    for (int i = 0; i < n; ++i)
      if (table.kept[i]) order.push_back(i);
    size_t extra = base - zero_rows;
    std::nth_element(order.begin(), order.begin() + extra, order.end(),
                     [&](int a, int b) {
                       if (table.log_u_map[a] != table.log_u_map[b])
                         return table.log_u_map[a] < table.log_u_map[b];
                       return a < b;
                     });
    for (size_t i = 0; i < extra; ++i) table.kept[order[i]] = 0;
  }

  // Top-up by ascending log r_n until the kept log-likelihood beats the
  // previous iteration. prev_ll == 0.0 is the first-iteration sentinel.
  // Engages only on a strict drop: equality already satisfies the
  // non-decreasing contract, and a fully converged fit reproduces prev_ll
  // exactly.
  if (prev_ll != 0.0) {
    std::vector<int> kept_idx;
    kept_idx.reserve(n);
    // summed in sample order so an unchanged kept set reproduces the
    // previous iteration's likelihood bit-for-bit
    double ll = 0.0;
    for (int i = 0; i < n; ++i) {
      if (!table.kept[i]) continue;
      kept_idx.push_back(i);
      ll += table.log_rn[i];
    }
    if (ll < prev_ll) {
      std::sort(kept_idx.begin(), kept_idx.end(), [&](int a, int b) {
        if (table.log_rn[a] != table.log_rn[b]) return table.log_rn[a] < table.log_rn[b];
        return a < b;
      });
      size_t min_keep = static_cast<size_t>(std::ceil(alpha * n / 2.0));
      size_t max_remove = kept_idx.size() > min_keep ? kept_idx.size() - min_keep : 0;
      size_t cut = 0;
      while (!(ll > prev_ll)) {
        if (cut == max_remove)
          throw Error(ErrorCode::CannotRestoreMonotonicity,
                      "cannot raise kept log-likelihood above previous iteration");
        ll -= table.log_rn[kept_idx[cut]];
        ++cut;
      }
      for (size_t j = 0; j < cut; ++j) table.kept[kept_idx[j]] = 0;
    }
  }

  table.recompute_comp_weights();
}

MStepResult m_step(const ResponsibilityTable& table, const SampleSet& samples) {
  if (!table.normalized) throw Error(ErrorCode::BadFormat, "m_step needs a normalized table");
  int n = table.n(), k = table.k();

  std::vector<int> kept_idx;
  kept_idx.reserve(n);
  for (int i = 0; i < n; ++i)
    if (table.kept[i]) kept_idx.push_back(i);
  if (kept_idx.empty()) throw Error(ErrorCode::EmptyKeptSet, "no kept samples for the M-step");

  std::vector<double> s0(k, 0.0), sy(k, 0.0);
  std::vector<Eigen::Vector2d> sx(k, Eigen::Vector2d::Zero());
  for (int i : kept_idx) {
    const auto row = table.weights.row(i);
    for (int j = 0; j < k; ++j) {
      double w = row[j];
      s0[j] += w;
      sx[j] += w * samples.x[i];
      sy[j] += w * samples.y[i];
    }
  }

  std::vector<Eigen::Vector2d> center(k, Eigen::Vector2d::Zero());
  std::vector<double> ybar(k, 0.0);
  for (int j = 0; j < k; ++j) {
    if (s0[j] > 0.0) {
      center[j] = sx[j] / s0[j];
      ybar[j] = sy[j] / s0[j];
    }
  }

  std::vector<Eigen::Matrix2d> sxx(k, Eigen::Matrix2d::Zero());
  std::vector<Eigen::Vector2d> sxy(k, Eigen::Vector2d::Zero());
  for (int i : kept_idx) {
    const auto row = table.weights.row(i);
    for (int j = 0; j < k; ++j) {
      double w = row[j];
      if (w == 0.0) continue;
      Eigen::Vector2d d = samples.x[i] - center[j];
      sxx[j].noalias() += w * (d * d.transpose());
      sxy[j] += (w * (samples.y[i] - ybar[j])) * d;
    }
  }

  std::vector<Eigen::RowVector2d> slope(k, Eigen::RowVector2d::Zero());
  std::vector<double> intercept(k, 0.0);
  for (int j = 0; j < k; ++j) {
    if (!(s0[j] > 0.0)) continue;
    slope[j] = (sxy[j].transpose() * pinv_sym2(sxx[j])).eval();
    intercept[j] = (sy[j] - slope[j].dot(sx[j])) / s0[j];
  }

  std::vector<double> ssig(k, 0.0);
  for (int i : kept_idx) {
    const auto row = table.weights.row(i);
    for (int j = 0; j < k; ++j) {
      double w = row[j];
      if (w == 0.0) continue;
      double r = samples.y[i] - (slope[j].dot(samples.x[i]) + intercept[j]);
      ssig[j] += w * r * r;
    }
  }

  MStepResult out;
  double total = 0.0;
  for (int j = 0; j < k; ++j) {
    if (s0[j] < 3.0) {  // too few effective points to support a plane
      out.dropped.push_back(j);
      continue;
    }
    Component comp;
    comp.center = center[j];
    comp.xcov = conditioned_cov(sxx[j] / s0[j]);
    comp.slope = slope[j];
    comp.intercept = intercept[j];
    comp.noise_var = std::max(ssig[j] / s0[j], kSigmaFloor);
    comp.prior = s0[j];
    total += s0[j];
    out.mixture.components.push_back(comp);
  }
  if (out.mixture.components.empty())
    throw Error(ErrorCode::AllComponentsEmpty, "every component fell below weight 3");
  for (auto& comp : out.mixture.components) comp.prior /= total;
  return out;
}

Mixture density_check(const Mixture& mix, const ResponsibilityTable& table,
                      const SampleSet& samples, double t_rho, double c_dm) {
  if (mix.k() != table.k())
    throw Error(ErrorCode::DimensionMismatch, "mixture and table component counts differ");
  std::vector<int32_t> pix2samp = samples.pixel_to_sample();
  Mixture out = mix;
  double rho2 = c_dm * c_dm;

  for (int j = 0; j < mix.k(); ++j) {
    const Component& comp = mix.components[j];
    if (!(comp.prior > 0.0)) continue;
    Eigen::Matrix2d cov = conditioned_cov(comp.xcov);
    double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
    if (!(det > 0.0)) {
      out.components[j].prior = 0.0;
      continue;
    }
    Eigen::Matrix2d inv;
    inv << cov(1, 1), -cov(0, 1), -cov(1, 0), cov(0, 0);
    inv /= det;

    double eu = c_dm * std::sqrt(cov(0, 0));
    double ev = c_dm * std::sqrt(cov(1, 1));
    long u0 = static_cast<long>(std::ceil(comp.center[0] - eu));
    long u1 = static_cast<long>(std::floor(comp.center[0] + eu));
    long v0 = static_cast<long>(std::ceil(comp.center[1] - ev));
    long v1 = static_cast<long>(std::floor(comp.center[1] + ev));

    // Lattice positions inside the ellipse; positions without a kept sample
    // MAP-assigned to this component only count in the denominator.
    long denom = 0, num = 0;
    for (long v = v0; v <= v1; ++v) {
      for (long u = u0; u <= u1; ++u) {
        Eigen::Vector2d d(u - comp.center[0], v - comp.center[1]);
        if (d.dot(inv * d) > rho2) continue;
        ++denom;
        if (u < 0 || u >= samples.width || v < 0 || v >= samples.height) continue;
        int32_t s = pix2samp[v * samples.width + u];
        if (s >= 0 && table.kept[s] && table.map_comp[s] == j) ++num;
      }
    }
    double fraction = denom > 0 ? static_cast<double>(num) / denom : 0.0;
    if (fraction < t_rho) out.components[j].prior = 0.0;
  }

  double total = 0.0;
  for (const auto& c : out.components) total += c.prior;
  if (total > 0.0)
    for (auto& c : out.components) c.prior /= total;
  return out;
}

namespace {

// The same repair trim step (d) applies, re-run against the freshly
// evaluated table: component deletion in the M-step can drop the kept
// log-likelihood below the previous iteration even though the trim step
// already enforced the bound for the pre-deletion model.
double enforce_monotone_ll(ResponsibilityTable& table, double alpha, double prev_ll) {
  double ll = observed_log_likelihood(table);
  if (!(ll < prev_ll)) return ll;
  int n = table.n();
  std::vector<int> kept_idx;
  kept_idx.reserve(n);
  for (int i = 0; i < n; ++i)
    if (table.kept[i]) kept_idx.push_back(i);
  std::sort(kept_idx.begin(), kept_idx.end(), [&](int a, int b) {
    if (table.log_rn[a] != table.log_rn[b]) return table.log_rn[a] < table.log_rn[b];
    return a < b;
  });
  size_t min_keep = static_cast<size_t>(std::ceil(alpha * n / 2.0));
  size_t max_remove = kept_idx.size() > min_keep ? kept_idx.size() - min_keep : 0;
  size_t cut = 0;
  while (!(ll > prev_ll)) {
    if (cut == max_remove)
      throw Error(ErrorCode::CannotRestoreMonotonicity,
                  "cannot raise kept log-likelihood above previous iteration");
    ll -= table.log_rn[kept_idx[cut]];
    ++cut;
  }
  for (size_t j = 0; j < cut; ++j) table.kept[kept_idx[j]] = 0;
  return ll;
}

}  // namespace

FitState fit(const SampleSet& samples, const FitConfig& cfg, bool verbose) {
  cfg.validate();
  int n = static_cast<int>(samples.size());
  if (n < cfg.k)
    throw Error(ErrorCode::TooFewSamples, "fewer samples than components");

  FitState state;
  Mixture mix = kmeans_init(samples, cfg);
  std::vector<int> live_orig(cfg.k);
  std::iota(live_orig.begin(), live_orig.end(), 0);

  ResponsibilityTable table = e_step(mix, samples);
  double prev_ll = 0.0;  // Algorithm-style sentinel, never a genuine likelihood
  bool converged = false;

  for (int iter = 1; iter <= cfg.max_iters && !converged; ++iter) {
    table.normalize();
    trim(table, samples, cfg.alpha, iter == 1 ? 0.0 : prev_ll);
    size_t trimmed;

    MStepResult ms = m_step(table, samples);
    if (!ms.dropped.empty()) {
      std::vector<int> next_live;
      next_live.reserve(live_orig.size() - ms.dropped.size());
      size_t d = 0;
      for (size_t j = 0; j < live_orig.size(); ++j) {
        if (d < ms.dropped.size() && static_cast<int>(j) == ms.dropped[d]) {
          state.removed_components.push_back(live_orig[j]);
          ++d;
        } else {
          next_live.push_back(live_orig[j]);
        }
      }
      live_orig = std::move(next_live);
    }
    mix = std::move(ms.mixture);

    ResponsibilityTable next = e_step(mix, samples);
    for (int i = 0; i < n; ++i) next.kept[i] = table.kept[i] && next.kept[i];
    double ll = iter == 1 ? observed_log_likelihood(next)
                          : enforce_monotone_ll(next, cfg.alpha, prev_ll);
    trimmed = n - next.kept_count();

    state.history.push_back({iter, ll, trimmed, mix.k()});
    state.iter = iter;
    if (verbose)
      std::fprintf(stderr, "iter=%d L=%.8f trimmed=%zu live=%d\n", iter, ll, trimmed,
                   mix.k());

    converged = iter >= 2 && (ll - prev_ll) < cfg.epsilon * std::abs(prev_ll);
    prev_ll = ll;
    table = std::move(next);
  }

  // Post-processing: normalize, refresh priors from kept weights, then the
  // density check. MAP labels stay as computed from the final expectation.
  table.normalize();
  double total = std::accumulate(table.comp_weight.begin(), table.comp_weight.end(), 0.0);
  if (total > 0.0)
    for (int j = 0; j < mix.k(); ++j) mix.components[j].prior = table.comp_weight[j] / total;

  Mixture checked = density_check(mix, table, samples, cfg.t_rho, cfg.c_dm);
  for (int j = 0; j < mix.k(); ++j)
    if (mix.components[j].prior > 0.0 && !(checked.components[j].prior > 0.0))
      state.removed_components.push_back(live_orig[j]);

  state.mixture = std::move(checked);
  state.table = std::move(table);
  state.ll = prev_ll;
  return state;
}

namespace {

void append_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint64_t read_u64(const std::string& in, size_t pos) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<uint64_t>(static_cast<uint8_t>(in[pos + i])) << (8 * i);
  return v;
}

}  // namespace

std::string kept_mask_to_rle(const std::vector<uint8_t>& kept) {
  std::string out = "RPLK";
  append_u64(out, kept.size());
  uint8_t first = kept.empty() ? 0 : (kept[0] ? 1 : 0);
  out.push_back(static_cast<char>(first));
  uint8_t current = first;
  uint64_t run = 0;
  for (uint8_t f : kept) {
    uint8_t v = f ? 1 : 0;
    if (v == current) {
      ++run;
    } else {
      append_u64(out, run);
      current = v;
      run = 1;
    }
  }
  if (!kept.empty()) append_u64(out, run);
  return out;
}

std::vector<uint8_t> kept_mask_from_rle(const std::string& bytes) {
  if (bytes.size() < 13 || bytes.compare(0, 4, "RPLK") != 0)
    throw Error(ErrorCode::BadFormat, "not a kept-mask RLE blob");
  uint64_t n = read_u64(bytes, 4);
  uint8_t value = static_cast<uint8_t>(bytes[12]);
  std::vector<uint8_t> kept;
  kept.reserve(n);
  size_t pos = 13;
  while (kept.size() < n) {
    if (pos + 8 > bytes.size()) throw Error(ErrorCode::BadFormat, "truncated RLE blob");
    uint64_t run = read_u64(bytes, pos);
    pos += 8;
    for (uint64_t i = 0; i < run && kept.size() < n; ++i) kept.push_back(value);
    value = value ? 0 : 1;
  }
  return kept;
}

}  // namespace rplgmr
