#include "rplgmr/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include <Eigen/Dense>

namespace rplgmr {

namespace {

// Largest-magnitude entry made positive; ties resolve to the first such entry.
Eigen::Vector3d fix_sign(const Eigen::Vector3d& v) {
  int arg = 0;
  double best = std::abs(v[0]);
  for (int i = 1; i < 3; ++i) {
    if (std::abs(v[i]) > best) {
      best = std::abs(v[i]);
      arg = i;
    }
  }
  return v[arg] < 0.0 ? Eigen::Vector3d(-v) : v;
}

PlaneStats stats_from_weights(const std::vector<double>& w, const ResponsibilityTable& table,
                              const SampleSet& samples) {
  PlaneStats st;
  int n = table.n();
  double s0 = 0.0;
  Eigen::Vector3d s1 = Eigen::Vector3d::Zero();
  for (int i = 0; i < n; ++i) {
    if (!table.kept[i] || w[i] == 0.0) continue;
    s0 += w[i];
    s1 += w[i] * Eigen::Vector3d(samples.x[i][0], samples.x[i][1], samples.y[i]);
  }
  if (s0 < 3.0)
    throw Error(ErrorCode::DegenerateScatter, "effective weight below 3");
  st.weight = s0;
  st.mean = s1 / s0;

  Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
  for (int i = 0; i < n; ++i) {
    if (!table.kept[i] || w[i] == 0.0) continue;
    Eigen::Vector3d d(samples.x[i][0] - st.mean[0], samples.x[i][1] - st.mean[1],
                      samples.y[i] - st.mean[2]);
    scatter.noalias() += w[i] * (d * d.transpose());
  }
  st.scatter = scatter / s0;

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(st.scatter);
  const auto& ev = es.eigenvalues();   // ascending
  const auto& vec = es.eigenvectors();
  st.mse = ev[0];
  st.normal = fix_sign(vec.col(0));
  st.axes[0] = {ev[2], fix_sign(vec.col(2))};
  st.axes[1] = {ev[1], fix_sign(vec.col(1))};
  return st;
}

// Homogeneous conic of {x : (x-c)' Gamma^-1 (x-c) <= c_dm^2}, interior negative.
Eigen::Matrix3d ellipse_conic(const Component& comp, double c_dm) {
  Eigen::Matrix2d cov = conditioned_cov(comp.xcov);
  Eigen::Matrix2d m = cov.inverse() / (c_dm * c_dm);
  Eigen::Vector2d mc = m * comp.center;
  Eigen::Matrix3d q;
  q.topLeftCorner<2, 2>() = m;
  q.block<2, 1>(0, 2) = -mc;
  q.block<1, 2>(2, 0) = -mc.transpose();
  q(2, 2) = comp.center.dot(mc) - 1.0;
  return q;
}

double det3_cols(const Eigen::Vector3d& c0, const Eigen::Vector3d& c1,
                 const Eigen::Vector3d& c2) {
  return c0.dot(c1.cross(c2));
}

}  // namespace

PlaneStats plane_stats(int comp_index, const ResponsibilityTable& table,
                       const SampleSet& samples) {
  if (!table.normalized)
    throw Error(ErrorCode::BadFormat, "plane_stats needs a normalized table");
  if (comp_index < 0 || comp_index >= table.k())
    throw Error(ErrorCode::DimensionMismatch, "component index out of range");
  std::vector<double> w(table.n(), 0.0);
  for (int i = 0; i < table.n(); ++i) w[i] = table.weights(i, comp_index);
  return stats_from_weights(w, table, samples);
}

bool ellipses_overlap(const Component& a, const Component& b, double c_dm) {
  Eigen::Matrix3d qa = ellipse_conic(a, c_dm);
  Eigen::Matrix3d qb = ellipse_conic(b, c_dm);

  // g(lambda) = det(lambda*Qa - Qb) = a3 l^3 + a2 l^2 + a1 l + a0, by
  // multilinearity over columns.
  Eigen::Vector3d a0c = qa.col(0), a1c = qa.col(1), a2c = qa.col(2);
  Eigen::Vector3d b0c = qb.col(0), b1c = qb.col(1), b2c = qb.col(2);
  double c3 = det3_cols(a0c, a1c, a2c);
  double c2 = -(det3_cols(b0c, a1c, a2c) + det3_cols(a0c, b1c, a2c) +
                det3_cols(a0c, a1c, b2c));
  double c1 = det3_cols(a0c, b1c, b2c) + det3_cols(b0c, a1c, b2c) +
              det3_cols(b0c, b1c, a2c);
  double c0 = -det3_cols(b0c, b1c, b2c);

  // The closed ellipses are disjoint iff q(t) = g(-t) has two distinct
  // positive roots; a double root is external tangency, which counts as
  // overlap. q(t) = -c3 t^3 + c2 t^2 - c1 t + c0 with positive leading
  // coefficient and q(0) > 0, so separation means the local minimum of q
  // sits at t > 0 with q < 0 strictly.
  double p2 = -3.0 * c3, p1 = 2.0 * c2, p0 = -c1;
  double disc = p1 * p1 - 4.0 * p2 * p0;
  if (!(disc > 0.0)) return true;  // no two critical points: q never dips
  double sq = std::sqrt(disc);
  double t_min = (-p1 + sq) / (2.0 * p2);  // larger root: the local minimum
  if (!(t_min > 0.0)) return true;
  double qmin = ((-c3 * t_min + c2) * t_min - c1) * t_min + c0;
  return !(qmin < 0.0);
}

std::pair<double, PlaneStats> combined_mse(int i, int j, const ResponsibilityTable& table,
                                           const SampleSet& samples) {
  if (!table.normalized)
    throw Error(ErrorCode::BadFormat, "combined_mse needs a normalized table");
  std::vector<double> w(table.n(), 0.0);
  for (int s = 0; s < table.n(); ++s) w[s] = table.weights(s, i) + table.weights(s, j);
  PlaneStats st = stats_from_weights(w, table, samples);
  return {st.mse, st};
}

bool projection_check(const PlaneStats& a, const PlaneStats& b, double t_proj) {
  const PlaneStats* pair[2][2] = {{&a, &b}, {&b, &a}};
  for (auto& [source, target] : pair) {
    double limit = t_proj * std::sqrt(std::max(target->mse, 0.0));
    // exactly planar data leaves eigenvector noise of order sqrt(lambda)*eps
    // in the projections; those must not fail a zero-MSE threshold
    double slack = 1e-9 * std::sqrt(std::max(source->axes[0].value, 0.0));
    for (const auto& axis : source->axes) {
      double proj = std::sqrt(std::max(axis.value, 0.0)) *
                    std::abs(axis.dir.dot(target->normal));
      if (proj > limit + slack) return false;
    }
  }
  return true;
}

AdjacencyGraph build_adjacency(const Mixture& mix, const ResponsibilityTable& table,
                               const SampleSet& samples, double c_dm) {
  (void)samples;
  if (mix.k() != table.k())
    throw Error(ErrorCode::DimensionMismatch, "mixture and table component counts differ");
  AdjacencyGraph g;
  for (int j = 0; j < mix.k(); ++j) {
    // weight-3 floor: a live component without enough kept points cannot
    // carry a plane and is left out of fusion (its samples end up label 0)
    if (mix.components[j].prior > 0.0 && table.comp_weight[j] >= 3.0) g.nodes.push_back(j);
  }
  for (size_t a = 0; a < g.nodes.size(); ++a)
    for (size_t b = a + 1; b < g.nodes.size(); ++b)
      if (ellipses_overlap(mix.components[g.nodes[a]], mix.components[g.nodes[b]], c_dm))
        g.edges.emplace_back(g.nodes[a], g.nodes[b]);
  return g;
}

namespace {

struct FuseNode {
  std::vector<int> comps;   // sorted original component indices
  std::set<int> neighbors;  // node ids
  PlaneStats stats;
  bool alive = false;
  bool exhausted = false;
};

PlaneStats stats_for_comps(const std::vector<int>& comps, const ResponsibilityTable& table,
                           const SampleSet& samples) {
  std::vector<double> w(table.n(), 0.0);
  for (int i = 0; i < table.n(); ++i) {
    double acc = 0.0;
    for (int c : comps) acc += table.weights(i, c);
    w[i] = acc;
  }
  return stats_from_weights(w, table, samples);
}

}  // namespace

FusionResult fuse_all(const Mixture& mix, const ResponsibilityTable& table,
                      const SampleSet& samples, const FusionConfig& cfg,
                      std::vector<std::string>* trace) {
  AdjacencyGraph graph = build_adjacency(mix, table, samples, cfg.c_dm);

  std::vector<FuseNode> nodes(mix.k());
  for (int id : graph.nodes) {
    nodes[id].comps = {id};
    nodes[id].stats = plane_stats(id, table, samples);
    nodes[id].alive = true;
  }
  for (auto [a, b] : graph.edges) {
    nodes[a].neighbors.insert(b);
    nodes[b].neighbors.insert(a);
  }

  auto log_line = [&](const std::string& s) {
    if (trace) trace->push_back(s);
  };

  int round = 0;
  for (;;) {
    int pick = -1;
    double pick_mse = std::numeric_limits<double>::infinity();
    for (int id = 0; id < static_cast<int>(nodes.size()); ++id) {
      if (!nodes[id].alive || nodes[id].exhausted) continue;
      if (nodes[id].stats.mse < pick_mse) {
        pick_mse = nodes[id].stats.mse;
        pick = id;
      }
    }
    if (pick < 0) break;
    ++round;
    FuseNode& node = nodes[pick];

    // A node is exhausted only when no neighbor merge is admissible, so the
    // minimum is taken over admissible combinations rather than testing just
    // the global-minimum-MSE neighbor.
    int best = -1;
    double best_mse = std::numeric_limits<double>::infinity();
    PlaneStats best_stats;
    for (int nb : node.neighbors) {
      std::vector<int> both;
      std::merge(node.comps.begin(), node.comps.end(), nodes[nb].comps.begin(),
                 nodes[nb].comps.end(), std::back_inserter(both));
      PlaneStats st = stats_for_comps(both, table, samples);
      if (st.mse > cfg.t_mse) continue;
      if (!projection_check(node.stats, nodes[nb].stats, cfg.t_proj)) continue;
      if (st.mse < best_mse) {
        best_mse = st.mse;
        best = nb;
        best_stats = st;
      }
    }

    {
      std::ostringstream line;
      line << "{\"round\":" << round << ",\"node\":" << pick << ",\"neighbor\":" << best
           << ",\"combined_mse\":" << (best >= 0 ? best_mse : -1.0) << ",\"decision\":\""
           << (best >= 0 ? "merge" : "exhausted") << "\"}";
      log_line(line.str());
    }

    if (best < 0) {
      node.exhausted = true;
      continue;
    }

    int keep = std::min(pick, best);
    int drop = std::max(pick, best);
    std::vector<int> both;
    std::merge(nodes[pick].comps.begin(), nodes[pick].comps.end(),
               nodes[best].comps.begin(), nodes[best].comps.end(),
               std::back_inserter(both));
    std::set<int> nbs;
    for (int x : nodes[pick].neighbors) nbs.insert(x);
    for (int x : nodes[best].neighbors) nbs.insert(x);
    nbs.erase(pick);
    nbs.erase(best);

    nodes[drop].alive = false;
    nodes[drop].neighbors.clear();
    FuseNode& merged = nodes[keep];
    merged.comps = std::move(both);
    merged.stats = best_stats;
    merged.neighbors = nbs;
    merged.exhausted = false;
    merged.alive = true;
    for (int nb : nbs) {
      nodes[nb].neighbors.erase(pick);
      nodes[nb].neighbors.erase(best);
      nodes[nb].neighbors.insert(keep);
      nodes[nb].exhausted = false;
    }
  }

  FusionResult result;
  int label = 0;
  for (int id = 0; id < static_cast<int>(nodes.size()); ++id) {
    if (!nodes[id].alive) continue;
    ++label;
    for (int c : nodes[id].comps) result.merge.parent[c] = label;
    result.planes.push_back(nodes[id].stats);
  }
  return result;
}

Segmentation segmentation_from(const MergeMap& merge, const ResponsibilityTable& table,
                               const SampleSet& samples, int width, int height,
                               const std::vector<PlaneStats>* planes) {
  Segmentation seg;
  seg.width = width;
  seg.height = height;
  seg.labels.assign(static_cast<size_t>(width) * height, 0);
  for (size_t i = 0; i < samples.size(); ++i) {
    if (!table.kept[i]) continue;
    auto it = merge.parent.find(table.map_comp[i]);
    if (it == merge.parent.end()) continue;
    seg.labels[samples.origin[i]] = it->second;
  }
  if (planes) {
    for (size_t p = 0; p < planes->size(); ++p) {
      Segmentation::Plane plane;
      plane.normal = (*planes)[p].normal;
      plane.offset = (*planes)[p].normal.dot((*planes)[p].mean);
      seg.planes[static_cast<int32_t>(p) + 1] = plane;
    }
  }
  return seg;
}

}  // namespace rplgmr
