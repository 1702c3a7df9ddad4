#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "helpers.hpp"
#include "oracles.hpp"
#include "rplgmr/fusion.hpp"

using namespace rplgmr;

namespace {

Component ellipse(double cx, double cy, const Eigen::Matrix2d& cov) {
  Component c;
  c.center = Eigen::Vector2d(cx, cy);
  c.xcov = cov;
  c.prior = 1.0;
  return c;
}

}  // namespace

TEST_CASE("plane_stats: flat data has zero MSE and a +z normal") {
  SampleSet samples = testutil::grid_samples(10, 8, [](double, double) { return 0.0; });
  ResponsibilityTable t = testutil::binary_table(std::vector<int>(samples.size(), 0), 1);
  PlaneStats st = plane_stats(0, t, samples);
  CHECK(st.weight == doctest::Approx(80.0));
  CHECK(st.mse == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(st.normal.isApprox(Eigen::Vector3d(0, 0, 1), 1e-12));
  CHECK(st.axes[0].value >= st.axes[1].value);
  CHECK(st.axes[1].value >= st.mse - 1e-12);
  // orthonormal axes
  CHECK(std::abs(st.axes[0].dir.dot(st.axes[1].dir)) < 1e-9);
  CHECK(std::abs(st.axes[0].dir.dot(st.normal)) < 1e-9);
  CHECK(st.normal.norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("plane_stats: Gaussian response noise shows up as its variance") {
  std::mt19937_64 g(12);
  std::normal_distribution<double> noise(0.0, 0.1);
  SampleSet samples;
  samples.width = 400;
  samples.height = 250;
  int n = 100000;
  std::uniform_real_distribution<double> pos(0.0, 200.0);
  for (int i = 0; i < n; ++i) {
    samples.x.emplace_back(pos(g), pos(g));
    samples.y.push_back(noise(g));
    samples.origin.push_back(i);
  }
  ResponsibilityTable t = testutil::binary_table(std::vector<int>(n, 0), 1);
  PlaneStats st = plane_stats(0, t, samples);
  CHECK(st.mse == doctest::Approx(0.01).epsilon(0.05));
  CHECK(std::abs(st.normal[2]) > 0.999);
}

TEST_CASE("plane_stats: isotropic blob has no preferred plane") {
  std::mt19937_64 g(13);
  std::normal_distribution<double> gauss(0.0, 2.0);
  SampleSet samples;
  samples.width = 100;
  samples.height = 100;
  for (int i = 0; i < 30000; ++i) {
    samples.x.emplace_back(gauss(g), gauss(g));
    samples.y.push_back(gauss(g));
    samples.origin.push_back(i);
  }
  ResponsibilityTable t = testutil::binary_table(std::vector<int>(30000, 0), 1);
  PlaneStats st = plane_stats(0, t, samples);
  CHECK(st.axes[0].value == doctest::Approx(st.mse).epsilon(0.05));
  CHECK(st.axes[1].value == doctest::Approx(st.mse).epsilon(0.05));
}

TEST_CASE("plane_stats rejects weight below 3") {
  SampleSet samples = testutil::grid_samples(2, 1, [](double, double) { return 0.0; });
  ResponsibilityTable t = testutil::binary_table({0, 0}, 1);
  try {
    plane_stats(0, t, samples);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateScatter);
  }
}

TEST_CASE("ellipses_overlap: identity, separation, tangency") {
  Component a = ellipse(0, 0, Eigen::Matrix2d::Identity());
  CHECK(ellipses_overlap(a, a, 1.0));

  Component b3 = ellipse(3, 0, Eigen::Matrix2d::Identity());
  CHECK(!ellipses_overlap(a, b3, 1.0));
  Component b15 = ellipse(1.5, 0, Eigen::Matrix2d::Identity());
  CHECK(ellipses_overlap(a, b15, 1.0));
  Component b2 = ellipse(2.0, 0, Eigen::Matrix2d::Identity());
  CHECK(ellipses_overlap(a, b2, 1.0));  // external tangency counts as overlap

  // containment without boundary contact
  Component inner = ellipse(0.3, 0.0, 0.01 * Eigen::Matrix2d::Identity());
  CHECK(ellipses_overlap(a, inner, 1.0));
  CHECK(ellipses_overlap(inner, a, 1.0));

  // the scale factor widens both
  CHECK(ellipses_overlap(a, b3, 1.6));
}

TEST_CASE("ellipses_overlap is symmetric and matches a boundary-sampling oracle") {
  auto g = oracle::rng(2718);
  std::uniform_real_distribution<double> pos(-6.0, 6.0);
  int tested = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Component a = ellipse(pos(g), pos(g), oracle::random_spd2(g, 0.3, 5.0));
    Component b = ellipse(pos(g), pos(g), oracle::random_spd2(g, 0.3, 5.0));
    double c_dm = 0.8 + 0.4 * (trial % 5);
    bool mine = ellipses_overlap(a, b, c_dm);
    CHECK(mine == ellipses_overlap(b, a, c_dm));
    oracle::OverlapVerdict v = oracle::ellipse_overlap_sampled(a, b, c_dm, 2000);
    if (v.margin < 1e-3) continue;  // razor-edge: oracle resolution limit
    ++tested;
    CHECK(mine == v.overlap);
  }
  CHECK(tested > 800);  // the skip guard must not hollow the test out
}

TEST_CASE("combined_mse: coplanar halves, L-shape growth, self-merge") {
  SampleSet samples = testutil::grid_samples(20, 10, [](double u, double v) {
    return 0.5 * u - 0.25 * v + 7.0;
  });
  std::vector<int> halves(samples.size());
  for (size_t i = 0; i < samples.size(); ++i)
    halves[i] = samples.x[i][0] < 10.0 ? 0 : 1;
  ResponsibilityTable t = testutil::binary_table(halves, 2);

  auto [mse01, st01] = combined_mse(0, 1, t, samples);
  CHECK(mse01 == doctest::Approx(0.0).epsilon(1e-12));
  auto [mse10, st10] = combined_mse(1, 0, t, samples);
  CHECK(mse01 == mse10);  // exactly symmetric
  CHECK(st01.scatter.isApprox(st10.scatter, 1e-15));

  auto [mse_self, st_self] = combined_mse(0, 0, t, samples);
  PlaneStats single = plane_stats(0, t, samples);
  CHECK(mse_self == doctest::Approx(single.mse).epsilon(1e-12));
  CHECK(st_self.weight == doctest::Approx(2.0 * single.weight).epsilon(1e-12));
}

TEST_CASE("combined_mse of perpendicular planes grows as L^2/24") {
  // L-shaped cross-section: horizontal run (t, v, 0), vertical run (0, v, t).
  // The transverse v-extent matches L so the cross-section eigenvalue L^2/24
  // stays the smallest of the three.
  for (double len : {12.0, 24.0, 48.0}) {
    int per = static_cast<int>(len);
    int depth = static_cast<int>(len);
    SampleSet samples;
    samples.width = 200;
    samples.height = 200;
    std::vector<int> assign;
    int idx = 0;
    for (int v = 0; v < depth; ++v)
      for (int i = 0; i < per; ++i) {
        double tcoord = (i + 0.5) * len / per;  // uniform mass on (0, L)
        samples.x.emplace_back(tcoord, v);
        samples.y.push_back(0.0);
        samples.origin.push_back(idx++);
        assign.push_back(0);
        samples.x.emplace_back(0.0, v);
        samples.y.push_back(tcoord);
        samples.origin.push_back(idx++);
        assign.push_back(1);
      }
    ResponsibilityTable t = testutil::binary_table(assign, 2);
    auto [mse, st] = combined_mse(0, 1, t, samples);
    CHECK(mse == doctest::Approx(len * len / 24.0).epsilon(0.02));
  }
}

TEST_CASE("projection_check: coplanar passes, protrusion fails, boundary is inclusive") {
  PlaneStats flat;
  flat.mse = 1.0;
  flat.normal = Eigen::Vector3d(0, 0, 1);
  flat.axes[0] = {100.0, Eigen::Vector3d(1, 0, 0)};
  flat.axes[1] = {50.0, Eigen::Vector3d(0, 1, 0)};
  CHECK(projection_check(flat, flat, 10.0));  // in-plane axes never protrude

  PlaneStats tall;  // 100-unit extent perpendicular to `flat`
  tall.mse = 1.0;
  tall.normal = Eigen::Vector3d(1, 0, 0);
  tall.axes[0] = {100.0 * 100.0, Eigen::Vector3d(0, 0, 1)};  // sqrt = 100 along z
  tall.axes[1] = {4.0, Eigen::Vector3d(0, 1, 0)};
  CHECK(!projection_check(flat, tall, 10.0));  // projection 100 > 10*sqrt(1)
  CHECK(!projection_check(tall, flat, 10.0));  // symmetric blocking

  PlaneStats edge = tall;
  edge.axes[0] = {100.0, Eigen::Vector3d(0, 0, 1)};  // projection exactly 10
  CHECK(projection_check(flat, edge, 10.0));         // <= is a pass
}

TEST_CASE("fuse_all merges a noiseless plane split into 8 strips") {
  int strips = 8, per = 10;
  SampleSet samples;
  samples.width = strips * per;
  samples.height = 10;
  std::vector<int> assign;
  int idx = 0;
  for (int v = 0; v < 10; ++v)
    for (int u = 0; u < strips * per; ++u) {
      samples.x.emplace_back(u, v);
      samples.y.push_back(0.1 * u + 0.2 * v + 30.0);
      samples.origin.push_back(idx++);
      assign.push_back(u / per);
    }
  ResponsibilityTable t = testutil::binary_table(assign, strips);
  Mixture mix;
  for (int j = 0; j < strips; ++j) {
    Component c;
    c.center = Eigen::Vector2d(per * j + 4.5, 4.5);
    c.xcov = Eigen::Vector2d(8.0, 8.0).asDiagonal();
    c.prior = 1.0 / strips;
    mix.components.push_back(c);
  }
  FusionConfig cfg;
  cfg.t_mse = 5.0;
  cfg.t_proj = 10.0;
  cfg.c_dm = 2.1;

  AdjacencyGraph graph = build_adjacency(mix, t, samples, cfg.c_dm);
  CHECK(graph.nodes.size() == 8);
  CHECK(!graph.edges.empty());

  std::vector<std::string> trace;
  FusionResult fused = fuse_all(mix, t, samples, cfg, &trace);
  CHECK(fused.planes.size() == 1);
  for (int j = 0; j < strips; ++j) CHECK(fused.merge.parent.at(j) == 1);
  CHECK(!trace.empty());

  // fused stats equal a from-scratch recomputation over summed weights
  PlaneStats direct = [&] {
    std::vector<int> all(samples.size(), 0);
    ResponsibilityTable one = testutil::binary_table(all, 1);
    return plane_stats(0, one, samples);
  }();
  CHECK(fused.planes[0].weight == doctest::Approx(direct.weight).epsilon(1e-12));
  CHECK(fused.planes[0].scatter.isApprox(direct.scatter, 1e-10));
}

TEST_CASE("fuse_all respects adjacency and the t_mse=0 identity") {
  // two coplanar clusters with far-apart, non-overlapping ellipses
  SampleSet samples;
  samples.width = 100;
  samples.height = 10;
  std::vector<int> assign;
  int idx = 0;
  for (int v = 0; v < 10; ++v) {
    for (int u = 0; u < 10; ++u) {
      samples.x.emplace_back(u, v);
      samples.y.push_back(5.0);
      samples.origin.push_back(idx++);
      assign.push_back(0);
      samples.x.emplace_back(u + 80, v);
      samples.y.push_back(5.0);
      samples.origin.push_back(idx++);
      assign.push_back(1);
    }
  }
  ResponsibilityTable t = testutil::binary_table(assign, 2);
  Mixture mix;
  for (int j = 0; j < 2; ++j) {
    Component c;
    c.center = Eigen::Vector2d(4.5 + 80.0 * j, 4.5);
    c.xcov = Eigen::Vector2d(8.0, 8.0).asDiagonal();
    c.prior = 0.5;
    mix.components.push_back(c);
  }
  FusionConfig cfg;
  FusionResult fused = fuse_all(mix, t, samples, cfg);
  CHECK(fused.planes.size() == 2);  // never merged, regardless of coplanarity

  // noisy data with t_mse = 0: the merge map is the identity partition
  std::mt19937_64 g(5);
  std::normal_distribution<double> noise(0.0, 0.3);
  SampleSet noisy = samples;
  for (auto& y : noisy.y) y += noise(g);
  FusionConfig zero = cfg;
  zero.t_mse = 0.0;
  FusionResult none = fuse_all(mix, t, noisy, zero);
  CHECK(none.planes.size() == 2);
  CHECK(none.merge.parent.at(0) == 1);
  CHECK(none.merge.parent.at(1) == 2);
}

TEST_CASE("merge map is a partition with contiguous labels") {
  SampleSet samples = testutil::grid_samples(30, 10, [](double u, double v) {
    return 0.05 * u - 0.02 * v + 40.0;
  });
  std::vector<int> assign(samples.size());
  for (size_t i = 0; i < samples.size(); ++i)
    assign[i] = static_cast<int>(samples.x[i][0]) / 10;
  ResponsibilityTable t = testutil::binary_table(assign, 3);
  Mixture mix;
  for (int j = 0; j < 3; ++j) {
    Component c;
    c.center = Eigen::Vector2d(10 * j + 4.5, 4.5);
    c.xcov = Eigen::Vector2d(9.0, 9.0).asDiagonal();
    c.prior = 1.0 / 3;
    mix.components.push_back(c);
  }
  FusionConfig cfg;
  FusionResult fused = fuse_all(mix, t, samples, cfg);
  REQUIRE(!fused.planes.empty());
  std::set<int> labels;
  for (auto [comp, label] : fused.merge.parent) {
    CHECK(comp >= 0);
    CHECK(comp < 3);
    CHECK(label >= 1);
    CHECK(label <= static_cast<int>(fused.planes.size()));
    labels.insert(label);
  }
  CHECK(fused.merge.parent.size() == 3);  // every live component mapped once
  CHECK(labels.size() == fused.planes.size());
  CHECK(*labels.begin() == 1);
  CHECK(*labels.rbegin() == static_cast<int>(fused.planes.size()));
}

TEST_CASE("segmentation_from paints MAP labels through the merge map") {
  SampleSet samples = testutil::grid_samples(6, 4, [](double u, double) { return u; });
  std::vector<int> assign(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) assign[i] = samples.x[i][0] < 3 ? 0 : 1;
  ResponsibilityTable t = testutil::binary_table(assign, 2);
  t.kept[0] = 0;  // a trimmed sample goes to label 0

  MergeMap identity;
  identity.parent = {{0, 1}, {1, 2}};
  Segmentation seg = segmentation_from(identity, t, samples, 6, 4);
  CHECK(seg.label_at(0, 0) == 0);  // trimmed
  CHECK(seg.label_at(1, 0) == 1);
  CHECK(seg.label_at(4, 2) == 2);

  MergeMap all;
  all.parent = {{0, 1}, {1, 1}};
  Segmentation merged = segmentation_from(all, t, samples, 6, 4);
  for (int v = 0; v < 4; ++v)
    for (int u = 0; u < 6; ++u)
      if (!(u == 0 && v == 0)) CHECK(merged.label_at(u, v) == 1);

  // components absent from the map (density-removed) give label 0
  MergeMap partial;
  partial.parent = {{0, 1}};
  Segmentation part = segmentation_from(partial, t, samples, 6, 4);
  CHECK(part.label_at(4, 2) == 0);
}
