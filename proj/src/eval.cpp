#include "rplgmr/eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>

#include <json.hpp>

namespace rplgmr {

namespace {

struct OverlapTable {
  std::vector<int32_t> gt_labels;       // sorted distinct labels > 0
  std::vector<int32_t> machine_labels;  // sorted distinct labels > 0
  std::vector<long> gt_size;            // pixels of gt label
  std::vector<long> machine_size;       // pixels of machine label over gt != 0
  // overlap[g][m] = shared pixels of gt_labels[g] and machine_labels[m]
  std::vector<std::vector<long>> overlap;
};

OverlapTable build_overlap(const Segmentation& machine, const Segmentation& gt) {
  std::map<int32_t, int> gt_index, m_index;
  for (int32_t l : gt.labels)
    if (l > 0) gt_index.emplace(l, 0);
  for (size_t i = 0; i < machine.labels.size(); ++i)
    if (machine.labels[i] > 0 && gt.labels[i] > 0) m_index.emplace(machine.labels[i], 0);
  // Machine regions living entirely on gt-0 pixels still exist (as spurious).
  for (int32_t l : machine.labels)
    if (l > 0) m_index.emplace(l, 0);

  OverlapTable t;
  for (auto& [l, idx] : gt_index) {
    idx = static_cast<int>(t.gt_labels.size());
    t.gt_labels.push_back(l);
  }
  for (auto& [l, idx] : m_index) {
    idx = static_cast<int>(t.machine_labels.size());
    t.machine_labels.push_back(l);
  }
  t.gt_size.assign(t.gt_labels.size(), 0);
  t.machine_size.assign(t.machine_labels.size(), 0);
  t.overlap.assign(t.gt_labels.size(), std::vector<long>(t.machine_labels.size(), 0));

  for (size_t i = 0; i < gt.labels.size(); ++i) {
    int32_t g = gt.labels[i], m = machine.labels[i];
    if (g > 0) ++t.gt_size[gt_index[g]];
    if (g > 0 && m > 0) {
      ++t.machine_size[m_index[m]];
      ++t.overlap[gt_index[g]][m_index[m]];
    }
  }
  return t;
}

}  // namespace

EvalReport compare(const Segmentation& machine, const Segmentation& gt, double t,
                   CorrectPairs* pairs_out) {
  if (machine.width != gt.width || machine.height != gt.height)
    throw Error(ErrorCode::DimensionMismatch, "segmentation dimensions differ");
  if (!(t > 0.5 && t <= 1.0))
    throw Error(ErrorCode::BadFormat, "overlap threshold must be in (0.5, 1]");

  OverlapTable ov = build_overlap(machine, gt);
  size_t ng = ov.gt_labels.size(), nm = ov.machine_labels.size();
  std::vector<uint8_t> gt_used(ng, 0), m_used(nm, 0);

  EvalReport report;
  report.gt_regions = static_cast<double>(ng);
  report.machine_regions = static_cast<double>(nm);

  // Tier 1: correct detections. With t > 0.5 the candidates are pairwise
  // disjoint, so greedy order only matters for reporting.
  struct Cand {
    long score;
    size_t g, m;
  };
  std::vector<Cand> correct;
  for (size_t g = 0; g < ng; ++g) {
    for (size_t m = 0; m < nm; ++m) {
      long o = ov.overlap[g][m];
      if (o <= 0) continue;
      if (static_cast<double>(o) >= t * ov.machine_size[m] &&
          static_cast<double>(o) >= t * ov.gt_size[g])
        correct.push_back({o, g, m});
    }
  }
  std::sort(correct.begin(), correct.end(), [](const Cand& a, const Cand& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.g != b.g) return a.g < b.g;
    return a.m < b.m;
  });
  for (const Cand& c : correct) {
    if (gt_used[c.g] || m_used[c.m]) continue;
    gt_used[c.g] = m_used[c.m] = 1;
    report.correct += 1.0;
    if (pairs_out)
      pairs_out->pairs.emplace_back(ov.gt_labels[c.g], ov.machine_labels[c.m]);
  }

  // Tier 2: over-segmentation — one gt region t-covered by >= 2 machine
  // regions that each lie t-inside it.
  for (size_t g = 0; g < ng; ++g) {
    if (gt_used[g]) continue;
    long total = 0;
    std::vector<size_t> members;
    for (size_t m = 0; m < nm; ++m) {
      if (m_used[m]) continue;
      long o = ov.overlap[g][m];
      if (o > 0 && static_cast<double>(o) >= t * ov.machine_size[m]) {
        members.push_back(m);
        total += o;
      }
    }
    if (members.size() >= 2 && static_cast<double>(total) >= t * ov.gt_size[g]) {
      gt_used[g] = 1;
      for (size_t m : members) m_used[m] = 1;
      report.over_segmented += 1.0;
    }
  }

  // Tier 3: under-segmentation — the mirror case.
  for (size_t m = 0; m < nm; ++m) {
    if (m_used[m]) continue;
    long total = 0;
    std::vector<size_t> members;
    for (size_t g = 0; g < ng; ++g) {
      if (gt_used[g]) continue;
      long o = ov.overlap[g][m];
      if (o > 0 && static_cast<double>(o) >= t * ov.gt_size[g]) {
        members.push_back(g);
        total += o;
      }
    }
    if (members.size() >= 2 && static_cast<double>(total) >= t * ov.machine_size[m]) {
      m_used[m] = 1;
      for (size_t g : members) gt_used[g] = 1;
      report.under_segmented += 1.0;
    }
  }

  for (size_t g = 0; g < ng; ++g)
    if (!gt_used[g]) report.missed += 1.0;
  for (size_t m = 0; m < nm; ++m)
    if (!m_used[m]) report.spurious += 1.0;
  return report;
}

std::optional<double> orientation_deviation(const Segmentation& machine,
                                            const Segmentation& gt,
                                            const CorrectPairs& pairs,
                                            const SampleSet& samples) {
  if (pairs.pairs.empty()) return std::nullopt;

  // Total-least-squares normal per gt label: smallest eigenvector of the
  // sample scatter of the region.
  std::map<int32_t, Eigen::Vector3d> gt_normals;
  for (auto [g, m] : pairs.pairs) gt_normals.emplace(g, Eigen::Vector3d::Zero());

  std::map<int32_t, std::vector<Eigen::Vector3d>> region_pts;
  for (size_t i = 0; i < samples.size(); ++i) {
    int32_t g = gt.labels[samples.origin[i]];
    if (g <= 0 || !gt_normals.count(g)) continue;
    region_pts[g].emplace_back(samples.x[i][0], samples.x[i][1], samples.y[i]);
  }
  for (auto& [g, normal] : gt_normals) {
    const auto& pts = region_pts[g];
    if (pts.size() < 3) return std::nullopt;  // cannot fit a plane
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& p : pts) mean += p;
    mean /= static_cast<double>(pts.size());
    Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
    for (const auto& p : pts) {
      Eigen::Vector3d d = p - mean;
      scatter.noalias() += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(scatter);
    normal = es.eigenvectors().col(0);
  }

  double total = 0.0;
  for (auto [g, m] : pairs.pairs) {
    auto it = machine.planes.find(m);
    if (it == machine.planes.end()) return std::nullopt;
    double c = std::abs(gt_normals[g].normalized().dot(it->second.normal.normalized()));
    total += std::acos(std::min(c, 1.0)) * 180.0 / std::numbers::pi;
  }
  return total / static_cast<double>(pairs.pairs.size());
}

EvalReport evaluate(const Segmentation& machine, const Segmentation& gt, double t,
                    const SampleSet& samples) {
  CorrectPairs pairs;
  EvalReport report = compare(machine, gt, t, &pairs);
  report.orientation_deviation_deg = orientation_deviation(machine, gt, pairs, samples);
  report.orientation_pairs =
      report.orientation_deviation_deg ? static_cast<double>(pairs.pairs.size()) : 0.0;
  return report;
}

EvalReport aggregate(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw Error(ErrorCode::EmptyList, "no reports to aggregate");
  EvalReport avg;
  double n = static_cast<double>(reports.size());
  double dev_weight = 0.0, dev_total = 0.0;
  for (const auto& r : reports) {
    avg.gt_regions += r.gt_regions;
    avg.machine_regions += r.machine_regions;
    avg.correct += r.correct;
    avg.over_segmented += r.over_segmented;
    avg.under_segmented += r.under_segmented;
    avg.missed += r.missed;
    avg.spurious += r.spurious;
    if (r.orientation_deviation_deg) {
      dev_total += *r.orientation_deviation_deg * r.orientation_pairs;
      dev_weight += r.orientation_pairs;
    }
  }
  avg.gt_regions /= n;
  avg.machine_regions /= n;
  avg.correct /= n;
  avg.over_segmented /= n;
  avg.under_segmented /= n;
  avg.missed /= n;
  avg.spurious /= n;
  if (dev_weight > 0.0) {
    avg.orientation_deviation_deg = dev_total / dev_weight;
    avg.orientation_pairs = dev_weight;
  }
  return avg;
}

std::string report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["gt_regions"] = r.gt_regions;
  j["machine_regions"] = r.machine_regions;
  j["correct"] = r.correct;
  j["over_segmented"] = r.over_segmented;
  j["under_segmented"] = r.under_segmented;
  j["missed"] = r.missed;
  j["spurious"] = r.spurious;
  if (r.orientation_deviation_deg)
    j["orientation_deviation_deg"] = *r.orientation_deviation_deg;
  else
    j["orientation_deviation_deg"] = nullptr;
  j["orientation_pairs"] = r.orientation_pairs;
  return j.dump(2);
}

std::string reports_to_table(const std::vector<std::string>& names,
                             const std::vector<EvalReport>& reports,
                             const EvalReport& average) {
  std::ostringstream out;
  out << std::left << std::setw(24) << "image" << std::right << std::setw(10) << "gt"
      << std::setw(10) << "machine" << std::setw(10) << "correct" << std::setw(12)
      << "orient" << std::setw(10) << "over" << std::setw(10) << "under" << std::setw(10)
      << "missed" << std::setw(10) << "spurious"
      << "\n";
  auto row = [&](const std::string& name, const EvalReport& r) {
    out << std::left << std::setw(24) << name << std::right << std::fixed
        << std::setprecision(1) << std::setw(10) << r.gt_regions << std::setw(10)
        << r.machine_regions << std::setw(10) << r.correct;
    if (r.orientation_deviation_deg)
      out << std::setw(12) << std::setprecision(2) << *r.orientation_deviation_deg;
    else
      out << std::setw(12) << "-";
    out << std::setprecision(1) << std::setw(10) << r.over_segmented << std::setw(10)
        << r.under_segmented << std::setw(10) << r.missed << std::setw(10) << r.spurious
        << "\n";
  };
  for (size_t i = 0; i < reports.size(); ++i)
    row(i < names.size() ? names[i] : "?", reports[i]);
  row("average", average);
  return out.str();
}

}  // namespace rplgmr
