#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rplgmr/geometry.hpp"
#include "rplgmr/segmentation.hpp"

namespace rplgmr {

/// Region-level comparison of a machine segmentation against ground truth.
/// Counts are whole numbers per image; aggregate() averages them.
struct EvalReport {
  double gt_regions = 0.0;
  double machine_regions = 0.0;
  double correct = 0.0;
  double over_segmented = 0.0;
  double under_segmented = 0.0;
  double missed = 0.0;
  double spurious = 0.0;
  std::optional<double> orientation_deviation_deg;  // absent when no correct pairs
  double orientation_pairs = 0.0;                   // weight for aggregation
};

/// Correctly detected (gt label, machine label) pairs, in gt-label order.
struct CorrectPairs {
  std::vector<std::pair<int32_t, int32_t>> pairs;
};

/// Two-sided t-overlap classification (correct / over- / under-segmented /
/// missed / spurious) with the tolerance t in (0.5, 1]. Pixels labeled 0 in
/// the ground truth are non-regions and excluded from machine region sizes.
/// Classification is tiered (correct first, then over, then under), greedy
/// by descending overlap within each tier.
EvalReport compare(const Segmentation& machine, const Segmentation& gt, double t,
                   CorrectPairs* pairs_out = nullptr);

/// Mean angular deviation in degrees over correctly detected pairs. Ground
/// truth normals are total-least-squares fits to the GT region's samples;
/// machine normals come from the machine segmentation's plane list.
std::optional<double> orientation_deviation(const Segmentation& machine,
                                            const Segmentation& gt,
                                            const CorrectPairs& pairs,
                                            const SampleSet& samples);

/// compare + orientation_deviation in one call.
EvalReport evaluate(const Segmentation& machine, const Segmentation& gt, double t,
                    const SampleSet& samples);

/// Arithmetic mean of counts; orientation deviation weighted by pair count.
EvalReport aggregate(const std::vector<EvalReport>& reports);

std::string report_to_json(const EvalReport& report);

/// Aligned plain-text table, one row per report plus the aggregate row.
std::string reports_to_table(const std::vector<std::string>& names,
                             const std::vector<EvalReport>& reports,
                             const EvalReport& average);

}  // namespace rplgmr
