#pragma once

#include <string>
#include <vector>

#include "rplgmr/em.hpp"
#include "rplgmr/fusion.hpp"

namespace rplgmr {

/// Everything a pipeline run needs. Precedence when assembling one: preset
/// defaults, then config-file values, then CLI flags.
struct RunConfig {
  FitConfig fit;
  FusionConfig fusion;
  std::string preset = "custom";  // abw | perceptron | custom
  double eval_overlap = 0.8;
  std::string out_dir = ".";
  bool render = false;
  bool verbose = false;

  /// Keeps the shared ellipse scale in sync across fit and fusion.
  void set_c_dm(double v) {
    fit.c_dm = v;
    fusion.c_dm = v;
  }
};

/// Fills the tuned profile for a dataset. "custom" leaves defaults.
void apply_preset(RunConfig& cfg, const std::string& preset);

/// Applies the keys present in a flat JSON object; unknown keys are errors.
void apply_config_json(RunConfig& cfg, const std::string& json_text);

std::string run_config_to_json(const RunConfig& cfg);

}  // namespace rplgmr
