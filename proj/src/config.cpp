#include "rplgmr/config.hpp"

#include <json.hpp>

namespace rplgmr {

void apply_preset(RunConfig& cfg, const std::string& preset) {
  cfg.preset = preset;
  if (preset == "custom") return;
  // Shared profile: k=200, c_dm=2.1, t_proj=10, t_rho=0.5, eps=1e-5, 50 iters.
  cfg.fit.k = 200;
  cfg.fit.epsilon = 1e-5;
  cfg.fit.max_iters = 50;
  cfg.fit.t_rho = 0.5;
  cfg.set_c_dm(2.1);
  cfg.fusion.t_proj = 10.0;
  if (preset == "abw") {
    cfg.fit.alpha = 0.98;
    cfg.fusion.t_mse = 5.0;
  } else if (preset == "perceptron") {
    cfg.fit.alpha = 0.99;
    cfg.fusion.t_mse = 7.5;
  } else {
    throw Error(ErrorCode::BadFormat, "unknown preset: " + preset);
  }
}

void apply_config_json(RunConfig& cfg, const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const auto& v = it.value();
    if (key == "preset") {
      // preset in a config file re-bases the defaults before other keys
      continue;
    } else if (key == "k") {
      cfg.fit.k = v;
    } else if (key == "alpha") {
      cfg.fit.alpha = v;
    } else if (key == "epsilon") {
      cfg.fit.epsilon = v;
    } else if (key == "max_iters") {
      cfg.fit.max_iters = v;
    } else if (key == "t_rho") {
      cfg.fit.t_rho = v;
    } else if (key == "c_dm") {
      cfg.set_c_dm(double(v));
    } else if (key == "seed") {
      cfg.fit.seed = v;
    } else if (key == "kmeans_restarts") {
      cfg.fit.kmeans_restarts = v;
    } else if (key == "kmeans_max_iters") {
      cfg.fit.kmeans_max_iters = v;
    } else if (key == "t_mse") {
      cfg.fusion.t_mse = v;
    } else if (key == "t_proj") {
      cfg.fusion.t_proj = v;
    } else if (key == "eval_overlap") {
      cfg.eval_overlap = v;
    } else if (key == "out_dir") {
      cfg.out_dir = v;
    } else if (key == "render") {
      cfg.render = v;
    } else if (key == "verbose") {
      cfg.verbose = v;
    } else {
      throw Error(ErrorCode::BadFormat, "unknown config key: " + key);
    }
  }
}

std::string run_config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["preset"] = cfg.preset;
  j["k"] = cfg.fit.k;
  j["alpha"] = cfg.fit.alpha;
  j["epsilon"] = cfg.fit.epsilon;
  j["max_iters"] = cfg.fit.max_iters;
  j["t_rho"] = cfg.fit.t_rho;
  j["c_dm"] = cfg.fit.c_dm;
  j["seed"] = cfg.fit.seed;
  j["kmeans_restarts"] = cfg.fit.kmeans_restarts;
  j["kmeans_max_iters"] = cfg.fit.kmeans_max_iters;
  j["t_mse"] = cfg.fusion.t_mse;
  j["t_proj"] = cfg.fusion.t_proj;
  j["eval_overlap"] = cfg.eval_overlap;
  j["out_dir"] = cfg.out_dir;
  j["render"] = cfg.render;
  j["verbose"] = cfg.verbose;
  return j.dump(2);
}

}  // namespace rplgmr
