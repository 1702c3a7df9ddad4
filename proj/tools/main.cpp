// Command-line front end: segment / evaluate / synth / render.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rplgmr/config.hpp"
#include "rplgmr/em.hpp"
#include "rplgmr/eval.hpp"
#include "rplgmr/fusion.hpp"
#include "rplgmr/geometry.hpp"
#include "rplgmr/model.hpp"
#include "rplgmr/pgm_io.hpp"

namespace fs = std::filesystem;
using namespace rplgmr;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitInputError = 2;

int fail(const std::string& code, const std::string& message) {
  nlohmann::json j;
  j["error"] = code;
  j["message"] = message;
  std::cout << j.dump() << std::endl;
  bool input_error = code == "UnreadableInput" || code == "BadFormat" ||
                     code == "AllInvalid" || code == "InvalidScene" ||
                     code == "EmptyList" || code == "NoInputs" ||
                     code == "DegenerateDepth" || code == "TooFewSamples";
  return input_error ? kExitInputError : kExitFailure;
}

/// Filename stem with the container extension and well-known role suffixes
/// removed, so scene1.seg.pgm, scene1.gt.pgm and scene1.depth.pgm pair up.
std::string canonical_stem(const fs::path& path) {
  std::string stem = path.stem().string();  // drops .pgm / .json
  for (const char* suffix : {".seg", ".gt", ".depth", ".labels"}) {
    if (stem.size() > std::strlen(suffix) &&
        stem.compare(stem.size() - std::strlen(suffix), std::string::npos, suffix) == 0) {
      stem.resize(stem.size() - std::strlen(suffix));
      break;
    }
  }
  return stem;
}

std::vector<fs::path> list_pgm(const fs::path& dir) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) return files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".pgm") continue;
    if (entry.path().filename().string().ends_with(".depth.pgm")) continue;
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

struct SegmentFlags {
  std::string preset;
  std::string config_path;
  std::optional<int> k;
  std::optional<double> alpha, t_mse, t_proj, t_rho, c_dm, epsilon;
  std::optional<int> max_iters;
  std::optional<uint64_t> seed;
  std::optional<std::string> out_dir;
  bool render = false;
  bool verbose = false;
};

/// preset defaults < config file < explicit flags.
RunConfig assemble_config(const SegmentFlags& flags) {
  RunConfig cfg;
  std::string file_text;
  std::string preset = flags.preset;
  if (!flags.config_path.empty()) {
    file_text = read_file(flags.config_path);
    if (preset.empty()) {
      nlohmann::json j = nlohmann::json::parse(file_text);
      if (j.contains("preset")) preset = j["preset"];
    }
  }
  if (!preset.empty()) apply_preset(cfg, preset);
  if (!file_text.empty()) apply_config_json(cfg, file_text);
  if (flags.k) cfg.fit.k = *flags.k;
  if (flags.alpha) cfg.fit.alpha = *flags.alpha;
  if (flags.t_mse) cfg.fusion.t_mse = *flags.t_mse;
  if (flags.t_proj) cfg.fusion.t_proj = *flags.t_proj;
  if (flags.t_rho) cfg.fit.t_rho = *flags.t_rho;
  if (flags.c_dm) cfg.set_c_dm(*flags.c_dm);
  if (flags.epsilon) cfg.fit.epsilon = *flags.epsilon;
  if (flags.max_iters) cfg.fit.max_iters = *flags.max_iters;
  if (flags.seed) cfg.fit.seed = *flags.seed;
  if (flags.out_dir) cfg.out_dir = *flags.out_dir;
  cfg.render = cfg.render || flags.render;
  cfg.verbose = cfg.verbose || flags.verbose;
  return cfg;
}

std::string planes_to_json(const Segmentation& seg, const std::vector<PlaneStats>& stats,
                           double s) {
  nlohmann::json j;
  j["s"] = s;
  j["width"] = seg.width;
  j["height"] = seg.height;
  j["planes"] = nlohmann::json::array();
  for (size_t p = 0; p < stats.size(); ++p) {
    nlohmann::json pj;
    pj["label"] = static_cast<int>(p) + 1;
    pj["normal"] = {stats[p].normal[0], stats[p].normal[1], stats[p].normal[2]};
    pj["offset"] = stats[p].normal.dot(stats[p].mean);
    pj["mean"] = {stats[p].mean[0], stats[p].mean[1], stats[p].mean[2]};
    pj["mse"] = stats[p].mse;
    pj["weight"] = stats[p].weight;
    j["planes"].push_back(std::move(pj));
  }
  return j.dump(2);
}

int cmd_segment(const SegmentFlags& flags, const std::vector<std::string>& inputs) {
  RunConfig cfg = assemble_config(flags);
  fs::create_directories(cfg.out_dir);
  for (const std::string& input : inputs) {
    DepthMeta meta;
    DepthImage img = read_depth_pgm(input, &meta);
    double s = meta.scale_override ? *meta.scale_override : scale_factor(img);
    SampleSet samples = to_samples(img, s);

    FitState state = fit(samples, cfg.fit, cfg.verbose);
    std::vector<std::string> trace;
    FusionResult fused = fuse_all(state.mixture, state.table, samples, cfg.fusion,
                                  cfg.verbose ? &trace : nullptr);
    Segmentation seg = segmentation_from(fused.merge, state.table, samples, img.width,
                                         img.height, &fused.planes);

    std::string stem = canonical_stem(input);
    fs::path base = fs::path(cfg.out_dir) / stem;
    if (cfg.verbose) {
      std::ostringstream lines;
      for (const auto& line : trace) lines << line << "\n";
      write_file_atomic(base.string() + ".fusetrace.jsonl", lines.str());
    }
    write_label_pgm(base.string() + ".seg.pgm", seg);
    write_file_atomic(base.string() + ".planes.json", planes_to_json(seg, fused.planes, s));
    write_file_atomic(base.string() + ".mixture.json", mixture_to_json(state.mixture));
    write_file_atomic(base.string() + ".kept.rle", kept_mask_to_rle(state.table.kept));
    std::ostringstream log;
    for (const auto& rec : state.history)
      log << "iter=" << rec.iter << " L=" << rec.ll << " trimmed=" << rec.trimmed
          << " live=" << rec.live_components << "\n";
    log << "final_ll=" << state.ll << " planes=" << fused.planes.size() << "\n";
    write_file_atomic(base.string() + ".fitlog.txt", log.str());
    if (cfg.render) write_label_ppm(base.string() + ".render.ppm", seg);
  }
  return 0;
}

int cmd_evaluate(const std::string& machine_dir, const std::string& gt_dir,
                 const std::string& depth_dir, double t, const std::string& out_dir) {
  std::map<std::string, fs::path> gt_by_stem;
  for (const auto& p : list_pgm(gt_dir)) gt_by_stem[canonical_stem(p)] = p;

  std::vector<std::string> names;
  std::vector<EvalReport> reports;
  std::vector<std::string> missing;
  for (const auto& mp : list_pgm(machine_dir)) {
    std::string stem = canonical_stem(mp);
    auto it = gt_by_stem.find(stem);
    if (it == gt_by_stem.end()) {
      missing.push_back(stem);
      std::fprintf(stderr, "MissingPair: no ground truth for %s, skipped\n", stem.c_str());
      continue;
    }
    Segmentation machine = read_label_pgm(mp.string());
    Segmentation gt = read_label_pgm(it->second.string());

    fs::path planes_path = mp.parent_path() / (stem + ".planes.json");
    if (fs::exists(planes_path)) {
      nlohmann::json pj = nlohmann::json::parse(read_file(planes_path.string()));
      for (const auto& p : pj.at("planes")) {
        Segmentation::Plane plane;
        plane.normal = Eigen::Vector3d(p.at("normal").at(0), p.at("normal").at(1),
                                       p.at("normal").at(2));
        plane.offset = p.at("offset");
        machine.planes[int32_t(p.at("label"))] = plane;
      }
    }

    std::optional<SampleSet> samples;
    if (!depth_dir.empty()) {
      fs::path depth_path = fs::path(depth_dir) / (stem + ".depth.pgm");
      if (!fs::exists(depth_path)) depth_path = fs::path(depth_dir) / (stem + ".pgm");
      if (fs::exists(depth_path)) {
        DepthMeta meta;
        DepthImage img = read_depth_pgm(depth_path.string(), &meta);
        double s = meta.scale_override ? *meta.scale_override : scale_factor(img);
        samples = to_samples(img, s);
      }
    }

    EvalReport report;
    if (samples) {
      report = evaluate(machine, gt, t, *samples);
    } else {
      report = compare(machine, gt, t);
    }
    names.push_back(stem);
    reports.push_back(report);
  }

  if (reports.empty()) return fail("NoInputs", "no machine/ground-truth pairs found");

  EvalReport avg = aggregate(reports);
  nlohmann::json out;
  out["images"] = nlohmann::json::array();
  for (size_t i = 0; i < reports.size(); ++i) {
    nlohmann::json r = nlohmann::json::parse(report_to_json(reports[i]));
    r["name"] = names[i];
    out["images"].push_back(std::move(r));
  }
  out["average"] = nlohmann::json::parse(report_to_json(avg));
  out["missing_pairs"] = missing;

  fs::create_directories(out_dir);
  write_file_atomic((fs::path(out_dir) / "report.json").string(), out.dump(2));
  std::string table = reports_to_table(names, reports, avg);
  write_file_atomic((fs::path(out_dir) / "report.txt").string(), table);
  std::cout << table;
  return 0;
}

int cmd_synth(const std::vector<std::string>& scene_paths, const std::string& out_dir) {
  fs::create_directories(out_dir);
  for (const std::string& path : scene_paths) {
    SceneDocument doc = scene_document_from_json(read_file(path));
    RenderedScene rendered = render_scene(doc.scene, doc.width, doc.height, doc.seed);
    std::string stem = canonical_stem(path);
    fs::path base = fs::path(out_dir) / stem;
    write_depth_pgm(base.string() + ".depth.pgm", rendered.depth, std::nullopt,
                    doc.scene.scale);
    write_label_pgm(base.string() + ".gt.pgm", rendered.ground_truth);
  }
  return 0;
}

int cmd_render(const std::string& input, std::string out_path, const std::string& out_dir) {
  Segmentation seg = read_label_pgm(input);
  if (out_path.empty()) {
    fs::create_directories(out_dir);
    out_path = (fs::path(out_dir) / (canonical_stem(input) + ".ppm")).string();
  }
  write_label_ppm(out_path, seg);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RPL-GMR: robust piecewise-linear Gaussian mixture regression "
               "plane extraction from depth images"};
  app.require_subcommand(1);

  SegmentFlags flags;
  std::vector<std::string> seg_inputs;
  auto* seg = app.add_subcommand("segment", "Fit and segment depth images");
  seg->add_option("inputs", seg_inputs, "Depth PGM files")->required();
  seg->add_option("--preset", flags.preset, "abw | perceptron | custom");
  seg->add_option("--config", flags.config_path, "Flat JSON config file");
  auto* ok = seg->add_option("--k", "Initial component count");
  auto* oalpha = seg->add_option("--alpha", "Kept fraction in (0,1]");
  auto* otmse = seg->add_option("--t-mse", "Fusion combined-MSE ceiling");
  auto* otproj = seg->add_option("--t-proj", "Fusion protrusion multiplier");
  auto* otrho = seg->add_option("--t-rho", "Density-check threshold");
  auto* ocdm = seg->add_option("--c-dm", "Mahalanobis ellipse scale");
  auto* oeps = seg->add_option("--epsilon", "Convergence tolerance");
  auto* oiters = seg->add_option("--max-iters", "EM iteration cap");
  auto* oseed = seg->add_option("--seed", "RNG seed");
  auto* oout = seg->add_option("--out-dir", "Output directory");
  seg->add_flag("--render", flags.render, "Also write a colorized PPM");
  seg->add_flag("--verbose", flags.verbose, "Per-iteration progress on stderr");

  std::string eval_machine, eval_gt, eval_depth, eval_out = ".";
  double eval_t = 0.8;
  auto* ev = app.add_subcommand("evaluate", "Score segmentations against ground truth");
  ev->add_option("machine_dir", eval_machine, "Directory of machine label PGMs")->required();
  ev->add_option("gt_dir", eval_gt, "Directory of ground-truth label PGMs")->required();
  ev->add_option("--depth", eval_depth, "Directory of depth PGMs (for orientation)");
  ev->add_option("--t", eval_t, "Pixel-overlap threshold, default 0.8");
  ev->add_option("--out-dir", eval_out, "Output directory");

  std::vector<std::string> synth_scenes;
  std::string synth_out = ".";
  auto* sy = app.add_subcommand("synth", "Render synthetic scenes to depth + GT PGMs");
  sy->add_option("scenes", synth_scenes, "Scene JSON files")->required();
  sy->add_option("--out-dir", synth_out, "Output directory");

  std::string render_input, render_out, render_dir = ".";
  auto* re = app.add_subcommand("render", "Colorize a label map into a PPM");
  re->add_option("input", render_input, "Label PGM")->required();
  re->add_option("--out", render_out, "Output PPM path");
  re->add_option("--out-dir", render_dir, "Output directory (when --out is not given)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (seg->parsed()) {
      if (ok->count()) flags.k = ok->as<int>();
      if (oalpha->count()) flags.alpha = oalpha->as<double>();
      if (otmse->count()) flags.t_mse = otmse->as<double>();
      if (otproj->count()) flags.t_proj = otproj->as<double>();
      if (otrho->count()) flags.t_rho = otrho->as<double>();
      if (ocdm->count()) flags.c_dm = ocdm->as<double>();
      if (oeps->count()) flags.epsilon = oeps->as<double>();
      if (oiters->count()) flags.max_iters = oiters->as<int>();
      if (oseed->count()) flags.seed = oseed->as<uint64_t>();
      if (oout->count()) flags.out_dir = oout->as<std::string>();
      return cmd_segment(flags, seg_inputs);
    }
    if (ev->parsed()) return cmd_evaluate(eval_machine, eval_gt, eval_depth, eval_t, eval_out);
    if (sy->parsed()) return cmd_synth(synth_scenes, synth_out);
    if (re->parsed()) return cmd_render(render_input, render_out, render_dir);
  } catch (const Error& e) {
    return fail(e.code_name(), e.what());
  } catch (const std::exception& e) {
    return fail("Unhandled", e.what());
  }
  return kExitFailure;
}
