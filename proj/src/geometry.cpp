#include "rplgmr/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <json.hpp>

namespace rplgmr {

void DepthImage::set(int u, int v, double d) {
  size_t i = static_cast<size_t>(v) * width + u;
  if (std::isfinite(d) && d > 0.0) {
    depth[i] = d;
    valid[i] = 1;
  } else {
    depth[i] = 0.0;
    valid[i] = 0;
  }
}

std::vector<int32_t> SampleSet::pixel_to_sample() const {
  std::vector<int32_t> map(static_cast<size_t>(width) * height, -1);
  for (size_t i = 0; i < origin.size(); ++i) map[origin[i]] = static_cast<int32_t>(i);
  return map;
}

double scale_factor(const DepthImage& img) {
  double inv_min = std::numeric_limits<double>::infinity();
  double inv_max = -std::numeric_limits<double>::infinity();
  size_t n_valid = 0;
  for (size_t i = 0; i < img.size(); ++i) {
    if (!img.valid[i]) continue;
    ++n_valid;
    double inv = 1.0 / img.depth[i];
    inv_min = std::min(inv_min, inv);
    inv_max = std::max(inv_max, inv);
  }
  if (n_valid == 0) throw Error(ErrorCode::AllInvalid, "no valid pixels");
  double range = inv_max - inv_min;
  if (!(range > 0.0))
    throw Error(ErrorCode::DegenerateDepth, "constant inverse depth, scale factor undefined");
  return 0.5 * (img.height + img.width) / range;
}

SampleSet to_samples(const DepthImage& img, double s) {
  if (!(s > 0.0)) throw Error(ErrorCode::BadFormat, "scale factor must be positive");
  SampleSet set;
  set.width = img.width;
  set.height = img.height;
  set.s = s;
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      size_t i = static_cast<size_t>(v) * img.width + u;
      if (!img.valid[i]) continue;
      set.x.emplace_back(static_cast<double>(u), static_cast<double>(v));
      set.y.push_back(s / img.depth[i]);
      set.origin.push_back(static_cast<int32_t>(i));
    }
  }
  return set;
}

double SyntheticScene::plane_response(const Plane& p, double u, double v) {
  // normal . (u, v, w) = offset  =>  w = (offset - n0*u - n1*v) / n2
  return (p.offset - p.normal[0] * u - p.normal[1] * v) / p.normal[2];
}

namespace {

// Even-odd crossing test; points exactly on an edge resolve deterministically.
bool point_in_polygon(const std::vector<Eigen::Vector2d>& poly, double px, double py) {
  bool inside = false;
  size_t n = poly.size();
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    double xi = poly[i].x(), yi = poly[i].y();
    double xj = poly[j].x(), yj = poly[j].y();
    if ((yi > py) != (yj > py)) {
      double x_cross = (xj - xi) * (py - yi) / (yj - yi) + xi;
      if (px < x_cross) inside = !inside;
    }
  }
  return inside;
}

}  // namespace

RenderedScene render_scene(const SyntheticScene& scene, int width, int height,
                           uint64_t seed) {
  if (width <= 0 || height <= 0)
    throw Error(ErrorCode::InvalidScene, "image dimensions must be positive");
  for (const auto& p : scene.planes) {
    if (p.polygon.size() < 3)
      throw Error(ErrorCode::InvalidScene, "plane support needs at least 3 vertices");
    if (std::abs(p.normal.norm() - 1.0) > 1e-9)
      throw Error(ErrorCode::InvalidScene, "plane normal is not unit length");
    if (p.normal[2] == 0.0)
      throw Error(ErrorCode::InvalidScene, "plane is vertical in response space");
    for (const auto& vtx : p.polygon) {
      // pixel centers sit at integers, so the frame spans [-0.5, dim-0.5];
      // vertices up to `dim` are tolerated for [0, dim] polygon conventions
      if (vtx.x() < -0.5 || vtx.x() > width || vtx.y() < -0.5 || vtx.y() > height)
        throw Error(ErrorCode::InvalidScene, "plane support exits the image");
    }
  }
  if (!(scene.scale > 0.0))
    throw Error(ErrorCode::InvalidScene, "scene scale must be positive");

  RenderedScene out;
  out.depth = DepthImage(width, height);
  out.ground_truth.width = width;
  out.ground_truth.height = height;
  out.ground_truth.labels.assign(static_cast<size_t>(width) * height, 0);

  // Pass 1: covering plane and noiseless response per pixel.
  std::vector<int32_t> cover(static_cast<size_t>(width) * height, 0);
  std::vector<double> response(static_cast<size_t>(width) * height, 0.0);
  std::vector<int32_t> covered;  // pixel indices, row-major order
  double z_min = std::numeric_limits<double>::infinity();
  double z_max = -std::numeric_limits<double>::infinity();
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      size_t i = static_cast<size_t>(v) * width + u;
      for (size_t p = 0; p < scene.planes.size(); ++p) {
        if (!point_in_polygon(scene.planes[p].polygon, u, v)) continue;
        double w = SyntheticScene::plane_response(scene.planes[p], u, v);
        if (!(w > 0.0))
          throw Error(ErrorCode::InvalidScene, "plane support yields nonpositive depth");
        cover[i] = static_cast<int32_t>(p) + 1;
        response[i] = w;
        covered.push_back(static_cast<int32_t>(i));
        double z = scene.scale / w;
        z_min = std::min(z_min, z);
        z_max = std::max(z_max, z);
        break;
      }
    }
  }

  std::mt19937_64 rng(seed);

  // Outlier pixels: exactly floor(fraction * covered) of them, uniform draw.
  std::vector<uint8_t> is_outlier(cover.size(), 0);
  size_t n_out = static_cast<size_t>(scene.outlier_fraction * covered.size());
  if (n_out > 0) {
    std::vector<int32_t> pool = covered;
    for (size_t i = 0; i < n_out; ++i) {
      std::uniform_int_distribution<size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
      is_outlier[pool[i]] = 1;
    }
  }

  std::normal_distribution<double> noise(0.0, scene.noise_sigma);
  std::uniform_real_distribution<double> clutter(z_min, z_max);
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      size_t i = static_cast<size_t>(v) * width + u;
      if (cover[i] == 0) continue;
      if (is_outlier[i]) {
        out.depth.set(u, v, clutter(rng));
        // ground-truth label stays 0
        continue;
      }
      double w = response[i];
      if (scene.noise_sigma > 0.0) w += noise(rng);
      if (w > 0.0) {
        out.depth.set(u, v, scene.scale / w);
        out.ground_truth.labels[i] = cover[i];
      }
      // a noise draw that kills the return leaves the pixel invalid, label 0
    }
  }

  for (size_t p = 0; p < scene.planes.size(); ++p) {
    Segmentation::Plane gp;
    gp.normal = scene.planes[p].normal;
    gp.offset = scene.planes[p].offset;
    out.ground_truth.planes[static_cast<int32_t>(p) + 1] = gp;
  }
  return out;
}

SyntheticScene scene_from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  SyntheticScene scene;
  scene.scale = j.value("scale", 1.0);
  scene.noise_sigma = j.value("noise_sigma", 0.0);
  scene.outlier_fraction = j.value("outlier_fraction", 0.0);
  for (const auto& pj : j.at("planes")) {
    SyntheticScene::Plane p;
    auto n = pj.at("normal");
    p.normal = Eigen::Vector3d(n.at(0), n.at(1), n.at(2));
    if (p.normal.norm() == 0.0)
      throw Error(ErrorCode::InvalidScene, "zero plane normal");
    p.normal.normalize();
    p.offset = pj.at("offset");
    for (const auto& vj : pj.at("polygon"))
      p.polygon.emplace_back(double(vj.at(0)), double(vj.at(1)));
    scene.planes.push_back(std::move(p));
  }
  return scene;
}

SceneDocument scene_document_from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  SceneDocument doc;
  doc.scene = scene_from_json(json_text);
  doc.width = j.at("width");
  doc.height = j.at("height");
  doc.seed = j.value("seed", 0ull);
  return doc;
}

std::string scene_to_json(const SyntheticScene& scene) {
  nlohmann::json j;
  j["scale"] = scene.scale;
  j["noise_sigma"] = scene.noise_sigma;
  j["outlier_fraction"] = scene.outlier_fraction;
  j["planes"] = nlohmann::json::array();
  for (const auto& p : scene.planes) {
    nlohmann::json pj;
    pj["normal"] = {p.normal[0], p.normal[1], p.normal[2]};
    pj["offset"] = p.offset;
    pj["polygon"] = nlohmann::json::array();
    for (const auto& v : p.polygon) pj["polygon"].push_back({v.x(), v.y()});
    j["planes"].push_back(std::move(pj));
  }
  return j.dump(2);
}

}  // namespace rplgmr
