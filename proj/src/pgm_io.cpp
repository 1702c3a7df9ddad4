#include "rplgmr/pgm_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace rplgmr {

namespace {

// Skips whitespace and '#' comments between header tokens.
int next_header_int(std::istream& in, const std::string& path) {
  for (;;) {
    int c = in.peek();
    if (c == EOF) throw Error(ErrorCode::BadFormat, "truncated PGM header in " + path);
    if (std::isspace(c)) {
      in.get();
    } else if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else {
      break;
    }
  }
  int value = 0;
  in >> value;
  if (!in) throw Error(ErrorCode::BadFormat, "bad PGM header token in " + path);
  return value;
}

}  // namespace

Pgm16 read_pgm16(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::UnreadableInput, "cannot open " + path);
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] != 'P' || magic[1] != '5')
    throw Error(ErrorCode::BadFormat, path + " is not a binary PGM (P5)");
  Pgm16 img;
  img.width = next_header_int(in, path);
  img.height = next_header_int(in, path);
  img.maxval = next_header_int(in, path);
  if (img.width <= 0 || img.height <= 0 || img.maxval <= 0 || img.maxval > 65535)
    throw Error(ErrorCode::BadFormat, "bad PGM dimensions/maxval in " + path);
  in.get();  // single whitespace after maxval
  size_t n = static_cast<size_t>(img.width) * img.height;
  img.data.resize(n);
  if (img.maxval > 255) {
    std::vector<uint8_t> raw(n * 2);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(in.gcount()) != raw.size())
      throw Error(ErrorCode::BadFormat, "truncated PGM data in " + path);
    for (size_t i = 0; i < n; ++i)
      img.data[i] = static_cast<uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
  } else {
    std::vector<uint8_t> raw(n);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(in.gcount()) != raw.size())
      throw Error(ErrorCode::BadFormat, "truncated PGM data in " + path);
    for (size_t i = 0; i < n; ++i) img.data[i] = raw[i];
  }
  return img;
}

void write_pgm16(const std::string& path, const Pgm16& img) {
  std::ostringstream out;
  out << "P5\n" << img.width << " " << img.height << "\n" << img.maxval << "\n";
  size_t n = static_cast<size_t>(img.width) * img.height;
  std::string bytes;
  bytes.reserve(n * 2);
  for (size_t i = 0; i < n; ++i) {
    bytes.push_back(static_cast<char>(img.data[i] >> 8));
    bytes.push_back(static_cast<char>(img.data[i] & 0xff));
  }
  write_file_atomic(path, out.str() + bytes);
}

DepthMeta read_depth_meta(const std::string& pgm_path) {
  DepthMeta meta;
  std::ifstream in(pgm_path + ".meta");
  if (!in) return meta;  // sidecar is optional; defaults apply
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t\r");
      size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key == "depth_units_per_count") {
      meta.depth_units_per_count = std::stod(value);
    } else if (key == "scale_override") {
      meta.scale_override = std::stod(value);
    }
  }
  return meta;
}

void write_depth_meta(const std::string& pgm_path, const DepthMeta& meta) {
  std::ostringstream out;
  out.precision(17);
  out << "depth_units_per_count = " << meta.depth_units_per_count << "\n";
  if (meta.scale_override) out << "scale_override = " << *meta.scale_override << "\n";
  write_file_atomic(pgm_path + ".meta", out.str());
}

DepthImage read_depth_pgm(const std::string& path, DepthMeta* meta_out) {
  Pgm16 pgm = read_pgm16(path);
  DepthMeta meta = read_depth_meta(path);
  if (meta_out) *meta_out = meta;
  DepthImage img(pgm.width, pgm.height);
  for (int v = 0; v < pgm.height; ++v)
    for (int u = 0; u < pgm.width; ++u) {
      uint16_t count = pgm.data[static_cast<size_t>(v) * pgm.width + u];
      if (count > 0) img.set(u, v, count * meta.depth_units_per_count);
    }
  return img;
}

void write_depth_pgm(const std::string& path, const DepthImage& img,
                     std::optional<double> units, std::optional<double> scale_override) {
  double max_depth = 0.0;
  for (size_t i = 0; i < img.size(); ++i)
    if (img.valid[i]) max_depth = std::max(max_depth, img.depth[i]);
  double u = units.value_or(max_depth > 0.0 ? max_depth / 65535.0 : 1.0);
  Pgm16 pgm;
  pgm.width = img.width;
  pgm.height = img.height;
  pgm.maxval = 65535;
  pgm.data.assign(img.size(), 0);
  for (size_t i = 0; i < img.size(); ++i) {
    if (!img.valid[i]) continue;
    long count = std::lround(img.depth[i] / u);
    pgm.data[i] = static_cast<uint16_t>(std::clamp(count, 1l, 65535l));
  }
  write_pgm16(path, pgm);
  DepthMeta meta;
  meta.depth_units_per_count = u;
  meta.scale_override = scale_override;
  write_depth_meta(path, meta);
}

Segmentation read_label_pgm(const std::string& path) {
  Pgm16 pgm = read_pgm16(path);
  Segmentation seg;
  seg.width = pgm.width;
  seg.height = pgm.height;
  seg.labels.assign(pgm.data.begin(), pgm.data.end());
  return seg;
}

void write_label_pgm(const std::string& path, const Segmentation& seg) {
  Pgm16 pgm;
  pgm.width = seg.width;
  pgm.height = seg.height;
  pgm.maxval = 65535;
  pgm.data.resize(seg.labels.size());
  for (size_t i = 0; i < seg.labels.size(); ++i) {
    int32_t l = seg.labels[i];
    pgm.data[i] = static_cast<uint16_t>(std::clamp(l, 0, 65535));
  }
  write_pgm16(path, pgm);
}

void write_ppm(const std::string& path, int width, int height,
               const std::vector<std::array<uint8_t, 3>>& rgb) {
  std::ostringstream head;
  head << "P6\n" << width << " " << height << "\n255\n";
  std::string bytes;
  bytes.reserve(rgb.size() * 3);
  for (const auto& px : rgb) {
    bytes.push_back(static_cast<char>(px[0]));
    bytes.push_back(static_cast<char>(px[1]));
    bytes.push_back(static_cast<char>(px[2]));
  }
  write_file_atomic(path, head.str() + bytes);
}

std::array<uint8_t, 3> label_color(int32_t label) {
  static constexpr std::array<std::array<uint8_t, 3>, 32> kPalette = {{
      {230, 25, 75},   {60, 180, 75},   {255, 225, 25},  {0, 130, 200},
      {245, 130, 48},  {145, 30, 180},  {70, 240, 240},  {240, 50, 230},
      {210, 245, 60},  {250, 190, 212}, {0, 128, 128},   {220, 190, 255},
      {170, 110, 40},  {255, 250, 200}, {128, 0, 0},     {170, 255, 195},
      {128, 128, 0},   {255, 215, 180}, {0, 0, 128},     {128, 128, 128},
      {255, 255, 255}, {100, 200, 120}, {200, 100, 60},  {60, 100, 200},
      {180, 180, 40},  {40, 180, 180},  {180, 40, 180},  {90, 60, 30},
      {30, 90, 60},    {60, 30, 90},    {200, 160, 220}, {160, 220, 200},
  }};
  if (label <= 0) return {0, 0, 0};
  return kPalette[(label - 1) % kPalette.size()];
}

void write_label_ppm(const std::string& path, const Segmentation& seg) {
  std::vector<std::array<uint8_t, 3>> rgb(seg.labels.size());
  for (size_t i = 0; i < seg.labels.size(); ++i) rgb[i] = label_color(seg.labels[i]);
  write_ppm(path, seg.width, seg.height, rgb);
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::UnreadableInput, "cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::UnreadableInput, "short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::UnreadableInput, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace rplgmr
