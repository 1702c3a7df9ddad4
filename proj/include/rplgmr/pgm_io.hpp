#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rplgmr/geometry.hpp"
#include "rplgmr/segmentation.hpp"

namespace rplgmr {

/// Raw 16-bit PGM contents: P5, maxval up to 65535, big-endian samples.
struct Pgm16 {
  int width = 0;
  int height = 0;
  int maxval = 65535;
  std::vector<uint16_t> data;  // row-major
};

Pgm16 read_pgm16(const std::string& path);
void write_pgm16(const std::string& path, const Pgm16& img);

/// Sidecar key=value metadata next to a depth PGM (<image path> + ".meta").
struct DepthMeta {
  double depth_units_per_count = 1.0;
  std::optional<double> scale_override;  // fixed s, bypassing scale_factor()
};

DepthMeta read_depth_meta(const std::string& pgm_path);
void write_depth_meta(const std::string& pgm_path, const DepthMeta& meta);

/// Depth image from a 16-bit PGM plus its sidecar; count 0 = no return.
DepthImage read_depth_pgm(const std::string& path, DepthMeta* meta_out = nullptr);

/// Writes depth as 16-bit counts. Picks units so the largest depth maps to
/// the top of the count range unless units are supplied, and records them in
/// the sidecar.
void write_depth_pgm(const std::string& path, const DepthImage& img,
                     std::optional<double> units = std::nullopt,
                     std::optional<double> scale_override = std::nullopt);

/// Label maps ride in the same 16-bit PGM container.
Segmentation read_label_pgm(const std::string& path);
void write_label_pgm(const std::string& path, const Segmentation& seg);

/// 8-bit binary PPM (P6).
void write_ppm(const std::string& path, int width, int height,
               const std::vector<std::array<uint8_t, 3>>& rgb);

/// Fixed 32-color palette cycled by label; label 0 maps to black.
std::array<uint8_t, 3> label_color(int32_t label);

/// Colorized rendering of a label map.
void write_label_ppm(const std::string& path, const Segmentation& seg);

/// Writes bytes to path atomically (temp file + rename).
void write_file_atomic(const std::string& path, const std::string& bytes);

std::string read_file(const std::string& path);

}  // namespace rplgmr
