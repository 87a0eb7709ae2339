#pragma once

// File formats shared by the modules.
//
// Array container (checkpoints):
//   bytes [0, 8)   magic "DSCONT01"
//   bytes [8, 16)  header length H, uint64 little-endian
//   bytes [16, 16+H) UTF-8 JSON: {"meta": {...}, "arrays": [{"name", "shape", "offset", "count"}]}
//   zero padding up to the next multiple of 8 bytes
//   payload: float64 little-endian; "offset" is in bytes from the payload start
//
// Raw image dump (.f64):
//   ASCII line "F64RAW 1\n", ASCII line "<width> <height> <channels>\n",
//   then width*height*channels float64 little-endian, planar: channel-major,
//   then row-major within a channel.
//
// PPM (P6) / PGM (P5): 8-bit binary, maxval 255, values rounded from [0,1].

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace dirsurf::io {

struct NamedArray {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<double> data;
};

void write_container(const std::filesystem::path& path, const nlohmann::json& meta, const std::vector<NamedArray>& arrays);

struct Container {
  nlohmann::json meta;
  std::vector<NamedArray> arrays;
  const NamedArray* find(const std::string& name) const;
};
Container read_container(const std::filesystem::path& path);

/// Planar multi-channel image of doubles.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;  ///< channel-major planes

  Image() = default;
  Image(int w, int h, int c) : width(w), height(h), channels(c), data(static_cast<std::size_t>(w * h * c), 0.0) {}
  double& at(int x, int y, int c) { return data[static_cast<std::size_t>((c * height + y) * width + x)]; }
  double at(int x, int y, int c) const { return data[static_cast<std::size_t>((c * height + y) * width + x)]; }
};

void write_f64(const std::filesystem::path& path, const Image& img);
Image read_f64(const std::filesystem::path& path);
/// 3-channel image, values clamped to [0,1].
void write_ppm(const std::filesystem::path& path, const Image& img);
/// Channel 0, values clamped to [0,1].
void write_pgm(const std::filesystem::path& path, const Image& img);
Image read_pgm(const std::filesystem::path& path);
Image read_ppm(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);
/// Writes to a sibling temporary file and renames it into place.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

std::string format_double(double v);

}  // namespace dirsurf::io
