#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace vtc {

/// Row-major raster. Index with (row, col).
template <typename T>
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, T fill = T{})
      : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool contains(int row, int col) const {
    return row >= 0 && col >= 0 && row < height_ && col < width_;
  }

  T& operator()(int row, int col) { return data_[static_cast<std::size_t>(row) * width_ + col]; }
  const T& operator()(int row, int col) const {
    return data_[static_cast<std::size_t>(row) * width_ + col];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Raster&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

/// Per-pixel depth in meters; 0 marks masked or invalid pixels.
using DepthImage = Raster<double>;
using PixelMask = Raster<std::uint8_t>;

/// Binary PGM (P5). 16-bit samples are big-endian per the netpbm format.
void write_pgm16(const std::filesystem::path& path, const Raster<std::uint16_t>& img);
void write_pgm8(const std::filesystem::path& path, const Raster<std::uint8_t>& img);
Raster<std::uint16_t> read_pgm16(const std::filesystem::path& path);
Raster<std::uint8_t> read_pgm8(const std::filesystem::path& path);

/// Quantizes `values / scale` to uint16 with rounding and saturation.
Raster<std::uint16_t> quantize16(const Raster<double>& values, double scale);
Raster<double> dequantize16(const Raster<std::uint16_t>& q, double scale);

/// Depth PGM plus a JSON sidecar (`<stem>.json`) recording meters per unit.
inline constexpr double kDepthMetersPerUnit = 1e-4;
void write_depth(const std::filesystem::path& pgm_path, const DepthImage& depth);
DepthImage read_depth(const std::filesystem::path& pgm_path);

void write_mask(const std::filesystem::path& path, const PixelMask& mask);
PixelMask read_mask(const std::filesystem::path& path);

}  // namespace vtc
