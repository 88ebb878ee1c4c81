#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace lanesim {

using Rgb = std::array<std::uint8_t, 3>;

/// Row-major 8-bit RGB raster.
class RasterImage {
 public:
  RasterImage(int width, int height, Rgb fill = {0, 0, 0});

  int width() const { return width_; }
  int height() const { return height_; }

  const Rgb& at(int x, int y) const { return pixels_[index(x, y)]; }
  Rgb& at(int x, int y) { return pixels_[index(x, y)]; }
  const std::vector<Rgb>& pixels() const { return pixels_; }

  bool operator==(const RasterImage&) const = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_;
  int height_;
  std::vector<Rgb> pixels_;
};

class BinaryMask {
 public:
  BinaryMask(int width, int height, bool fill = false);

  int width() const { return width_; }
  int height() const { return height_; }

  bool at(int x, int y) const { return bits_[index(x, y)] != 0; }
  void set(int x, int y, bool value) { bits_[index(x, y)] = value ? 1 : 0; }
  std::size_t count() const;

  bool operator==(const BinaryMask&) const = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_;
  int height_;
  std::vector<std::uint8_t> bits_;
};

/// Binary Netpbm writers (P6 / P5, maxval 255).
void write_ppm(const RasterImage& img, const std::filesystem::path& path);
void write_pgm(const BinaryMask& mask, const std::filesystem::path& path);

RasterImage read_ppm(const std::filesystem::path& path);

}  // namespace lanesim
