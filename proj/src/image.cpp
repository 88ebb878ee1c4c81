#include "lanesim/image.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <string>

namespace lanesim {

RasterImage::RasterImage(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 1 || height < 1) throw std::invalid_argument("image dimensions must be >= 1");
  pixels_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
}

BinaryMask::BinaryMask(int width, int height, bool fill) : width_(width), height_(height) {
  if (width < 1 || height < 1) throw std::invalid_argument("mask dimensions must be >= 1");
  bits_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill ? 1 : 0);
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

namespace {

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return out;
}

}  // namespace

void write_ppm(const RasterImage& img, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  out << "P6\n" << img.width() << ' ' << img.height() << "\n255\n";
  for (const Rgb& px : img.pixels()) out.write(reinterpret_cast<const char*>(px.data()), 3);
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

void write_pgm(const BinaryMask& mask, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  out << "P5\n" << mask.width() << ' ' << mask.height() << "\n255\n";
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) out.put(mask.at(x, y) ? char(255) : char(0));
  }
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

RasterImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255) throw std::runtime_error("unsupported PPM '" + path.string() + "'");
  in.get();
  RasterImage img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) in.read(reinterpret_cast<char*>(img.at(x, y).data()), 3);
  }
  if (!in) throw std::runtime_error("truncated PPM '" + path.string() + "'");
  return img;
}

}  // namespace lanesim
