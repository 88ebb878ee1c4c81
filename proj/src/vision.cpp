#include "lanesim/vision.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>
#include <utility>
#include <vector>

#include "lanesim/angle.hpp"

namespace lanesim {

std::vector<double> gaussian_kernel(int kernel_size, double sigma) {
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw std::invalid_argument("gaussian kernel_size must be odd and >= 1");
  }
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian sigma must be > 0");
  const int r = kernel_size / 2;
  std::vector<double> w(static_cast<std::size_t>(kernel_size));
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    const double v = std::exp(-(i * i) / (2.0 * sigma * sigma));
    w[static_cast<std::size_t>(i + r)] = v;
    sum += v;
  }
  for (double& v : w) v /= sum;
  return w;
}

RasterImage gaussian_blur(const RasterImage& img, int kernel_size, double sigma) {
  const auto w = gaussian_kernel(kernel_size, sigma);
  const int r = kernel_size / 2;
  const int W = img.width();
  const int H = img.height();
  const std::size_t K = w.size();

  // Horizontal pass kept in double; rounding happens once at the end.
  std::vector<double> tmp(static_cast<std::size_t>(W) * H * 3);
  std::vector<double> line(static_cast<std::size_t>(std::max(W, H) + 2 * r));
  for (int y = 0; y < H; ++y) {
    for (int c = 0; c < 3; ++c) {
      for (int i = -r; i < W + r; ++i) line[i + r] = img.at(std::clamp(i, 0, W - 1), y)[c];
      double* dst = &tmp[(static_cast<std::size_t>(c) * H + y) * W];
      for (int x = 0; x < W; ++x) {
        double acc = 0.0;
        for (std::size_t k = 0; k < K; ++k) acc += w[k] * line[x + k];
        dst[x] = acc;
      }
    }
  }
  RasterImage out(W, H);
  for (int c = 0; c < 3; ++c) {
    const double* plane = &tmp[static_cast<std::size_t>(c) * H * W];
    for (int x = 0; x < W; ++x) {
      for (int i = -r; i < H + r; ++i) line[i + r] = plane[static_cast<std::size_t>(std::clamp(i, 0, H - 1)) * W + x];
      for (int y = 0; y < H; ++y) {
        double acc = 0.0;
        for (std::size_t k = 0; k < K; ++k) acc += w[k] * line[y + k];
        out.at(x, y)[c] = static_cast<std::uint8_t>(std::clamp(std::lround(acc), 0L, 255L));
      }
    }
  }
  return out;
}

Hsv rgb_to_hsv(const Rgb& px) {
  const double r = px[0] / 255.0;
  const double g = px[1] / 255.0;
  const double b = px[2] / 255.0;
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  Hsv out;
  out.v = mx;
  out.s = mx > 0.0 ? delta / mx : 0.0;
  if (delta > 0.0) {
    double h;
    if (mx == r) {
      h = 60.0 * std::fmod((g - b) / delta, 6.0);
    } else if (mx == g) {
      h = 60.0 * ((b - r) / delta + 2.0);
    } else {
      h = 60.0 * ((r - g) / delta + 4.0);
    }
    if (h < 0.0) h += 360.0;
    out.h = h;
  }
  return out;
}

BinaryMask yellow_mask(const RasterImage& img, const HsvThreshold& th) {
  if (th.hue_min < 0.0 || th.hue_min >= 360.0 || th.hue_max < 0.0 || th.hue_max >= 360.0) {
    throw std::invalid_argument("hue bounds must lie in [0, 360)");
  }
  BinaryMask mask(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const Hsv hsv = rgb_to_hsv(img.at(x, y));
      const bool hue_ok = th.hue_min <= th.hue_max
                              ? (hsv.h >= th.hue_min && hsv.h <= th.hue_max)
                              : (hsv.h >= th.hue_min || hsv.h <= th.hue_max);
      mask.set(x, y, hue_ok && hsv.s >= th.s_min && hsv.v >= th.v_min);
    }
  }
  return mask;
}

bool point_in_polygon(const Eigen::Vector2d& p, const std::vector<Eigen::Vector2d>& polygon) {
  const std::size_t n = polygon.size();
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Eigen::Vector2d& a = polygon[i];
    const Eigen::Vector2d& b = polygon[j];
    // Boundary counts as inside.
    const Eigen::Vector2d ab = b - a;
    const double cross = ab.x() * (p.y() - a.y()) - ab.y() * (p.x() - a.x());
    if (std::abs(cross) <= 1e-9 * std::max(1.0, ab.norm()) &&
        p.x() >= std::min(a.x(), b.x()) - 1e-9 && p.x() <= std::max(a.x(), b.x()) + 1e-9 &&
        p.y() >= std::min(a.y(), b.y()) - 1e-9 && p.y() <= std::max(a.y(), b.y()) + 1e-9) {
      return true;
    }
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x_cross = a.x() + (p.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
      if (p.x() < x_cross) inside = !inside;
    }
  }
  return inside;
}

BinaryMask roi_mask(const BinaryMask& mask, const std::vector<Eigen::Vector2d>& polygon) {
  if (polygon.size() < 3) throw std::invalid_argument("ROI polygon needs >= 3 vertices");
  double area2 = 0.0;
  for (std::size_t i = 0, j = polygon.size() - 1; i < polygon.size(); j = i++) {
    area2 += polygon[j].x() * polygon[i].y() - polygon[i].x() * polygon[j].y();
  }
  if (std::abs(area2) < 1e-12) throw std::invalid_argument("ROI polygon has zero area");

  BinaryMask out(mask.width(), mask.height());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (mask.at(x, y) && point_in_polygon({double(x), double(y)}, polygon)) out.set(x, y, true);
    }
  }
  return out;
}

double HoughParams::default_theta_res() { return deg2rad(1.0); }

HoughGrid::HoughGrid(int width, int height, double rho_res_, double theta_res_)
    : rho_res(rho_res_), theta_res(theta_res_) {
  if (!(rho_res > 0.0) || !(theta_res > 0.0)) {
    throw std::invalid_argument("hough resolutions must be > 0");
  }
  theta_bins = std::max(1, static_cast<int>(std::lround(kPi / theta_res)));
  const double diag = std::hypot(double(width), double(height));
  rho_offset = static_cast<int>(std::ceil(diag / rho_res));
  rho_bins = 2 * rho_offset + 1;
}

namespace {

/// Mean (theta, rho) index of the 8-connected equal-vote region around a peak.
std::pair<double, double> plateau_center(const std::vector<int>& acc, int T, int R, int k0, int j0) {
  const int votes = acc[static_cast<std::size_t>(k0) * R + j0];
  std::vector<std::pair<int, int>> todo{{k0, j0}}, seen{{k0, j0}};
  double sk = 0.0, sj = 0.0;
  while (!todo.empty()) {
    const auto [k, j] = todo.back();
    todo.pop_back();
    sk += k;
    sj += j;
    for (int dk = -1; dk <= 1; ++dk) {
      for (int dj = -1; dj <= 1; ++dj) {
        const int nk = k + dk, nj = j + dj;
        if (nk < 0 || nk >= T || nj < 0 || nj >= R) continue;
        if (acc[static_cast<std::size_t>(nk) * R + nj] != votes) continue;
        if (std::find(seen.begin(), seen.end(), std::make_pair(nk, nj)) != seen.end()) continue;
        seen.emplace_back(nk, nj);
        todo.emplace_back(nk, nj);
      }
    }
  }
  const double n = static_cast<double>(seen.size());
  return {sk / n, sj / n};
}

}  // namespace

std::vector<LineSegmentPolar> hough_lines(const BinaryMask& mask, const HoughParams& params) {
  if (params.threshold < 1) throw std::invalid_argument("hough threshold must be >= 1");
  const HoughGrid grid(mask.width(), mask.height(), params.rho_res, params.theta_res);
  const int T = grid.theta_bins;
  const int R = grid.rho_bins;

  std::vector<double> cos_t(T), sin_t(T);
  for (int k = 0; k < T; ++k) {
    cos_t[k] = std::cos(grid.theta(k));
    sin_t[k] = std::sin(grid.theta(k));
  }

  std::vector<int> acc(static_cast<std::size_t>(T) * R, 0);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(x, y)) continue;
      for (int k = 0; k < T; ++k) {
        const double rho = x * cos_t[k] + y * sin_t[k];
        const int j = static_cast<int>(std::lround(rho / grid.rho_res)) + grid.rho_offset;
        ++acc[static_cast<std::size_t>(k) * R + j];
      }
    }
  }

  // A peak beats every 8-neighbor on (votes, lower theta index, lower rho index).
  auto key = [&](int k, int j) {
    return std::make_tuple(acc[static_cast<std::size_t>(k) * R + j], -k, -j);
  };
  std::vector<LineSegmentPolar> peaks;
  for (int k = 0; k < T; ++k) {
    for (int j = 0; j < R; ++j) {
      const int votes = acc[static_cast<std::size_t>(k) * R + j];
      if (votes < params.threshold) continue;
      const auto self = key(k, j);
      bool is_peak = true;
      for (int dk = -1; dk <= 1 && is_peak; ++dk) {
        for (int dj = -1; dj <= 1; ++dj) {
          if (dk == 0 && dj == 0) continue;
          const int nk = k + dk;
          const int nj = j + dj;
          if (nk < 0 || nk >= T || nj < 0 || nj >= R) continue;
          if (!(self > key(nk, nj))) {
            is_peak = false;
            break;
          }
        }
      }
      if (!is_peak) continue;
      const auto [mk, mj] = plateau_center(acc, T, R, k, j);
      peaks.push_back({(mj - grid.rho_offset) * grid.rho_res, mk * grid.theta_res, votes, j, k});
    }
  }
  std::sort(peaks.begin(), peaks.end(), [](const LineSegmentPolar& a, const LineSegmentPolar& b) {
    return std::make_tuple(-a.votes, a.theta_index, a.rho_index) <
           std::make_tuple(-b.votes, b.theta_index, b.rho_index);
  });
  return peaks;
}

double line_column_at_row(const LineSegmentPolar& line, int row) {
  return (line.rho - row * std::sin(line.theta)) / std::cos(line.theta) + 0.5;
}

LaneBoundaries classify_boundaries(const std::vector<LineSegmentPolar>& lines, int image_width,
                                   int reference_row) {
  if (reference_row < 0) throw std::invalid_argument("reference_row must be >= 0");
  LaneBoundaries out;
  const double mid = image_width / 2.0;
  for (const LineSegmentPolar& line : lines) {
    if (std::abs(line.theta - kPi / 2.0) < kNearHorizontalBand) continue;
    const double x = line_column_at_row(line, reference_row);
    if (!std::isfinite(x)) continue;
    auto& slot = x < mid ? out.left : out.right;
    if (!slot || line.votes > slot->votes) slot = line;
  }
  return out;
}

double center_offset(double x_left, double x_right, int image_width) {
  return (x_left + x_right) / 2.0 - image_width / 2.0;
}

double center_offset(const LineSegmentPolar& left, const LineSegmentPolar& right, int image_width,
                     int reference_row) {
  return center_offset(line_column_at_row(left, reference_row),
                       line_column_at_row(right, reference_row), image_width);
}

std::vector<Eigen::Vector2d> VisionParams::default_roi() {
  return {{0.0, 1.0}, {1.0, 1.0}, {0.8, 0.5}, {0.2, 0.5}};
}

std::vector<Eigen::Vector2d> roi_pixels(const VisionParams& params, int width, int height) {
  std::vector<Eigen::Vector2d> px;
  px.reserve(params.roi.size());
  for (const auto& v : params.roi) px.emplace_back(v.x() * (width - 1), v.y() * (height - 1));
  return px;
}

LaneObservation detect_lane(const RasterImage& img, const VisionParams& params, LaneDebug* debug) {
  RasterImage blurred = gaussian_blur(img, params.blur_kernel, params.blur_sigma);
  BinaryMask color = yellow_mask(blurred, params.color);
  BinaryMask roi = roi_mask(color, roi_pixels(params, img.width(), img.height()));
  std::vector<LineSegmentPolar> lines = hough_lines(roi, params.hough);

  const int row = params.reference_row.value_or(img.height() - 1);
  const LaneBoundaries b = classify_boundaries(lines, img.width(), row);
  LaneObservation obs;
  obs.left = b.left;
  obs.right = b.right;
  if (b.left && b.right) {
    obs.center_offset = center_offset(*b.left, *b.right, img.width(), row);
    obs.valid = std::isfinite(obs.center_offset);
  }
  if (debug) {
    debug->blurred = std::move(blurred);
    debug->color_mask = std::move(color);
    debug->roi = std::move(roi);
    debug->lines = std::move(lines);
  }
  return obs;
}

}  // namespace lanesim
