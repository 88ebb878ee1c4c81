#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "lanesim/image.hpp"

namespace lanesim {

/// Separable Gaussian blur with edge replication. kernel_size must be odd.
RasterImage gaussian_blur(const RasterImage& img, int kernel_size, double sigma);

/// Normalized 1-D Gaussian weights, centered, length kernel_size.
std::vector<double> gaussian_kernel(int kernel_size, double sigma);

struct Hsv {
  double h = 0.0;  // degrees [0, 360)
  double s = 0.0;  // [0, 1]
  double v = 0.0;  // [0, 1]
};

Hsv rgb_to_hsv(const Rgb& px);

struct HsvThreshold {
  double hue_min = 40.0;  // degrees; hue_min > hue_max wraps through 0
  double hue_max = 80.0;
  double s_min = 0.4;
  double v_min = 0.4;
};

BinaryMask yellow_mask(const RasterImage& img, const HsvThreshold& th = {});

/// Clears bits outside the polygon (pixel index coordinates, even-odd rule,
/// boundary counts as inside). Throws on < 3 vertices or zero area.
BinaryMask roi_mask(const BinaryMask& mask, const std::vector<Eigen::Vector2d>& polygon);

bool point_in_polygon(const Eigen::Vector2d& p, const std::vector<Eigen::Vector2d>& polygon);

struct LineSegmentPolar {
  double rho = 0.0;    // pixels
  double theta = 0.0;  // radians, [0, pi)
  int votes = 0;
  int rho_index = 0;
  int theta_index = 0;

  bool operator==(const LineSegmentPolar&) const = default;
};

struct HoughParams {
  double rho_res = 1.0;
  double theta_res = default_theta_res();
  int threshold = 20;

  static double default_theta_res();
};

/// (rho, theta) discretization shared by the transform and its callers.
struct HoughGrid {
  HoughGrid(int width, int height, double rho_res, double theta_res);

  int theta_bins;
  int rho_bins;
  int rho_offset;  // bin index of rho = 0
  double rho_res;
  double theta_res;

  double theta(int k) const { return k * theta_res; }
  double rho(int j) const { return (j - rho_offset) * rho_res; }
};

/// Standard Hough transform over set pixels (x = column, y = row). Returns
/// accumulator local maxima with votes >= threshold, sorted by votes
/// descending, then theta index, then rho index. rho_index/theta_index name
/// the peak cell; rho/theta are the center of its equal-vote plateau.
std::vector<LineSegmentPolar> hough_lines(const BinaryMask& mask, const HoughParams& params = {});

/// Continuous image x (pixel i spans [i, i+1)) where the line crosses the
/// center of `row`.
double line_column_at_row(const LineSegmentPolar& line, int row);

struct LaneBoundaries {
  std::optional<LineSegmentPolar> left;
  std::optional<LineSegmentPolar> right;
};

/// Lines within this distance of horizontal are ignored as lane boundaries.
inline constexpr double kNearHorizontalBand = 0.1;

LaneBoundaries classify_boundaries(const std::vector<LineSegmentPolar>& lines, int image_width,
                                   int reference_row);

/// Lane midpoint minus image center, in pixels (+ = lane center to the right).
double center_offset(double x_left, double x_right, int image_width);
double center_offset(const LineSegmentPolar& left, const LineSegmentPolar& right, int image_width,
                     int reference_row);

struct LaneObservation {
  std::optional<LineSegmentPolar> left;
  std::optional<LineSegmentPolar> right;
  double center_offset = 0.0;
  bool valid = false;
};

struct VisionParams {
  int blur_kernel = 5;
  double blur_sigma = 1.0;
  HsvThreshold color;
  /// ROI vertices in normalized image coordinates ([0,1] maps to pixel
  /// indices 0..width-1 / 0..height-1).
  std::vector<Eigen::Vector2d> roi = default_roi();
  HoughParams hough;
  std::optional<int> reference_row;  // defaults to the bottom row

  static std::vector<Eigen::Vector2d> default_roi();
};

struct LaneDebug {
  RasterImage blurred{1, 1};
  BinaryMask color_mask{1, 1};
  BinaryMask roi{1, 1};
  std::vector<LineSegmentPolar> lines;
};

/// Full lane pipeline: blur, color mask, ROI, Hough, boundary pairing, offset.
LaneObservation detect_lane(const RasterImage& img, const VisionParams& params,
                            LaneDebug* debug = nullptr);

std::vector<Eigen::Vector2d> roi_pixels(const VisionParams& params, int width, int height);

}  // namespace lanesim
