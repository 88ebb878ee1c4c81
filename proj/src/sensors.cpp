#include "lanesim/sensors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lanesim {

void CameraModel::validate() const {
  if (width < 1 || height < 1) throw std::invalid_argument("camera size must be >= 1");
  if (!(horizontal_fov > 0.0 && horizontal_fov < kPi)) {
    throw std::invalid_argument("camera horizontal_fov must lie in (0, pi)");
  }
  if (!(mount_height > 0.0)) throw std::invalid_argument("camera mount_height must be > 0");
  if (!(std::abs(pitch) < kPi / 2.0)) throw std::invalid_argument("camera pitch must lie in (-pi/2, pi/2)");
}

double CameraModel::focal() const { return cx() / std::tan(horizontal_fov / 2.0); }

double CameraModel::horizon_row() const { return cy() - focal() * std::tan(pitch); }

std::optional<Eigen::Vector2d> CameraModel::project(const Pose2D& pose, const Eigen::Vector2d& p,
                                                    double z, double near) const {
  const Eigen::Vector2d rel = p - pose.position();
  const double fwd = rel.dot(pose.heading());
  const double left = -rel.x() * std::sin(pose.psi()) + rel.y() * std::cos(pose.psi());
  const double up = z - mount_height;
  const double c = std::cos(pitch);
  const double s = std::sin(pitch);
  const double depth = fwd * c - up * s;
  if (depth < near) return std::nullopt;
  const double right = -left;
  const double down = -fwd * s - up * c;
  const double f = focal();
  return Eigen::Vector2d(cx() + f * right / depth, cy() + f * down / depth);
}

namespace {

// Clips the ground segment a-b to camera depth >= near. Depth is affine in
// the world point, so the cut is a linear interpolation.
bool clip_to_depth(const CameraModel& cam, const Pose2D& pose, Eigen::Vector2d& a,
                   Eigen::Vector2d& b, double near) {
  auto depth = [&](const Eigen::Vector2d& p) {
    const double fwd = (p - pose.position()).dot(pose.heading());
    return fwd * std::cos(cam.pitch) + cam.mount_height * std::sin(cam.pitch);
  };
  const double da = depth(a);
  const double db = depth(b);
  if (da < near && db < near) return false;
  if (da < near) a = a + (b - a) * ((near - da) / (db - da));
  if (db < near) b = b + (a - b) * ((near - db) / (da - db));
  return true;
}

void draw_thick_segment(RasterImage& img, const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                        double half_width, Rgb color, int min_row) {
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x(), b.x()) - half_width)));
  const int x1 = std::min(img.width() - 1,
                          static_cast<int>(std::ceil(std::max(a.x(), b.x()) + half_width)));
  const int y0 = std::max(min_row, static_cast<int>(std::floor(std::min(a.y(), b.y()) - half_width)));
  const int y1 = std::min(img.height() - 1,
                          static_cast<int>(std::ceil(std::max(a.y(), b.y()) + half_width)));
  const Eigen::Vector2d d = b - a;
  const double len2 = d.squaredNorm();
  const double hw2 = half_width * half_width;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const Eigen::Vector2d c(x + 0.5, y + 0.5);
      const double t = len2 > 0.0 ? std::clamp((c - a).dot(d) / len2, 0.0, 1.0) : 0.0;
      if ((c - (a + t * d)).squaredNorm() <= hw2) img.at(x, y) = color;
    }
  }
}

}  // namespace

RasterImage render_camera(const Track& track, const Pose2D& pose, const CameraModel& cam) {
  cam.validate();
  RasterImage img(cam.width, cam.height, kGroundGray);
  const double horizon = cam.horizon_row();
  int first_ground = 0;
  for (int y = 0; y < cam.height; ++y) {
    if (y + 0.5 < horizon) {
      for (int x = 0; x < cam.width; ++x) img.at(x, y) = kSkyBlack;
      first_ground = y + 1;
    }
  }

  constexpr double kNear = 0.05;
  constexpr double kStrokeHalfWidth = 1.5;
  for (int side : {+1, -1}) {
    const auto line = track.boundary(side);
    for (std::size_t i = 0; i + 1 < line.size(); ++i) {
      Eigen::Vector2d a = line[i];
      Eigen::Vector2d b = line[i + 1];
      if (!clip_to_depth(cam, pose, a, b, kNear)) continue;
      const auto pa = cam.project(pose, a, 0.0, kNear * 0.999);
      const auto pb = cam.project(pose, b, 0.0, kNear * 0.999);
      if (!pa || !pb) continue;
      draw_thick_segment(img, *pa, *pb, kStrokeHalfWidth, kLaneYellow, first_ground);
    }
  }
  return img;
}

RangeBearing true_range_bearing(const Pose2D& pose, const Eigen::Vector2d& point) {
  const double dx = point.x() - pose.x();
  const double dy = point.y() - pose.y();
  return {std::hypot(dx, dy), wrap_angle(std::atan2(dy, dx) - pose.psi()), 0.0, 0.0};
}

std::optional<RangeBearing> sense_range_bearing(const Pose2D& pose, const Sign& sign,
                                                const RangeSensorModel& model, Rng& rng) {
  if (model.sigma_range < 0.0 || model.sigma_bearing < 0.0) {
    throw std::invalid_argument("sense_range_bearing: noise sigmas must be >= 0");
  }
  std::normal_distribution<double> unit(0.0, 1.0);
  const double nr = unit(rng);
  const double nb = unit(rng);
  RangeBearing z = true_range_bearing(pose, sign.position);
  z.range += model.sigma_range * nr;
  z.bearing = wrap_angle(z.bearing + model.sigma_bearing * nb);
  z.sigma_range = model.sigma_range;
  z.sigma_bearing = model.sigma_bearing;
  if (z.range < model.min_range || z.range > model.max_range) return std::nullopt;
  if (std::abs(z.bearing) > model.horizontal_fov / 2.0) return std::nullopt;
  return z;
}

void DetectorModel::validate() const {
  if (!(miss_rate >= 0.0 && miss_rate < 1.0)) throw std::invalid_argument("miss_rate must lie in [0, 1)");
  if (!(confidence_alpha > 0.0 && confidence_beta > 0.0)) {
    throw std::invalid_argument("confidence distribution parameters must be > 0");
  }
  if (!(sign_size > 0.0)) throw std::invalid_argument("sign_size must be > 0");
}

bool sign_visible(const Pose2D& pose, const Sign& sign, const CameraModel& cam,
                  const DetectorModel& det) {
  const RangeBearing rb = true_range_bearing(pose, sign.position);
  if (rb.range < det.min_range || rb.range > det.max_range) return false;
  if (std::abs(rb.bearing) > cam.horizontal_fov / 2.0) return false;
  const Eigen::Vector2d face(std::cos(sign.facing), std::sin(sign.facing));
  if (face.dot(pose.position() - sign.position) <= 0.0) return false;
  return cam.project(pose, sign.position, det.sign_height).has_value();
}

std::vector<Detection> simulate_detector(const Pose2D& pose, const std::vector<Sign>& signs,
                                         const CameraModel& cam, const DetectorModel& det,
                                         Rng& rng) {
  det.validate();
  std::vector<Detection> out;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::gamma_distribution<double> ga(det.confidence_alpha, 1.0);
  std::gamma_distribution<double> gb(det.confidence_beta, 1.0);
  for (std::size_t i = 0; i < signs.size(); ++i) {
    const Sign& sign = signs[i];
    if (!sign_visible(pose, sign, cam, det)) continue;
    const bool missed = uniform(rng) < det.miss_rate;
    const double a = ga(rng);
    const double b = gb(rng);
    if (missed) continue;

    const Eigen::Vector2d c = *cam.project(pose, sign.position, det.sign_height);
    const double range = (sign.position - pose.position()).norm();
    const double half = 0.5 * det.sign_size * cam.focal() / range;
    Detection d;
    d.kind = sign.kind;
    d.confidence = a / (a + b);
    d.bbox = {c.x() - half, c.y() - half, c.x() + half, c.y() + half};
    d.centroid = d.bbox.center();
    d.sign_index = i;
    out.push_back(d);
  }
  return out;
}

std::vector<Detection> detect_signs(const Pose2D& pose, const std::vector<Sign>& signs,
                                    const CameraModel& cam, const DetectorModel& det, Rng& rng) {
  auto raw = simulate_detector(pose, signs, cam, det, rng);
  std::erase_if(raw, [](const Detection& d) { return !passes_confidence_gate(d.confidence); });
  return raw;
}

double bearing_from_pixel(const CameraModel& cam, const Eigen::Vector2d& pixel) {
  const double fwd = cam.focal() * std::cos(cam.pitch) - (pixel.y() - cam.cy()) * std::sin(cam.pitch);
  const double left = cam.cx() - pixel.x();
  return std::atan2(left, fwd);
}

}  // namespace lanesim
