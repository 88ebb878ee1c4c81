#pragma once

#include <cstddef>
#include <limits>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "lanesim/angle.hpp"

namespace lanesim {

/// Planar robot pose. Heading is always stored wrapped to (-pi, pi].
class Pose2D {
 public:
  Pose2D() = default;
  Pose2D(double x, double y, double psi) : x_(x), y_(y), psi_(wrap_angle(psi)) {}

  double x() const { return x_; }
  double y() const { return y_; }
  double psi() const { return psi_; }
  Eigen::Vector2d position() const { return {x_, y_}; }
  Eigen::Vector2d heading() const { return {std::cos(psi_), std::sin(psi_)}; }

 private:
  double x_ = 0.0;
  double y_ = 0.0;
  double psi_ = 0.0;
};

/// Unicycle twist (linear m/s, angular rad/s).
struct Twist {
  double v = 0.0;
  double omega = 0.0;
};

struct RobotState {
  Pose2D pose;
  double v = 0.0;
  double omega = 0.0;
};

/// v_l and v_r are the rounded wheel speeds. The *_lo fields hold their
/// rounding residuals when produced by wheels_from_unicycle (zero otherwise),
/// so converting back recovers the original twist bit for bit.
struct WheelSpeeds {
  double v_l = 0.0;
  double v_r = 0.0;
  double L = 0.0;  // wheel separation, > 0
  double v_l_lo = 0.0;
  double v_r_lo = 0.0;
};

struct VelocityLimits {
  double v_max = std::numeric_limits<double>::infinity();
  double omega_max = std::numeric_limits<double>::infinity();
};

Twist unicycle_from_wheels(const WheelSpeeds& w);
WheelSpeeds wheels_from_unicycle(double v, double omega, double L);

/// Below this |omega| the straight-line limit of the arc is used.
inline constexpr double kStraightOmega = 1e-9;

/// Exact constant-twist integration over dt. The command is clamped to
/// `limits`; the returned state carries the applied (clamped) twist.
RobotState step(const RobotState& state, const Twist& command, double dt,
                const VelocityLimits& limits = {});

/// Integrates a constant command over `duration` in increments of at most
/// `dt`; the last increment absorbs the remainder.
RobotState integrate(const RobotState& state, const Twist& command, double duration,
                     double dt, const VelocityLimits& limits = {});

enum class SignKind { Stop, Move, Turn };

std::string_view to_string(SignKind kind);
SignKind sign_kind_from_string(std::string_view name);

struct Sign {
  SignKind kind = SignKind::Stop;
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  double facing = 0.0;  // direction the sign face points, radians
};

struct Segment {
  Eigen::Vector2d a;
  Eigen::Vector2d b;
};

/// Piecewise-linear lane centerline with a constant half width.
class Track {
 public:
  Track(std::vector<Eigen::Vector2d> centerline, double lane_half_width,
        std::vector<Sign> signs = {}, bool closed = false);

  const std::vector<Eigen::Vector2d>& centerline() const { return centerline_; }
  double lane_half_width() const { return lane_half_width_; }
  const std::vector<Sign>& signs() const { return signs_; }
  bool closed() const { return closed_; }

  std::size_t segment_count() const;
  Segment segment(std::size_t i) const;
  double length() const { return cumulative_.back(); }
  /// Arc length of the centerline up to the start of segment i.
  double arc_length_at(std::size_t i) const { return cumulative_[i]; }

  /// Lane boundary polyline; side = +1 left of travel, -1 right.
  std::vector<Eigen::Vector2d> boundary(int side) const;

 private:
  std::vector<Eigen::Vector2d> centerline_;
  double lane_half_width_;
  std::vector<Sign> signs_;
  bool closed_;
  std::vector<double> cumulative_;
};

struct TrackError {
  double signed_offset = 0.0;  // + = left of path
  double heading_error = 0.0;  // wrap(psi - tangent)
  std::size_t segment = 0;
  double progress = 0.0;  // arc length of the nearest point
};

/// Nearest-segment query; ties resolve to the lower segment index.
TrackError cross_track_error(const Track& track, const Pose2D& pose);

}  // namespace lanesim
