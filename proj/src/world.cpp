#include "lanesim/world.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lanesim {
namespace {

void require_finite(std::initializer_list<double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": non-finite input");
  }
}

// Unevaluated sum hi + lo with |lo| <= ulp(hi) / 2.
struct DoubleDouble {
  double hi = 0.0;
  double lo = 0.0;
};

DoubleDouble two_sum(double a, double b) {
  const double s = a + b;
  const double bb = s - a;
  return {s, (a - (s - bb)) + (b - bb)};
}

DoubleDouble add(const DoubleDouble& a, const DoubleDouble& b) {
  const DoubleDouble s = two_sum(a.hi, b.hi);
  const DoubleDouble t = two_sum(a.lo, b.lo);
  DoubleDouble u = two_sum(s.hi, s.lo + t.hi);
  return two_sum(u.hi, u.lo + t.lo);
}

DoubleDouble product(double a, double b) {
  const double p = a * b;
  return {p, std::fma(a, b, -p)};
}

DoubleDouble scale(const DoubleDouble& a, double s) { return {a.hi * s, a.lo * s}; }

double divide(const DoubleDouble& a, double b) {
  const double q = a.hi / b;
  const double rem = std::fma(-q, b, a.hi) + a.lo;
  return q + rem / b;
}

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a.x() * b.y() - a.y() * b.x();
}

}  // namespace

Twist unicycle_from_wheels(const WheelSpeeds& w) {
  require_finite({w.v_l, w.v_r, w.L, w.v_l_lo, w.v_r_lo}, "unicycle_from_wheels");
  if (!(w.L > 0.0)) throw std::invalid_argument("unicycle_from_wheels: L must be > 0");
  const DoubleDouble l{w.v_l, w.v_l_lo};
  const DoubleDouble r{w.v_r, w.v_r_lo};
  const DoubleDouble sum = add(r, l);
  const DoubleDouble diff = add(r, {-l.hi, -l.lo});
  return {(sum.hi + sum.lo) / 2.0, divide(diff, w.L)};
}

WheelSpeeds wheels_from_unicycle(double v, double omega, double L) {
  require_finite({v, omega, L}, "wheels_from_unicycle");
  if (!(L > 0.0)) throw std::invalid_argument("wheels_from_unicycle: L must be > 0");
  const DoubleDouble half = scale(product(omega, L), 0.5);
  const DoubleDouble r = add({v, 0.0}, half);
  const DoubleDouble l = add({v, 0.0}, {-half.hi, -half.lo});
  return {l.hi, r.hi, L, l.lo, r.lo};
}

RobotState step(const RobotState& state, const Twist& command, double dt,
                const VelocityLimits& limits) {
  const Pose2D& p = state.pose;
  require_finite({p.x(), p.y(), p.psi(), command.v, command.omega, dt}, "step");
  if (!(dt > 0.0)) throw std::invalid_argument("step: dt must be > 0");

  const double v = std::clamp(command.v, -limits.v_max, limits.v_max);
  const double omega = std::clamp(command.omega, -limits.omega_max, limits.omega_max);

  double x = p.x();
  double y = p.y();
  if (std::abs(omega) >= kStraightOmega) {
    // sin(psi+w dt) - sin(psi) = 2 cos(psi + w dt/2) sin(w dt/2), same for cos;
    // the half-angle form stays accurate as omega -> 0.
    const double half = omega * dt / 2.0;
    const double chord = v * dt * std::sin(half) / half;
    x += chord * std::cos(p.psi() + half);
    y += chord * std::sin(p.psi() + half);
  } else {
    x += v * dt * std::cos(p.psi());
    y += v * dt * std::sin(p.psi());
  }
  return {Pose2D(x, y, p.psi() + omega * dt), v, omega};
}

RobotState integrate(const RobotState& state, const Twist& command, double duration,
                     double dt, const VelocityLimits& limits) {
  if (!(dt > 0.0) || !(duration >= 0.0)) {
    throw std::invalid_argument("integrate: dt must be > 0 and duration >= 0");
  }
  const auto full = static_cast<long long>(std::floor(duration / dt));
  RobotState s = state;
  for (long long i = 0; i < full; ++i) s = step(s, command, dt, limits);
  const double rest = duration - static_cast<double>(full) * dt;
  if (rest > 0.0) s = step(s, command, rest, limits);
  return s;
}

std::string_view to_string(SignKind kind) {
  switch (kind) {
    case SignKind::Stop: return "Stop";
    case SignKind::Move: return "Move";
    case SignKind::Turn: return "Turn";
  }
  return "?";
}

SignKind sign_kind_from_string(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "stop") return SignKind::Stop;
  if (lower == "move" || lower == "go") return SignKind::Move;
  if (lower == "turn") return SignKind::Turn;
  throw std::invalid_argument("unknown sign kind '" + std::string(name) + "'");
}

Track::Track(std::vector<Eigen::Vector2d> centerline, double lane_half_width,
             std::vector<Sign> signs, bool closed)
    : centerline_(std::move(centerline)),
      lane_half_width_(lane_half_width),
      signs_(std::move(signs)),
      closed_(closed) {
  if (centerline_.size() < 2) throw std::invalid_argument("track needs at least 2 waypoints");
  if (!(lane_half_width_ > 0.0)) throw std::invalid_argument("lane_half_width must be > 0");
  for (std::size_t i = 0; i + 1 < centerline_.size(); ++i) {
    if (centerline_[i] == centerline_[i + 1]) {
      throw std::invalid_argument("consecutive waypoints " + std::to_string(i) + " and " +
                                  std::to_string(i + 1) + " coincide");
    }
  }
  if (closed_ && centerline_.front() == centerline_.back()) centerline_.pop_back();
  if (closed_ && centerline_.size() < 3) {
    throw std::invalid_argument("closed track needs at least 3 distinct waypoints");
  }
  cumulative_.assign(1, 0.0);
  for (std::size_t i = 0; i < segment_count(); ++i) {
    const Segment s = segment(i);
    cumulative_.push_back(cumulative_.back() + (s.b - s.a).norm());
  }
}

std::size_t Track::segment_count() const {
  return closed_ ? centerline_.size() : centerline_.size() - 1;
}

Segment Track::segment(std::size_t i) const {
  return {centerline_[i], centerline_[(i + 1) % centerline_.size()]};
}

std::vector<Eigen::Vector2d> Track::boundary(int side) const {
  const std::size_t n = centerline_.size();
  const double offset = side >= 0 ? lane_half_width_ : -lane_half_width_;
  auto normal = [&](std::size_t seg) {
    const Segment s = segment(seg);
    const Eigen::Vector2d d = (s.b - s.a).normalized();
    return Eigen::Vector2d(-d.y(), d.x());
  };

  std::vector<Eigen::Vector2d> out;
  out.reserve(n + 1);
  const std::size_t segs = segment_count();
  for (std::size_t i = 0; i < n; ++i) {
    const bool has_prev = closed_ || i > 0;
    const bool has_next = closed_ || i + 1 < n;
    Eigen::Vector2d nrm;
    if (has_prev && has_next) {
      const Eigen::Vector2d n0 = normal((i + segs - 1) % segs);
      const Eigen::Vector2d n1 = normal(i % segs);
      Eigen::Vector2d miter = n0 + n1;
      if (miter.norm() < 1e-9) {
        nrm = n1;
      } else {
        miter.normalize();
        // Miter length grows as 1/cos(half turn); capped for hairpins.
        const double scale = std::min(1.0 / std::max(miter.dot(n1), 1e-9), 4.0);
        nrm = miter * scale;
      }
    } else {
      nrm = has_next ? normal(i) : normal(i - 1);
    }
    out.push_back(centerline_[i] + offset * nrm);
  }
  if (closed_) out.push_back(out.front());
  return out;
}

TrackError cross_track_error(const Track& track, const Pose2D& pose) {
  const Eigen::Vector2d p = pose.position();
  TrackError best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < track.segment_count(); ++i) {
    const Segment s = track.segment(i);
    const Eigen::Vector2d d = s.b - s.a;
    const double len2 = d.squaredNorm();
    const double t = std::clamp((p - s.a).dot(d) / len2, 0.0, 1.0);
    const Eigen::Vector2d q = s.a + t * d;
    const double dist = (p - q).norm();
    if (dist < best_dist) {
      best_dist = dist;
      const double side = cross2(d, p - s.a);
      best.signed_offset = side > 0.0 ? dist : (side < 0.0 ? -dist : 0.0);
      best.heading_error = wrap_angle(pose.psi() - std::atan2(d.y(), d.x()));
      best.segment = i;
      best.progress = track.arc_length_at(i) + t * std::sqrt(len2);
    }
  }
  return best;
}

}  // namespace lanesim
