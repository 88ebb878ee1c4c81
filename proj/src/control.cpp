#include "lanesim/control.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lanesim {

void PIDConfig::validate() const {
  if (!(output_min < output_max)) throw std::invalid_argument("PID output_min must be < output_max");
  if (!(integral_limit > 0.0)) throw std::invalid_argument("PID integral_limit must be > 0");
}

PIDResult pid_update(const PIDConfig& cfg, const PIDState& st, double measured, double dt) {
  if (!std::isfinite(measured)) throw std::invalid_argument("pid_update: non-finite measurement");
  if (!(dt > 0.0)) throw std::invalid_argument("pid_update: dt must be > 0");
  const double e = cfg.setpoint - measured;
  PIDState next;
  next.integral = std::clamp(st.integral + e * dt, -cfg.integral_limit, cfg.integral_limit);
  const double derivative = st.initialized ? (e - st.prev_error) / dt : 0.0;
  next.prev_error = e;
  next.initialized = true;
  const double u = cfg.kp * e + cfg.ki * next.integral + cfg.kd * derivative;
  return {std::clamp(u, cfg.output_min, cfg.output_max), next};
}

LaneFollowingResult lane_following_command(const LaneObservation& obs,
                                           const LaneFollowingConfig& cfg,
                                           const LaneFollowingState& st, int image_width,
                                           double dt, double measured_speed) {
  LaneFollowingResult out{st.previous, st};
  if (!obs.valid) return out;

  const double normalized = obs.center_offset / (image_width / 2.0);
  const PIDResult steer = pid_update(cfg.steering, st.steering, normalized, dt);
  out.state.steering = steer.state;
  out.command.omega = steer.output;
  out.command.v = cfg.base_speed;
  if (cfg.speed) {
    PIDConfig speed = *cfg.speed;
    speed.setpoint = cfg.base_speed;
    const PIDResult r = pid_update(speed, st.speed, measured_speed, dt);
    out.state.speed = r.state;
    out.command.v = measured_speed + r.output;
  }
  out.state.previous = out.command;
  return out;
}

std::string_view to_string(BehaviorMode mode) {
  switch (mode) {
    case BehaviorMode::LaneFollowing: return "LaneFollowing";
    case BehaviorMode::Stopping: return "Stopping";
    case BehaviorMode::Stopped: return "Stopped";
    case BehaviorMode::Turning: return "Turning";
  }
  return "?";
}

void BehaviorConfig::validate() const {
  if (!(stop_distance > 0.0) || !(turn_distance > 0.0)) {
    throw std::invalid_argument("behavior trigger distances must be > 0");
  }
  if (!(stop_ramp > 0.0)) throw std::invalid_argument("stop_ramp must be > 0");
  if (stop_hold < 0.0) throw std::invalid_argument("stop_hold must be >= 0");
  if (!(turn_rate > 0.0) || turn_speed < 0.0) {
    throw std::invalid_argument("turn_rate must be > 0 and turn_speed >= 0");
  }
}

namespace {

bool handled(const BehaviorState& st, std::uint32_t id) {
  return std::find(st.handled.begin(), st.handled.end(), id) != st.handled.end();
}

}  // namespace

BehaviorResult behavior_step(const BehaviorState& st, const std::vector<SignObservation>& signs,
                             double dt, const Twist& nominal, const BehaviorConfig& cfg) {
  BehaviorResult out{st, nominal, std::nullopt};
  BehaviorState& s = out.state;
  const BehaviorMode before = st.mode;

  switch (st.mode) {
    case BehaviorMode::LaneFollowing: {
      for (const SignObservation& o : signs) {
        if (handled(s, o.track_id)) continue;
        if (o.kind == SignKind::Stop && o.distance < cfg.stop_distance) {
          s.handled.push_back(o.track_id);
          s.mode = BehaviorMode::Stopping;
          s.timer = 0.0;
          break;
        }
        if (o.kind == SignKind::Turn && o.distance < cfg.turn_distance) {
          s.handled.push_back(o.track_id);
          s.mode = BehaviorMode::Turning;
          s.pending_turn = cfg.turn_angle;
          s.turned = 0.0;
          break;
        }
      }
      out.command = nominal;
      break;
    }
    case BehaviorMode::Stopping: {
      s.timer += dt;
      const double factor = std::max(0.0, 1.0 - s.timer / cfg.stop_ramp);
      if (factor == 0.0) {
        s.mode = BehaviorMode::Stopped;
        s.timer = 0.0;
        out.command = {0.0, 0.0};
      } else {
        out.command = {nominal.v * factor, nominal.omega * factor};
      }
      break;
    }
    case BehaviorMode::Stopped: {
      const bool go = s.timer >= cfg.stop_hold && std::any_of(signs.begin(), signs.end(),
                                  [](const SignObservation& o) { return o.kind == SignKind::Move; });
      if (go) {
        s.mode = BehaviorMode::LaneFollowing;
        s.timer = 0.0;
        out.command = nominal;
      } else {
        s.timer += dt;
        out.command = {0.0, 0.0};
      }
      break;
    }
    case BehaviorMode::Turning: {
      const double remaining = std::abs(s.pending_turn) - s.turned;
      const double rate = std::min(cfg.turn_rate, remaining / dt);
      const double sign = s.pending_turn >= 0.0 ? 1.0 : -1.0;
      out.command = {std::min(cfg.turn_speed, std::max(nominal.v, 0.0)), sign * rate};
      s.turned += rate * dt;
      s.timer += dt;
      if (s.turned >= std::abs(s.pending_turn) - 1e-12) {
        s.mode = BehaviorMode::LaneFollowing;
        s.pending_turn = 0.0;
        s.turned = 0.0;
        s.timer = 0.0;
      }
      break;
    }
  }
  if (s.mode != before) out.transition = BehaviorTransition{before, s.mode};
  return out;
}

}  // namespace lanesim
