#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "lanesim/angle.hpp"
#include "lanesim/vision.hpp"
#include "lanesim/world.hpp"

namespace lanesim {

struct PIDConfig {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;
  double setpoint = 0.0;
  double output_min = -1e9;
  double output_max = 1e9;
  double integral_limit = 1e9;

  void validate() const;
};

struct PIDState {
  double integral = 0.0;
  double prev_error = 0.0;
  bool initialized = false;
};

struct PIDResult {
  double output = 0.0;
  PIDState state;
};

/// e = setpoint - measured; rectangle-rule integral clamped to
/// +-integral_limit; derivative (e - e_prev)/dt, zero on the first call.
PIDResult pid_update(const PIDConfig& cfg, const PIDState& st, double measured, double dt);

struct LaneFollowingConfig {
  PIDConfig steering;  // setpoint 0 = lane center
  double base_speed = 0.3;
  /// When present, regulates v toward base_speed; the output is added to the
  /// measured speed. Otherwise v is held at base_speed.
  std::optional<PIDConfig> speed;
};

struct LaneFollowingState {
  PIDState steering;
  PIDState speed;
  Twist previous{0.0, 0.0};
};

struct LaneFollowingResult {
  Twist command;
  LaneFollowingState state;
};

/// PID on the center offset normalized by the image half-width drives omega.
/// An invalid observation repeats the previous command.
LaneFollowingResult lane_following_command(const LaneObservation& obs,
                                           const LaneFollowingConfig& cfg,
                                           const LaneFollowingState& st, int image_width,
                                           double dt, double measured_speed = 0.0);

enum class BehaviorMode { LaneFollowing, Stopping, Stopped, Turning };

std::string_view to_string(BehaviorMode mode);

struct BehaviorConfig {
  double stop_distance = 0.5;
  double stop_ramp = 0.5;  // seconds to ramp v to zero
  double stop_hold = 0.0;  // seconds in Stopped before a Move detection releases
  double turn_distance = 0.5;
  double turn_angle = kPi / 2.0;  // signed; + = left
  double turn_speed = 0.1;
  double turn_rate = 0.6;  // rad/s magnitude while turning

  void validate() const;
};

struct BehaviorState {
  BehaviorMode mode = BehaviorMode::LaneFollowing;
  double timer = 0.0;
  double pending_turn = 0.0;
  double turned = 0.0;
  std::vector<std::uint32_t> handled;  // sign tracks that already triggered
};

/// A gated detection with its filtered distance estimate.
struct SignObservation {
  SignKind kind = SignKind::Stop;
  double distance = 0.0;
  std::uint32_t track_id = 0;
};

struct BehaviorTransition {
  BehaviorMode from;
  BehaviorMode to;
};

struct BehaviorResult {
  BehaviorState state;
  Twist command;
  std::optional<BehaviorTransition> transition;
};

BehaviorResult behavior_step(const BehaviorState& st, const std::vector<SignObservation>& signs,
                             double dt, const Twist& nominal, const BehaviorConfig& cfg = {});

}  // namespace lanesim
