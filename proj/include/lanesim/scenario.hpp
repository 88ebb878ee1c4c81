#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "lanesim/control.hpp"
#include "lanesim/estimation.hpp"
#include "lanesim/sensors.hpp"
#include "lanesim/vision.hpp"
#include "lanesim/world.hpp"

namespace lanesim {

/// Scenario validation failure; key_path names the offending entry
/// (e.g. "run.dt" or "track.signs[1].kind").
class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(std::string key_path, const std::string& message)
      : std::runtime_error(key_path.empty() ? message : key_path + ": " + message),
        key_path_(std::move(key_path)) {}

  const std::string& key_path() const { return key_path_; }

 private:
  std::string key_path_;
};

struct RobotConfig {
  double wheel_base = 0.2;
  VelocityLimits limits{0.5, 2.0};
  Pose2D start;
};

struct SensorConfig {
  RangeSensorModel range;
  DetectorModel detector;
};

enum class FilterKind { Ekf, Ukf };

std::string_view to_string(FilterKind kind);

struct FilterConfig {
  FilterKind kind = FilterKind::Ekf;
  double sigma_accel = 0.5;
  InitConfig init;
  double sigma_range = 0.02;     // measurement model, m
  double sigma_bearing = 0.01;   // measurement model, rad
  UnscentedParams unscented;
  double gate = 1.0;             // m, association radius
  double bearing_gate = 0.2;     // rad, bearing-only association
  double track_timeout = 2.0;    // s without updates before a track is dropped
};

struct ControlConfig {
  LaneFollowingConfig lane;
  BehaviorConfig behavior;
};

struct RunConfig {
  double dt = 0.05;
  double duration = 60.0;
  std::uint64_t seed = 0;
  /// Open tracks finish once the remaining centerline is shorter than this.
  double end_margin = 0.5;
};

struct ScenarioConfig {
  explicit ScenarioConfig(Track t) : track(std::move(t)) {}

  std::string name;
  Track track;
  RobotConfig robot;
  CameraModel camera;
  SensorConfig sensors;
  VisionParams vision;
  FilterConfig filter;
  ControlConfig control;
  RunConfig run;
};

/// Default steering gains for the default 160x120 camera.
PIDConfig default_steering_pid();

ScenarioConfig parse_scenario(const nlohmann::json& doc);
ScenarioConfig load_scenario(const std::filesystem::path& path);

/// Fully normalized form; parse_scenario(scenario_to_json(c)) reproduces c.
nlohmann::json scenario_to_json(const ScenarioConfig& cfg);

}  // namespace lanesim
