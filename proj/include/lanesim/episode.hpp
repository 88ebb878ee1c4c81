#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "lanesim/scenario.hpp"

namespace lanesim {

/// Per-track filter snapshot for one tick.
struct TrackSnapshot {
  std::uint32_t id = 0;
  SignKind kind = SignKind::Stop;
  TargetState4 estimate;
  double cov_trace = 0.0;
  double nees = 0.0;
  bool detected = false;                 // detected_class event this tick
  std::optional<double> distance;        // detected_class_distance event
};

struct TraceRecord {
  std::size_t tick = 0;
  double time = 0.0;
  Pose2D pose;
  Twist command;
  double cross_track = 0.0;
  std::optional<double> center_offset;  // absent when the lane is invalid
  bool lane_valid = false;
  BehaviorMode mode = BehaviorMode::LaneFollowing;
  std::vector<TrackSnapshot> tracks;
};

/// One message on the detected-class channel (a gated detection).
struct DetectionEvent {
  std::size_t tick = 0;
  double time = 0.0;
  std::optional<std::uint32_t> track_id;
  std::size_t sign_index = 0;
  SignKind kind = SignKind::Stop;
  double confidence = 0.0;
  BoundingBox bbox;
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  std::optional<RangeBearing> measurement;  // depth reading, when in envelope
  std::optional<double> distance;           // filtered distance estimate
};

struct TransitionEvent {
  std::size_t tick = 0;
  double time = 0.0;
  BehaviorMode from = BehaviorMode::LaneFollowing;
  BehaviorMode to = BehaviorMode::LaneFollowing;
};

struct TrackSummary {
  std::uint32_t id = 0;
  SignKind kind = SignKind::Stop;
  std::size_t sign_index = 0;
  std::size_t updates = 0;
  double position_rmse = 0.0;
  double mean_nees = 0.0;
};

struct StoppedInterval {
  double start = 0.0;
  double end = 0.0;
  double max_abs_v = 0.0;
};

struct Summary {
  std::size_t ticks = 0;
  double simulated_time = 0.0;
  double cross_track_rmse = 0.0;
  double max_abs_cross_track = 0.0;
  std::size_t lane_invalid_ticks = 0;
  std::size_t max_lane_invalid_streak = 0;
  std::vector<TrackSummary> tracks;
  double mean_nees = 0.0;
  std::vector<TransitionEvent> transitions;
  std::vector<StoppedInterval> stopped;
  std::size_t detections_emitted = 0;
  std::size_t detections_suppressed = 0;
  double min_emitted_confidence = 1.0;
  std::size_t range_readings = 0;
  double min_range_reading = 0.0;
  double max_range_reading = 0.0;
  bool reached_end = false;
  bool completed = false;  // ran to its end without leaving the lane
};

struct EpisodeResult {
  std::vector<TraceRecord> trace;
  std::vector<DetectionEvent> detections;
  Summary summary;
};

struct EpisodeOptions {
  /// When set, camera frames (PPM) and masks (PGM) are written here per tick.
  std::optional<std::filesystem::path> frame_dir;
};

EpisodeResult run_episode(const ScenarioConfig& cfg, const EpisodeOptions& options = {});

/// Runs one episode per seed, concurrently; results are ordered like seeds.
std::vector<EpisodeResult> run_batch(const ScenarioConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                     unsigned threads = 0);

extern const char* const kTraceColumns;

std::string trace_csv(const std::vector<TraceRecord>& records);
void write_trace_csv(const std::vector<TraceRecord>& records, const std::filesystem::path& path);

std::string detections_csv(const std::vector<DetectionEvent>& events);
void write_detections_csv(const std::vector<DetectionEvent>& events, const std::filesystem::path& path);

nlohmann::json summary_to_json(const Summary& s);

/// Formats a double with 9 significant digits.
std::string format_float(double v);

}  // namespace lanesim
