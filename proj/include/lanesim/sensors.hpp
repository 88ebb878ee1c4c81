#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "lanesim/image.hpp"
#include "lanesim/random.hpp"
#include "lanesim/world.hpp"

namespace lanesim {

/// Forward-looking pinhole camera mounted at the robot origin, pitched down.
struct CameraModel {
  int width = 160;
  int height = 120;
  double horizontal_fov = deg2rad(100.0);
  double mount_height = 0.3;
  double pitch = 0.35;  // radians below horizontal

  void validate() const;
  double focal() const;  // pixels
  double cx() const { return width / 2.0; }
  double cy() const { return height / 2.0; }
  /// Continuous image row of the horizon (pixel i spans [i, i+1)).
  double horizon_row() const;

  /// Projects a world point at height z into continuous pixel coordinates.
  /// Empty when the point is not in front of the camera (depth < near).
  std::optional<Eigen::Vector2d> project(const Pose2D& pose, const Eigen::Vector2d& p,
                                         double z = 0.0, double near = 0.05) const;
};

inline constexpr Rgb kLaneYellow{255, 255, 0};
inline constexpr Rgb kGroundGray{90, 90, 90};
inline constexpr Rgb kSkyBlack{0, 0, 0};

/// Renders lane boundaries (3 px yellow stroke) on a gray ground plane.
RasterImage render_camera(const Track& track, const Pose2D& pose, const CameraModel& cam);

/// Valid depth envelope of the range sensor.
inline constexpr double kMinRange = 0.2;
inline constexpr double kMaxRange = 20.0;

struct RangeBearing {
  double range = 0.0;
  double bearing = 0.0;  // sensor frame, 0 = robot heading, + = left
  double sigma_range = 0.0;
  double sigma_bearing = 0.0;
};

struct RangeSensorModel {
  double sigma_range = 0.0;
  double sigma_bearing = 0.0;
  double horizontal_fov = deg2rad(100.0);
  double min_range = kMinRange;
  double max_range = kMaxRange;
};

/// Noise-free range and sensor-frame bearing from pose to point.
RangeBearing true_range_bearing(const Pose2D& pose, const Eigen::Vector2d& point);

/// Noisy reading; empty when the noisy range leaves the depth envelope or the
/// bearing leaves the field of view. Always draws two normals from `rng`.
std::optional<RangeBearing> sense_range_bearing(const Pose2D& pose, const Sign& sign,
                                                const RangeSensorModel& model, Rng& rng);

struct BoundingBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  Eigen::Vector2d center() const { return {(x_min + x_max) / 2.0, (y_min + y_max) / 2.0}; }
};

struct Detection {
  SignKind kind = SignKind::Stop;
  double confidence = 0.0;
  BoundingBox bbox;
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  std::size_t sign_index = 0;  // ground-truth identity, evaluation only
};

/// Simulated object detector.
struct DetectorModel {
  double miss_rate = 0.0;
  double confidence_alpha = 17.0;
  double confidence_beta = 2.0;
  double sign_size = 0.1;    // meters, edge length of the sign face
  double sign_height = 0.3;  // meters, face center above ground
  double min_range = kMinRange;
  double max_range = kMaxRange;

  void validate() const;
};

inline constexpr double kConfidenceThreshold = 0.8;

inline bool passes_confidence_gate(double confidence) {
  return confidence > kConfidenceThreshold;
}

/// True when the sign is in the camera's field of view, inside the depth
/// envelope, and facing the robot.
bool sign_visible(const Pose2D& pose, const Sign& sign, const CameraModel& cam,
                  const DetectorModel& det);

/// Raw detector output before gating: one candidate per visible, non-missed
/// sign, with a sampled confidence.
std::vector<Detection> simulate_detector(const Pose2D& pose, const std::vector<Sign>& signs,
                                         const CameraModel& cam, const DetectorModel& det,
                                         Rng& rng);

/// Detections that pass the confidence gate.
std::vector<Detection> detect_signs(const Pose2D& pose, const std::vector<Sign>& signs,
                                    const CameraModel& cam, const DetectorModel& det, Rng& rng);

/// Sensor-frame bearing of the ray through a pixel (continuous coordinates).
double bearing_from_pixel(const CameraModel& cam, const Eigen::Vector2d& pixel);

}  // namespace lanesim
