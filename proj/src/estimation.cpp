#include "lanesim/estimation.hpp"

namespace lanesim {

Mat<4, 4> cv_transition(double dt) {
  Mat<4, 4> F = Mat<4, 4>::Identity();
  F(0, 2) = dt;
  F(1, 3) = dt;
  return F;
}

Mat<4, 4> white_acceleration_q(double dt, double sigma_accel) {
  const double q = sigma_accel * sigma_accel;
  const double dt2 = dt * dt;
  const double dt3 = dt2 * dt;
  const double dt4 = dt3 * dt;
  Mat<4, 4> Q = Mat<4, 4>::Zero();
  Q(0, 0) = Q(1, 1) = q * dt4 / 4.0;
  Q(0, 2) = Q(2, 0) = Q(1, 3) = Q(3, 1) = q * dt3 / 2.0;
  Q(2, 2) = Q(3, 3) = q * dt2;
  return Q;
}

TargetBelief predict_cv(const TargetBelief& belief, double dt, const Mat<4, 4>& Q) {
  if (!(dt > 0.0)) throw std::invalid_argument("predict_cv: dt must be > 0");
  const Mat<4, 4> F = cv_transition(dt);
  return {F * belief.mean, detail::symmetrize<4>(F * belief.cov * F.transpose() + Q)};
}

Mat<2, 2> range_bearing_r(double sigma_range, double sigma_bearing) {
  Mat<2, 2> R = Mat<2, 2>::Zero();
  R(0, 0) = sigma_range * sigma_range;
  R(1, 1) = sigma_bearing * sigma_bearing;
  return R;
}

Mat<2, 4> range_bearing_jacobian(const Vec<4>& target, const Pose2D& robot) {
  const double dx = target(0) - robot.x();
  const double dy = target(1) - robot.y();
  const double r2 = dx * dx + dy * dy;
  const double r = std::sqrt(r2);
  if (!(r > 1e-6)) throw std::domain_error("range_bearing_jacobian: target at sensor origin");
  Mat<2, 4> H = Mat<2, 4>::Zero();
  H(0, 0) = dx / r;
  H(0, 1) = dy / r;
  H(1, 0) = -dy / r2;
  H(1, 1) = dx / r2;
  return H;
}

Vec<2> RangeBearingModel::predict(const Vec<4>& x) const {
  const double dx = x(0) - robot.x();
  const double dy = x(1) - robot.y();
  return {std::hypot(dx, dy), wrap_angle(std::atan2(dy, dx) - robot.psi())};
}

Vec<1> BearingOnlyModel::predict(const Vec<4>& x) const {
  return Vec<1>(wrap_angle(std::atan2(x(1) - robot.y(), x(0) - robot.x()) - robot.psi()));
}

Mat<1, 4> BearingOnlyModel::jacobian(const Vec<4>& x) const {
  return range_bearing_jacobian(x, robot).row(1);
}

std::optional<TargetBelief> ekf_update(const TargetBelief& belief, const RangeBearing& z,
                                       const Pose2D& robot, const Mat<2, 2>& R) {
  return ekf_update(belief, Vec<2>(z.range, z.bearing), RangeBearingModel{robot}, R);
}

std::optional<TargetBelief> ukf_update(const TargetBelief& belief, const RangeBearing& z,
                                       const Pose2D& robot, const Mat<2, 2>& R,
                                       const UnscentedParams& params) {
  return ukf_update(belief, Vec<2>(z.range, z.bearing), RangeBearingModel{robot}, R, params);
}

TargetBelief init_from_first_measurement(const RangeBearing& z, const Pose2D& robot,
                                         const InitConfig& cfg) {
  const double heading = robot.psi() + z.bearing;
  TargetBelief b;
  b.mean << robot.x() + z.range * std::cos(heading), robot.y() + z.range * std::sin(heading), 0.0, 0.0;
  const double sp2 = cfg.sigma_position * cfg.sigma_position;
  const double sv2 = cfg.sigma_velocity * cfg.sigma_velocity;
  b.cov.diagonal() << sp2, sp2, sv2, sv2;
  return b;
}

Vec<3> euler_motion(const Vec<3>& pose, double v, double omega, double dt) {
  return {pose(0) + v * dt * std::cos(pose(2)), pose(1) + v * dt * std::sin(pose(2)),
          wrap_angle(pose(2) + omega * dt)};
}

Mat<3, 3> motion_jacobian(const Vec<3>& pose, double v, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("motion_jacobian: dt must be > 0");
  Mat<3, 3> A = Mat<3, 3>::Identity();
  A(0, 2) = -v * dt * std::sin(pose(2));
  A(1, 2) = v * dt * std::cos(pose(2));
  return A;
}

PoseBelief pose_predict(const PoseBelief& belief, double v, double omega, double dt,
                        const Mat<3, 3>& Q) {
  const Mat<3, 3> A = motion_jacobian(belief.mean, v, dt);
  return {euler_motion(belief.mean, v, omega, dt),
          detail::symmetrize<3>(A * belief.cov * A.transpose() + Q)};
}

Vec<2> pose_range_bearing(const Vec<3>& pose, const Eigen::Vector2d& landmark) {
  const double dx = landmark.x() - pose(0);
  const double dy = landmark.y() - pose(1);
  return {std::hypot(dx, dy), wrap_angle(std::atan2(dy, dx) - pose(2))};
}

Mat<2, 3> pose_range_bearing_jacobian(const Vec<3>& pose, const Eigen::Vector2d& landmark) {
  // r = |x_t - x_l|, b = atan2(y_l - y_t, x_l - x_t) - psi.
  const double dx = landmark.x() - pose(0);
  const double dy = landmark.y() - pose(1);
  const double r2 = dx * dx + dy * dy;
  const double r = std::sqrt(r2);
  if (!(r > 1e-6)) throw std::domain_error("pose_range_bearing_jacobian: landmark at sensor origin");
  Mat<2, 3> H;
  H << -dx / r, -dy / r, 0.0,
       dy / r2, -dx / r2, -1.0;
  return H;
}

namespace {

Vec<3> wrap_heading(Vec<3> v) {
  v(2) = wrap_angle(v(2));
  return v;
}

}  // namespace

std::optional<PoseBelief> pose_ekf_update(const PoseBelief& belief, const Vec<3>& observation,
                                          const Mat<3, 3>& H, const Mat<3, 3>& R) {
  return kalman_update<3, 3>(belief, observation, Vec<3>(H * belief.mean), H, R,
                             {false, false, true}, wrap_heading);
}

std::optional<PoseBelief> pose_ekf_update(const PoseBelief& belief, const RangeBearing& z,
                                          const Eigen::Vector2d& landmark, const Mat<2, 2>& R) {
  return kalman_update<3, 2>(belief, Vec<2>(z.range, z.bearing),
                             pose_range_bearing(belief.mean, landmark),
                             pose_range_bearing_jacobian(belief.mean, landmark), R, {false, true},
                             wrap_heading);
}

}  // namespace lanesim
