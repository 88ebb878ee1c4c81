#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "lanesim/angle.hpp"
#include "lanesim/sensors.hpp"
#include "lanesim/world.hpp"

namespace lanesim {

template <int N>
using Vec = Eigen::Matrix<double, N, 1>;
template <int R, int C>
using Mat = Eigen::Matrix<double, R, C>;

template <int N>
struct GaussianBelief {
  Vec<N> mean = Vec<N>::Zero();
  Mat<N, N> cov = Mat<N, N>::Zero();
};

/// Traffic-sign state [x, y, vx, vy] in the world frame.
struct TargetState4 {
  double x = 0.0;
  double y = 0.0;
  double vx = 0.0;
  double vy = 0.0;

  Vec<4> vector() const { return {x, y, vx, vy}; }
  static TargetState4 from(const Vec<4>& v) { return {v(0), v(1), v(2), v(3)}; }
};

using TargetBelief = GaussianBelief<4>;
using PoseBelief = GaussianBelief<3>;  // [x, y, psi]

/// Innovation covariances with a worse condition number are not inverted.
inline constexpr double kMaxInnovationCondition = 1e12;

// ---------------------------------------------------------------------------
// Constant-velocity target model

Mat<4, 4> cv_transition(double dt);

/// Discretized white-acceleration process noise.
Mat<4, 4> white_acceleration_q(double dt, double sigma_accel);

TargetBelief predict_cv(const TargetBelief& belief, double dt, const Mat<4, 4>& Q);

Mat<2, 2> range_bearing_r(double sigma_range, double sigma_bearing);

/// d(range, bearing)/d(target state) for a sensor at `robot`.
Mat<2, 4> range_bearing_jacobian(const Vec<4>& target, const Pose2D& robot);

/// Range and sensor-frame bearing of the target from the robot.
struct RangeBearingModel {
  static constexpr int kDim = 2;
  static constexpr std::array<bool, 2> kAngular{false, true};
  Pose2D robot;

  Vec<2> predict(const Vec<4>& x) const;
  Mat<2, 4> jacobian(const Vec<4>& x) const { return range_bearing_jacobian(x, robot); }
};

/// Sensor-frame bearing only (camera detection without depth).
struct BearingOnlyModel {
  static constexpr int kDim = 1;
  static constexpr std::array<bool, 1> kAngular{true};
  Pose2D robot;

  Vec<1> predict(const Vec<4>& x) const;
  Mat<1, 4> jacobian(const Vec<4>& x) const;
};

/// Direct world-frame position observation (linear).
struct PositionModel {
  static constexpr int kDim = 2;
  static constexpr std::array<bool, 2> kAngular{false, false};

  Vec<2> predict(const Vec<4>& x) const { return x.head<2>(); }
  Mat<2, 4> jacobian(const Vec<4>&) const {
    Mat<2, 4> H = Mat<2, 4>::Zero();
    H(0, 0) = 1.0;
    H(1, 1) = 1.0;
    return H;
  }
};

namespace detail {

template <int M>
Vec<M> wrap_residual(Vec<M> r, const std::array<bool, static_cast<std::size_t>(M)>& angular) {
  for (int i = 0; i < M; ++i) {
    if (angular[static_cast<std::size_t>(i)]) r(i) = wrap_angle(r(i));
  }
  return r;
}

template <int M>
bool invertible(const Mat<M, M>& S) {
  if (!S.allFinite()) return false;
  const Eigen::SelfAdjointEigenSolver<Mat<M, M>> es(S);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().cwiseAbs().maxCoeff();
  return lo > 0.0 && hi / lo <= kMaxInnovationCondition;
}

template <int N>
Mat<N, N> symmetrize(const Mat<N, N>& P) {
  return 0.5 * (P + P.transpose());
}

}  // namespace detail

/// Linearized Kalman update. Empty when the innovation covariance is not
/// safely invertible; the caller keeps its prior.
template <int N, int M, typename Jac, typename Pred>
std::optional<GaussianBelief<N>> kalman_update(
    const GaussianBelief<N>& belief, const Vec<M>& z, const Vec<M>& predicted, const Jac& H,
    const Mat<M, M>& R, const std::array<bool, static_cast<std::size_t>(M)>& angular,
    Pred&& wrap_state) {
  const Vec<M> residual = detail::wrap_residual<M>(z - predicted, angular);
  const Mat<M, M> S = H * belief.cov * H.transpose() + R;
  if (!detail::invertible<M>(S)) return std::nullopt;
  const Mat<N, M> K = belief.cov * H.transpose() * S.inverse();
  GaussianBelief<N> out;
  out.mean = wrap_state(Vec<N>(belief.mean + K * residual));
  out.cov = detail::symmetrize<N>((Mat<N, N>::Identity() - K * H) * belief.cov);
  return out;
}

template <typename Model>
std::optional<TargetBelief> ekf_update(const TargetBelief& belief,
                                       const Vec<Model::kDim>& z, const Model& model,
                                       const Mat<Model::kDim, Model::kDim>& R) {
  constexpr int M = Model::kDim;
  return kalman_update<4, M>(belief, z, model.predict(belief.mean), model.jacobian(belief.mean), R,
                             Model::kAngular, [](const Vec<4>& v) { return v; });
}

std::optional<TargetBelief> ekf_update(const TargetBelief& belief, const RangeBearing& z,
                                       const Pose2D& robot, const Mat<2, 2>& R);

// ---------------------------------------------------------------------------
// Unscented transform

struct UnscentedParams {
  double alpha = 1e-3;
  double beta = 2.0;
  double kappa = 0.0;
};

template <int N>
struct SigmaSet {
  std::array<Vec<N>, 2 * N + 1> points;
  std::array<double, 2 * N + 1> mean_weights;
  std::array<double, 2 * N + 1> cov_weights;
};

template <int N>
SigmaSet<N> sigma_points(const GaussianBelief<N>& belief, const UnscentedParams& p) {
  const double n = N;
  const double lambda = p.alpha * p.alpha * (n + p.kappa) - n;
  const double scale = n + lambda;
  if (!(scale > 0.0)) throw std::invalid_argument("sigma_points: n + lambda must be > 0");

  Mat<N, N> A = scale * belief.cov;
  Eigen::LLT<Mat<N, N>> llt(A);
  if (llt.info() != Eigen::Success || !llt.matrixL().toDenseMatrix().allFinite()) {
    llt.compute(A + 1e-12 * Mat<N, N>::Identity());
    if (llt.info() != Eigen::Success || !llt.matrixL().toDenseMatrix().allFinite()) {
      throw std::runtime_error("sigma_points: covariance is not positive semidefinite");
    }
  }
  const Mat<N, N> L = llt.matrixL();

  SigmaSet<N> s;
  s.points[0] = belief.mean;
  s.mean_weights[0] = lambda / scale;
  s.cov_weights[0] = lambda / scale + (1.0 - p.alpha * p.alpha + p.beta);
  const double wi = 1.0 / (2.0 * scale);
  for (int i = 0; i < N; ++i) {
    s.points[1 + i] = belief.mean + L.col(i);
    s.points[1 + N + i] = belief.mean - L.col(i);
    s.mean_weights[1 + i] = s.mean_weights[1 + N + i] = wi;
    s.cov_weights[1 + i] = s.cov_weights[1 + N + i] = wi;
  }
  return s;
}

/// Weighted mean written relative to the center point; algebraically equal
/// to sum(w_i x_i) but free of the large-weight cancellation.
template <int N>
Vec<N> sigma_mean(const SigmaSet<N>& s) {
  Vec<N> acc = Vec<N>::Zero();
  for (std::size_t i = 1; i < s.points.size(); ++i) acc += s.mean_weights[i] * (s.points[i] - s.points[0]);
  return s.points[0] + acc;
}

template <int N>
Mat<N, N> sigma_covariance(const SigmaSet<N>& s, const Vec<N>& mean) {
  Mat<N, N> P = Mat<N, N>::Zero();
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    const Vec<N> d = s.points[i] - mean;
    P += s.cov_weights[i] * d * d.transpose();
  }
  return P;
}

namespace detail {

template <int M, std::size_t K>
Vec<M> measurement_mean(const std::array<double, K>& w, const std::array<Vec<M>, K>& zs,
                        const std::array<bool, static_cast<std::size_t>(M)>& angular) {
  Vec<M> z_mean = Vec<M>::Zero();
  for (int c = 0; c < M; ++c) {
    if (angular[static_cast<std::size_t>(c)]) {
      double sx = 0.0, sy = 0.0;
      for (std::size_t i = 0; i < K; ++i) {
        sx += w[i] * std::cos(zs[i](c));
        sy += w[i] * std::sin(zs[i](c));
      }
      z_mean(c) = std::atan2(sy, sx);
    } else {
      double acc = 0.0;
      for (std::size_t i = 1; i < K; ++i) acc += w[i] * (zs[i](c) - zs[0](c));
      z_mean(c) = zs[0](c) + acc;
    }
  }
  return z_mean;
}

template <typename Model, std::size_t K>
std::array<Vec<Model::kDim>, K> propagate(const std::array<Vec<4>, K>& points, const Model& model) {
  std::array<Vec<Model::kDim>, K> zs;
  for (std::size_t i = 0; i < K; ++i) zs[i] = model.predict(points[i]);
  return zs;
}

}  // namespace detail

/// Predicted measurement mean of the unscented transform.
template <typename Model>
Vec<Model::kDim> ukf_predicted_measurement(const TargetBelief& belief, const Model& model,
                                           const UnscentedParams& params = {}) {
  const SigmaSet<4> s = sigma_points(belief, params);
  return detail::measurement_mean<Model::kDim>(s.mean_weights, detail::propagate(s.points, model),
                                               Model::kAngular);
}

/// Unscented update for any target measurement model. Angular measurement
/// components are averaged through atan2 of weighted sin/cos.
template <typename Model>
std::optional<TargetBelief> ukf_update(const TargetBelief& belief, const Vec<Model::kDim>& z,
                                       const Model& model, const Mat<Model::kDim, Model::kDim>& R,
                                       const UnscentedParams& params = {}) {
  constexpr int M = Model::kDim;
  constexpr int N = 4;
  const SigmaSet<N> s = sigma_points(belief, params);
  const auto zs = detail::propagate(s.points, model);
  const Vec<M> z_mean = detail::measurement_mean<M>(s.mean_weights, zs, Model::kAngular);
  const Vec<N> x_mean = sigma_mean(s);

  Mat<M, M> Pzz = R;
  Mat<N, M> Pxz = Mat<N, M>::Zero();
  for (std::size_t i = 0; i < zs.size(); ++i) {
    const Vec<M> dz = detail::wrap_residual<M>(zs[i] - z_mean, Model::kAngular);
    const Vec<N> dx = s.points[i] - x_mean;
    Pzz += s.cov_weights[i] * dz * dz.transpose();
    Pxz += s.cov_weights[i] * dx * dz.transpose();
  }
  if (!detail::invertible<M>(Pzz)) return std::nullopt;
  const Mat<N, M> Kg = Pxz * Pzz.inverse();
  const Vec<M> residual = detail::wrap_residual<M>(z - z_mean, Model::kAngular);
  TargetBelief out;
  out.mean = belief.mean + Kg * residual;
  out.cov = detail::symmetrize<N>(belief.cov - Kg * Pzz * Kg.transpose());
  return out;
}

std::optional<TargetBelief> ukf_update(const TargetBelief& belief, const RangeBearing& z,
                                       const Pose2D& robot, const Mat<2, 2>& R,
                                       const UnscentedParams& params = {});

// ---------------------------------------------------------------------------
// Track initialization and consistency

struct InitConfig {
  double sigma_position = 0.5;
  double sigma_velocity = 1.0;
};

TargetBelief init_from_first_measurement(const RangeBearing& z, const Pose2D& robot,
                                         const InitConfig& cfg = {});

/// Normalized estimation error squared, e' P^-1 e.
template <int N>
double nees(const GaussianBelief<N>& belief, const Vec<N>& truth) {
  const Vec<N> e = truth - belief.mean;
  return e.dot(belief.cov.ldlt().solve(e));
}

// ---------------------------------------------------------------------------
// Pose-space linearization

/// Euler unicycle step: x + v dt cos psi, y + v dt sin psi, psi + omega dt.
Vec<3> euler_motion(const Vec<3>& pose, double v, double omega, double dt);

/// Jacobian of euler_motion with respect to the pose.
Mat<3, 3> motion_jacobian(const Vec<3>& pose, double v, double dt);

PoseBelief pose_predict(const PoseBelief& belief, double v, double omega, double dt,
                        const Mat<3, 3>& Q);

/// Range and sensor-frame bearing from a pose to a landmark.
Vec<2> pose_range_bearing(const Vec<3>& pose, const Eigen::Vector2d& landmark);

/// d(range, bearing)/d(x, y, psi); the bearing row carries d b/d psi = -1.
Mat<2, 3> pose_range_bearing_jacobian(const Vec<3>& pose, const Eigen::Vector2d& landmark);

/// Linear observation O = H x + w of the full pose; heading residual wrapped.
std::optional<PoseBelief> pose_ekf_update(const PoseBelief& belief, const Vec<3>& observation,
                                          const Mat<3, 3>& H, const Mat<3, 3>& R);

/// Range-bearing landmark observation of the pose.
std::optional<PoseBelief> pose_ekf_update(const PoseBelief& belief, const RangeBearing& z,
                                          const Eigen::Vector2d& landmark, const Mat<2, 2>& R);

}  // namespace lanesim
