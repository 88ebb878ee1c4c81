#include <cmath>
#include <random>

#include "doctest.h"

#include "lanesim/estimation.hpp"
#include "oracles.hpp"

using namespace lanesim;

namespace {

Mat<4, 4> random_spd(std::mt19937_64& g, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat<4, 4> A;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) A(i, j) = n(g);
  }
  return scale * (A * A.transpose() + 0.05 * Mat<4, 4>::Identity());
}

TargetBelief random_belief(std::mt19937_64& g) {
  std::uniform_real_distribution<double> u(-5, 5);
  TargetBelief b;
  b.mean << u(g), u(g), 0.3 * u(g), 0.3 * u(g);
  b.cov = random_spd(g, 0.2);
  return b;
}

/// Plain linear Kalman update written out independently.
TargetBelief linear_kf(const TargetBelief& b, const Vec<2>& z, const Mat<2, 2>& R) {
  Mat<2, 4> H = Mat<2, 4>::Zero();
  H(0, 0) = H(1, 1) = 1.0;
  const Mat<2, 2> S = H * b.cov * H.transpose() + R;
  const Mat<4, 2> K = b.cov * H.transpose() * S.inverse();
  return {b.mean + K * (z - H * b.mean), (Mat<4, 4>::Identity() - K * H) * b.cov};
}

void check_psd(const Mat<4, 4>& P) {
  CHECK((P - P.transpose()).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(Eigen::SelfAdjointEigenSolver<Mat<4, 4>>(P).eigenvalues().minCoeff() >= -1e-9);
}

}  // namespace

TEST_CASE("cv prediction examples") {
  TargetBelief b;
  b.mean << 0, 0, 1, 0;
  b.cov.setIdentity();
  auto p = predict_cv(b, 1.0, Mat<4, 4>::Zero());
  CHECK(p.mean.isApprox(Vec<4>(1, 0, 1, 0)));

  const Mat<4, 4> F = cv_transition(1.0);
  Mat<4, 4> FFt = Mat<4, 4>::Zero();
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      for (int k = 0; k < 4; ++k) FFt(i, j) += F(i, k) * F(j, k);
    }
  }
  CHECK(p.cov(0, 0) == 2.0);
  CHECK((p.cov - FFt).cwiseAbs().maxCoeff() == 0.0);

  b.mean << 2, 3, 0, 0;
  for (double dt : {0.01, 0.5, 7.0}) CHECK(predict_cv(b, dt, Mat<4, 4>::Zero()).mean == b.mean);
}

TEST_CASE("white acceleration noise") {
  const Mat<4, 4> Q = white_acceleration_q(0.1, 0.5);
  CHECK(Q(0, 0) == doctest::Approx(0.25 * std::pow(0.1, 4) / 4));
  CHECK(Q(2, 2) == doctest::Approx(0.25 * 0.01));
  CHECK(Q(0, 2) == doctest::Approx(0.25 * std::pow(0.1, 3) / 2));
  CHECK(Q(0, 1) == 0.0);
  CHECK(white_acceleration_q(0.1, 0.0).isZero());
}

TEST_CASE("range bearing jacobian examples") {
  const Mat<2, 4> H = range_bearing_jacobian(Vec<4>(3, 4, 0, 0), Pose2D(0, 0, 0));
  CHECK(H(0, 0) == doctest::Approx(0.6));
  CHECK(H(0, 1) == doctest::Approx(0.8));
  CHECK(H(1, 0) == doctest::Approx(-0.16));
  CHECK(H(1, 1) == doctest::Approx(0.12));
  CHECK(H.col(2).isZero());
  CHECK(H.col(3).isZero());
  CHECK_THROWS(range_bearing_jacobian(Vec<4>(1, 1, 0, 0), Pose2D(1, 1, 0)));
}

TEST_CASE("range bearing jacobian matches finite differences") {
  std::mt19937_64 g(41);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int i = 0; i < 1000; ++i) {
    const Pose2D robot(u(g), u(g), u(g));
    Vec<4> x(u(g), u(g), u(g), u(g));
    if (std::hypot(x(0) - robot.x(), x(1) - robot.y()) < 0.5) continue;
    const RangeBearingModel model{robot};
    auto f = [&](const Vec<4>& s) {
      Vec<2> z = model.predict(s);
      z(1) = wrap_angle(z(1) - model.predict(x)(1));
      return z;
    };
    REQUIRE(oracle::max_rel_error(model.jacobian(x), oracle::numeric_jacobian<2, 4>(f, x)) < 1e-5);
  }
}

TEST_CASE("motion jacobian") {
  CHECK(motion_jacobian(Vec<3>(1, 2, 0.4), 0.0, 0.1) == Mat<3, 3>::Identity());
  const Mat<3, 3> A = motion_jacobian(Vec<3>(0, 0, 0), 1.0, 1.0);
  CHECK(A(0, 2) == 0.0);
  CHECK(A(1, 2) == 1.0);

  std::mt19937_64 g(42);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int i = 0; i < 1000; ++i) {
    const Vec<3> pose(u(g), u(g), u(g));
    const double v = u(g), om = u(g), dt = 0.01 + std::abs(u(g));
    auto f = [&](const Vec<3>& p) { return euler_motion(p, v, om, dt); };
    REQUIRE(oracle::max_rel_error(motion_jacobian(pose, v, dt), oracle::numeric_jacobian<3, 3>(f, pose)) <
            1e-5);
  }
}

TEST_CASE("pose range bearing jacobian") {
  const Mat<2, 3> H = pose_range_bearing_jacobian(Vec<3>(0, 0, 0.3), {3, 4});
  CHECK(H(0, 0) == doctest::Approx(-0.6));
  CHECK(H(0, 1) == doctest::Approx(-0.8));
  CHECK(H(1, 2) == -1.0);
  std::mt19937_64 g(43);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int i = 0; i < 200; ++i) {
    const Vec<3> pose(u(g), u(g), u(g));
    const Eigen::Vector2d lm(u(g), u(g));
    if ((lm - pose.head<2>()).norm() < 0.5) continue;
    auto f = [&](const Vec<3>& p) {
      Vec<2> z = pose_range_bearing(p, lm);
      z(1) = wrap_angle(z(1) - pose_range_bearing(pose, lm)(1));
      return z;
    };
    REQUIRE(oracle::max_rel_error(pose_range_bearing_jacobian(pose, lm),
                                  oracle::numeric_jacobian<2, 3>(f, pose)) < 1e-5);
  }
}

TEST_CASE("ekf with an uninformative measurement keeps the prior") {
  std::mt19937_64 g(44);
  const TargetBelief b = random_belief(g);
  const Pose2D robot(-8, 0, 0);
  const auto post = ekf_update(b, RangeBearing{3.0, 0.2}, robot, range_bearing_r(1e6, 1e6));
  REQUIRE(post);
  CHECK((post->mean - b.mean).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((post->cov - b.cov).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("ekf with a zero prior covariance keeps the mean") {
  TargetBelief b;
  b.mean << 4, 1, 0, 0;
  const auto post = ekf_update(b, RangeBearing{3.0, 0.5}, Pose2D(0, 0, 0), range_bearing_r(0.1, 0.05));
  REQUIRE(post);
  CHECK(post->mean == b.mean);
  CHECK(post->cov.isZero());
}

TEST_CASE("ekf skips an ill-conditioned innovation") {
  TargetBelief b;
  b.mean << 4, 1, 0, 0;
  CHECK_FALSE(ekf_update(b, RangeBearing{3.0, 0.5}, Pose2D(0, 0, 0), Mat<2, 2>::Zero()));
}

TEST_CASE("ekf range update on the heading axis matches a scalar filter") {
  // Target straight ahead; bearing carries almost no information, so the
  // x component follows a 1-D Kalman filter on range.
  TargetBelief b;
  b.mean << 6.0, 0.0, 0.0, 0.0;
  b.cov.diagonal() << 0.5, 0.5, 1.0, 1.0;
  double m = 6.0, p = 0.5;
  const double r = 0.04;
  for (double z : {5.2, 5.05, 4.98, 5.01, 4.99}) {
    const auto post = ekf_update(b, RangeBearing{z, 0.0}, Pose2D(0, 0, 0), range_bearing_r(0.2, 1e3));
    REQUIRE(post);
    const double k = p / (p + r);
    m += k * (z - m);
    p *= (1 - k);
    b = *post;
    CHECK(b.mean(0) == doctest::Approx(m).epsilon(1e-6));
    CHECK(b.cov(0, 0) == doctest::Approx(p).epsilon(1e-6));
  }
  CHECK(std::abs(b.mean(0) - 5.0) < 0.1);
}

TEST_CASE("sigma points reproduce mean and covariance") {
  std::mt19937_64 g(45);
  for (int i = 0; i < 100; ++i) {
    const TargetBelief b = random_belief(g);
    const SigmaSet<4> s = sigma_points(b, {});
    REQUIRE(s.points.size() == 9);
    double wsum = 0.0;
    for (double w : s.mean_weights) wsum += w;
    CHECK(wsum == doctest::Approx(1.0));
    const Vec<4> m = sigma_mean(s);
    CHECK((m - b.mean).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((sigma_covariance(s, m) - b.cov).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("sigma points accept a singular covariance") {
  TargetBelief b;
  b.cov.diagonal() << 1.0, 1.0, 0.0, 0.0;
  CHECK_NOTHROW(sigma_points(b, {}));
}

TEST_CASE("ukf equals kf on a linear model") {
  std::mt19937_64 g(46);
  std::normal_distribution<double> n(0.0, 0.3);
  for (int i = 0; i < 100; ++i) {
    const TargetBelief b = random_belief(g);
    const Vec<2> z = b.mean.head<2>() + Vec<2>(n(g), n(g));
    const Mat<2, 2> R = Vec<2>(0.04, 0.09).asDiagonal();
    const auto ukf = ukf_update(b, z, PositionModel{}, R);
    const auto ekf = ekf_update(b, z, PositionModel{}, R);
    const TargetBelief kf = linear_kf(b, z, R);
    REQUIRE(ukf);
    REQUIRE(ekf);
    CHECK((ukf->mean - kf.mean).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((ukf->cov - kf.cov).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((ukf->mean - ekf->mean).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((ukf->cov - ekf->cov).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("zero residual leaves the mean unchanged") {
  std::mt19937_64 g(47);
  for (int i = 0; i < 50; ++i) {
    TargetBelief b = random_belief(g);
    b.mean(0) += 8.0;
    const Pose2D robot(0, 0, 0.1);
    const RangeBearingModel model{robot};
    const Mat<2, 2> R = range_bearing_r(0.05, 0.02);
    const auto e = ekf_update(b, model.predict(b.mean), model, R);
    REQUIRE(e);
    CHECK((e->mean - b.mean).cwiseAbs().maxCoeff() < 1e-12);
    const auto u = ukf_update(b, ukf_predicted_measurement(b, model), model, R);
    REQUIRE(u);
    CHECK((u->mean - b.mean).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("bearing residuals are wrapped") {
  TargetBelief b;
  b.mean << -4, 0.1, 0, 0;
  b.cov = Mat<4, 4>::Identity() * 0.3;
  const Pose2D robot(0, 0, 0);
  const Mat<2, 2> R = range_bearing_r(0.05, 0.02);
  const double bearing = 3.1;
  const RangeBearing z1{4.1, bearing}, z2{4.1, bearing + kTwoPi};
  const auto e1 = ekf_update(b, z1, robot, R), e2 = ekf_update(b, z2, robot, R);
  REQUIRE(e1);
  REQUIRE(e2);
  CHECK((e1->mean - e2->mean).cwiseAbs().maxCoeff() < 1e-12);
  const auto u1 = ukf_update(b, z1, robot, R), u2 = ukf_update(b, z2, robot, R);
  REQUIRE(u1);
  REQUIRE(u2);
  CHECK((u1->mean - u2->mean).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((u1->mean - e1->mean).head<2>().norm() < 0.05);
}

TEST_CASE("covariance stays symmetric psd through updates") {
  std::mt19937_64 g(48);
  std::normal_distribution<double> n(0.0, 1.0);
  TargetBelief ekf, ukf;
  ekf.mean << 5, 1, 0, 0;
  ekf.cov = Mat<4, 4>::Identity();
  ukf = ekf;
  const Mat<4, 4> Q = white_acceleration_q(0.05, 0.5);
  const Mat<2, 2> R = range_bearing_r(0.05, 0.02);
  for (int t = 0; t < 300; ++t) {
    const Pose2D robot(0.02 * t, 0.0, 0.01 * t);
    const Vec<4> truth(5, 1, 0, 0);
    const RangeBearingModel model{robot};
    const Vec<2> z = model.predict(truth) + Vec<2>(0.05 * n(g), 0.02 * n(g));
    ekf = predict_cv(ekf, 0.05, Q);
    ukf = predict_cv(ukf, 0.05, Q);
    if (auto p = ekf_update(ekf, z, model, R)) ekf = *p;
    if (auto p = ukf_update(ukf, z, model, R)) ukf = *p;
    check_psd(ekf.cov);
    check_psd(ukf.cov);
  }
  CHECK((ekf.mean.head<2>() - Vec<2>(5, 1)).norm() < 0.1);
  CHECK((ukf.mean.head<2>() - Vec<2>(5, 1)).norm() < 0.1);
}

TEST_CASE("exact noiseless measurement collapses toward the truth") {
  TargetBelief b;
  b.mean << 4.5, 0.6, 0, 0;
  b.cov = Mat<4, 4>::Identity() * 0.25;
  const Vec<2> truth(4.0, 0.0);
  const auto post = ukf_update(b, truth, PositionModel{}, Mat<2, 2>::Identity() * 1e-10);
  REQUIRE(post);
  CHECK((post->mean.head<2>() - truth).norm() < 1e-6);
}

TEST_CASE("initialization from the first reading") {
  auto b = init_from_first_measurement({5.0, 0.0}, Pose2D(0, 0, 0));
  CHECK(b.mean(0) == doctest::Approx(5.0));
  CHECK(std::abs(b.mean(1)) < 1e-12);
  b = init_from_first_measurement({2.0, 0.0}, Pose2D(0, 0, kPi / 2));
  CHECK(std::abs(b.mean(0)) < 1e-12);
  CHECK(b.mean(1) == doctest::Approx(2.0));
  CHECK(b.cov(0, 0) == doctest::Approx(0.25));
  CHECK(b.cov(2, 2) == doctest::Approx(1.0));
}

TEST_CASE("nees") {
  TargetBelief b;
  b.cov = Mat<4, 4>::Identity() * 4.0;
  CHECK(nees(b, Vec<4>(2, 0, 0, 0)) == doctest::Approx(1.0));
}

TEST_CASE("pose update with a full-state observation") {
  PoseBelief b;
  b.mean << 1, 2, 0.3;
  b.cov = Mat<3, 3>::Identity() * 0.5;
  const Vec<3> obs(1.2, 1.9, 0.35);
  auto post = pose_ekf_update(b, obs, Mat<3, 3>::Identity(), Mat<3, 3>::Identity() * 1e-10);
  REQUIRE(post);
  CHECK((post->mean - obs).cwiseAbs().maxCoeff() < 1e-6);
  post = pose_ekf_update(b, obs, Mat<3, 3>::Identity(), Mat<3, 3>::Identity() * 1e8);
  REQUIRE(post);
  CHECK((post->mean - b.mean).cwiseAbs().maxCoeff() < 1e-6);

  b.mean(2) = 3.1;
  post = pose_ekf_update(b, Vec<3>(1, 2, -3.1), Mat<3, 3>::Identity(), Mat<3, 3>::Identity() * 0.5);
  REQUIRE(post);
  CHECK(std::abs(std::abs(post->mean(2)) - kPi) < 1e-9);
}

TEST_CASE("pose update from a landmark reading") {
  PoseBelief b;
  b.mean << 0.1, -0.1, 0.05;
  b.cov = Mat<3, 3>::Identity() * 0.1;
  const Eigen::Vector2d lm(3, 4);
  const Vec<2> z = pose_range_bearing(Vec<3>(0, 0, 0), lm);
  const auto post = pose_ekf_update(b, RangeBearing{z(0), z(1)}, lm, range_bearing_r(0.01, 0.01));
  REQUIRE(post);
  const double before = std::abs(pose_range_bearing(b.mean, lm)(1) - z(1));
  const double after = std::abs(pose_range_bearing(post->mean, lm)(1) - z(1));
  CHECK(after < before);
  const auto pred = pose_predict(b, 1.0, 0.5, 0.1, Mat<3, 3>::Zero());
  CHECK(pred.mean(0) == doctest::Approx(0.1 + 0.1 * std::cos(0.05)));
  CHECK(pred.mean(2) == doctest::Approx(0.1));
}

TEST_CASE("estimation error shrinks over the first 100 ticks") {
  // Static sign, robot drives straight without noise, noisy range-bearing.
  const int ticks = 100, runs = 400;
  const Vec<4> truth(12.0, 1.5, 0.0, 0.0);
  const Mat<4, 4> Q = Mat<4, 4>::Zero();
  const Mat<2, 2> R = range_bearing_r(0.1, 0.02);
  std::vector<double> sq(ticks, 0.0);
  std::mt19937_64 g(49);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int run = 0; run < runs; ++run) {
    std::optional<TargetBelief> b;
    for (int t = 0; t < ticks; ++t) {
      const Pose2D robot(0.015 * t, 0.0, 0.0);
      const RangeBearingModel model{robot};
      const Vec<2> zt = model.predict(truth);
      const RangeBearing z{zt(0) + 0.1 * n(g), zt(1) + 0.02 * n(g)};
      if (!b) {
        b = init_from_first_measurement(z, robot);
      } else {
        b = predict_cv(*b, 0.05, Q);
        if (auto p = ekf_update(*b, z, robot, R)) b = *p;
      }
      sq[t] += (b->mean.head<2>() - truth.head<2>()).squaredNorm();
    }
  }
  double prev = INFINITY;
  for (int w = 0; w < ticks / 10; ++w) {
    double s = 0.0;
    for (int t = w * 10; t < w * 10 + 10; ++t) s += sq[t];
    const double rmse = std::sqrt(s / (10.0 * runs));
    CHECK(rmse < prev);
    prev = rmse;
  }
}
