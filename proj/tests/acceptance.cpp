#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "lanesim/episode.hpp"
#include "lanesim/estimation.hpp"
#include "lanesim/scenario.hpp"
#include "lanesim/vision.hpp"
#include "lanesim/world.hpp"
#include "oracles.hpp"

using namespace lanesim;
namespace fs = std::filesystem;

namespace {

const fs::path kScenarios = LANESIM_SCENARIO_DIR;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::printf("[%s] %2d %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void criterion(int id, const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
  try {
    const auto [pass, detail] = body();
    report(id, name, pass, detail);
  } catch (const std::exception& e) {
    report(id, name, false, std::string("exception: ") + e.what());
  }
}

Mat<4, 4> random_spd(std::mt19937_64& g) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat<4, 4> A;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) A(i, j) = n(g);
  }
  return A * A.transpose() + 1e-3 * Mat<4, 4>::Identity();
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::pair<double, double> nees_bounds(int runs, int dim) {
  const boost::math::chi_squared chi(runs * dim);
  return {boost::math::quantile(chi, 0.025) / runs, boost::math::quantile(chi, 0.975) / runs};
}

}  // namespace

int main() {
  criterion(1, "kinematics circle closure", [] {
    const auto t0 = Clock::now();
    const RobotState end = integrate({}, {1.0, 1.0}, kTwoPi, 0.01);
    const double secs = seconds_since(t0);
    const double dp = std::hypot(end.pose.x(), end.pose.y());
    const double da = std::abs(wrap_angle(end.pose.psi()));
    return std::make_pair(dp <= 1e-6 && da <= 1e-6 && secs < 1.0,
                          fmt("position error %.3e m, heading error %.3e rad, %.4f s", dp, da, secs));
  });

  criterion(2, "wheel/unicycle round trip", [] {
    std::mt19937_64 g(2);
    std::uniform_real_distribution<double> u(-100.0, 100.0), L(1e-3, 10.0);
    int mismatches = 0;
    for (int i = 0; i < 10000; ++i) {
      const double v = u(g), om = u(g), base = L(g);
      const Twist t = unicycle_from_wheels(wheels_from_unicycle(v, om, base));
      if (t.v != v || t.omega != om) ++mismatches;
    }
    return std::make_pair(mismatches == 0, fmt("%d of 10000 not bit-exact", mismatches));
  });

  criterion(3, "jacobian oracles", [] {
    std::mt19937_64 g(3);
    std::uniform_real_distribution<double> u(-10, 10);
    double worst_rb = 0.0, worst_m = 0.0;
    for (int i = 0; i < 1000;) {
      const Pose2D robot(u(g), u(g), u(g));
      const Vec<4> x(u(g), u(g), u(g), u(g));
      if (std::hypot(x(0) - robot.x(), x(1) - robot.y()) < 0.5) continue;
      const RangeBearingModel model{robot};
      const double b0 = model.predict(x)(1);
      auto f = [&](const Vec<4>& s) {
        Vec<2> z = model.predict(s);
        z(1) = wrap_angle(z(1) - b0);
        return z;
      };
      worst_rb = std::max(worst_rb, oracle::max_rel_error(range_bearing_jacobian(x, robot),
                                                          oracle::numeric_jacobian<2, 4>(f, x)));
      ++i;
    }
    for (int i = 0; i < 1000; ++i) {
      const Vec<3> pose(u(g), u(g), u(g));
      const double v = u(g), om = u(g), dt = 0.01 + std::abs(u(g)) * 0.1;
      auto f = [&](const Vec<3>& p) { return euler_motion(p, v, om, dt); };
      worst_m = std::max(worst_m, oracle::max_rel_error(motion_jacobian(pose, v, dt),
                                                        oracle::numeric_jacobian<3, 3>(f, pose)));
    }
    return std::make_pair(worst_rb <= 1e-5 && worst_m <= 1e-5,
                          fmt("max rel error range-bearing %.2e, motion %.2e", worst_rb, worst_m));
  });

  criterion(4, "UKF equals KF on a linear model", [] {
    std::mt19937_64 g(4);
    std::normal_distribution<double> n(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      TargetBelief b;
      b.mean << 5 * n(g), 5 * n(g), n(g), n(g);
      b.cov = random_spd(g);
      const Vec<2> z = b.mean.head<2>() + Vec<2>(n(g), n(g));
      const Mat<2, 2> R = Vec<2>(0.01 + std::abs(n(g)), 0.01 + std::abs(n(g))).asDiagonal();
      Mat<2, 4> H = Mat<2, 4>::Zero();
      H(0, 0) = H(1, 1) = 1.0;
      const Mat<2, 2> S = H * b.cov * H.transpose() + R;
      const Mat<4, 2> K = b.cov * H.transpose() * S.inverse();
      const Vec<4> m = b.mean + K * (z - H * b.mean);
      const Mat<4, 4> P = (Mat<4, 4>::Identity() - K * H) * b.cov;
      const auto u = ukf_update(b, z, PositionModel{}, R);
      if (!u) return std::make_pair(false, std::string("update skipped"));
      worst = std::max({worst, (u->mean - m).cwiseAbs().maxCoeff(), (u->cov - P).cwiseAbs().maxCoeff()});
    }
    return std::make_pair(worst <= 1e-6, fmt("max deviation %.2e over 100 updates", worst));
  });

  criterion(5, "sigma-point reconstruction", [] {
    std::mt19937_64 g(5);
    std::normal_distribution<double> n(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      TargetBelief b;
      b.mean << n(g), n(g), n(g), n(g);
      b.cov = random_spd(g);
      const SigmaSet<4> s = sigma_points(b, {});
      const Vec<4> m = sigma_mean(s);
      worst = std::max({worst, (m - b.mean).cwiseAbs().maxCoeff(),
                        (sigma_covariance(s, m) - b.cov).cwiseAbs().maxCoeff()});
    }
    return std::make_pair(worst <= 1e-9, fmt("max deviation %.2e over 100 covariances", worst));
  });

  criterion(6, "filter consistency (NEES)", [] {
    const auto t0 = Clock::now();
    const ScenarioConfig cfg = load_scenario(kScenarios / "static_sign.json");
    std::vector<std::uint64_t> seeds(200);
    for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = 1000 + i;
    const auto results = run_batch(cfg, seeds);
    double sum = 0.0;
    int n = 0;
    for (const auto& r : results) {
      const auto& tracks = r.trace.back().tracks;
      if (tracks.size() != 1) continue;
      sum += tracks.front().nees;
      ++n;
    }
    const double secs = seconds_since(t0);
    const auto [lo, hi] = nees_bounds(200, 4);
    const auto [lo100, hi100] = nees_bounds(100, 4);
    const double avg = n ? sum / n : NAN;
    return std::make_pair(n == 200 && avg >= lo && avg <= hi && secs < 120.0,
                          fmt("average NEES %.4f over %d runs, 95%% interval [%.4f, %.4f] "
                              "(100-run interval [%.4f, %.4f]), %.1f s",
                              avg, n, lo, hi, lo100, hi100, secs));
  });

  criterion(7, "hough oracle equivalence", [] {
    std::mt19937_64 g(7);
    const double tres = HoughParams::default_theta_res();
    int mismatches = 0;
    for (int trial = 0; trial < 500; ++trial) {
      const int w = std::uniform_int_distribution<int>(1, 16)(g);
      const int h = std::uniform_int_distribution<int>(1, 16)(g);
      const double p = std::uniform_real_distribution<double>(0.02, 0.6)(g);
      const int threshold = std::uniform_int_distribution<int>(1, 8)(g);
      BinaryMask m(w, h);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) m.set(x, y, std::bernoulli_distribution(p)(g));
      }
      if (oracle::peaks_of(hough_lines(m, {1.0, tres, threshold})) !=
          oracle::brute_force_hough(m, 1.0, tres, threshold)) {
        ++mismatches;
      }
    }
    BinaryMask vert(11, 11), horiz(11, 11);
    for (int i = 0; i < 11; ++i) {
      vert.set(5, i, true);
      horiz.set(i, 7, true);
    }
    const auto v = hough_lines(vert, {1.0, tres, 5});
    const auto hz = hough_lines(horiz, {1.0, tres, 5});
    const bool v_ok = !v.empty() && std::abs(v[0].rho - 5.0) <= 1.0 && v[0].theta <= tres;
    const bool h_ok = !hz.empty() && std::abs(hz[0].rho - 7.0) <= 1.0 && std::abs(hz[0].theta - kPi / 2) <= tres;
    return std::make_pair(mismatches == 0 && v_ok && h_ok,
                          fmt("%d of 500 masks differ; vertical %s, horizontal %s", mismatches,
                              v_ok ? "ok" : "off", h_ok ? "ok" : "off"));
  });

  // Criteria 8 and 9 share one batch of noisy S-curve episodes.
  std::vector<EpisodeResult> audit;
  std::size_t audit_ticks = 0;
  try {
    const ScenarioConfig cfg = load_scenario(kScenarios / "s_curve_noisy.json");
    for (std::uint64_t next = 100; audit_ticks < 10000; next += 4) {
      for (auto& r : run_batch(cfg, {next, next + 1, next + 2, next + 3})) {
        audit_ticks += r.trace.size();
        audit.push_back(std::move(r));
      }
    }
  } catch (const std::exception& e) {
    std::printf("audit batch failed: %s\n", e.what());
  }

  criterion(8, "confidence gate audit", [&] {
    std::size_t emitted = 0, bad = 0;
    for (const auto& r : audit) {
      for (const auto& d : r.detections) {
        ++emitted;
        if (!(d.confidence > 0.8)) ++bad;
      }
    }
    return std::make_pair(audit_ticks >= 10000 && emitted > 0 && bad == 0,
                          fmt("%zu ticks, %zu emitted detections, %zu at or below 0.8", audit_ticks,
                              emitted, bad));
  });

  criterion(9, "depth envelope", [&] {
    std::size_t readings = 0, outside = 0;
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& r : audit) {
      readings += r.summary.range_readings;
      if (r.summary.range_readings) {
        lo = std::min(lo, r.summary.min_range_reading);
        hi = std::max(hi, r.summary.max_range_reading);
      }
      for (const auto& d : r.detections) {
        if (d.measurement && (d.measurement->range < 0.2 || d.measurement->range > 20.0)) ++outside;
      }
    }
    if (readings && (lo < 0.2 || hi > 20.0)) ++outside;
    return std::make_pair(audit_ticks >= 10000 && readings > 0 && outside == 0,
                          fmt("%zu readings over %zu ticks, range [%.3f, %.3f] m", readings,
                              audit_ticks, lo, hi));
  });

  criterion(10, "closed-loop lane keeping", [] {
    const auto clean = run_episode(load_scenario(kScenarios / "s_curve.json")).summary;
    const auto noisy = run_episode(load_scenario(kScenarios / "s_curve_noisy.json")).summary;
    const bool pass = clean.cross_track_rmse <= 0.05 && clean.max_lane_invalid_streak <= 5 &&
                      clean.reached_end && noisy.cross_track_rmse <= 0.15 && noisy.reached_end;
    return std::make_pair(pass, fmt("zero-noise RMSE %.4f m, longest dropout %zu ticks; noisy RMSE %.4f m",
                                    clean.cross_track_rmse, clean.max_lane_invalid_streak,
                                    noisy.cross_track_rmse));
  });

  criterion(11, "stop/move/turn behavior", [] {
    const auto res = run_episode(load_scenario(kScenarios / "signs.json"));
    std::vector<BehaviorMode> seq{BehaviorMode::LaneFollowing};
    for (const auto& t : res.summary.transitions) seq.push_back(t.to);
    const std::vector<BehaviorMode> expected{BehaviorMode::LaneFollowing, BehaviorMode::Stopping,
                                             BehaviorMode::Stopped, BehaviorMode::LaneFollowing,
                                             BehaviorMode::Turning, BehaviorMode::LaneFollowing};
    double max_v = 0.0;
    std::size_t stopped_ticks = 0;
    for (const auto& rec : res.trace) {
      if (rec.mode != BehaviorMode::Stopped) continue;
      ++stopped_ticks;
      max_v = std::max(max_v, std::abs(rec.command.v));
    }
    std::string text;
    for (BehaviorMode m : seq) text += (text.empty() ? "" : "->") + std::string(to_string(m));
    return std::make_pair(seq == expected && stopped_ticks > 0 && max_v == 0.0,
                          fmt("%s; %zu stopped ticks, max |v| %.3g", text.c_str(), stopped_ticks, max_v));
  });

  criterion(12, "determinism", [] {
    const fs::path dir = fs::temp_directory_path() / "lanesim_acceptance";
    fs::create_directories(dir);
    std::size_t checked = 0, differing = 0;
    for (const auto& entry : fs::directory_iterator(kScenarios)) {
      if (entry.path().extension() != ".json") continue;
      const ScenarioConfig cfg = load_scenario(entry.path());
      const fs::path a = dir / (entry.path().stem().string() + "_a.csv");
      const fs::path b = dir / (entry.path().stem().string() + "_b.csv");
      write_trace_csv(run_episode(cfg).trace, a);
      write_trace_csv(run_episode(cfg).trace, b);
      if (read_file(a) != read_file(b)) ++differing;
      ++checked;
    }
    fs::remove_all(dir);
    return std::make_pair(checked > 0 && differing == 0,
                          fmt("%zu scenarios, %zu with differing traces", checked, differing));
  });

  std::printf("\n");
  {
    const auto t0 = Clock::now();
    ScenarioConfig cfg = load_scenario(kScenarios / "straight.json");
    cfg.run.duration = 60.0;
    cfg.run.dt = 0.05;
    const auto res = run_episode(cfg);
    const double secs = seconds_since(t0);
    const bool pass = res.trace.size() == 1200 && secs < 60.0;
    if (!pass) ++failures;
    std::printf("[%s] performance: %zu ticks (60 s simulated) in %.2f s\n", pass ? "PASS" : "FAIL",
                res.trace.size(), secs);
  }

  std::printf("\n%s (%d failing)\n", failures == 0 ? "ALL CRITERIA PASS" : "SOME CRITERIA FAIL", failures);
  return failures == 0 ? 0 : 1;
}
