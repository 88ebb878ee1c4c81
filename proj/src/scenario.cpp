#include "lanesim/scenario.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace lanesim {

using nlohmann::json;

std::string_view to_string(FilterKind kind) { return kind == FilterKind::Ekf ? "ekf" : "ukf"; }

PIDConfig default_steering_pid() {
  PIDConfig p;
  p.kp = 2.5;
  p.ki = 0.2;
  p.kd = 0.15;
  p.output_min = -2.0;
  p.output_max = 2.0;
  p.integral_limit = 1.0;
  return p;
}

namespace {

std::string join(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

std::string index_path(const std::string& base, std::size_t i) {
  return base + "[" + std::to_string(i) + "]";
}

/// Strict object reader: every key must be consumed before finish().
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ScenarioError(path_, "expected an object");
  }

  const std::string& path() const { return path_; }
  std::string key_path(const std::string& key) const { return join(path_, key); }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json* child(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const json& require(const std::string& key) {
    const json* c = child(key);
    if (!c) throw ScenarioError(key_path(key), "missing required key");
    return *c;
  }

  double number(const std::string& key, double fallback) {
    const json* c = child(key);
    if (!c) return fallback;
    return as_number(*c, key_path(key));
  }

  std::optional<double> optional_number(const std::string& key) {
    const json* c = child(key);
    if (!c || c->is_null()) return std::nullopt;
    return as_number(*c, key_path(key));
  }

  int integer(const std::string& key, int fallback) {
    const json* c = child(key);
    if (!c) return fallback;
    if (!c->is_number_integer()) throw ScenarioError(key_path(key), "expected an integer");
    return c->get<int>();
  }

  bool boolean(const std::string& key, bool fallback) {
    const json* c = child(key);
    if (!c) return fallback;
    if (!c->is_boolean()) throw ScenarioError(key_path(key), "expected a boolean");
    return c->get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    const json* c = child(key);
    if (!c) return fallback;
    if (!c->is_string()) throw ScenarioError(key_path(key), "expected a string");
    return c->get<std::string>();
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ScenarioError(key_path(it.key()), "unknown key");
    }
  }

  static double as_number(const json& j, const std::string& path) {
    if (!j.is_number()) throw ScenarioError(path, "expected a number");
    return j.get<double>();
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Eigen::Vector2d parse_point(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2) throw ScenarioError(path, "expected [x, y]");
  const Eigen::Vector2d p(Reader::as_number(j[0], index_path(path, 0)),
                          Reader::as_number(j[1], index_path(path, 1)));
  if (!p.allFinite()) throw ScenarioError(path, "non-finite coordinate");
  return p;
}

std::vector<Eigen::Vector2d> parse_points(const json& j, const std::string& path) {
  if (!j.is_array()) throw ScenarioError(path, "expected an array of [x, y] points");
  std::vector<Eigen::Vector2d> pts;
  for (std::size_t i = 0; i < j.size(); ++i) pts.push_back(parse_point(j[i], index_path(path, i)));
  return pts;
}

void check(bool ok, const std::string& path, const char* message) {
  if (!ok) throw ScenarioError(path, message);
}

double positive(Reader& r, const std::string& key, double fallback) {
  const double v = r.number(key, fallback);
  check(v > 0.0, r.key_path(key), "must be > 0");
  return v;
}

double non_negative(Reader& r, const std::string& key, double fallback) {
  const double v = r.number(key, fallback);
  check(v >= 0.0, r.key_path(key), "must be >= 0");
  return v;
}

// Signs face oncoming traffic on the nearest centerline segment by default.
double default_facing(const std::vector<Eigen::Vector2d>& wp, bool closed, const Eigen::Vector2d& p) {
  const Track probe(wp, 1.0, {}, closed);
  const TrackError e = cross_track_error(probe, Pose2D(p.x(), p.y(), 0.0));
  const Segment s = probe.segment(e.segment);
  const Eigen::Vector2d d = s.b - s.a;
  return wrap_angle(std::atan2(d.y(), d.x()) + kPi);
}

Track parse_track(const json& j) {
  Reader r(j, "track");
  const std::string wp_path = r.key_path("waypoints");
  auto waypoints = parse_points(r.require("waypoints"), wp_path);
  check(waypoints.size() >= 2, wp_path, "needs at least 2 waypoints");
  for (std::size_t i = 0; i + 1 < waypoints.size(); ++i) {
    check(waypoints[i] != waypoints[i + 1], index_path(wp_path, i + 1), "duplicates the previous waypoint");
  }
  const double half_width = positive(r, "lane_half_width", 0.2);
  const bool closed = r.boolean("closed", false);

  std::vector<Sign> signs;
  if (const json* js = r.child("signs")) {
    check(js->is_array(), r.key_path("signs"), "expected an array");
    for (std::size_t i = 0; i < js->size(); ++i) {
      Reader sr((*js)[i], index_path(r.key_path("signs"), i));
      Sign s;
      const std::string kind = sr.string("kind", "");
      try {
        s.kind = sign_kind_from_string(kind);
      } catch (const std::invalid_argument& e) {
        throw ScenarioError(sr.key_path("kind"), e.what());
      }
      s.position = parse_point(sr.require("position"), sr.key_path("position"));
      const auto facing = sr.optional_number("facing");
      s.facing = facing ? wrap_angle(*facing) : default_facing(waypoints, closed, s.position);
      sr.finish();
      signs.push_back(s);
    }
  }
  r.finish();
  try {
    return Track(std::move(waypoints), half_width, std::move(signs), closed);
  } catch (const std::invalid_argument& e) {
    throw ScenarioError("track", e.what());
  }
}

PIDConfig parse_pid(Reader& r, PIDConfig p) {
  p.kp = r.number("kp", p.kp);
  p.ki = r.number("ki", p.ki);
  p.kd = r.number("kd", p.kd);
  p.output_min = r.number("output_min", p.output_min);
  p.output_max = r.number("output_max", p.output_max);
  p.integral_limit = positive(r, "integral_limit", p.integral_limit);
  check(p.output_min < p.output_max, r.key_path("output_min"), "must be < output_max");
  return p;
}

json pid_json(const PIDConfig& p) {
  return {{"kp", p.kp},
          {"ki", p.ki},
          {"kd", p.kd},
          {"output_min", p.output_min},
          {"output_max", p.output_max},
          {"integral_limit", p.integral_limit}};
}

}  // namespace

ScenarioConfig parse_scenario(const json& doc) {
  Reader root(doc, "");
  ScenarioConfig cfg(parse_track(root.require("track")));
  cfg.name = root.string("name", "");

  static const json empty = json::object();
  auto section = [&](const char* key) {
    const json* j = root.child(key);
    return Reader(j ? *j : empty, key);
  };

  {
    RunConfig& run = cfg.run;
    Reader r = section("run");
    run.dt = positive(r, "dt", run.dt);
    run.duration = positive(r, "duration", run.duration);
    run.end_margin = non_negative(r, "end_margin", run.end_margin);
    if (const json* s = r.child("seed")) {
      check(s->is_number_unsigned() || (s->is_number_integer() && s->get<long long>() >= 0),
            r.key_path("seed"), "must be a non-negative integer");
      run.seed = s->get<std::uint64_t>();
    }
    r.finish();
  }

  {
    Reader r = section("robot");
    cfg.robot.wheel_base = positive(r, "wheel_base", cfg.robot.wheel_base);
    cfg.robot.limits.v_max = positive(r, "v_max", cfg.robot.limits.v_max);
    cfg.robot.limits.omega_max = positive(r, "omega_max", cfg.robot.limits.omega_max);
    const Segment first = cfg.track.segment(0);
    const Eigen::Vector2d d = first.b - first.a;
    Pose2D start(first.a.x(), first.a.y(), std::atan2(d.y(), d.x()));
    if (const json* js = r.child("start")) {
      Reader sr(*js, r.key_path("start"));
      start = Pose2D(sr.number("x", start.x()), sr.number("y", start.y()), sr.number("psi", start.psi()));
      sr.finish();
    }
    cfg.robot.start = start;
    r.finish();
  }
  {
    Reader r = section("camera");
    CameraModel& c = cfg.camera;
    c.width = r.integer("width", c.width);
    c.height = r.integer("height", c.height);
    check(c.width >= 1, r.key_path("width"), "must be >= 1");
    check(c.height >= 1, r.key_path("height"), "must be >= 1");
    c.horizontal_fov = r.number("horizontal_fov", c.horizontal_fov);
    check(c.horizontal_fov > 0.0 && c.horizontal_fov < kPi, r.key_path("horizontal_fov"),
          "must lie in (0, pi)");
    c.mount_height = positive(r, "mount_height", c.mount_height);
    c.pitch = r.number("pitch", c.pitch);
    check(std::abs(c.pitch) < kPi / 2.0, r.key_path("pitch"), "must lie in (-pi/2, pi/2)");
    r.finish();
  }
  {
    Reader r = section("sensors");
    RangeSensorModel& rs = cfg.sensors.range;
    DetectorModel& det = cfg.sensors.detector;
    rs.sigma_range = non_negative(r, "sigma_range", rs.sigma_range);
    rs.sigma_bearing = non_negative(r, "sigma_bearing", rs.sigma_bearing);
    rs.horizontal_fov = cfg.camera.horizontal_fov;
    det.miss_rate = r.number("miss_rate", det.miss_rate);
    check(det.miss_rate >= 0.0 && det.miss_rate < 1.0, r.key_path("miss_rate"), "must lie in [0, 1)");
    det.confidence_alpha = positive(r, "confidence_alpha", det.confidence_alpha);
    det.confidence_beta = positive(r, "confidence_beta", det.confidence_beta);
    det.sign_size = positive(r, "sign_size", det.sign_size);
    det.sign_height = non_negative(r, "sign_height", det.sign_height);
    r.finish();
  }
  {
    Reader r = section("vision");
    VisionParams& v = cfg.vision;
    v.blur_kernel = r.integer("blur_kernel", v.blur_kernel);
    check(v.blur_kernel >= 1 && v.blur_kernel % 2 == 1, r.key_path("blur_kernel"), "must be odd and >= 1");
    v.blur_sigma = positive(r, "blur_sigma", v.blur_sigma);
    v.color.hue_min = r.number("hue_min", v.color.hue_min);
    v.color.hue_max = r.number("hue_max", v.color.hue_max);
    check(v.color.hue_min >= 0.0 && v.color.hue_min < 360.0, r.key_path("hue_min"), "must lie in [0, 360)");
    check(v.color.hue_max >= 0.0 && v.color.hue_max < 360.0, r.key_path("hue_max"), "must lie in [0, 360)");
    v.color.s_min = r.number("s_min", v.color.s_min);
    v.color.v_min = r.number("v_min", v.color.v_min);
    if (const json* roi = r.child("roi")) {
      v.roi = parse_points(*roi, r.key_path("roi"));
      check(v.roi.size() >= 3, r.key_path("roi"), "needs at least 3 vertices");
    }
    v.hough.rho_res = positive(r, "rho_res", v.hough.rho_res);
    v.hough.theta_res = positive(r, "theta_res", v.hough.theta_res);
    v.hough.threshold = r.integer("hough_threshold", v.hough.threshold);
    check(v.hough.threshold >= 1, r.key_path("hough_threshold"), "must be >= 1");
    if (const json* row = r.child("reference_row"); row && !row->is_null()) {
      check(row->is_number_integer(), r.key_path("reference_row"), "expected an integer");
      const int rr = row->get<int>();
      check(rr >= 0 && rr < cfg.camera.height, r.key_path("reference_row"), "must be a valid image row");
      v.reference_row = rr;
    }
    r.finish();
  }
  {
    Reader r = section("filter");
    FilterConfig& f = cfg.filter;
    const std::string type = r.string("type", std::string(to_string(f.kind)));
    if (type == "ekf") {
      f.kind = FilterKind::Ekf;
    } else if (type == "ukf") {
      f.kind = FilterKind::Ukf;
    } else {
      throw ScenarioError(r.key_path("type"), "must be \"ekf\" or \"ukf\"");
    }
    f.sigma_accel = non_negative(r, "sigma_accel", f.sigma_accel);
    f.init.sigma_position = positive(r, "sigma_p0", f.init.sigma_position);
    f.init.sigma_velocity = positive(r, "sigma_v0", f.init.sigma_velocity);
    // The measurement model defaults to the sensor noise, floored so that a
    // noiseless scenario still yields an invertible innovation covariance.
    const RangeSensorModel& rs = cfg.sensors.range;
    f.sigma_range = positive(r, "sigma_range", rs.sigma_range > 0.0 ? rs.sigma_range : f.sigma_range);
    f.sigma_bearing = positive(r, "sigma_bearing", rs.sigma_bearing > 0.0 ? rs.sigma_bearing : f.sigma_bearing);
    f.unscented.alpha = positive(r, "alpha", f.unscented.alpha);
    f.unscented.beta = r.number("beta", f.unscented.beta);
    f.unscented.kappa = r.number("kappa", f.unscented.kappa);
    check(f.unscented.alpha * f.unscented.alpha * (4.0 + f.unscented.kappa) > 0.0, r.key_path("kappa"),
          "n + lambda must be > 0");
    f.gate = positive(r, "gate", f.gate);
    f.bearing_gate = positive(r, "bearing_gate", f.bearing_gate);
    f.track_timeout = positive(r, "track_timeout", f.track_timeout);
    r.finish();
  }
  {
    Reader r = section("control");
    ControlConfig& c = cfg.control;
    c.lane.steering = parse_pid(r, default_steering_pid());
    c.lane.base_speed = non_negative(r, "base_speed", c.lane.base_speed);
    if (const json* sp = r.child("speed_pid"); sp && !sp->is_null()) {
      Reader sr(*sp, r.key_path("speed_pid"));
      c.lane.speed = parse_pid(sr, PIDConfig{});
      sr.finish();
    }
    BehaviorConfig& b = c.behavior;
    b.stop_distance = positive(r, "stop_distance", b.stop_distance);
    b.stop_ramp = positive(r, "stop_ramp", b.stop_ramp);
    b.stop_hold = non_negative(r, "stop_hold", b.stop_hold);
    b.turn_distance = positive(r, "turn_distance", b.turn_distance);
    b.turn_angle = r.number("turn_angle", b.turn_angle);
    b.turn_speed = non_negative(r, "turn_speed", b.turn_speed);
    b.turn_rate = positive(r, "turn_rate", b.turn_rate);
    r.finish();
  }
  root.finish();
  return cfg;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("", "cannot open scenario '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ScenarioError("", "parse error in '" + path.string() + "': " + e.what());
  }
  return parse_scenario(doc);
}

json scenario_to_json(const ScenarioConfig& cfg) {
  json wp = json::array();
  for (const auto& p : cfg.track.centerline()) wp.push_back({p.x(), p.y()});
  json signs = json::array();
  for (const Sign& s : cfg.track.signs()) {
    signs.push_back({{"kind", std::string(to_string(s.kind))},
                     {"position", {s.position.x(), s.position.y()}},
                     {"facing", s.facing}});
  }
  json roi = json::array();
  for (const auto& p : cfg.vision.roi) roi.push_back({p.x(), p.y()});

  json control = pid_json(cfg.control.lane.steering);
  control["base_speed"] = cfg.control.lane.base_speed;
  control["speed_pid"] = cfg.control.lane.speed ? pid_json(*cfg.control.lane.speed) : json(nullptr);
  const BehaviorConfig& b = cfg.control.behavior;
  control["stop_distance"] = b.stop_distance;
  control["stop_ramp"] = b.stop_ramp;
  control["stop_hold"] = b.stop_hold;
  control["turn_distance"] = b.turn_distance;
  control["turn_angle"] = b.turn_angle;
  control["turn_speed"] = b.turn_speed;
  control["turn_rate"] = b.turn_rate;

  const VisionParams& v = cfg.vision;
  return {
      {"name", cfg.name},
      {"track",
       {{"waypoints", wp},
        {"lane_half_width", cfg.track.lane_half_width()},
        {"closed", cfg.track.closed()},
        {"signs", signs}}},
      {"robot",
       {{"wheel_base", cfg.robot.wheel_base},
        {"v_max", cfg.robot.limits.v_max},
        {"omega_max", cfg.robot.limits.omega_max},
        {"start", {{"x", cfg.robot.start.x()}, {"y", cfg.robot.start.y()}, {"psi", cfg.robot.start.psi()}}}}},
      {"camera",
       {{"width", cfg.camera.width},
        {"height", cfg.camera.height},
        {"horizontal_fov", cfg.camera.horizontal_fov},
        {"mount_height", cfg.camera.mount_height},
        {"pitch", cfg.camera.pitch}}},
      {"sensors",
       {{"sigma_range", cfg.sensors.range.sigma_range},
        {"sigma_bearing", cfg.sensors.range.sigma_bearing},
        {"miss_rate", cfg.sensors.detector.miss_rate},
        {"confidence_alpha", cfg.sensors.detector.confidence_alpha},
        {"confidence_beta", cfg.sensors.detector.confidence_beta},
        {"sign_size", cfg.sensors.detector.sign_size},
        {"sign_height", cfg.sensors.detector.sign_height}}},
      {"vision",
       {{"blur_kernel", v.blur_kernel},
        {"blur_sigma", v.blur_sigma},
        {"hue_min", v.color.hue_min},
        {"hue_max", v.color.hue_max},
        {"s_min", v.color.s_min},
        {"v_min", v.color.v_min},
        {"roi", roi},
        {"rho_res", v.hough.rho_res},
        {"theta_res", v.hough.theta_res},
        {"hough_threshold", v.hough.threshold},
        {"reference_row", v.reference_row ? json(*v.reference_row) : json(nullptr)}}},
      {"filter",
       {{"type", std::string(to_string(cfg.filter.kind))},
        {"sigma_accel", cfg.filter.sigma_accel},
        {"sigma_p0", cfg.filter.init.sigma_position},
        {"sigma_v0", cfg.filter.init.sigma_velocity},
        {"sigma_range", cfg.filter.sigma_range},
        {"sigma_bearing", cfg.filter.sigma_bearing},
        {"alpha", cfg.filter.unscented.alpha},
        {"beta", cfg.filter.unscented.beta},
        {"kappa", cfg.filter.unscented.kappa},
        {"gate", cfg.filter.gate},
        {"bearing_gate", cfg.filter.bearing_gate},
        {"track_timeout", cfg.filter.track_timeout}}},
      {"control", control},
      {"run",
       {{"dt", cfg.run.dt},
        {"duration", cfg.run.duration},
        {"seed", cfg.run.seed},
        {"end_margin", cfg.run.end_margin}}},
  };
}

}  // namespace lanesim
