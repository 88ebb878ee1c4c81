#include "lanesim/episode.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace lanesim {
namespace {

struct SignTrack {
  std::uint32_t id = 0;
  SignKind kind = SignKind::Stop;
  std::size_t sign_index = 0;  // truth used for metrics only
  TargetBelief belief;
  double last_update = 0.0;
  std::size_t updates = 0;
  double sq_err_sum = 0.0;
  double nees_sum = 0.0;
  std::size_t samples = 0;
};

std::filesystem::path frame_path(const std::filesystem::path& dir, const char* prefix,
                                 std::size_t tick, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%06zu.%s", prefix, tick, ext);
  return dir / buf;
}

class Tracker {
 public:
  Tracker(const FilterConfig& cfg, double dt)
      : cfg_(cfg),
        q_(white_acceleration_q(dt, cfg.sigma_accel)),
        r2_(range_bearing_r(cfg.sigma_range, cfg.sigma_bearing)),
        r1_(Mat<1, 1>::Constant(cfg.sigma_bearing * cfg.sigma_bearing)),
        dt_(dt) {}

  std::vector<SignTrack>& tracks() { return tracks_; }
  std::vector<SignTrack>& finished() { return finished_; }

  void predict() {
    for (SignTrack& t : tracks_) t.belief = predict_cv(t.belief, dt_, q_);
  }

  /// Fuses one gated detection; returns the id of the track it updated or
  /// created, if any.
  std::optional<std::uint32_t> fuse(const Detection& d, const std::optional<RangeBearing>& z,
                                    const Pose2D& pose, const CameraModel& cam, double time) {
    if (z) {
      const double heading = pose.psi() + z->bearing;
      const Eigen::Vector2d measured =
          pose.position() + z->range * Eigen::Vector2d(std::cos(heading), std::sin(heading));
      SignTrack* best = nullptr;
      double best_dist = cfg_.gate;
      for (SignTrack& t : tracks_) {
        if (t.kind != d.kind) continue;
        const double dist = (t.belief.mean.head<2>() - measured).norm();
        if (dist < best_dist) {
          best_dist = dist;
          best = &t;
        }
      }
      if (!best) {
        SignTrack t;
        t.id = next_id_++;
        t.kind = d.kind;
        t.sign_index = d.sign_index;
        t.belief = init_from_first_measurement(*z, pose, cfg_.init);
        t.last_update = time;
        t.updates = 1;
        tracks_.push_back(t);
        return tracks_.back().id;
      }
      const Vec<2> zv(z->range, z->bearing);
      const RangeBearingModel model{pose};
      apply(*best, cfg_.kind == FilterKind::Ekf ? ekf_update(best->belief, zv, model, r2_)
                                                : ukf_update(best->belief, zv, model, r2_, cfg_.unscented),
            time);
      return best->id;
    }

    // No depth reading: bearing-only update from the bounding-box centroid.
    const double bearing = bearing_from_pixel(cam, d.centroid);
    const BearingOnlyModel model{pose};
    SignTrack* best = nullptr;
    double best_err = cfg_.bearing_gate;
    for (SignTrack& t : tracks_) {
      if (t.kind != d.kind) continue;
      const double err = std::abs(wrap_angle(model.predict(t.belief.mean)(0) - bearing));
      if (err < best_err) {
        best_err = err;
        best = &t;
      }
    }
    if (!best) return std::nullopt;
    const Vec<1> zv(bearing);
    apply(*best, cfg_.kind == FilterKind::Ekf ? ekf_update(best->belief, zv, model, r1_)
                                              : ukf_update(best->belief, zv, model, r1_, cfg_.unscented),
          time);
    return best->id;
  }

  void expire(double time) {
    auto stale = [&](const SignTrack& t) { return time - t.last_update > cfg_.track_timeout; };
    for (const SignTrack& t : tracks_) {
      if (stale(t)) finished_.push_back(t);
    }
    std::erase_if(tracks_, stale);
  }

 private:
  void apply(SignTrack& t, const std::optional<TargetBelief>& posterior, double time) {
    if (!posterior) return;  // ill-conditioned innovation: keep the prior
    t.belief = *posterior;
    t.last_update = time;
    ++t.updates;
  }

  FilterConfig cfg_;
  Mat<4, 4> q_;
  Mat<2, 2> r2_;
  Mat<1, 1> r1_;
  double dt_;
  std::vector<SignTrack> tracks_;
  std::vector<SignTrack> finished_;
  std::uint32_t next_id_ = 1;
};

void summarize(const ScenarioConfig& cfg, EpisodeResult& res, std::vector<SignTrack> tracks,
               bool left_lane) {
  Summary& s = res.summary;
  s.ticks = res.trace.size();
  s.simulated_time = static_cast<double>(s.ticks) * cfg.run.dt;
  double sq = 0.0;
  std::size_t streak = 0;
  for (const TraceRecord& r : res.trace) {
    sq += r.cross_track * r.cross_track;
    s.max_abs_cross_track = std::max(s.max_abs_cross_track, std::abs(r.cross_track));
    if (r.lane_valid) {
      streak = 0;
    } else {
      ++s.lane_invalid_ticks;
      s.max_lane_invalid_streak = std::max(s.max_lane_invalid_streak, ++streak);
    }
  }
  s.cross_track_rmse = s.ticks ? std::sqrt(sq / static_cast<double>(s.ticks)) : 0.0;

  for (std::size_t i = 0; i < res.trace.size(); ++i) {
    const TraceRecord& r = res.trace[i];
    if (r.mode != BehaviorMode::Stopped) continue;
    if (s.stopped.empty() || i == 0 || res.trace[i - 1].mode != BehaviorMode::Stopped) {
      s.stopped.push_back({r.time, r.time, 0.0});
    }
    s.stopped.back().end = r.time + cfg.run.dt;
    s.stopped.back().max_abs_v = std::max(s.stopped.back().max_abs_v, std::abs(r.command.v));
  }

  std::sort(tracks.begin(), tracks.end(), [](const SignTrack& a, const SignTrack& b) { return a.id < b.id; });
  double nees_sum = 0.0;
  std::size_t nees_n = 0;
  for (const SignTrack& t : tracks) {
    TrackSummary ts;
    ts.id = t.id;
    ts.kind = t.kind;
    ts.sign_index = t.sign_index;
    ts.updates = t.updates;
    if (t.samples) {
      ts.position_rmse = std::sqrt(t.sq_err_sum / static_cast<double>(t.samples));
      ts.mean_nees = t.nees_sum / static_cast<double>(t.samples);
    }
    nees_sum += t.nees_sum;
    nees_n += t.samples;
    s.tracks.push_back(ts);
  }
  s.mean_nees = nees_n ? nees_sum / static_cast<double>(nees_n) : 0.0;
  s.completed = !left_lane;
}

}  // namespace

EpisodeResult run_episode(const ScenarioConfig& cfg, const EpisodeOptions& options) {
  const double dt = cfg.run.dt;
  const auto total_ticks = static_cast<std::size_t>(std::floor(cfg.run.duration / dt + 1e-9));
  Rng noise_rng = make_substream(cfg.run.seed, "sensor_noise");
  Rng detect_rng = make_substream(cfg.run.seed, "detection");

  if (options.frame_dir) std::filesystem::create_directories(*options.frame_dir);

  EpisodeResult res;
  RobotState state{cfg.robot.start, 0.0, 0.0};
  LaneFollowingState lane;
  lane.previous = {cfg.control.lane.base_speed, 0.0};
  BehaviorState behavior;
  Tracker tracker(cfg.filter, dt);
  bool left_lane = false;
  const auto& signs = cfg.track.signs();

  for (std::size_t tick = 0; tick < total_ticks; ++tick) {
    const double time = static_cast<double>(tick) * dt;
    const Pose2D pose = state.pose;
    const TrackError te = cross_track_error(cfg.track, pose);
    if (!cfg.track.closed() && te.progress >= cfg.track.length() - cfg.run.end_margin) {
      res.summary.reached_end = true;
      break;
    }
    if (std::abs(te.signed_offset) > cfg.track.lane_half_width()) left_lane = true;

    // Camera and lane pipeline.
    const RasterImage frame = render_camera(cfg.track, pose, cfg.camera);
    LaneDebug debug;
    const LaneObservation obs =
        detect_lane(frame, cfg.vision, options.frame_dir ? &debug : nullptr);
    if (options.frame_dir) {
      write_ppm(frame, frame_path(*options.frame_dir, "camera", tick, "ppm"));
      write_pgm(debug.color_mask, frame_path(*options.frame_dir, "color", tick, "pgm"));
      write_pgm(debug.roi, frame_path(*options.frame_dir, "roi", tick, "pgm"));
    }
    const LaneFollowingResult lf =
        lane_following_command(obs, cfg.control.lane, lane, cfg.camera.width, dt, state.v);
    lane = lf.state;

    // Detector and depth readings. Every sign draws its noise every tick so
    // one sign's visibility never shifts another's stream.
    const auto raw = simulate_detector(pose, signs, cfg.camera, cfg.sensors.detector, detect_rng);
    std::vector<std::optional<RangeBearing>> readings;
    readings.reserve(signs.size());
    for (const Sign& sign : signs) {
      readings.push_back(sense_range_bearing(pose, sign, cfg.sensors.range, noise_rng));
    }

    tracker.predict();
    std::vector<std::uint32_t> detected_ids;
    for (const Detection& d : raw) {
      if (!passes_confidence_gate(d.confidence)) {
        ++res.summary.detections_suppressed;
        continue;
      }
      const auto& z = readings[d.sign_index];
      DetectionEvent ev;
      ev.tick = tick;
      ev.time = time;
      ev.sign_index = d.sign_index;
      ev.kind = d.kind;
      ev.confidence = d.confidence;
      ev.bbox = d.bbox;
      ev.centroid = d.centroid;
      ev.measurement = z;
      ev.track_id = tracker.fuse(d, z, pose, cfg.camera, time);
      if (ev.track_id) detected_ids.push_back(*ev.track_id);
      res.detections.push_back(ev);
    }
    tracker.expire(time);

    // Per-track metrics and the behavior layer's view of the detections.
    std::vector<SignObservation> sign_obs;
    std::vector<TrackSnapshot> snaps;
    for (SignTrack& t : tracker.tracks()) {
      const Eigen::Vector2d truth = signs[t.sign_index].position;
      const Vec<4> truth4(truth.x(), truth.y(), 0.0, 0.0);
      TrackSnapshot snap;
      snap.id = t.id;
      snap.kind = t.kind;
      snap.estimate = TargetState4::from(t.belief.mean);
      snap.cov_trace = t.belief.cov.trace();
      snap.nees = nees(t.belief, truth4);
      t.sq_err_sum += (t.belief.mean.head<2>() - truth).squaredNorm();
      t.nees_sum += snap.nees;
      ++t.samples;
      if (std::find(detected_ids.begin(), detected_ids.end(), t.id) != detected_ids.end()) {
        snap.detected = true;
        snap.distance = (t.belief.mean.head<2>() - pose.position()).norm();
        sign_obs.push_back({t.kind, *snap.distance, t.id});
      }
      snaps.push_back(snap);
    }
    for (DetectionEvent& ev : res.detections) {
      if (ev.tick != tick || !ev.track_id) continue;
      for (const TrackSnapshot& s : snaps) {
        if (s.id == *ev.track_id) ev.distance = s.distance;
      }
    }

    const BehaviorResult br = behavior_step(behavior, sign_obs, dt, lf.command, cfg.control.behavior);
    if (br.transition) {
      res.summary.transitions.push_back({tick, time, br.transition->from, br.transition->to});
      if (br.transition->to == BehaviorMode::LaneFollowing) {
        lane.steering = PIDState{};
        lane.speed = PIDState{};
      }
    }
    behavior = br.state;

    TraceRecord rec;
    rec.tick = tick;
    rec.time = time;
    rec.pose = pose;
    rec.command = br.command;
    rec.cross_track = te.signed_offset;
    rec.lane_valid = obs.valid;
    if (obs.valid) rec.center_offset = obs.center_offset;
    rec.mode = behavior.mode;
    rec.tracks = std::move(snaps);
    res.trace.push_back(std::move(rec));

    state = step(state, br.command, dt, cfg.robot.limits);
  }

  for (const DetectionEvent& ev : res.detections) {
    Summary& s = res.summary;
    ++s.detections_emitted;
    s.min_emitted_confidence = std::min(s.min_emitted_confidence, ev.confidence);
    if (ev.measurement) {
      s.min_range_reading = s.range_readings ? std::min(s.min_range_reading, ev.measurement->range)
                                             : ev.measurement->range;
      s.max_range_reading = std::max(s.max_range_reading, ev.measurement->range);
      ++s.range_readings;
    }
  }
  std::vector<SignTrack> all = tracker.finished();
  all.insert(all.end(), tracker.tracks().begin(), tracker.tracks().end());
  summarize(cfg, res, std::move(all), left_lane);
  return res;
}

std::vector<EpisodeResult> run_batch(const ScenarioConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                     unsigned threads) {
  std::vector<EpisodeResult> results(seeds.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(seeds.size(), 1)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < seeds.size(); i = next++) {
          try {
            ScenarioConfig c = cfg;
            c.run.seed = seeds[i];
            results[i] = run_episode(c);
          } catch (...) {
            const std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
  return results;
}

const char* const kTraceColumns =
    "tick,time,x,y,psi,v_cmd,omega_cmd,cross_track,center_offset_px,lane_valid,mode,sign_id,"
    "est_x,est_y,est_vx,est_vy,nees,detected_class,detected_class_distance";

std::string format_float(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string trace_csv(const std::vector<TraceRecord>& records) {
  std::ostringstream out;
  out << kTraceColumns << '\n';
  for (const TraceRecord& r : records) {
    std::ostringstream head;
    head << r.tick << ',' << format_float(r.time) << ',' << format_float(r.pose.x()) << ','
         << format_float(r.pose.y()) << ',' << format_float(r.pose.psi()) << ','
         << format_float(r.command.v) << ',' << format_float(r.command.omega) << ','
         << format_float(r.cross_track) << ','
         << (r.center_offset ? format_float(*r.center_offset) : std::string()) << ','
         << (r.lane_valid ? 1 : 0) << ',' << to_string(r.mode) << ',';
    if (r.tracks.empty()) {
      out << head.str() << ",,,,,,,\n";
      continue;
    }
    for (const TrackSnapshot& t : r.tracks) {
      out << head.str() << t.id << ',' << format_float(t.estimate.x) << ','
          << format_float(t.estimate.y) << ',' << format_float(t.estimate.vx) << ','
          << format_float(t.estimate.vy) << ',' << format_float(t.nees) << ','
          << (t.detected ? std::string(to_string(t.kind)) : std::string()) << ','
          << (t.distance ? format_float(*t.distance) : std::string()) << '\n';
    }
  }
  return out.str();
}

namespace {

void write_text(const std::string& text, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace

void write_trace_csv(const std::vector<TraceRecord>& records, const std::filesystem::path& path) {
  if (records.empty()) throw std::invalid_argument("write_trace_csv: no records");
  write_text(trace_csv(records), path);
}

std::string detections_csv(const std::vector<DetectionEvent>& events) {
  std::ostringstream out;
  out << "tick,time,track_id,sign_index,detected_class,confidence,centroid_u,centroid_v,"
         "bbox_x_min,bbox_y_min,bbox_x_max,bbox_y_max,range,bearing,detected_class_distance\n";
  for (const DetectionEvent& e : events) {
    out << e.tick << ',' << format_float(e.time) << ','
        << (e.track_id ? std::to_string(*e.track_id) : std::string()) << ',' << e.sign_index << ','
        << to_string(e.kind) << ',' << format_float(e.confidence) << ','
        << format_float(e.centroid.x()) << ',' << format_float(e.centroid.y()) << ','
        << format_float(e.bbox.x_min) << ',' << format_float(e.bbox.y_min) << ','
        << format_float(e.bbox.x_max) << ',' << format_float(e.bbox.y_max) << ','
        << (e.measurement ? format_float(e.measurement->range) : std::string()) << ','
        << (e.measurement ? format_float(e.measurement->bearing) : std::string()) << ','
        << (e.distance ? format_float(*e.distance) : std::string()) << '\n';
  }
  return out.str();
}

void write_detections_csv(const std::vector<DetectionEvent>& events, const std::filesystem::path& path) {
  write_text(detections_csv(events), path);
}

nlohmann::json summary_to_json(const Summary& s) {
  nlohmann::json tracks = nlohmann::json::array();
  for (const TrackSummary& t : s.tracks) {
    tracks.push_back({{"id", t.id},
                      {"kind", std::string(to_string(t.kind))},
                      {"sign_index", t.sign_index},
                      {"updates", t.updates},
                      {"position_rmse", t.position_rmse},
                      {"mean_nees", t.mean_nees}});
  }
  nlohmann::json transitions = nlohmann::json::array();
  for (const TransitionEvent& e : s.transitions) {
    transitions.push_back({{"tick", e.tick},
                           {"time", e.time},
                           {"from", std::string(to_string(e.from))},
                           {"to", std::string(to_string(e.to))}});
  }
  nlohmann::json stopped = nlohmann::json::array();
  for (const StoppedInterval& i : s.stopped) {
    stopped.push_back({{"start", i.start}, {"end", i.end}, {"max_abs_v", i.max_abs_v}});
  }
  return {{"ticks", s.ticks},
          {"simulated_time", s.simulated_time},
          {"cross_track_rmse", s.cross_track_rmse},
          {"max_abs_cross_track", s.max_abs_cross_track},
          {"lane_invalid_ticks", s.lane_invalid_ticks},
          {"max_lane_invalid_streak", s.max_lane_invalid_streak},
          {"tracks", tracks},
          {"mean_nees", s.mean_nees},
          {"transitions", transitions},
          {"stopped_intervals", stopped},
          {"detections_emitted", s.detections_emitted},
          {"detections_suppressed", s.detections_suppressed},
          {"min_emitted_confidence", s.min_emitted_confidence},
          {"range_readings", s.range_readings},
          {"min_range_reading", s.min_range_reading},
          {"max_range_reading", s.max_range_reading},
          {"reached_end", s.reached_end},
          {"completed", s.completed}};
}

}  // namespace lanesim
