#include <cstring>
#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lanesim/control.hpp"
#include "lanesim/episode.hpp"
#include "lanesim/estimation.hpp"
#include "lanesim/scenario.hpp"
#include "lanesim/sensors.hpp"
#include "lanesim/vision.hpp"
#include "lanesim/world.hpp"

namespace py = pybind11;
using namespace lanesim;

namespace {

using ImageArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

py::array_t<std::uint8_t> to_array(const RasterImage& img) {
  py::array_t<std::uint8_t> out({img.height(), img.width(), 3});
  std::memcpy(out.mutable_data(), img.pixels().data(), img.pixels().size() * 3);
  return out;
}

RasterImage from_array(const ImageArray& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw py::value_error("expected an (H, W, 3) uint8 array");
  RasterImage img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  auto v = a.unchecked<3>();
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) img.at(x, y) = {v(y, x, 0), v(y, x, 1), v(y, x, 2)};
  }
  return img;
}

py::array_t<bool> mask_to_array(const BinaryMask& m) {
  py::array_t<bool> out({m.height(), m.width()});
  auto v = out.mutable_unchecked<2>();
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) v(y, x) = m.at(x, y);
  }
  return out;
}

BinaryMask mask_from_array(const py::array_t<bool, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw py::value_error("expected an (H, W) bool array");
  BinaryMask m(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  auto v = a.unchecked<2>();
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) m.set(x, y, v(y, x));
  }
  return m;
}

py::object json_to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

}  // namespace

PYBIND11_MODULE(_lanesim, m) {
  m.doc() = "Lane-following simulation core";

  py::class_<Pose2D>(m, "Pose2D")
      .def(py::init<double, double, double>(), py::arg("x") = 0.0, py::arg("y") = 0.0, py::arg("psi") = 0.0)
      .def_property_readonly("x", &Pose2D::x)
      .def_property_readonly("y", &Pose2D::y)
      .def_property_readonly("psi", &Pose2D::psi)
      .def("__repr__", [](const Pose2D& p) {
        std::ostringstream os;
        os << "Pose2D(" << p.x() << ", " << p.y() << ", " << p.psi() << ")";
        return os.str();
      });

  py::class_<Twist>(m, "Twist")
      .def(py::init<double, double>(), py::arg("v") = 0.0, py::arg("omega") = 0.0)
      .def_readwrite("v", &Twist::v)
      .def_readwrite("omega", &Twist::omega);

  py::class_<RobotState>(m, "RobotState")
      .def(py::init([](const Pose2D& p, double v, double om) { return RobotState{p, v, om}; }),
           py::arg("pose") = Pose2D(), py::arg("v") = 0.0, py::arg("omega") = 0.0)
      .def_readwrite("pose", &RobotState::pose)
      .def_readwrite("v", &RobotState::v)
      .def_readwrite("omega", &RobotState::omega);

  py::class_<WheelSpeeds>(m, "WheelSpeeds")
      .def(py::init([](double l, double r, double L) { return WheelSpeeds{l, r, L}; }), py::arg("v_l"),
           py::arg("v_r"), py::arg("L"))
      .def_readwrite("v_l", &WheelSpeeds::v_l)
      .def_readwrite("v_r", &WheelSpeeds::v_r)
      .def_readwrite("L", &WheelSpeeds::L);

  py::class_<VelocityLimits>(m, "VelocityLimits")
      .def(py::init([](double v, double om) { return VelocityLimits{v, om}; }), py::arg("v_max"),
           py::arg("omega_max"))
      .def_readwrite("v_max", &VelocityLimits::v_max)
      .def_readwrite("omega_max", &VelocityLimits::omega_max);

  m.def("wrap_angle", &wrap_angle);
  m.def("unicycle_from_wheels", &unicycle_from_wheels);
  m.def("wheels_from_unicycle", &wheels_from_unicycle, py::arg("v"), py::arg("omega"), py::arg("L"));
  m.def("step", &step, py::arg("state"), py::arg("command"), py::arg("dt"), py::arg("limits") = VelocityLimits{});
  m.def("integrate", &integrate, py::arg("state"), py::arg("command"), py::arg("duration"), py::arg("dt"),
        py::arg("limits") = VelocityLimits{});

  py::enum_<SignKind>(m, "SignKind")
      .value("Stop", SignKind::Stop)
      .value("Move", SignKind::Move)
      .value("Turn", SignKind::Turn);

  py::class_<Sign>(m, "Sign")
      .def(py::init([](SignKind k, const Eigen::Vector2d& p, double f) { return Sign{k, p, f}; }),
           py::arg("kind"), py::arg("position"), py::arg("facing") = 0.0)
      .def_readwrite("kind", &Sign::kind)
      .def_readwrite("position", &Sign::position)
      .def_readwrite("facing", &Sign::facing);

  py::class_<Track>(m, "Track")
      .def(py::init<std::vector<Eigen::Vector2d>, double, std::vector<Sign>, bool>(), py::arg("centerline"),
           py::arg("lane_half_width"), py::arg("signs") = std::vector<Sign>{}, py::arg("closed") = false)
      .def_property_readonly("length", &Track::length)
      .def_property_readonly("lane_half_width", &Track::lane_half_width)
      .def_property_readonly("centerline", &Track::centerline)
      .def_property_readonly("signs", &Track::signs)
      .def("boundary", &Track::boundary, py::arg("side"));

  py::class_<TrackError>(m, "TrackError")
      .def_readonly("signed_offset", &TrackError::signed_offset)
      .def_readonly("heading_error", &TrackError::heading_error)
      .def_readonly("segment", &TrackError::segment)
      .def_readonly("progress", &TrackError::progress);
  m.def("cross_track_error", &cross_track_error);

  py::class_<CameraModel>(m, "CameraModel")
      .def(py::init<>())
      .def_readwrite("width", &CameraModel::width)
      .def_readwrite("height", &CameraModel::height)
      .def_readwrite("horizontal_fov", &CameraModel::horizontal_fov)
      .def_readwrite("mount_height", &CameraModel::mount_height)
      .def_readwrite("pitch", &CameraModel::pitch)
      .def_property_readonly("focal", &CameraModel::focal);
  m.def("render_camera", [](const Track& t, const Pose2D& p, const CameraModel& c) {
    return to_array(render_camera(t, p, c));
  }, py::arg("track"), py::arg("pose"), py::arg("camera") = CameraModel{});

  py::class_<RangeBearing>(m, "RangeBearing")
      .def(py::init([](double r, double b) { return RangeBearing{r, b}; }), py::arg("range"), py::arg("bearing"))
      .def_readwrite("range", &RangeBearing::range)
      .def_readwrite("bearing", &RangeBearing::bearing);
  m.def("true_range_bearing", &true_range_bearing);
  m.def("passes_confidence_gate", &passes_confidence_gate);

  m.def("gaussian_blur", [](const ImageArray& a, int k, double s) { return to_array(gaussian_blur(from_array(a), k, s)); },
        py::arg("image"), py::arg("kernel_size") = 5, py::arg("sigma") = 1.0);
  m.def("yellow_mask", [](const ImageArray& a) { return mask_to_array(yellow_mask(from_array(a))); });

  py::class_<LineSegmentPolar>(m, "LineSegmentPolar")
      .def_readonly("rho", &LineSegmentPolar::rho)
      .def_readonly("theta", &LineSegmentPolar::theta)
      .def_readonly("votes", &LineSegmentPolar::votes)
      .def_readonly("rho_index", &LineSegmentPolar::rho_index)
      .def_readonly("theta_index", &LineSegmentPolar::theta_index);
  m.def("hough_lines", [](const py::array_t<bool, py::array::c_style | py::array::forcecast>& mask, double rho_res,
                          double theta_res, int threshold) {
    return hough_lines(mask_from_array(mask), {rho_res, theta_res, threshold});
  }, py::arg("mask"), py::arg("rho_res") = 1.0, py::arg("theta_res") = HoughParams::default_theta_res(),
        py::arg("threshold") = 20);

  py::class_<LaneObservation>(m, "LaneObservation")
      .def_readonly("left", &LaneObservation::left)
      .def_readonly("right", &LaneObservation::right)
      .def_readonly("center_offset", &LaneObservation::center_offset)
      .def_readonly("valid", &LaneObservation::valid);
  m.def("detect_lane", [](const ImageArray& a) { return detect_lane(from_array(a), VisionParams{}); });

  py::class_<TargetBelief>(m, "TargetBelief")
      .def(py::init([](const Vec<4>& mean, const Mat<4, 4>& cov) { return TargetBelief{mean, cov}; }),
           py::arg("mean"), py::arg("cov"))
      .def_readwrite("mean", &TargetBelief::mean)
      .def_readwrite("cov", &TargetBelief::cov);
  m.def("cv_transition", &cv_transition);
  m.def("white_acceleration_q", &white_acceleration_q);
  m.def("predict_cv", &predict_cv);
  m.def("range_bearing_r", &range_bearing_r);
  m.def("range_bearing_jacobian", &range_bearing_jacobian);
  m.def("ekf_update", [](const TargetBelief& b, const RangeBearing& z, const Pose2D& robot, const Mat<2, 2>& R) {
    return ekf_update(b, z, robot, R);
  });
  m.def("ukf_update", [](const TargetBelief& b, const RangeBearing& z, const Pose2D& robot, const Mat<2, 2>& R) {
    return ukf_update(b, z, robot, R);
  });
  m.def("init_from_first_measurement", [](const RangeBearing& z, const Pose2D& robot) {
    return init_from_first_measurement(z, robot);
  });
  m.def("nees", [](const TargetBelief& b, const Vec<4>& truth) { return nees(b, truth); });
  m.def("motion_jacobian", &motion_jacobian);

  py::class_<PIDConfig>(m, "PIDConfig")
      .def(py::init([](double kp, double ki, double kd, double sp, double lo, double hi, double il) {
             return PIDConfig{kp, ki, kd, sp, lo, hi, il};
           }),
           py::arg("kp") = 0.0, py::arg("ki") = 0.0, py::arg("kd") = 0.0, py::arg("setpoint") = 0.0,
           py::arg("output_min") = -1e9, py::arg("output_max") = 1e9, py::arg("integral_limit") = 1e9);
  py::class_<PIDState>(m, "PIDState")
      .def(py::init<>())
      .def_readonly("integral", &PIDState::integral)
      .def_readonly("prev_error", &PIDState::prev_error);
  m.def("pid_update", [](const PIDConfig& c, const PIDState& s, double measured, double dt) {
    const PIDResult r = pid_update(c, s, measured, dt);
    return py::make_tuple(r.output, r.state);
  });

  py::register_exception<ScenarioError>(m, "ScenarioError", PyExc_ValueError);
  m.def("validate_scenario", [](const std::filesystem::path& p) {
    return json_to_py(scenario_to_json(load_scenario(p)));
  });
  m.def("run_episode", [](const std::filesystem::path& p, std::optional<std::uint64_t> seed) {
    ScenarioConfig cfg = load_scenario(p);
    if (seed) cfg.run.seed = *seed;
    EpisodeResult res;
    {
      py::gil_scoped_release release;
      res = run_episode(cfg);
    }
    py::dict out;
    out["summary"] = json_to_py(summary_to_json(res.summary));
    out["trace_csv"] = trace_csv(res.trace);
    out["detections_csv"] = detections_csv(res.detections);
    return out;
  }, py::arg("scenario"), py::arg("seed") = py::none());
}
