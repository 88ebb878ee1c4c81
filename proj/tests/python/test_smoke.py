import csv
import io
import math
import os
from pathlib import Path

import numpy as np
import pytest

import lanesim

SCENARIOS = Path(os.environ.get("LANESIM_SCENARIO_DIR", Path(__file__).resolve().parents[2] / "scenarios"))


def test_wheel_round_trip():
    w = lanesim.wheels_from_unicycle(0.5, 2.0, 0.5)
    assert (w.v_l, w.v_r) == (0.0, 1.0)
    t = lanesim.unicycle_from_wheels(w)
    assert (t.v, t.omega) == (0.5, 2.0)


def test_circle_closure():
    s = lanesim.integrate(lanesim.RobotState(), lanesim.Twist(1.0, 1.0), 2 * math.pi, 0.01)
    assert math.hypot(s.pose.x, s.pose.y) < 1e-6


def test_cross_track():
    track = lanesim.Track([[0, 0], [10, 0]], 0.2)
    e = lanesim.cross_track_error(track, lanesim.Pose2D(1, 0.2, 0))
    assert e.signed_offset == pytest.approx(0.2)


def test_render_and_detect():
    track = lanesim.Track([[-5, 0], [30, 0]], 0.2)
    img = lanesim.render_camera(track, lanesim.Pose2D(0, 0, 0))
    assert img.shape == (120, 160, 3)
    assert img.dtype == np.uint8
    obs = lanesim.detect_lane(img)
    assert obs.valid
    assert abs(obs.center_offset) <= 2.0
    blurred = lanesim.gaussian_blur(img, 1, 1.0)
    assert np.array_equal(blurred, img)


def test_hough_vertical_line():
    mask = np.zeros((11, 11), dtype=bool)
    mask[:, 5] = True
    lines = lanesim.hough_lines(mask, threshold=5)
    assert lines[0].votes == 11
    assert abs(lines[0].rho - 5) <= 1


def test_jacobian_and_update():
    H = lanesim.range_bearing_jacobian(np.array([3.0, 4.0, 0.0, 0.0]), lanesim.Pose2D())
    assert H[0, 0] == pytest.approx(0.6)
    assert H[1, 0] == pytest.approx(-0.16)
    b = lanesim.init_from_first_measurement(lanesim.RangeBearing(5.0, 0.0), lanesim.Pose2D())
    assert b.mean[0] == pytest.approx(5.0)
    R = lanesim.range_bearing_r(0.05, 0.02)
    for update in (lanesim.ekf_update, lanesim.ukf_update):
        post = update(b, lanesim.RangeBearing(4.9, 0.0), lanesim.Pose2D(), R)
        assert post is not None
        assert 4.8 < post.mean[0] < 5.0


def test_pid():
    out, state = lanesim.pid_update(lanesim.PIDConfig(kp=2.0), lanesim.PIDState(), 0.1, 0.05)
    assert out == pytest.approx(-0.2)


def test_scenario_errors_name_the_key(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"track": {"waypoints": [[0, 0], [5, 0]], "lane_half_width": 0.2}, "run": {"dt": 0}}')
    with pytest.raises(lanesim.ScenarioError, match="run.dt"):
        lanesim.validate_scenario(bad)


def test_run_episode_is_deterministic():
    path = SCENARIOS / "static_sign.json"
    a = lanesim.run_episode(path, seed=5)
    b = lanesim.run_episode(path, seed=5)
    assert a["trace_csv"] == b["trace_csv"]
    rows = list(csv.reader(io.StringIO(a["trace_csv"])))
    assert rows[0][0] == "tick"
    assert len(rows[0]) == 19
    assert a["summary"]["ticks"] > 0
