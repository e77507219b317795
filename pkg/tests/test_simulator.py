from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from beliefgrid.belief import OdometryDelta
from beliefgrid.maps import InvalidOriginError
from beliefgrid.simulator import (OdometryNoiseModel, RandomWalkPolicy, RobotState, ScanConfig,
                                  Simulation, WaypointPolicy, compose_pose, odometry_measurement,
                                  random_free_pose, read_trajectory, relative_delta,
                                  simulate_scan, step_robot, write_trajectory)

from conftest import box_map


@pytest.fixture(scope="module")
def hall():
    return box_map(100, 100, 0.1)


def test_straight_step(hall):
    s = step_robot(RobotState(5.0, 5.0, 0.3), (1.0, 0.0), 0.1, hall)
    assert s.x == pytest.approx(5.0 + 0.1 * math.cos(0.3))
    assert s.y == pytest.approx(5.0 + 0.1 * math.sin(0.3))
    assert s.theta == pytest.approx(0.3) and s.time == pytest.approx(0.1) and s.distance == pytest.approx(0.1)


def test_collision_keeps_position_and_turns():
    grid = box_map(40, 40, 0.1, blocks=[(21, 40, 0, 40)])
    s0 = RobotState(2.05, 2.0, 0.0)
    s = step_robot(s0, (1.0, 0.5), 0.1, grid)
    assert (s.x, s.y) == (2.05, 2.0)
    assert s.theta == pytest.approx(0.05)
    assert s.distance == 0.0


def test_circle_returns_to_start(hall):
    n = 1000
    s = RobotState(5.0, 5.0, 0.0)
    for _ in range(n):
        s = step_robot(s, (1.0, 1.0), 2 * math.pi / n, hall)
    assert math.hypot(s.x - 5.0, s.y - 5.0) < 1e-3
    assert s.distance == pytest.approx(2 * math.pi)


def test_bad_dt(hall):
    with pytest.raises(ValueError):
        step_robot(RobotState(5, 5, 0), (1, 0), 0.0, hall)


def test_random_walk_open_space_mostly_forward():
    grid = box_map(2000, 2000, 0.1)
    pol = RandomWalkPolicy()
    rng = np.random.default_rng(0)
    s = RobotState(100.0, 100.0, 0.0)
    forward = 0
    for _ in range(1000):
        cmd = pol(s, grid, rng)
        forward += cmd[0] > 0
        s = step_robot(s, cmd, 0.05, grid)
    assert forward > 900


def test_random_walk_turns_at_wall():
    grid = box_map(40, 40, 0.1, blocks=[(23, 40, 0, 40)])
    cmd = RandomWalkPolicy()(RobotState(2.0, 2.0, 0.0), grid, np.random.default_rng(1))
    assert cmd[0] == 0.0 and cmd[1] != 0.0


def test_random_walk_deterministic(office):
    def run(seed):
        pol, rng = RandomWalkPolicy(), np.random.default_rng(seed)
        s = RobotState(*random_free_pose(office, np.random.default_rng(0)))
        out = []
        for _ in range(300):
            cmd = pol(s, office, rng)
            out.append(cmd)
            s = step_robot(s, cmd, 0.05, office)
        return out
    assert run(5) == run(5)


def test_waypoint_policy_reaches_targets(hall):
    pol = WaypointPolicy([(6.0, 5.0), (6.0, 7.0)])
    s = RobotState(5.0, 5.0, 0.0)
    for _ in range(400):
        s = step_robot(s, pol(s, hall), 0.05, hall)
    assert pol.done
    assert math.hypot(s.x - 6.0, s.y - 7.0) <= 0.1


def test_zero_noise_odometry_is_exact():
    d = OdometryDelta(0.1, -0.02, 0.3)
    assert odometry_measurement(d, OdometryNoiseModel(0, 0, 0), np.random.default_rng(0)) == d


def test_translation_noise_std_monte_carlo():
    rng = np.random.default_rng(7)
    model = OdometryNoiseModel(0.05, 0.0, 0.0)
    d = OdometryDelta(1.0, 0.0, 0.0)
    err = np.array([odometry_measurement(d, model, rng).u - 1.0 for _ in range(10000)])
    assert err.std() == pytest.approx(0.05, rel=0.1)
    assert abs(err.mean()) < 0.005


def test_pure_rotation_has_no_translation_noise():
    rng = np.random.default_rng(0)
    m = odometry_measurement(OdometryDelta(0, 0, 0.5), OdometryNoiseModel(0.1, 0.1, 0.0), rng)
    assert m.u == 0.0 and m.v == 0.0 and m.w != 0.5


def test_negative_noise_rejected():
    with pytest.raises(ValueError):
        OdometryNoiseModel(-0.1, 0, 0)


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-3, 3), st.floats(-5, 5), st.floats(-5, 5),
       st.floats(-3, 3))
def test_relative_delta_inverts_compose(x, y, th, u, v, w):
    p1 = compose_pose((x, y, th), OdometryDelta(u, v, w))
    d = relative_delta((x, y, th), p1)
    p2 = compose_pose((x, y, th), d)
    np.testing.assert_allclose(p2[:2], p1[:2], atol=1e-9)
    assert math.cos(p2[2] - p1[2]) == pytest.approx(1.0)


def test_empty_room_scan_matches_rectangle():
    grid = box_map(60, 40, 0.1)
    pose = (3.0, 2.0, 0.0)
    scan = simulate_scan(grid, pose, 72, 2 * math.pi, 20.0)
    # interior free region is [0.1, 5.9] x [0.1, 3.9]
    for a, r in zip(scan.angles, scan.ranges):
        c, s = math.cos(a), math.sin(a)
        tx = (5.9 - 3.0) / c if c > 1e-12 else ((0.1 - 3.0) / c if c < -1e-12 else math.inf)
        ty = (3.9 - 2.0) / s if s > 1e-12 else ((0.1 - 2.0) / s if s < -1e-12 else math.inf)
        assert abs(r - min(tx, ty)) <= 0.1 * math.sqrt(2)


def test_scan_determinism_and_clamp():
    grid = box_map(1000, 1000, 0.1)
    a = simulate_scan(grid, (50.0, 50.0, 0.2), 90, 2 * math.pi, 1.0)
    b = simulate_scan(grid, (50.0, 50.0, 0.2), 90, 2 * math.pi, 1.0)
    np.testing.assert_array_equal(a.ranges, b.ranges)
    assert np.all(a.ranges == 1.0)


def test_scan_from_occupied_pose_raises():
    grid = box_map(20, 20, 0.1)
    with pytest.raises(InvalidOriginError):
        simulate_scan(grid, (0.05, 0.05, 0.0), 10)


def test_scan_noise_only_on_hits_and_clipped():
    grid = box_map(40, 40, 0.1)
    rng = np.random.default_rng(0)
    clean = simulate_scan(grid, (1.0, 2.0, 0.0), 90, 2 * math.pi, 2.0)
    noisy = simulate_scan(grid, (1.0, 2.0, 0.0), 90, 2 * math.pi, 2.0, 0.05, rng)
    miss = clean.ranges >= 2.0
    assert miss.any() and (~miss).any()
    np.testing.assert_array_equal(noisy.ranges[miss], 2.0)
    assert np.any(noisy.ranges[~miss] != clean.ranges[~miss])
    assert noisy.ranges.max() <= 2.0 and noisy.ranges.min() >= 0
    with pytest.raises(ValueError):
        simulate_scan(grid, (1.0, 2.0, 0.0), 90, 2 * math.pi, 2.0, 0.05)


def test_limited_fov_angles():
    grid = box_map(40, 40, 0.1)
    s = simulate_scan(grid, (2.0, 2.0, 0.0), 181, math.pi, 8.0)
    assert s.angles[0] == pytest.approx(-math.pi / 2) and s.angles[-1] == pytest.approx(math.pi / 2)


def test_random_free_pose_respects_margin(office):
    rng = np.random.default_rng(3)
    field = office.distance_field()
    for _ in range(100):
        x, y, th = random_free_pose(office, rng, 0.3)
        i, j = office.cell_of(x, y)
        assert field.values[j, i] >= 0.3 and -math.pi <= th <= math.pi


def run_sim(grid, seed, steps, noise=OdometryNoiseModel()):
    rng = np.random.default_rng(seed)
    sim = Simulation(grid, RobotState(*random_free_pose(grid, rng)), RandomWalkPolicy(), rng, noise)
    return sim, [sim.advance() for _ in range(steps)]


def test_truth_never_enters_obstacles(office):
    rng = np.random.default_rng(11)
    sim = Simulation(office, RobotState(*random_free_pose(office, rng)), RandomWalkPolicy(), rng)
    last = 0.0
    for _ in range(4000):
        sim.advance()
        assert office.is_free(sim.state.x, sim.state.y)
        assert sim.state.distance >= last
        last = sim.state.distance


def test_noise_free_dead_reckoning_matches_truth(office):
    sim, steps = run_sim(office, 2, 2000, OdometryNoiseModel(0, 0, 0))
    rng = np.random.default_rng(2)
    pose = random_free_pose(office, rng)
    for _, meas in steps:
        pose = compose_pose(pose, meas)
    np.testing.assert_allclose(pose[:2], sim.state.pose[:2], atol=1e-9)
    assert math.cos(pose[2] - sim.state.theta) == pytest.approx(1.0)


def test_seeded_runs_are_bit_identical(office):
    a, sa = run_sim(office, 9, 500)
    b, sb = run_sim(office, 9, 500)
    assert sa == sb and a.state == b.state
    np.testing.assert_array_equal(a.scan().ranges, b.scan().ranges)


def test_trajectory_round_trip(tmp_path):
    rows = [(0.05 * k, 1.0 + k, 2.0, 0.1, 0.01, 0.0, -0.002) for k in range(5)]
    write_trajectory(tmp_path / "t.csv", rows)
    back = read_trajectory(tmp_path / "t.csv")
    np.testing.assert_allclose(back, np.array(rows), atol=1e-6)
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "t,x,y,theta,odom_u,odom_v,odom_w"


def test_scan_config_defaults():
    c = ScanConfig()
    assert c.beam_count == 180 and c.max_range == 8.0
