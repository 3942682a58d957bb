import math

import numpy as np
import pytest

from rigfusion import lighthouse as lh
from rigfusion import quat
from rigfusion.errors import (
    DegenerateGeometryError,
    InsufficientDataError,
    TimeRangeError,
)
from rigfusion.se3 import Pose, Trajectory, delta


def look_at(position, target):
    z = np.asarray(target, dtype=float) - np.asarray(position, dtype=float)
    z /= np.linalg.norm(z)
    up = np.array([0.0, 0.0, -1.0])
    x = np.cross(up, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return Pose(quat.from_matrix(np.stack([x, y, z], axis=-1)), position)


@pytest.fixture(scope="module")
def stations():
    return [
        lh.LighthouseConfig(look_at([-2.1, -1.5, -2.3], [0, 0, 0]), rotor_rate=50.0),
        lh.LighthouseConfig(look_at([2.1, -1.5, -2.3], [0, 0, 0]), rotor_rate=55.0),
    ]


@pytest.fixture(scope="module")
def layout():
    return lh.default_sensor_layout()


class TestTiming:
    def test_center_maps_to_zero(self):
        assert abs(lh.timing_to_angle(0.5 / 50.0, 50.0)) < 1e-12

    def test_five_ms_past_center_is_quarter_turn(self):
        dt = 0.5 / 50.0 + 0.005
        assert abs(lh.timing_to_angle(dt, 50.0) - 0.5 * math.pi) < 1e-12

    def test_round_trip(self):
        for angle in np.linspace(-math.pi, math.pi, 21, endpoint=False):
            dt = lh.angle_to_timing(float(angle), 52.0)
            assert abs(lh.timing_to_angle(dt, 52.0) - angle) < 1e-12

    def test_monotone(self):
        dts = np.linspace(0.0, 1.0 / 52.0, 100, endpoint=False)
        angles = [lh.timing_to_angle(float(dt), 52.0) for dt in dts]
        assert np.all(np.diff(angles) > 0.0)

    def test_out_of_period_rejected(self):
        with pytest.raises(TimeRangeError):
            lh.timing_to_angle(-1e-6, 50.0)
        with pytest.raises(TimeRangeError):
            lh.timing_to_angle(1.0 / 50.0, 50.0)

    def test_rotor_rate_bounds(self):
        with pytest.raises(ValueError):
            lh.LighthouseConfig(Pose.identity(), rotor_rate=45.0)


class TestProjectSensors:
    def test_boresight_sensor_is_origin(self):
        station = lh.LighthouseConfig(Pose.identity())
        single = lh.SensorLayout(np.array([[0.0, 0.0, 1.0]]))
        got = lh.project_sensors(Pose.identity(), single, station)
        assert got[0].horizontal_angle == 0.0
        assert got[0].vertical_angle == 0.0

    def test_45_degree_azimuth(self):
        station = lh.LighthouseConfig(Pose.identity())
        single = lh.SensorLayout(np.array([[1.0, 0.0, 1.0]]))
        got = lh.project_sensors(Pose.identity(), single, station)
        assert abs(got[0].horizontal_angle - math.pi / 4.0) < 1e-12

    def test_matches_frame_transform_oracle(self, rng, stations, layout):
        for _ in range(20):
            body = Pose(quat.from_rotvec(rng.normal(0, 0.3, 3)), rng.uniform(-0.3, 0.3, 3))
            for station in stations:
                got = lh.project_sensors(body, layout, station)
                # brute-force oracle: explicit matrix transforms per point
                r_b = body.rotation_matrix()
                r_l = station.pose.rotation_matrix()
                for m in got:
                    world = r_b @ layout.points[m.sensor_index] + body.t
                    local = r_l.T @ (world - station.pose.t)
                    assert abs(m.horizontal_angle - math.atan2(local[0], local[2])) < 1e-12
                    assert abs(m.vertical_angle - math.atan2(local[1], local[2])) < 1e-12

    def test_sensor_at_station_origin_rejected(self):
        station = lh.LighthouseConfig(Pose.identity())
        single = lh.SensorLayout(np.array([[0.0, 0.0, 0.0]]))
        with pytest.raises(DegenerateGeometryError):
            lh.project_sensors(Pose.identity(), single, station)

    def test_out_of_fov_omitted(self):
        station = lh.LighthouseConfig(Pose.identity(), fov_horizontal=90.0)
        points = lh.SensorLayout(np.array([[0.0, 0.0, 1.0], [2.0, 0.0, 1.0], [0.0, 0.0, -1.0]]))
        got = lh.project_sensors(Pose.identity(), points, station)
        assert [m.sensor_index for m in got] == [0]


class TestSolvePose:
    def test_exact_recovery_from_perturbed_initial(self, rng, stations, layout):
        for _ in range(10):
            body = Pose(quat.from_rotvec(rng.normal(0, 0.2, 3)), rng.uniform(-0.4, 0.4, 3))
            meas = [lh.project_sensors(body, layout, s) for s in stations]
            init = Pose(
                quat.mul(body.q, quat.from_rotvec(rng.normal(0, math.radians(5), 3))),
                body.t + rng.normal(0, 0.05, 3),
            )
            got = lh.solve_pose(meas, layout, stations, init)
            d = delta(got, body)
            assert d.translation_error < 1e-6
            assert d.rotation_error < 1e-5

    def test_monte_carlo_noise_floor(self, stations, layout):
        body = Pose(quat.from_rotvec([0.1, -0.2, 0.3]), [0.1, 0.2, -0.1])
        traj = Trajectory(
            "b", np.arange(100) * 0.01, np.tile(body.q, (100, 1)), np.tile(body.t, (100, 1))
        )
        frames = lh.simulate_sweeps(traj, layout, stations, angle_noise=1e-4, seed=3)
        errs = [
            delta(lh.solve_pose(per, layout, stations, body), body).translation_error
            for per in frames
        ]
        rms = math.sqrt(float(np.mean(np.square(errs))))
        assert rms < 1e-3, rms

    def test_residuals_zero_mean(self, stations, layout):
        body = Pose(quat.from_rotvec([0.05, 0.1, -0.1]), [0.0, 0.1, 0.0])
        traj = Trajectory(
            "b", np.arange(200) * 0.01, np.tile(body.q, (200, 1)), np.tile(body.t, (200, 1))
        )
        sigma = 1e-4
        frames = lh.simulate_sweeps(traj, layout, stations, angle_noise=sigma, seed=9)
        resid = []
        for per in frames:
            sol = lh.solve_pose(per, layout, stations, body)
            r, _ = lh._residuals_jacobian(sol.q, sol.t, per, layout, stations)
            resid.extend(r.tolist())
        assert abs(float(np.mean(resid))) < 0.1 * sigma

    def test_underdetermined_rejected(self, stations, layout):
        station = stations[0]
        two = lh.SensorLayout(layout.points[:2])
        body = Pose.identity()
        meas = [lh.project_sensors(body, two, station)]
        with pytest.raises(InsufficientDataError):
            lh.solve_pose(meas, two, [station], body)

    def test_coplanar_single_station_rejected(self, stations):
        flat = lh.SensorLayout(
            np.array([[0.04, 0, 0], [0, 0.04, 0], [-0.04, 0, 0], [0, -0.04, 0], [0.02, 0.02, 0]])
        )
        meas = [lh.project_sensors(Pose.identity(), flat, stations[0])]
        with pytest.raises(DegenerateGeometryError):
            lh.solve_pose(meas, flat, [stations[0]], Pose.identity())


class TestTrackingAndIo:
    def test_track_trajectory_follows_motion(self, stations, layout):
        times = np.arange(40) * 0.02
        qs = quat.from_rotvec(np.outer(np.sin(times), [0.1, 0.2, -0.1]))
        ts = np.stack([0.2 * np.sin(times), 0.2 * np.cos(times), np.zeros_like(times)], axis=-1)
        truth = Trajectory("b", times, qs, ts)
        frames = lh.simulate_sweeps(truth, layout, stations)
        got = lh.track_trajectory(frames, times, layout, stations, truth.pose(0))
        for i in range(len(truth)):
            d = delta(got.pose(i), truth.pose(i))
            assert d.translation_error < 1e-6
            assert d.rotation_error < 1e-5

    def test_sweep_file_roundtrip(self, stations, layout, tmp_path):
        body = Pose(quat.from_rotvec([0.1, 0.0, 0.2]), [0.1, -0.1, 0.0])
        times = np.arange(5) * 0.1
        traj = Trajectory("b", times, np.tile(body.q, (5, 1)), np.tile(body.t, (5, 1)))
        frames = lh.simulate_sweeps(traj, layout, stations, angle_noise=1e-4, seed=1)
        path = tmp_path / "sweeps.txt"
        lh.save_sweeps(frames, times, path)
        back, back_times = lh.load_sweeps(path)
        assert np.array_equal(back_times, times)
        assert len(back) == len(frames)
        for a_frame, b_frame in zip(frames, back):
            for a_lh, b_lh in zip(a_frame, b_frame):
                assert [m.sensor_index for m in a_lh] == [m.sensor_index for m in b_lh]
                assert all(
                    a.horizontal_angle == b.horizontal_angle and a.vertical_angle == b.vertical_angle
                    for a, b in zip(a_lh, b_lh)
                )
