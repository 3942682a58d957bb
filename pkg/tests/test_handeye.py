import numpy as np
import pytest

from rigfusion import handeye, quat, se3
from rigfusion.errors import (
    DegenerateMotionError,
    InsufficientDataError,
    InsufficientMotionError,
)
from rigfusion.se3 import Pose, compose, delta, inverse
from rigfusion.simulate import (
    CONTROLLER1,
    CONTROLLER2,
    NoiseModel,
    RigConfig,
    TrajectoryParams,
    build_scene,
)

from conftest import random_pose

TARGET = Pose([1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.5])


def noiseless_samples(rig=None, duration=120.0, interval=0.5):
    rig = rig or RigConfig.default()
    scene = build_scene(rig, NoiseModel(0.0, 0.0, 0), TrajectoryParams(duration=duration), TARGET, 0)
    return (
        handeye.collect_samples(
            scene.ground_truth[CONTROLLER1],
            scene.ground_truth[CONTROLLER2],
            scene.observations,
            interval,
        ),
        scene,
    )


def synthetic_pairs(x: Pose, motions: list[Pose]) -> list[handeye.MotionPair]:
    inv_x = inverse(x)
    pairs = []
    for a in motions:
        b = compose(inv_x, compose(a, x))
        pairs.append(
            handeye.MotionPair(a, b, float(np.degrees(quat.rotation_angle(a.q))))
        )
    return pairs


class TestBuildMotionPairs:
    def test_static_rig_raises(self):
        pose = Pose.identity()
        samples = [
            handeye.HandEyeSample(pose, pose, pose, float(i)) for i in range(10)
        ]
        with pytest.raises(InsufficientMotionError):
            handeye.build_motion_pairs(samples, 1, 5.0)

    def test_noiseless_pairs_satisfy_hand_eye_equation(self):
        samples, scene = noiseless_samples()
        for controller, x in ((1, scene.rig.tf_wm1_cam), (2, scene.rig.tf_wm2_cam)):
            pairs = handeye.build_motion_pairs(samples[:50], controller, 5.0)
            for pair in pairs:
                d = delta(compose(pair.hand_motion, x), compose(x, pair.eye_motion))
                assert d.translation_error < 1e-12
                assert d.rotation_error < 1e-10

    def test_min_rotation_filters(self):
        samples, _ = noiseless_samples()
        few = handeye.build_motion_pairs(samples[:50], 1, 5.0)
        fewer = handeye.build_motion_pairs(samples[:50], 1, 40.0)
        assert len(fewer) < len(few)
        assert all(p.rotation_angle >= 40.0 for p in fewer)


class TestSolveTsai:
    def test_noiseless_exact_recovery(self, rng):
        for _ in range(10):
            x = random_pose(rng, trans_scale=0.5)
            motions = [
                Pose(quat.from_rotvec(rng.normal(0, 0.5, 3)), rng.uniform(-0.3, 0.3, 3))
                for _ in range(8)
            ]
            sol = handeye.solve_tsai(synthetic_pairs(x, motions))
            d = delta(sol.tf_wm_cam, x)
            assert d.translation_error < 1e-9
            assert d.rotation_error < 1e-7

    def test_single_axis_motion_rejected(self, rng):
        x = random_pose(rng, trans_scale=0.3)
        motions = [
            Pose(quat.from_rotvec([0.0, 0.0, 0.2 + 0.1 * i]), [0.1 * i, 0.0, 0.0])
            for i in range(6)
        ]
        with pytest.raises(DegenerateMotionError):
            handeye.solve_tsai(synthetic_pairs(x, motions))

    def test_duplicate_pairs_rejected(self, rng):
        x = random_pose(rng, trans_scale=0.3)
        motion = Pose(quat.from_rotvec([0.3, 0.1, 0.0]), [0.1, 0.0, 0.2])
        with pytest.raises(DegenerateMotionError):
            handeye.solve_tsai(synthetic_pairs(x, [motion] * 5))

    def test_too_few_pairs_rejected(self, rng):
        x = random_pose(rng)
        motions = [Pose(quat.from_rotvec([0.3, 0.1, 0.0]), [0.1, 0.0, 0.2])]
        with pytest.raises(InsufficientMotionError):
            handeye.solve_tsai(synthetic_pairs(x, motions))

    def test_noisy_error_magnitude(self):
        # default-noise block of 50 samples: X error should be millimetric
        rig = RigConfig.default()
        scene = build_scene(rig, NoiseModel(), TrajectoryParams(duration=40.0), TARGET, 1)
        samples = handeye.collect_samples(
            scene.noisy[CONTROLLER1], scene.noisy[CONTROLLER2], scene.observations, 0.5
        )
        pairs = handeye.build_motion_pairs(samples[:50], 1, 5.0)
        sol = handeye.solve_tsai(pairs)
        d = delta(sol.tf_wm_cam, rig.tf_wm1_cam)
        assert 0.2e-3 < d.translation_error < 8e-3
        assert 0.01 < d.rotation_error < 0.5
        assert sol.residual_rotation > 0.0
        assert sol.residual_translation > 0.0

    def test_world_frame_equivariance(self, rng):
        samples, scene = noiseless_samples()
        block = samples[:30]
        sol = handeye.solve_tsai(handeye.build_motion_pairs(block, 1, 5.0))
        w = random_pose(rng)
        moved = [
            handeye.HandEyeSample(
                compose(w, s.tf_world_wm1), compose(w, s.tf_world_wm2), s.tf_cam_target, s.timestamp
            )
            for s in block
        ]
        sol_moved = handeye.solve_tsai(handeye.build_motion_pairs(moved, 1, 5.0))
        d = delta(sol.tf_wm_cam, sol_moved.tf_wm_cam)
        assert d.translation_error < 1e-9
        assert d.rotation_error < 1e-7


class TestCalibrateRepeated:
    def test_block_structure(self):
        samples, _ = noiseless_samples(duration=510.0)
        sols1, sols2 = handeye.calibrate_repeated(samples, 50, 20, 5.0)
        assert len(sols1) == 20 and len(sols2) == 20
        assert all(s.sample_count == 50 for s in sols1)

    def test_zero_noise_solutions_identical(self):
        samples, scene = noiseless_samples(duration=510.0)
        sols1, _ = handeye.calibrate_repeated(samples, 50, 20, 5.0)
        for sol in sols1:
            d = delta(sol.tf_wm_cam, scene.rig.tf_wm1_cam)
            assert d.translation_error < 1e-9
            assert d.rotation_error < 1e-7

    def test_insufficient_samples_message(self):
        samples, _ = noiseless_samples(duration=30.0)
        with pytest.raises(InsufficientDataError, match="1000"):
            handeye.calibrate_repeated(samples, 50, 20, 5.0)


class TestRefine:
    def test_identical_inputs_return_that_pose(self, rng):
        x = random_pose(rng)
        sols = [handeye.HandEyeSolution(x, 0.0, 0.0, 50) for _ in range(5)]
        got = handeye.refine(sols)
        d = delta(got, x)
        assert d.translation_error < 1e-12
        assert d.rotation_error < 1e-10

    def test_permutation_invariant_bitwise(self, rng):
        truth = random_pose(rng, trans_scale=0.5)
        sols = []
        for _ in range(20):
            dq = quat.from_rotvec(rng.normal(0, 2e-3, 3))
            sols.append(
                handeye.HandEyeSolution(
                    Pose(quat.mul(truth.q, dq), truth.t + rng.normal(0, 2e-3, 3)), 0.1, 1e-3, 50
                )
            )
        a = handeye.refine(sols)
        order = rng.permutation(len(sols))
        b = handeye.refine([sols[i] for i in order])
        assert np.array_equal(a.q, b.q)
        assert np.array_equal(a.t, b.t)

    def test_cost_not_above_mean_pose_initialization(self, rng):
        truth = random_pose(rng, trans_scale=0.5)
        sols = []
        for _ in range(20):
            dq = quat.from_rotvec(rng.normal(0, 5e-3, 3))
            sols.append(
                handeye.HandEyeSolution(
                    Pose(quat.mul(truth.q, dq), truth.t + rng.normal(0, 5e-3, 3)), 0.1, 1e-3, 50
                )
            )
        refined = handeye.refine(sols)

        def cost(p):
            rot = sum(np.radians(delta(p, s.tf_wm_cam).rotation_error) ** 2 for s in sols)
            tr = sum(delta(p, s.tf_wm_cam).translation_error ** 2 for s in sols)
            return rot + tr

        init = se3.mean_pose([s.tf_wm_cam for s in sols])
        assert cost(refined) <= cost(init) + 1e-15

    def test_refine_requires_two(self, rng):
        with pytest.raises(InsufficientDataError):
            handeye.refine([handeye.HandEyeSolution(random_pose(rng), 0.0, 0.0, 50)])

    def test_error_shrinks_with_more_repetitions(self):
        # Monte-Carlo: refined error with 20 inputs beats 5 inputs on average
        rng = np.random.default_rng(42)
        truth = Pose(quat.from_rotvec([0.3, -0.2, 0.5]), [0.2, 0.0, 0.9])
        err5, err20 = [], []
        for _ in range(20):
            sols = []
            for _ in range(20):
                dq = quat.from_rotvec(rng.normal(0, 2e-3, 3))
                sols.append(
                    handeye.HandEyeSolution(
                        Pose(quat.mul(truth.q, dq), truth.t + rng.normal(0, 2e-3, 3)),
                        0.1,
                        1e-3,
                        50,
                    )
                )
            err5.append(delta(handeye.refine(sols[:5]), truth).translation_error)
            err20.append(delta(handeye.refine(sols), truth).translation_error)
        assert np.mean(err20) < np.mean(err5)


class TestRefineTarget:
    def test_noiseless_exact(self):
        scene = build_scene(
            RigConfig.default(), NoiseModel(0.0, 0.0, 0), TrajectoryParams(duration=20.0), TARGET, 0
        )
        got = handeye.refine_target(scene.ground_truth["camera"], scene.observations)
        d = delta(got, TARGET)
        assert d.translation_error < 1e-9
        assert d.rotation_error < 1e-7

    def test_default_noise_monte_carlo(self):
        scene = build_scene(
            RigConfig.default(), NoiseModel(), TrajectoryParams(duration=10.0), TARGET, 2
        )
        got = handeye.refine_target(scene.ground_truth["camera"], scene.observations[:1000])
        d = delta(got, TARGET)
        assert d.translation_error < 0.2e-3
        assert d.rotation_error < 0.02

    def test_single_camera_pose_warns(self, rng):
        cam_pose = random_pose(rng)
        cam = se3.Trajectory(
            "camera",
            np.arange(20) * 0.1,
            np.tile(cam_pose.q, (20, 1)),
            np.tile(cam_pose.t, (20, 1)),
        )
        from rigfusion.simulate import observe_target

        obs = observe_target(cam, TARGET, NoiseModel(seed=1))
        with pytest.warns(UserWarning, match="poorly conditioned"):
            handeye.refine_target(cam, obs)

    def test_insufficient_observations(self):
        scene = build_scene(
            RigConfig.default(), NoiseModel(), TrajectoryParams(duration=5.0), TARGET, 0
        )
        with pytest.raises(InsufficientDataError):
            handeye.refine_target(scene.ground_truth["camera"], scene.observations[:5])


class TestCalibrationReportIo:
    def test_roundtrip(self, tmp_path, rng):
        sols = [
            handeye.HandEyeSolution(random_pose(rng), 0.1, 1e-3, 50) for _ in range(4)
        ]
        result = handeye.RefinedHandEye(
            tf_wm1_cam=random_pose(rng),
            tf_wm2_cam=random_pose(rng),
            solutions_wm1=sols[:2],
            solutions_wm2=sols[2:],
        )
        path = tmp_path / "calibration.json"
        handeye.save_calibration(result, path, extra={"note": 1})
        back = handeye.load_calibration(path)
        assert np.array_equal(back.tf_wm1_cam.q, result.tf_wm1_cam.q)
        assert np.array_equal(back.tf_wm2_cam.t, result.tf_wm2_cam.t)
        assert back.solutions_wm1[0].sample_count == 50
        assert back.solutions_wm2[1].residual_rotation == 0.1
