import numpy as np
import pytest

from rigfusion import quat, se3
from rigfusion.se3 import Pose, compose, delta, inverse
from rigfusion.simulate import (
    CAMERA,
    CONTROLLER1,
    CONTROLLER2,
    NoiseModel,
    RigConfig,
    TrajectoryParams,
    add_noise,
    build_scene,
    load_scene,
    observe_target,
    propagate_rig,
    save_scene,
    square_trajectory,
)

TARGET = Pose([1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.5])


class TestRigConfig:
    def test_default_geometry(self):
        rig = RigConfig.default()
        assert abs(np.linalg.norm(rig.tf_wm.t) - 0.526) < 1e-12
        assert abs(np.degrees(quat.rotation_angle(rig.tf_wm.q)) - 179.5) < 1e-9

    def test_tf_wm_consistency(self):
        rig = RigConfig.default()
        d = delta(rig.tf_wm, compose(rig.tf_wm1_cam, inverse(rig.tf_wm2_cam)))
        assert d.translation_error < 1e-12
        assert d.rotation_error < 1e-12

    def test_camera_below_controllers(self):
        rig = RigConfig.default()
        # camera sits 0.9 m down the world +z axis from the controller bar
        wm1 = inverse(rig.tf_wm1_cam)
        assert abs(wm1.t[2] + 0.9) < 1e-12


class TestSquareTrajectory:
    def test_bounding_box_spans_edge(self):
        traj = square_trajectory(1.0, 10.0, 100.0)
        spans = traj.translations.max(axis=0) - traj.translations.min(axis=0)
        assert abs(spans[0] - 1.0) < 1e-9
        assert abs(spans[1] - 1.0) < 1e-9

    def test_sample_count_and_spacing(self):
        traj = square_trajectory(1.0, 10.0, 100.0)
        assert len(traj) == 1000
        assert np.allclose(np.diff(traj.times), 0.01, atol=1e-12)

    def test_rotation_content_all_axes(self):
        # numerically integrate the body angular rate over one period
        traj = square_trajectory(1.0, 10.0, 100.0)
        rel = quat.mul(quat.conjugate(traj.quaternions[:-1]), traj.quaternions[1:])
        steps = np.abs(quat.to_rotvec(rel))
        total = np.degrees(steps.sum(axis=0))
        assert np.all(total >= 30.0), total

    def test_rejects_bad_arguments(self):
        for args in [(0.0, 10.0, 100.0), (1.0, -1.0, 100.0), (1.0, 10.0, 0.0)]:
            with pytest.raises(ValueError):
                square_trajectory(*args)


class TestPropagateRig:
    def test_identity_rig_keeps_camera(self):
        rig = RigConfig(Pose.identity(), Pose.identity())
        cam = square_trajectory(1.0, 10.0, 50.0)
        c1, c2 = propagate_rig(cam, rig)
        assert np.array_equal(c1.translations, cam.translations)
        assert np.array_equal(c2.translations, cam.translations)

    def test_constant_controller_separation(self):
        rig = RigConfig.default()
        cam = square_trajectory(1.0, 10.0, 100.0)
        c1, c2 = propagate_rig(cam, rig)
        dist = np.linalg.norm(c1.translations - c2.translations, axis=1)
        assert np.max(np.abs(dist - 0.526)) < 1e-12

    def test_chain_closure(self, rng):
        from conftest import random_pose

        rig = RigConfig(random_pose(rng), random_pose(rng))
        cam = square_trajectory(1.0, 10.0, 20.0)
        for ctrl, tf in zip(propagate_rig(cam, rig), (rig.tf_wm1_cam, rig.tf_wm2_cam)):
            for i in range(0, len(cam), 37):
                d = delta(compose(ctrl.pose(i), tf), cam.pose(i))
                assert d.translation_error < 1e-12
                assert d.rotation_error < 1e-10


class TestAddNoise:
    def test_zero_sigma_is_identity(self):
        traj = square_trajectory(1.0, 10.0, 50.0)
        noisy = add_noise(traj, NoiseModel(0.0, 0.0, 1))
        assert np.array_equal(noisy.translations, traj.translations)
        assert np.array_equal(noisy.quaternions, traj.quaternions)

    def test_translation_sigma_reproduced(self):
        traj = square_trajectory(1.0, 100.0, 100.0)  # 10^4 samples
        noisy = add_noise(traj, NoiseModel(1e-3, 0.0, 2))
        err = noisy.translations - traj.translations
        std = err.std(axis=0)
        assert np.all(np.abs(std - 1e-3) < 0.05e-3), std

    def test_deterministic_for_fixed_seed(self):
        traj = square_trajectory(1.0, 10.0, 100.0)
        a = add_noise(traj, NoiseModel(seed=7))
        b = add_noise(traj, NoiseModel(seed=7))
        assert np.array_equal(a.translations, b.translations)
        assert np.array_equal(a.quaternions, b.quaternions)

    def test_noise_is_unbiased(self):
        traj = square_trajectory(1.0, 100.0, 100.0)
        model = NoiseModel(seed=3)
        noisy = add_noise(traj, model)
        terr = (noisy.translations - traj.translations).mean(axis=0)
        assert np.all(np.abs(terr) < 0.1 * model.sigma_translation)
        rel = quat.mul(quat.conjugate(traj.quaternions), noisy.quaternions)
        rerr = np.degrees(quat.to_rotvec(rel)).mean(axis=0)
        assert np.all(np.abs(rerr) < 0.1 * model.sigma_rotation_deg)

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            NoiseModel(-1.0, 0.1, 0)


class TestObserveTarget:
    def test_configured_offset_reproduced_exactly(self, rng):
        from conftest import random_pose

        cam_pose = random_pose(rng)
        offset = random_pose(rng)
        world_target = compose(cam_pose, offset)
        cam = se3.Trajectory(
            CAMERA, np.array([0.0, 1.0]), np.tile(cam_pose.q, (2, 1)), np.tile(cam_pose.t, (2, 1))
        )
        obs = observe_target(cam, world_target, NoiseModel(0.0, 0.0, 0))
        d = delta(obs[0].tf_cam_target, offset)
        assert d.translation_error < 1e-12
        assert d.rotation_error < 1e-10

    def test_noiseless_chain_identity(self):
        cam = square_trajectory(1.0, 10.0, 50.0)
        obs = observe_target(cam, TARGET, NoiseModel(0.0, 0.0, 0))
        for i in range(0, len(cam), 41):
            d = delta(compose(cam.pose(i), obs[i].tf_cam_target), TARGET)
            assert d.translation_error < 1e-12
            assert d.rotation_error < 1e-10

    def test_mean_reconstruction_monte_carlo(self):
        cam = square_trajectory(1.0, 10.0, 100.0)  # 10^3 samples
        obs = observe_target(cam, TARGET, NoiseModel(seed=5))
        recon = [
            compose(cam.pose(i), o.tf_cam_target) for i, o in enumerate(obs)
        ]
        mean = se3.mean_pose(recon)
        assert np.linalg.norm(mean.t - TARGET.t) < 0.2e-3


class TestScene:
    def test_noiseless_end_to_end_closure(self):
        scene = build_scene(
            RigConfig.default(), NoiseModel(0.0, 0.0, 0), TrajectoryParams(duration=10.0), TARGET, 0
        )
        cam = scene.ground_truth[CAMERA]
        c1 = scene.noisy[CONTROLLER1]
        for i in range(0, len(cam), 101):
            # world -> controller -> camera -> target -> world
            recon = compose(
                compose(c1.pose(i), scene.rig.tf_wm1_cam), scene.observations[i].tf_cam_target
            )
            d = delta(recon, scene.world_target)
            assert d.translation_error < 1e-9
            assert d.rotation_error < 1e-7

    def test_replay_is_bit_exact(self):
        kwargs = dict(
            rig=RigConfig.default(),
            noise=NoiseModel(),
            trajectory=TrajectoryParams(duration=5.0),
            world_target=TARGET,
            seed=11,
        )
        a = build_scene(**kwargs)
        b = build_scene(**kwargs)
        for body in (CONTROLLER1, CONTROLLER2):
            assert np.array_equal(a.noisy[body].translations, b.noisy[body].translations)
            assert np.array_equal(a.noisy[body].quaternions, b.noisy[body].quaternions)
        assert all(
            np.array_equal(x.tf_cam_target.q, y.tf_cam_target.q)
            for x, y in zip(a.observations, b.observations)
        )

    def test_controller_noise_streams_independent(self):
        scene = build_scene(
            RigConfig.default(), NoiseModel(), TrajectoryParams(duration=5.0), TARGET, 0
        )
        e1 = scene.noisy[CONTROLLER1].translations - scene.ground_truth[CONTROLLER1].translations
        e2 = scene.noisy[CONTROLLER2].translations - scene.ground_truth[CONTROLLER2].translations
        corr = np.corrcoef(e1.ravel(), e2.ravel())[0, 1]
        assert abs(corr) < 0.1

    def test_bundle_roundtrip(self, tmp_path):
        scene = build_scene(
            RigConfig.default(), NoiseModel(), TrajectoryParams(duration=5.0), TARGET, 3
        )
        save_scene(scene, tmp_path)
        back = load_scene(tmp_path)
        assert back.seed == scene.seed
        assert np.array_equal(
            back.noisy[CONTROLLER1].quaternions, scene.noisy[CONTROLLER1].quaternions
        )
        assert np.array_equal(
            back.ground_truth[CAMERA].translations, scene.ground_truth[CAMERA].translations
        )
        assert len(back.observations) == len(scene.observations)
        d = delta(back.rig.tf_wm1_cam, scene.rig.tf_wm1_cam)
        assert d.translation_error == 0.0
