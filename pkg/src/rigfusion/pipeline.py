"""Stage orchestration behind the CLI: each stage reads and writes only the
documented bundle files, so stages can be rerun or substituted independently.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import handeye, metrics, se3, simulate, ukf
from .config import PipelineConfig
from .errors import ConfigError
from .se3 import transform_trajectory
from .simulate import SimScene

CALIBRATION_FILE = "calibration.json"
FUSED_FILE = "fused.txt"
DIAGNOSTICS_FILE = "fused_diagnostics.csv"
EVALUATION_FILE = "evaluation.json"
SUMMARY_FILE = "summary.txt"


def seed_dir(run_dir, seed: int) -> Path:
    return Path(run_dir) / f"seed_{seed:04d}"


def discover_seed_dirs(run_dir) -> list[Path]:
    run_dir = Path(run_dir)
    subs = sorted(p for p in run_dir.glob("seed_*") if p.is_dir())
    if subs:
        return subs
    if (run_dir / simulate.SCENE_META_FILE).exists():
        return [run_dir]
    raise ConfigError(f"no scene bundles found under {run_dir}")


def fan_out(fn, items, workers: int | None = None):
    """Map fn over independent per-dataset work items on worker threads;
    results keep the input order, so output stays deterministic."""
    items = list(items)
    if len(items) == 1:
        return [fn(items[0])]
    workers = workers or min(len(items), os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# simulate

def run_simulate(cfg: PipelineConfig, out_dir, seeds: list[int]) -> list[Path]:
    def one(seed: int) -> Path:
        scene = simulate.build_scene(
            cfg.rig.build(),
            cfg.noise.build(seed),
            cfg.trajectory.build(),
            cfg.target.build(),
            seed,
        )
        directory = seed_dir(out_dir, seed)
        simulate.save_scene(scene, directory)
        return directory

    return fan_out(one, seeds)


# ---------------------------------------------------------------------------
# calibrate

def _calibration_truth_errors(result: handeye.RefinedHandEye, scene: SimScene) -> dict:
    out = {}
    for name, sols, refined, truth in (
        ("controller1", result.solutions_wm1, result.tf_wm1_cam, scene.rig.tf_wm1_cam),
        ("controller2", result.solutions_wm2, result.tf_wm2_cam, scene.rig.tf_wm2_cam),
    ):
        raw = [se3.delta(s.tf_wm_cam, truth) for s in sols]
        ref = se3.delta(refined, truth)
        factor = metrics.improvement_factor(sols, refined, truth)
        out[name] = {
            "raw_mean_mm": float(np.mean([d.translation_error for d in raw])) * metrics.MM,
            "raw_mean_deg": float(np.mean([d.rotation_error for d in raw])),
            "refined_mm": ref.translation_error * metrics.MM,
            "refined_deg": ref.rotation_error,
            "improvement_translation": factor[0],
            "improvement_rotation": factor[1],
        }
    return out


def run_calibrate(scene_path: Path, cfg: PipelineConfig) -> Path:
    scene = simulate.load_scene(scene_path)
    samples = handeye.collect_samples(
        scene.noisy[simulate.CONTROLLER1],
        scene.noisy[simulate.CONTROLLER2],
        scene.observations,
        cfg.handeye.sample_interval_s,
    )
    result = handeye.calibrate(
        samples,
        set_size=cfg.handeye.set_size,
        repetitions=cfg.handeye.repetitions,
        min_rotation=cfg.handeye.min_rotation_deg,
        rotation_weight=cfg.handeye.rotation_weight,
    )
    extra = {"errors_vs_truth": _calibration_truth_errors(result, scene)}
    out = Path(scene_path) / CALIBRATION_FILE
    handeye.save_calibration(result, out, extra=extra)
    return out


# ---------------------------------------------------------------------------
# fuse

def _measurement_streams(
    scene: SimScene, calib: handeye.RefinedHandEye, cfg: PipelineConfig
) -> tuple[list, list]:
    sig_t = cfg.ukf.meas_sigma_translation_m
    sig_r = cfg.ukf.meas_sigma_rotation_deg
    if sig_t is None:
        sig_t = scene.noise.sigma_translation
    if sig_r is None:
        sig_r = scene.noise.sigma_rotation_deg
    streams = []
    for sid, (body, tf) in enumerate(
        ((simulate.CONTROLLER1, calib.tf_wm1_cam), (simulate.CONTROLLER2, calib.tf_wm2_cam)), 1
    ):
        cam = transform_trajectory(scene.noisy[body], tf, body_id=f"camera_from_{body}")
        noise = ukf.measurement_noise(sig_t, sig_r, tf.t)
        streams.append(
            [
                ukf.PoseMeasurement(
                    float(t) + cfg.ukf.time_offset_s, cam.pose(i), noise, sid
                )
                for i, t in enumerate(cam.times)
            ]
        )
    return streams[0], streams[1]


def run_fuse(scene_path: Path, calibration_path, cfg: PipelineConfig) -> Path:
    scene = simulate.load_scene(scene_path)
    calib = handeye.load_calibration(calibration_path)
    stream1, stream2 = _measurement_streams(scene, calib, cfg)
    diagnostics: list = []
    fused = ukf.run(stream1, stream2, cfg.ukf.build(), diagnostics=diagnostics)
    out = Path(scene_path) / FUSED_FILE
    se3.save_trajectory(fused, out)
    with open(Path(scene_path) / DIAGNOSTICS_FILE, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("timestamp,innovation_norm,trace_cov\n")
        for t, innov, trace in diagnostics:
            fh.write(f"{float(t)!r},{float(innov)!r},{float(trace)!r}\n")
    return out


# ---------------------------------------------------------------------------
# evaluate

def run_evaluate(scene_path: Path, fused_path, calibration_path, cfg: PipelineConfig) -> Path:
    scene_path = Path(scene_path)
    scene = simulate.load_scene(scene_path)
    calib = handeye.load_calibration(calibration_path)
    fused = se3.load_trajectory(fused_path)
    cam_truth = scene.ground_truth[simulate.CAMERA]

    tracking = metrics.stability(
        scene.noisy[simulate.CONTROLLER1], scene.noisy[simulate.CONTROLLER2]
    )
    cam1 = transform_trajectory(scene.noisy[simulate.CONTROLLER1], calib.tf_wm1_cam, "camera_c1")
    cam2 = transform_trajectory(scene.noisy[simulate.CONTROLLER2], calib.tf_wm2_cam, "camera_c2")
    cams = metrics.stability(cam1, cam2)

    acc = metrics.AccuracyReport(
        {
            "controller1": metrics.accuracy(cam1, cam_truth),
            "controller2": metrics.accuracy(cam2, cam_truth),
            "fused": metrics.accuracy(fused, cam_truth),
        }
    )

    target_est = handeye.refine_target(fused, scene.observations)
    target_err = se3.delta(target_est, scene.world_target)

    with open(scene_path / CALIBRATION_FILE, "r", encoding="utf-8") as fh:
        import json

        calib_errors = json.load(fh).get("errors_vs_truth", {})

    evaluation = {
        "tracking_stability": tracking.to_dict(),
        "camera_consistency": cams.to_dict(),
        "accuracy": acc.to_dict(),
        "calibration_errors": calib_errors,
        "target_refinement": {
            "error_mm": target_err.translation_error * metrics.MM,
            "error_deg": target_err.rotation_error,
        },
    }
    out = scene_path / EVALUATION_FILE
    metrics.save_report(evaluation, out)

    metrics.write_series_csv(
        scene_path / "tracking_stability_series.csv",
        tracking.timestamps,
        tracking.distances_mm,
        tracking.angles_deg,
    )
    metrics.write_series_csv(
        scene_path / "camera_consistency_series.csv",
        cams.timestamps,
        cams.distances_mm,
        cams.angles_deg,
    )
    for name, stats in acc.per_source.items():
        metrics.write_series_csv(
            scene_path / f"accuracy_{name}_series.csv",
            stats.timestamps,
            stats.errors_mm,
            stats.errors_deg,
        )
    metrics.write_table_csv(
        scene_path / "stability_table.csv",
        ["series", "mean_mm", "eps_max_mm", "std_mm", "mean_deg", "eps_max_deg", "std_deg"],
        [
            [
                "controllers",
                tracking.mean_distance,
                tracking.max_deviation[0],
                tracking.std_deviation[0],
                tracking.mean_angle,
                tracking.max_deviation[1],
                tracking.std_deviation[1],
            ],
            [
                "cameras",
                cams.mean_distance,
                cams.max_deviation[0],
                cams.std_deviation[0],
                cams.mean_angle,
                cams.max_deviation[1],
                cams.std_deviation[1],
            ],
        ],
    )
    metrics.write_table_csv(
        scene_path / "accuracy_table.csv",
        ["source", "mean_mm", "max_mm", "std_mm", "mean_deg", "max_deg", "std_deg"],
        [
            [name, st.mean[0], st.max[0], st.std[0], st.mean[1], st.max[1], st.std[1]]
            for name, st in acc.per_source.items()
        ],
    )
    return out


# ---------------------------------------------------------------------------
# report

def _aggregate(values: list[float]) -> float:
    return float(np.mean(values))


def run_report(run_dir, cfg: PipelineConfig) -> tuple[str, bool]:
    dirs = discover_seed_dirs(run_dir)
    evals = []
    for d in dirs:
        path = d / EVALUATION_FILE
        if not path.exists():
            raise ConfigError(f"missing {EVALUATION_FILE} in {d}; run evaluate first")
        evals.append(metrics.load_report(path))

    agg = {
        "tracking_eps_max_mm": _aggregate([e["tracking_stability"]["max_deviation_mm"] for e in evals]),
        "tracking_eps_max_deg": _aggregate([e["tracking_stability"]["max_deviation_deg"] for e in evals]),
        "tracking_std_mm": _aggregate([e["tracking_stability"]["std_deviation_mm"] for e in evals]),
        "tracking_std_deg": _aggregate([e["tracking_stability"]["std_deviation_deg"] for e in evals]),
        "cams_mean_mm": _aggregate([e["camera_consistency"]["mean_distance_mm"] for e in evals]),
        "cams_mean_deg": _aggregate([e["camera_consistency"]["mean_angle_deg"] for e in evals]),
        "fused_mean_mm": _aggregate([e["accuracy"]["fused"]["mean_mm"] for e in evals]),
        "fused_mean_deg": _aggregate([e["accuracy"]["fused"]["mean_deg"] for e in evals]),
        "improvement_translation_min": _aggregate(
            [
                0.5
                * (
                    e["calibration_errors"]["controller1"]["improvement_translation"]
                    + e["calibration_errors"]["controller2"]["improvement_translation"]
                )
                for e in evals
            ]
        ),
    }

    # no absolute paths in the summary: identical config + seed must yield a
    # byte-identical report wherever the run lives
    lines = [f"datasets: {len(evals)}", ""]
    ok = True
    for key, value in agg.items():
        lo, hi = cfg.report.thresholds[key]
        passed = lo <= value <= hi
        ok &= passed
        hi_txt = "inf" if hi == float("inf") else f"{hi:.2f}"
        lines.append(
            f"{'PASS' if passed else 'FAIL'}  {key:<32} {value:8.3f}  (band [{lo:.2f}, {hi_txt}])"
        )
    lines.append("")
    lines.append("RESULT: " + ("PASS" if ok else "FAIL"))
    text = "\n".join(lines) + "\n"
    with open(Path(run_dir) / SUMMARY_FILE, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return text, ok
