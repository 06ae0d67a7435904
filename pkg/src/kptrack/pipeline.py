"""File-level pipeline behind the CLI: generate runs, evaluate them, aggregate reports.

All outputs are deterministic given inputs and config, and independent of
the number of worker threads (``KPTRACK_THREADS``).
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

from .affine import fit_all_pairs
from .config import EvaluationConfig, KptrackConfig, SimulationConfig
from .errors import ConfigError, DataError
from .metrics import (
    ThresholdConfig,
    TrackingReport,
    VelocityConfig,
    aggregate_runs,
    associate,
    error_matrix,
    per_episode_errors,
    rethreshold,
    tracking_report,
    velocity_consistency,
)
from .sim import KeypointSynthConfig, MotionConfig, generate_gt, random_affine, synthesize_keypoints
from .stats import box_summary, bootstrap_ci, gaussian_smooth, iqm
from .trajectory import RunRecord, Snapshot, atomic_write_text, load_run, save_episode, save_run_manifest

log = logging.getLogger(__name__)

CSV_COLUMNS = ["run_id", "object", "best_keypoint", "error", "threshold", "tracked", "tc"]

T = TypeVar("T")
R = TypeVar("R")


def thread_count() -> int:
    raw = os.environ.get("KPTRACK_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigError(f"KPTRACK_THREADS must be an integer, got {raw!r}") from exc
    if value < 1:
        raise ConfigError(f"KPTRACK_THREADS must be >= 1, got {value}")
    return value


def parallel_map(fn: Callable[[T], R], items: Sequence[T], workers: int | None = None) -> list[R]:
    """Order-preserving map; runs inline when a single worker is allowed."""
    workers = thread_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def _dump_json(doc) -> str:
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def _csv_text(rows: Iterable[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


# --------------------------------------------------------------------------
# generate

_GT_TAG, _KP_TAG, _TF_TAG = 1, 2, 3


def _generate_run(sim: SimulationConfig, seed: int, run_index: int, out_dir: Path) -> Path:
    run_id = f"run_{run_index:03d}"
    run_dir = out_dir / run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    names = list(sim.objects)

    tf_rng = np.random.default_rng(_derive_seed(seed, run_index, _TF_TAG))
    transforms = [random_affine(tf_rng) if sim.random_transforms else (np.eye(2), np.zeros(2)) for _ in names]

    # one fixed held-out episode set per run, re-encoded at every epoch
    ground_truth = []
    for ep in range(sim.num_episodes):
        per_object = []
        for k, name in enumerate(names):
            motion = MotionConfig(
                num_objects=1,
                steps=sim.steps,
                policy=sim.object_policies.get(name, "smoothed_random_walk"),
                step_std=sim.step_std,
                initial_speed_std=sim.initial_speed_std,
                box=tuple(sim.box),
                seed=_derive_seed(seed, run_index, _GT_TAG, ep, k),
            )
            per_object.append(generate_gt(motion)[0])
        ground_truth.append(np.stack(per_object))

    snapshots = []
    provenance = None
    for e_idx, epoch in enumerate(sim.epochs):
        epoch_dir = run_dir / f"epoch_{epoch:04d}"
        epoch_dir.mkdir(exist_ok=True)
        rel_paths = []
        for ep, gt in enumerate(ground_truth):
            synth = synthesize_keypoints(
                gt,
                KeypointSynthConfig(
                    transforms=transforms,
                    noise_std=sim.noise_for_epoch(e_idx),
                    num_distractors=sim.num_distractors,
                    distractor_policy=sim.distractor_policy,
                    distractor_step_std=sim.step_std,
                    seed=_derive_seed(seed, run_index, _KP_TAG, e_idx, ep),
                ),
                object_names=names,
                episode_id=f"{run_id}/epoch_{epoch:04d}/ep_{ep:03d}",
            )
            provenance = synth.provenance
            path = epoch_dir / f"ep_{ep:03d}.json"
            save_episode(synth.episode, path)
            rel_paths.append(path.relative_to(run_dir).as_posix())
        snapshots.append((epoch, rel_paths))

    truth = {
        "run_id": run_id,
        "provenance": list(provenance),
        "transforms": [{"A": A.tolist(), "b": b.tolist()} for A, b in transforms],
    }
    atomic_write_text(run_dir / "truth.json", _dump_json(truth))
    manifest = run_dir / "manifest.json"
    save_run_manifest(manifest, run_id, seed, snapshots)
    return manifest


def generate(config: KptrackConfig, out_dir: str | os.PathLike, seed: int | None = None) -> list[Path]:
    """Write synthetic runs under ``out_dir``; returns the manifest paths."""
    sim = config.simulation
    seed = sim.seed if seed is None else seed
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return parallel_map(lambda r: _generate_run(sim, seed, r, out), list(range(sim.num_runs)))


# --------------------------------------------------------------------------
# evaluate


def evaluate_snapshot(run_id: str, snap: Snapshot, cfg: EvaluationConfig, names: Sequence[str]) -> dict:
    """Fit, associate and score one epoch snapshot; returns the JSON-ready record."""
    episodes = list(snap.episodes)
    if cfg.fit_split == "disjoint":
        if len(episodes) < 2:
            raise ConfigError("fit_split 'disjoint' needs at least two episodes per snapshot")
        fit_eps, eval_eps = episodes[0::2], episodes[1::2]
    else:
        fit_eps = eval_eps = episodes

    fits = fit_all_pairs(fit_eps)
    errors = error_matrix(eval_eps, fits, cfg.normalization)
    best = associate(errors)
    report = tracking_report(
        errors, best, ThresholdConfig(cfg.thresholds), names, run_id=run_id, epoch=snap.epoch
    )
    degenerate = [[n, k] for n, row in enumerate(fits) for k, (tf, _) in enumerate(row) if tf.degenerate]
    if degenerate:
        log.info("%s epoch %d: %d degenerate affine fits", run_id, snap.epoch, len(degenerate))
    vel_cfg = VelocityConfig(cfg.velocity_beta)
    velocity = [
        float(np.mean([velocity_consistency(ep.keypoints[n], vel_cfg) for ep in eval_eps])) for n in best
    ]
    return {
        "epoch": snap.epoch,
        "report": report.to_dict(),
        "num_fit_frames": sum(ep.num_steps for ep in fit_eps),
        "num_eval_frames": sum(ep.num_steps for ep in eval_eps),
        "associated_transforms": [fits[n][k][0].to_dict() for k, n in enumerate(best)],
        "associated_fit_residual_mse": [fits[n][k][1].residual_mse for k, n in enumerate(best)],
        "degenerate_fits": degenerate,
        "per_episode_errors": {
            ep.episode_id: errs
            for ep, errs in zip(eval_eps, per_episode_errors(eval_eps, fits, best, cfg.normalization))
        },
        "velocity_consistency": velocity,
        "error_matrix": errors.values.tolist(),
    }


def evaluate_run(run: RunRecord, cfg: EvaluationConfig) -> dict:
    names = run.object_names
    ThresholdConfig(cfg.thresholds).for_objects(names)
    records = parallel_map(lambda s: evaluate_snapshot(run.run_id, s, cfg, names), list(run.snapshots))
    series = {name: [rec["report"]["errors"][k] for rec in records] for k, name in enumerate(names)}
    return {
        "run_id": run.run_id,
        "seed": run.seed,
        "config": cfg.model_dump(mode="json"),
        "object_names": list(names),
        "epochs": [rec["epoch"] for rec in records],
        "series": series,
        "tc_series": [rec["report"]["tc"] for rec in records],
        "final": records[-1]["report"],
        "snapshots": records,
    }


def evaluate(
    manifest: str | os.PathLike, cfg: EvaluationConfig, out_dir: str | os.PathLike
) -> tuple[Path, Path]:
    """Evaluate every snapshot of a run; writes ``<run_id>.report.json`` and ``.report.csv``."""
    run = load_run(manifest)
    doc = evaluate_run(run, cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / f"{run.run_id}.report.json"
    csv_path = out / f"{run.run_id}.report.csv"
    atomic_write_text(json_path, _dump_json(doc))
    atomic_write_text(csv_path, _csv_text(TrackingReport.from_dict(doc["final"]).csv_rows(), CSV_COLUMNS))
    return json_path, csv_path


# --------------------------------------------------------------------------
# aggregate


def load_report(path: str | os.PathLike) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    for key in ("run_id", "object_names", "final", "epochs", "series"):
        if key not in doc:
            raise DataError(f"{path}: report lacks field {key!r}")
    return doc


def aggregate_documents(docs: Sequence[dict], cfg: EvaluationConfig) -> tuple[dict, list[dict], list[dict], list[dict]]:
    """Combine per-run report documents.

    Returns the aggregate JSON document plus row lists for the per-run CSV,
    the per-object summary CSV and the per-epoch curve CSV.
    """
    if not docs:
        raise ConfigError("no reports to aggregate")
    finals = [TrackingReport.from_dict(d["final"]) for d in docs]
    # re-threshold with the aggregate config so all runs are judged alike
    thresholds = ThresholdConfig(cfg.thresholds)
    names = finals[0].object_names
    for rep in finals:
        if rep.object_names != names:
            raise ConfigError(f"run {rep.run_id!r} has objects {list(rep.object_names)}, expected {list(names)}")
    finals = [rethreshold(rep, thresholds) for rep in finals]
    agg = aggregate_runs(finals)
    boot = cfg.bootstrap

    def interval(samples, salt: int):
        if len(samples) < 2:
            return None
        return bootstrap_ci(samples, "iqm", boot.level, boot.num_bootstrap, _derive_seed(boot.seed, salt)).to_dict()

    per_object = {}
    summary_rows = []
    for k, name in enumerate(names):
        errs = [rep.errors[k] for rep in finals]
        box = box_summary(errs)
        ci = interval(errs, k)
        per_object[name] = {
            "mean_error": agg.mean_error[k],
            "median_error": agg.median_error[k],
            "variance_error": agg.variance_error[k],
            "tc": agg.tc_per_object[k],
            "iqm_error": iqm(errs),
            "iqm_error_ci": ci,
            "box": box.to_dict(),
        }
        summary_rows.append(
            {
                "object": name,
                "num_runs": agg.num_runs,
                "mean_error": agg.mean_error[k],
                "median_error": agg.median_error[k],
                "variance_error": agg.variance_error[k],
                "tc": agg.tc_per_object[k],
                "iqm_error": iqm(errs),
                "ci_lower": ci["lower"] if ci else "",
                "ci_upper": ci["upper"] if ci else "",
                "q1": box.q1,
                "q3": box.q3,
                "whisker_low": box.whisker_low,
                "whisker_high": box.whisker_high,
                "num_outliers": len(box.outliers),
            }
        )

    tcs = [rep.tc for rep in finals]
    curves = None
    curve_rows: list[dict] = []
    epochs = docs[0]["epochs"]
    if all(d["epochs"] == epochs for d in docs):
        curves = {"epochs": epochs, "per_object": {}}
        for name in names:
            runs = np.asarray([d["series"][name] for d in docs], dtype=np.float64)
            mean_curve = runs.mean(axis=0)
            smoothed = gaussian_smooth(mean_curve, cfg.smoothing_sigma_steps)
            curves["per_object"][name] = {
                "mean": mean_curve.tolist(),
                "smoothed_mean": smoothed.tolist(),
                "smoothed_runs": [gaussian_smooth(r, cfg.smoothing_sigma_steps).tolist() for r in runs],
            }
            curve_rows.extend(
                {"epoch": e, "object": name, "mean_error": m, "smoothed_mean_error": s}
                for e, m, s in zip(epochs, mean_curve.tolist(), smoothed.tolist())
            )
    else:
        log.warning("runs have different epoch lists; per-epoch curves are skipped")

    doc = {
        "config": cfg.model_dump(mode="json"),
        "num_runs": agg.num_runs,
        "object_names": list(names),
        "tc_mean": agg.tc_mean,
        "tc_iqm": iqm(tcs),
        "tc_ci": interval(tcs, len(names)),
        "variance_defined": agg.variance_defined,
        "per_object": per_object,
        "runs": [rep.to_dict() for rep in finals],
        "curves": curves,
    }
    run_rows = [row for rep in finals for row in rep.csv_rows()]
    return doc, run_rows, summary_rows, curve_rows


SUMMARY_COLUMNS = [
    "object", "num_runs", "mean_error", "median_error", "variance_error", "tc", "iqm_error",
    "ci_lower", "ci_upper", "q1", "q3", "whisker_low", "whisker_high", "num_outliers",
]
CURVE_COLUMNS = ["epoch", "object", "mean_error", "smoothed_mean_error"]


def aggregate(
    report_paths: Sequence[str | os.PathLike], cfg: EvaluationConfig, out_dir: str | os.PathLike
) -> list[Path]:
    """Aggregate run reports into ``aggregate.json`` and three CSV tables."""
    docs = [load_report(p) for p in report_paths]
    doc, run_rows, summary_rows, curve_rows = aggregate_documents(docs, cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {
        "aggregate.json": _dump_json(doc),
        "aggregate.csv": _csv_text(run_rows, CSV_COLUMNS),
        "summary.csv": _csv_text(summary_rows, SUMMARY_COLUMNS),
        "curves.csv": _csv_text(curve_rows, CURVE_COLUMNS),
    }
    for name, text in written.items():
        atomic_write_text(out / name, text)
    return [out / name for name in written]
