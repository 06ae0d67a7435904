"""Tracking error, keypoint/object association and tracking capability."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Literal, Mapping, Sequence

import numpy as np

from .affine import AffineTransform2D, apply_affine, pair_samples
from .errors import ConfigError, ShapeError
from .trajectory import EpisodeTrajectories

log = logging.getLogger(__name__)

Normalization = Literal["sum", "mean"]

# thresholds used for the cube / target / end-effector objects of the pick-and-place scenes
DEFAULT_THRESHOLDS = {"cube": 0.015, "target": 0.015, "eef": 0.1}


def _check_normalization(normalization: str) -> None:
    if normalization not in ("sum", "mean"):
        raise ConfigError(f"normalization must be 'sum' or 'mean', got {normalization!r}")


def tracking_error(z_hat, x, normalization: Normalization = "mean") -> float:
    """Accumulated squared distance between two ``(T, 2)`` trajectories.

    ``"sum"`` returns sum_t ||z_hat^t - x^t||^2, ``"mean"`` divides that by T.
    """
    _check_normalization(normalization)
    z_hat = np.asarray(z_hat, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if z_hat.shape != x.shape:
        raise ShapeError(f"trajectory shapes differ: {z_hat.shape} vs {x.shape}")
    if z_hat.ndim != 2 or z_hat.shape[0] < 1:
        raise ShapeError(f"expected a (T>=1, 2) trajectory, got {z_hat.shape}")
    diff = z_hat - x
    total = float(np.sum(diff * diff))
    return total / len(x) if normalization == "mean" else total


@dataclass(frozen=True)
class ErrorMatrix:
    values: np.ndarray
    normalization: Normalization = "mean"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or min(values.shape) < 1:
            raise ShapeError(f"error matrix must be N x K with N, K >= 1, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ShapeError("error matrix has non-finite entries")
        object.__setattr__(self, "values", values)


def _transform_grid(transforms) -> list[list[AffineTransform2D]]:
    # accept either bare transforms or (transform, diagnostics) pairs from fit_all_pairs
    return [[t[0] if isinstance(t, tuple) else t for t in row] for row in transforms]


def error_matrix(
    episodes: Sequence[EpisodeTrajectories],
    transforms,
    normalization: Normalization = "mean",
) -> ErrorMatrix:
    """Tracking error of every aligned keypoint against every object.

    Frames of all ``episodes`` are concatenated before accumulating, so in
    mean mode the divisor is the total frame count.
    """
    _check_normalization(normalization)
    z, x = pair_samples(episodes)
    grid = _transform_grid(transforms)
    n_kp, n_obj = z.shape[0], x.shape[0]
    if len(grid) != n_kp or any(len(row) != n_obj for row in grid):
        raise ShapeError(f"transform grid does not match N={n_kp}, K={n_obj}")
    values = np.empty((n_kp, n_obj))
    for n in range(n_kp):
        for k in range(n_obj):
            values[n, k] = tracking_error(apply_affine(grid[n][k], z[n]), x[k], normalization)
    return ErrorMatrix(values, normalization)


def per_episode_errors(
    episodes: Sequence[EpisodeTrajectories],
    transforms,
    association: Sequence[int],
    normalization: Normalization = "mean",
) -> list[list[float]]:
    """Diagnostic: error of each associated pair within each episode (episode x object)."""
    grid = _transform_grid(transforms)
    out = []
    for ep in episodes:
        out.append(
            [
                tracking_error(apply_affine(grid[n][k], ep.keypoints[n]), ep.ground_truth[k], normalization)
                for k, n in enumerate(association)
            ]
        )
    return out


def associate(errors: ErrorMatrix | np.ndarray) -> tuple[int, ...]:
    """Best keypoint per object: column-wise argmin, ties to the lowest index.

    One keypoint may be best for several objects; this is logged, not prevented.
    """
    values = errors.values if isinstance(errors, ErrorMatrix) else np.asarray(errors, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] < 1:
        raise ShapeError(f"need an N x K matrix with N >= 1, got {values.shape}")
    best = tuple(int(i) for i in np.argmin(values, axis=0))
    shared = [n for n, c in Counter(best).items() if c > 1]
    if shared:
        log.warning("keypoint(s) %s are the best match for more than one object", shared)
    return best


@dataclass(frozen=True)
class ThresholdConfig:
    """Per-object tracking thresholds, in squared normalized units."""

    thresholds: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))

    def __post_init__(self):
        for name, mu in self.thresholds.items():
            if not (np.isfinite(mu) and mu > 0):
                raise ConfigError(f"threshold for {name!r} must be positive, got {mu}")

    def for_objects(self, names: Sequence[str]) -> tuple[float, ...]:
        missing = [n for n in names if n not in self.thresholds]
        if missing:
            raise ConfigError(f"no tracking threshold configured for object(s) {missing}")
        return tuple(float(self.thresholds[n]) for n in names)


@dataclass(frozen=True)
class TrackingReport:
    run_id: str
    object_names: tuple[str, ...]
    best_keypoint: tuple[int, ...]
    errors: tuple[float, ...]
    thresholds: tuple[float, ...]
    tracked: tuple[bool, ...]
    tc: float
    normalization: Normalization = "mean"
    epoch: int | None = None

    @property
    def tracked_set(self) -> tuple[int, ...]:
        return tuple(k for k, ok in enumerate(self.tracked) if ok)

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "epoch": self.epoch,
            "normalization": self.normalization,
            "object_names": list(self.object_names),
            "best_keypoint": list(self.best_keypoint),
            "errors": list(self.errors),
            "thresholds": list(self.thresholds),
            "tracked": list(self.tracked),
            "tracked_set": list(self.tracked_set),
            "tc": self.tc,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> TrackingReport:
        return cls(
            run_id=str(doc["run_id"]),
            object_names=tuple(doc["object_names"]),
            best_keypoint=tuple(int(n) for n in doc["best_keypoint"]),
            errors=tuple(float(e) for e in doc["errors"]),
            thresholds=tuple(float(m) for m in doc["thresholds"]),
            tracked=tuple(bool(t) for t in doc["tracked"]),
            tc=float(doc["tc"]),
            normalization=doc.get("normalization", "mean"),
            epoch=doc.get("epoch"),
        )

    def csv_rows(self) -> list[dict]:
        return [
            {
                "run_id": self.run_id,
                "object": name,
                "best_keypoint": self.best_keypoint[k],
                "error": self.errors[k],
                "threshold": self.thresholds[k],
                "tracked": self.tracked[k],
                "tc": self.tc,
            }
            for k, name in enumerate(self.object_names)
        ]


def tracking_report(
    errors: ErrorMatrix,
    association: Sequence[int],
    thresholds: ThresholdConfig,
    object_names: Sequence[str],
    run_id: str = "",
    epoch: int | None = None,
) -> TrackingReport:
    """Flag objects whose best-keypoint error is at most their threshold; TC = |tracked| / K."""
    values = errors.values if isinstance(errors, ErrorMatrix) else np.asarray(errors, dtype=np.float64)
    normalization = errors.normalization if isinstance(errors, ErrorMatrix) else "mean"
    names = tuple(object_names)
    if len(names) != values.shape[1] or len(association) != values.shape[1]:
        raise ShapeError(f"{len(names)} names / {len(association)} associations for K={values.shape[1]}")
    mus = thresholds.for_objects(names)
    best_err = tuple(float(values[n, k]) for k, n in enumerate(association))
    tracked = tuple(e <= mu for e, mu in zip(best_err, mus))
    return TrackingReport(
        run_id=run_id,
        object_names=names,
        best_keypoint=tuple(int(n) for n in association),
        errors=best_err,
        thresholds=mus,
        tracked=tracked,
        tc=sum(tracked) / len(names),
        normalization=normalization,
        epoch=epoch,
    )


def rethreshold(report: TrackingReport, thresholds: ThresholdConfig) -> TrackingReport:
    """Re-judge an existing report's best-keypoint errors against new thresholds."""
    mus = thresholds.for_objects(report.object_names)
    tracked = tuple(e <= mu for e, mu in zip(report.errors, mus))
    return replace(report, thresholds=mus, tracked=tracked, tc=sum(tracked) / len(tracked))


@dataclass(frozen=True)
class AggregateReport:
    object_names: tuple[str, ...]
    num_runs: int
    mean_error: tuple[float, ...]
    median_error: tuple[float, ...]
    variance_error: tuple[float, ...]
    variance_defined: bool
    tc_per_object: tuple[float, ...]
    tc_mean: float

    def to_dict(self) -> dict:
        return {
            "object_names": list(self.object_names),
            "num_runs": self.num_runs,
            "tc_mean": self.tc_mean,
            "variance_defined": self.variance_defined,
            "per_object": {
                name: {
                    "mean_error": self.mean_error[k],
                    "median_error": self.median_error[k],
                    "variance_error": self.variance_error[k],
                    "tc": self.tc_per_object[k],
                }
                for k, name in enumerate(self.object_names)
            },
        }


def aggregate_runs(reports: Sequence[TrackingReport]) -> AggregateReport:
    """Per-object error statistics and mean tracking capability over runs.

    Variance uses the unbiased (R - 1) divisor; for a single run it is
    reported as 0 with ``variance_defined=False``.
    """
    if not reports:
        raise ValueError("need at least one tracking report")
    names = reports[0].object_names
    for rep in reports:
        if rep.object_names != names:
            raise ConfigError(f"run {rep.run_id!r} has objects {rep.object_names}, expected {names}")
    errs = np.array([rep.errors for rep in reports], dtype=np.float64)
    tracked = np.array([rep.tracked for rep in reports], dtype=np.float64)
    r = len(reports)
    variance = np.var(errs, axis=0, ddof=1) if r > 1 else np.zeros(len(names))
    return AggregateReport(
        object_names=names,
        num_runs=r,
        mean_error=tuple(np.mean(errs, axis=0).tolist()),
        median_error=tuple(np.median(errs, axis=0).tolist()),
        variance_error=tuple(variance.tolist()),
        variance_defined=r > 1,
        tc_per_object=tuple(np.mean(tracked, axis=0).tolist()),
        tc_mean=float(np.mean([rep.tc for rep in reports])),
    )


@dataclass(frozen=True)
class VelocityConfig:
    beta: float = 0.1

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError(f"beta must be nonnegative, got {self.beta}")


def velocity_consistency(z, cfg: VelocityConfig = VelocityConfig()) -> float:
    """beta times the mean squared second difference of a ``(T, 2)`` trajectory."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != 2:
        raise ShapeError(f"expected a (T, 2) trajectory, got {z.shape}")
    if len(z) < 3:
        raise ShapeError(f"velocity consistency needs T >= 3, got {len(z)}")
    accel = z[2:] - 2.0 * z[1:-1] + z[:-2]
    return cfg.beta * float(np.mean(np.sum(accel * accel, axis=1)))
