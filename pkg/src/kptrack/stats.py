"""Run-level statistics: IQM, bootstrap percentile intervals, smoothing, box summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

# resamples are drawn in fixed-size blocks, each from its own seeded stream,
# so the result does not depend on how blocks are distributed over workers
BOOTSTRAP_BLOCK = 256


def _samples(samples, min_count: int = 1) -> np.ndarray:
    arr = np.asarray(samples, dtype=np.float64).reshape(-1)
    if arr.size < min_count:
        raise ValueError(f"need at least {min_count} sample(s), got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("samples contain non-finite values")
    return arr


def iqm(samples) -> float:
    """Interquartile mean: drop floor(n/4) samples from each end, average the rest."""
    arr = np.sort(_samples(samples))
    cut = arr.size // 4
    return float(np.mean(arr[cut : arr.size - cut]))


def _iqm_rows(resamples: np.ndarray) -> np.ndarray:
    s = np.sort(resamples, axis=1)
    cut = s.shape[1] // 4
    return s[:, cut : s.shape[1] - cut].mean(axis=1)


_STATISTICS: dict[str, tuple[Callable[[np.ndarray], float], Callable[[np.ndarray], np.ndarray]]] = {
    "iqm": (iqm, _iqm_rows),
    "mean": (lambda a: float(np.mean(a)), lambda r: r.mean(axis=1)),
}


@dataclass(frozen=True)
class IntervalEstimate:
    point: float
    lower: float
    upper: float
    level: float
    num_bootstrap: int
    seed: int
    statistic: str = "iqm"
    point_outside: bool = False

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "point": self.point,
            "lower": self.lower,
            "upper": self.upper,
            "level": self.level,
            "num_bootstrap": self.num_bootstrap,
            "seed": self.seed,
            "point_outside": self.point_outside,
        }


def bootstrap_distribution(
    samples, statistic: Literal["iqm", "mean"] = "iqm", num_bootstrap: int = 2000, seed: int = 0
) -> np.ndarray:
    """Statistic evaluated on ``num_bootstrap`` with-replacement resamples."""
    arr = _samples(samples)
    _, rows_fn = _STATISTICS[statistic]
    out = np.empty(num_bootstrap)
    for block, start in enumerate(range(0, num_bootstrap, BOOTSTRAP_BLOCK)):
        stop = min(start + BOOTSTRAP_BLOCK, num_bootstrap)
        rng = np.random.default_rng([seed, block])
        idx = rng.integers(0, arr.size, size=(stop - start, arr.size))
        out[start:stop] = rows_fn(arr[idx])
    return out


def bootstrap_ci(
    samples,
    statistic: Literal["iqm", "mean"] = "iqm",
    level: float = 0.95,
    num_bootstrap: int = 2000,
    seed: int = 0,
) -> IntervalEstimate:
    """Percentile bootstrap confidence interval for ``statistic``."""
    if statistic not in _STATISTICS:
        raise ValueError(f"unknown statistic {statistic!r}")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    if num_bootstrap < 100:
        raise ValueError(f"num_bootstrap must be >= 100, got {num_bootstrap}")
    arr = _samples(samples, min_count=2)
    point_fn, _ = _STATISTICS[statistic]
    point = point_fn(arr)
    dist = bootstrap_distribution(arr, statistic, num_bootstrap, seed)
    tail = (1.0 - level) / 2.0
    lower, upper = (float(q) for q in np.quantile(dist, [tail, 1.0 - tail]))
    return IntervalEstimate(
        point=point,
        lower=lower,
        upper=upper,
        level=level,
        num_bootstrap=num_bootstrap,
        seed=seed,
        statistic=statistic,
        point_outside=not (lower - 1e-9 <= point <= upper + 1e-9),
    )


def gaussian_kernel(sigma_steps: float, truncate: float = 4.0) -> np.ndarray:
    radius = int(math.floor(truncate * sigma_steps + 0.5))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (offsets / sigma_steps) ** 2)
    return kernel / kernel.sum()


def gaussian_smooth(series, sigma_steps: float = 2.5) -> np.ndarray:
    """Discrete Gaussian filter, kernel truncated at 4 sigma and renormalized.

    Boundaries are extended by mirror reflection (edge sample repeated:
    ``d c b a | a b c d``). Sigma below 0.05 steps returns the input.
    """
    values = _samples(series)
    if not sigma_steps > 0:
        raise ValueError(f"sigma_steps must be positive, got {sigma_steps}")
    if sigma_steps < 0.05:
        return values.copy()
    kernel = gaussian_kernel(sigma_steps)
    radius = kernel.size // 2
    padded = np.pad(values, radius, mode="symmetric")
    return np.convolve(padded, kernel, mode="valid")


@dataclass(frozen=True)
class BoxSummary:
    q1: float
    median: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: tuple[float, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "q1": self.q1,
            "median": self.median,
            "q3": self.q3,
            "whisker_low": self.whisker_low,
            "whisker_high": self.whisker_high,
            "outliers": list(self.outliers),
        }


def box_summary(samples) -> BoxSummary:
    """Tukey box-plot statistics with linearly interpolated quartiles."""
    arr = np.sort(_samples(samples))
    q1, med, q3 = (float(q) for q in np.quantile(arr, [0.25, 0.5, 0.75]))
    reach = 1.5 * (q3 - q1)
    inside = arr[(arr >= q1 - reach) & (arr <= q3 + reach)]
    outliers = arr[(arr < q1 - reach) | (arr > q3 + reach)]
    return BoxSummary(
        q1=q1,
        median=med,
        q3=q3,
        whisker_low=float(inside.min()),
        whisker_high=float(inside.max()),
        outliers=tuple(float(v) for v in outliers),
    )
