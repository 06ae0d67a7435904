"""Forward-only spatial bottleneck math.

Feature-map stacks are ``(H, W, N)`` arrays. Pixel index ``i`` along an axis
of size ``d`` maps to the normalized coordinate ``-1 + 2 i / (d - 1)`` (the
centre, 0, when ``d == 1``). Returned points are ``(u, v)`` = (normalized
column, normalized row).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteError, ShapeError


@dataclass(frozen=True)
class SoftmaxConfig:
    alpha: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"softmax temperature must be positive, got {self.alpha}")


@dataclass(frozen=True)
class HeatmapConfig:
    sigma: float = 0.1
    height: int = 64
    width: int = 64

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"heatmap sigma must be positive, got {self.sigma}")
        if self.height < 1 or self.width < 1:
            raise ValueError("heatmap resolution must be at least 1x1")


def _check_maps(maps) -> np.ndarray:
    maps = np.asarray(maps, dtype=np.float64)
    if maps.ndim != 3 or min(maps.shape) < 1:
        raise ShapeError(f"feature maps must have shape (H, W, N) with all sizes >= 1, got {maps.shape}")
    if not np.all(np.isfinite(maps)):
        raise NonFiniteError("feature maps contain non-finite values")
    return maps


def pixel_coordinates(size: int) -> np.ndarray:
    """Normalized coordinates of the ``size`` pixel centres along one axis."""
    if size == 1:
        return np.zeros(1)
    return np.linspace(-1.0, 1.0, size)


def channel_softmax(maps, cfg: SoftmaxConfig = SoftmaxConfig()) -> np.ndarray:
    """Spatial softmax of each channel: exp(m / alpha) normalized over (h, w)."""
    maps = _check_maps(maps)
    scaled = maps / cfg.alpha
    scaled = scaled - scaled.max(axis=(0, 1), keepdims=True)
    expd = np.exp(scaled)
    return expd / expd.sum(axis=(0, 1), keepdims=True)


def soft_argmax(maps, cfg: SoftmaxConfig = SoftmaxConfig()) -> np.ndarray:
    """Expected normalized ``(u, v)`` position under each channel's softmax.

    Returns an ``(N, 2)`` array.
    """
    probs = channel_softmax(maps, cfg)
    h, w, _ = probs.shape
    rows = pixel_coordinates(h)
    cols = pixel_coordinates(w)
    v = np.einsum("hwn,h->n", probs, rows)
    u = np.einsum("hwn,w->n", probs, cols)
    return np.stack([u, v], axis=-1)


def render_gaussian_heatmaps(points, cfg: HeatmapConfig = HeatmapConfig()) -> np.ndarray:
    """One unnormalized Gaussian ``exp(-d^2 / (2 sigma^2))`` per point.

    Maps are truncated at the image border; no renormalization.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(pts)):
        raise NonFiniteError("heatmap points contain non-finite values")
    rows = pixel_coordinates(cfg.height)
    cols = pixel_coordinates(cfg.width)
    du = cols[None, :, None] - pts[None, None, :, 0]
    dv = rows[:, None, None] - pts[None, None, :, 1]
    return np.exp(-(du**2 + dv**2) / (2.0 * cfg.sigma**2))


def reconstruction_mse(a, b) -> float:
    """Mean squared per-element difference between two images."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ShapeError("images are empty")
    diff = a - b
    return float(np.mean(diff * diff))
