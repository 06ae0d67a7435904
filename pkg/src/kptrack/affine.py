"""Least-squares fitting of time-invariant 2D affine maps ``x ~ A z + b``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NonFiniteError, ShapeError
from .trajectory import EpisodeTrajectories

RANK_TOL = 1e-10


@dataclass(frozen=True)
class AffineTransform2D:
    A: np.ndarray
    b: np.ndarray
    degenerate: bool = False

    @classmethod
    def identity(cls) -> AffineTransform2D:
        return cls(np.eye(2), np.zeros(2))

    @property
    def params(self) -> np.ndarray:
        """Flat ``[a11, a12, b1, a21, a22, b2]`` parameter vector."""
        return np.concatenate([self.A[0], self.b[:1], self.A[1], self.b[1:]])

    def to_dict(self) -> dict:
        return {"A": np.asarray(self.A).tolist(), "b": np.asarray(self.b).tolist(), "degenerate": bool(self.degenerate)}

    @classmethod
    def from_dict(cls, doc: dict) -> AffineTransform2D:
        A = np.asarray(doc["A"], dtype=np.float64)
        b = np.asarray(doc["b"], dtype=np.float64)
        if A.shape != (2, 2) or b.shape != (2,):
            raise ShapeError(f"transform needs A of shape (2, 2) and b of shape (2,), got {A.shape}, {b.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise NonFiniteError("transform has non-finite entries")
        return cls(A, b, bool(doc.get("degenerate", False)))


@dataclass(frozen=True)
class FitDiagnostics:
    residual_mse: float
    """Mean of squared residual components over all ``2 * num_samples`` entries."""
    rank: int
    num_samples: int


def _stack(traj) -> np.ndarray:
    if isinstance(traj, np.ndarray):
        arr = traj.astype(np.float64, copy=False)
    elif len(traj) and isinstance(traj[0], np.ndarray) and np.ndim(traj[0]) == 2:
        arr = np.concatenate([np.asarray(t, dtype=np.float64) for t in traj], axis=0)
    else:
        arr = np.asarray(traj, dtype=np.float64)
    return arr.reshape(-1, 2) if arr.ndim == 3 else arr


def fit_affine(z, x, rank_tol: float = RANK_TOL) -> tuple[AffineTransform2D, FitDiagnostics]:
    """Ordinary least-squares fit of ``A z^t + b`` to ``x^t``.

    ``z`` and ``x`` are ``(T, 2)`` arrays or lists of such arrays (which are
    concatenated; every frame carries equal weight). Rank-deficient designs
    (e.g. a stationary keypoint) yield the minimum-norm solution with
    ``degenerate=True`` instead of raising.
    """
    z = _stack(z)
    x = _stack(x)
    if z.ndim != 2 or z.shape[1] != 2 or x.ndim != 2 or x.shape[1] != 2:
        raise ShapeError(f"expected (T, 2) trajectories, got {z.shape} and {x.shape}")
    if z.shape[0] != x.shape[0]:
        raise ShapeError(f"length mismatch: {z.shape[0]} keypoint vs {x.shape[0]} target samples")
    if z.shape[0] < 3:
        raise ShapeError(f"need at least 3 samples to fit an affine map, got {z.shape[0]}")
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(x))):
        raise NonFiniteError("affine fit input contains non-finite values")

    design = np.column_stack([z, np.ones(len(z))])
    # the 2T x 6 system is block diagonal: one 3-parameter problem per output axis
    params, _, rank, _ = np.linalg.lstsq(design, x, rcond=rank_tol)
    A = params[:2].T.copy()
    b = params[2].copy()
    resid = design @ params - x
    tf = AffineTransform2D(A, b, degenerate=bool(rank < 3))
    diag = FitDiagnostics(residual_mse=float(np.mean(resid * resid)), rank=int(rank), num_samples=len(z))
    return tf, diag


def apply_affine(tf: AffineTransform2D, z) -> np.ndarray:
    """Map each point of a ``(..., 2)`` array through ``A z + b``."""
    z = np.asarray(z, dtype=np.float64)
    return z @ np.asarray(tf.A).T + np.asarray(tf.b)


def pair_samples(episodes: Sequence[EpisodeTrajectories]) -> tuple[np.ndarray, np.ndarray]:
    """Concatenate frames across episodes: ``(N, sum T, 2)`` and ``(K, sum T, 2)``."""
    if not episodes:
        raise ShapeError("no episodes given")
    n, k = episodes[0].num_keypoints, episodes[0].num_objects
    for ep in episodes:
        if (ep.num_keypoints, ep.num_objects) != (n, k):
            raise ShapeError(
                f"episode {ep.episode_id!r} has N={ep.num_keypoints}, K={ep.num_objects}; expected N={n}, K={k}"
            )
    z = np.concatenate([ep.keypoints for ep in episodes], axis=1)
    x = np.concatenate([ep.ground_truth for ep in episodes], axis=1)
    return z, x


def fit_all_pairs(
    episodes: Sequence[EpisodeTrajectories], rank_tol: float = RANK_TOL
) -> list[list[tuple[AffineTransform2D, FitDiagnostics]]]:
    """Independent affine fit for every (keypoint n, object k) pair.

    Returns a nested ``N x K`` list; entry ``[n][k]`` aligns keypoint ``n`` to
    object ``k`` over all frames of ``episodes``.
    """
    z, x = pair_samples(episodes)
    return [[fit_affine(z[n], x[k], rank_tol) for k in range(x.shape[0])] for n in range(z.shape[0])]
