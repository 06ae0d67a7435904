"""Deterministic synthetic scenes with known keypoint/object correspondence.

Ground-truth objects follow a smoothed random walk (a Gaussian random walk
over velocity). Keypoints are generated as exact inverse-affine images of the
objects, optionally noisy, plus distractor keypoints unrelated to any object.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import ShapeError
from .spatial import pixel_coordinates
from .trajectory import EpisodeTrajectories

MotionPolicy = Literal["smoothed_random_walk", "stationary", "constant_velocity"]


@dataclass(frozen=True)
class MotionConfig:
    num_objects: int = 3
    steps: int = 100
    policy: MotionPolicy = "smoothed_random_walk"
    step_std: float = 0.004
    initial_speed_std: float = 0.0
    box: tuple[float, float] = (-0.9, 0.9)
    seed: int = 0

    def __post_init__(self):
        if self.num_objects < 1:
            raise ValueError("need at least one object")
        if self.steps < 2:
            raise ValueError("need at least two steps")
        if self.step_std < 0 or self.initial_speed_std < 0:
            raise ValueError("standard deviations must be nonnegative")
        if not self.box[0] < self.box[1]:
            raise ValueError(f"empty coordinate box {self.box}")
        if self.policy not in ("smoothed_random_walk", "stationary", "constant_velocity"):
            raise ValueError(f"unknown motion policy {self.policy!r}")


def _walk(rng: np.random.Generator, count: int, cfg: MotionConfig, policy: str) -> np.ndarray:
    lo, hi = cfg.box
    out = np.empty((count, cfg.steps, 2))
    pos = rng.uniform(lo, hi, size=(count, 2))
    if policy == "constant_velocity":
        vel = rng.normal(0.0, max(cfg.initial_speed_std, cfg.step_std), size=(count, 2))
    else:
        vel = rng.normal(0.0, cfg.initial_speed_std, size=(count, 2)) if cfg.initial_speed_std else np.zeros((count, 2))
    out[:, 0] = pos
    for t in range(1, cfg.steps):
        if policy == "smoothed_random_walk":
            vel = vel + rng.normal(0.0, cfg.step_std, size=(count, 2)) if cfg.step_std else vel
        if policy != "stationary":
            pos = pos + vel
            hit = (pos < lo) | (pos > hi)
            pos = np.clip(pos, lo, hi)
            # the walker stops along an axis when it reaches the workspace limit
            vel = np.where(hit, 0.0, vel)
        out[:, t] = pos
    return out


def generate_gt(config: MotionConfig) -> np.ndarray:
    """Ground-truth trajectories, shape ``(K, T, 2)``, clipped to ``config.box``."""
    rng = np.random.default_rng(config.seed)
    return _walk(rng, config.num_objects, config, config.policy)


@dataclass(frozen=True)
class KeypointSynthConfig:
    """How keypoints relate to objects.

    ``transforms`` holds one ``(A0, b0)`` per object such that the aligned
    keypoint ``A0 z + b0`` equals the object position plus noise. Missing
    entries default to the identity map.
    """

    transforms: Sequence[tuple[np.ndarray, np.ndarray]] = ()
    noise_std: float | Sequence[float] = 0.0
    num_distractors: int = 0
    distractor_policy: Literal["stationary", "random_walk"] = "random_walk"
    distractor_step_std: float = 0.004
    seed: int = 0

    def __post_init__(self):
        if self.num_distractors < 0:
            raise ValueError("num_distractors must be nonnegative")
        if np.any(np.asarray(self.noise_std) < 0):
            raise ValueError("noise std must be nonnegative")
        if self.distractor_policy not in ("stationary", "random_walk"):
            raise ValueError(f"unknown distractor policy {self.distractor_policy!r}")


@dataclass(frozen=True)
class SyntheticEpisode:
    episode: EpisodeTrajectories
    provenance: tuple[int, ...]
    """Source object of each keypoint, ``-1`` for distractors."""


def random_affine(rng: np.random.Generator, scale: tuple[float, float] = (0.6, 1.4)) -> tuple[np.ndarray, np.ndarray]:
    """A well-conditioned random affine map: rotation, anisotropic scale, shear, offset."""
    theta = rng.uniform(-np.pi, np.pi)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    stretch = np.diag(rng.uniform(*scale, size=2))
    shear = np.array([[1.0, rng.uniform(-0.3, 0.3)], [0.0, 1.0]])
    return rot @ stretch @ shear, rng.uniform(-0.3, 0.3, size=2)


def synthesize_keypoints(
    gt,
    config: KeypointSynthConfig = KeypointSynthConfig(),
    object_names: Sequence[str] | None = None,
    episode_id: str = "synthetic",
) -> SyntheticEpisode:
    """Keypoints ``z = A0^-1 (x + noise - b0)`` for each object, then distractors.

    Noise is added in object coordinates so its effect on the aligned
    tracking error is ``2 * noise_std**2`` per step independently of ``A0``.
    """
    gt = np.asarray(gt, dtype=np.float64)
    if gt.ndim != 3 or gt.shape[-1] != 2:
        raise ShapeError(f"ground truth must have shape (K, T, 2), got {gt.shape}")
    n_obj, steps, _ = gt.shape
    rng = np.random.default_rng(config.seed)
    noise = np.broadcast_to(np.asarray(config.noise_std, dtype=np.float64), (n_obj,))

    keypoints = np.empty((n_obj + config.num_distractors, steps, 2))
    for k in range(n_obj):
        if k < len(config.transforms):
            A0, b0 = (np.asarray(v, dtype=np.float64) for v in config.transforms[k])
        else:
            A0, b0 = np.eye(2), np.zeros(2)
        if np.linalg.cond(A0) >= 1e6:
            raise ValueError(f"transform for object {k} is singular or ill-conditioned")
        observed = gt[k] + rng.normal(0.0, noise[k], size=(steps, 2)) if noise[k] > 0 else gt[k]
        keypoints[k] = np.linalg.solve(A0, (observed - b0).T).T

    if config.num_distractors:
        policy = "stationary" if config.distractor_policy == "stationary" else "smoothed_random_walk"
        motion = MotionConfig(num_objects=1, steps=steps, policy=policy, step_std=config.distractor_step_std)
        keypoints[n_obj:] = _walk(rng, config.num_distractors, motion, policy)

    names = tuple(object_names) if object_names is not None else tuple(f"object{k}" for k in range(n_obj))
    episode = EpisodeTrajectories(episode_id=episode_id, keypoints=keypoints, ground_truth=gt, object_names=names)
    provenance = tuple(range(n_obj)) + (-1,) * config.num_distractors
    return SyntheticEpisode(episode, provenance)


@dataclass(frozen=True)
class SceneRenderConfig:
    height: int = 64
    width: int = 64
    sigma: float | Sequence[float] = 0.1
    background: float = 0.0

    def __post_init__(self):
        if self.height < 8 or self.width < 8:
            raise ValueError("scene resolution must be at least 8x8")
        if np.any(np.asarray(self.sigma) <= 0):
            raise ValueError("blob sigma must be positive")


def render_scene(gt_frame, config: SceneRenderConfig = SceneRenderConfig()) -> np.ndarray:
    """One ``(H, W)`` channel per object with a Gaussian blob over the background level."""
    pts = np.asarray(gt_frame, dtype=np.float64).reshape(-1, 2)
    sigma = np.broadcast_to(np.asarray(config.sigma, dtype=np.float64), (len(pts),))
    rows = pixel_coordinates(config.height)[:, None, None]
    cols = pixel_coordinates(config.width)[None, :, None]
    d2 = (cols - pts[:, 0]) ** 2 + (rows - pts[:, 1]) ** 2
    blob = np.exp(-d2 / (2.0 * sigma**2))
    return config.background + (1.0 - config.background) * blob
