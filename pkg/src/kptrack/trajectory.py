"""Trajectory data model, episode/run file I/O and sequence splitting.

Coordinates live in the normalized latent domain [-1, 1]^2. A point is the
pair ``(u, v)`` where ``u`` is the normalized column and ``v`` the normalized
row. Trajectories are ``(T, 2)`` float arrays; an episode stacks them into
``(N, T, 2)`` keypoint and ``(K, T, 2)`` ground-truth arrays.
"""

from __future__ import annotations

import json
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import NonFiniteError, OutOfDomainWarning, ParseError, ShapeError

DOMAIN = (-1.0, 1.0)


class Point2(NamedTuple):
    u: float
    v: float


def as_trajectory(points) -> np.ndarray:
    """Coerce a sequence of ``(u, v)`` pairs into a validated ``(T, 2)`` array."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 1:
        raise ShapeError(f"trajectory must have shape (T>=1, 2), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("trajectory contains non-finite coordinates")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class EpisodeTrajectories:
    """Paired keypoint and ground-truth trajectories of one episode.

    ``keypoints`` has shape ``(N, T, 2)`` and ``ground_truth`` ``(K, T, 2)``.
    Arrays are copied and made read-only on construction.
    """

    episode_id: str
    keypoints: np.ndarray
    ground_truth: np.ndarray
    object_names: tuple[str, ...]

    def __post_init__(self):
        kp = np.asarray(self.keypoints, dtype=np.float64)
        gt = np.asarray(self.ground_truth, dtype=np.float64)
        if kp.ndim != 3 or kp.shape[-1] != 2:
            raise ShapeError(f"keypoints must have shape (N, T, 2), got {kp.shape}")
        if gt.ndim != 3 or gt.shape[-1] != 2:
            raise ShapeError(f"ground_truth must have shape (K, T, 2), got {gt.shape}")
        if kp.shape[0] < 1:
            raise ShapeError("episode needs at least one keypoint trajectory")
        if gt.shape[0] < 1:
            raise ShapeError("episode needs at least one ground-truth trajectory")
        if kp.shape[1] != gt.shape[1] or kp.shape[1] < 1:
            raise ShapeError(
                f"keypoints have T={kp.shape[1]} but ground truth has T={gt.shape[1]}"
            )
        names = tuple(str(n) for n in self.object_names)
        if len(names) != gt.shape[0]:
            raise ShapeError(f"{len(names)} object names for {gt.shape[0]} objects")
        if len(set(names)) != len(names):
            raise ShapeError(f"object names must be unique: {names}")
        for label, arr in (("keypoints", kp), ("ground_truth", gt)):
            if not np.all(np.isfinite(arr)):
                raise NonFiniteError(f"{label} of episode {self.episode_id!r} contain non-finite values")
        object.__setattr__(self, "keypoints", _frozen(kp))
        object.__setattr__(self, "ground_truth", _frozen(gt))
        object.__setattr__(self, "object_names", names)

    @property
    def num_keypoints(self) -> int:
        return self.keypoints.shape[0]

    @property
    def num_objects(self) -> int:
        return self.ground_truth.shape[0]

    @property
    def num_steps(self) -> int:
        return self.keypoints.shape[1]

    def out_of_domain_fraction(self) -> float:
        both = np.concatenate([self.keypoints.reshape(-1), self.ground_truth.reshape(-1)])
        return float(np.mean((both < DOMAIN[0]) | (both > DOMAIN[1])))

    def equals(self, other: EpisodeTrajectories, atol: float = 0.0) -> bool:
        return (
            self.episode_id == other.episode_id
            and self.object_names == other.object_names
            and self.keypoints.shape == other.keypoints.shape
            and self.ground_truth.shape == other.ground_truth.shape
            and np.allclose(self.keypoints, other.keypoints, rtol=0.0, atol=atol)
            and np.allclose(self.ground_truth, other.ground_truth, rtol=0.0, atol=atol)
        )


@dataclass(frozen=True)
class Snapshot:
    epoch: int
    episodes: tuple[EpisodeTrajectories, ...]


@dataclass(frozen=True)
class RunRecord:
    """One training run: evaluation episodes captured at increasing epochs."""

    run_id: str
    seed: int
    snapshots: tuple[Snapshot, ...]

    def __post_init__(self):
        epochs = [s.epoch for s in self.snapshots]
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ShapeError(f"run {self.run_id!r}: epochs must be strictly increasing, got {epochs}")
        signature = None
        for snap in self.snapshots:
            if not snap.episodes:
                raise ShapeError(f"run {self.run_id!r}: epoch {snap.epoch} has no episodes")
            for ep in snap.episodes:
                sig = (ep.num_keypoints, ep.num_objects, ep.num_steps, ep.object_names)
                if signature is None:
                    signature = sig
                elif sig != signature:
                    raise ShapeError(
                        f"run {self.run_id!r}: episode {ep.episode_id!r} has (N, K, T, names)={sig}, "
                        f"expected {signature}"
                    )

    @property
    def object_names(self) -> tuple[str, ...]:
        return self.snapshots[0].episodes[0].object_names


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]


# --------------------------------------------------------------------------
# file I/O


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to ``path`` via a temp file in the same directory + rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_json(path: Path):
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not UTF-8 text ({exc})", str(path)) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"{path}:{exc.lineno}:{exc.colno}") from exc


def _coords(value, field_name: str, path: Path) -> np.ndarray:
    """Parse a nested list ``[[[u, v] x T] x M]`` into an ``(M, T, 2)`` array."""
    if not isinstance(value, list):
        raise ParseError("expected a list of trajectories", f"{path}:{field_name}")
    trajectories = []
    for i, traj in enumerate(value):
        where = f"{path}:{field_name}[{i}]"
        if not isinstance(traj, list):
            raise ParseError("expected a list of [u, v] points", where)
        for t, pt in enumerate(traj):
            if (
                not isinstance(pt, list)
                or len(pt) != 2
                or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in pt)
            ):
                raise ParseError(f"point {t} is not a [u, v] pair of numbers", where)
        trajectories.append(traj)
    lengths = {len(t) for t in trajectories}
    if len(lengths) > 1:
        raise ShapeError(f"{path}:{field_name}: ragged trajectory lengths {sorted(lengths)}")
    if not trajectories:
        return np.zeros((0, 0, 2))
    return np.asarray(trajectories, dtype=np.float64).reshape(len(trajectories), -1, 2)


def load_episode(path: str | os.PathLike) -> EpisodeTrajectories:
    """Read an episode JSON file and validate it.

    Raises :class:`ParseError` for malformed content, :class:`ShapeError` for
    ragged or mismatched lengths and :class:`NonFiniteError` for NaN/inf.
    Coordinates outside [-1, 1] only trigger an :class:`OutOfDomainWarning`.
    """
    path = Path(path)
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object", str(path))
    for key in ("episode_id", "T", "object_names", "ground_truth", "keypoints"):
        if key not in doc:
            raise ParseError("missing field", f"{path}:{key}")
    if not isinstance(doc["T"], int) or isinstance(doc["T"], bool):
        raise ParseError("must be an integer", f"{path}:T")
    names = doc["object_names"]
    if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
        raise ParseError("must be a list of strings", f"{path}:object_names")
    gt = _coords(doc["ground_truth"], "ground_truth", path)
    kp = _coords(doc["keypoints"], "keypoints", path)
    for label, arr in (("ground_truth", gt), ("keypoints", kp)):
        if arr.shape[0] and arr.shape[1] != doc["T"]:
            raise ShapeError(f"{path}:{label}: trajectory length {arr.shape[1]} != T={doc['T']}")
    episode = EpisodeTrajectories(
        episode_id=str(doc["episode_id"]),
        keypoints=kp,
        ground_truth=gt,
        object_names=tuple(names),
    )
    frac = episode.out_of_domain_fraction()
    if frac > 0:
        warnings.warn(
            f"{path}: {frac:.1%} of coordinates lie outside [-1, 1]", OutOfDomainWarning, stacklevel=2
        )
    return episode


def episode_to_dict(episode: EpisodeTrajectories) -> dict:
    return {
        "episode_id": episode.episode_id,
        "T": episode.num_steps,
        "object_names": list(episode.object_names),
        "ground_truth": episode.ground_truth.tolist(),
        "keypoints": episode.keypoints.tolist(),
    }


def save_episode(episode: EpisodeTrajectories, path: str | os.PathLike) -> None:
    """Write ``episode`` as JSON. Floats use shortest round-trip repr (exact reload)."""
    for label, arr in (("keypoints", episode.keypoints), ("ground_truth", episode.ground_truth)):
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"{label} contain non-finite values")
    atomic_write_text(path, json.dumps(episode_to_dict(episode), allow_nan=False) + "\n")


def load_run(manifest_path: str | os.PathLike) -> RunRecord:
    """Load a run manifest; episode paths are resolved relative to the manifest."""
    manifest_path = Path(manifest_path)
    doc = _read_json(manifest_path)
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object", str(manifest_path))
    for key in ("run_id", "seed", "snapshots"):
        if key not in doc:
            raise ParseError("missing field", f"{manifest_path}:{key}")
    snapshots = []
    for i, snap in enumerate(doc["snapshots"]):
        where = f"{manifest_path}:snapshots[{i}]"
        if not isinstance(snap, dict) or "epoch" not in snap or "episodes" not in snap:
            raise ParseError("snapshot needs 'epoch' and 'episodes'", where)
        episodes = tuple(load_episode(manifest_path.parent / rel) for rel in snap["episodes"])
        snapshots.append(Snapshot(epoch=int(snap["epoch"]), episodes=episodes))
    if not snapshots:
        raise ShapeError(f"{manifest_path}: run has no snapshots")
    return RunRecord(run_id=str(doc["run_id"]), seed=int(doc["seed"]), snapshots=tuple(snapshots))


def save_run_manifest(
    path: str | os.PathLike, run_id: str, seed: int, snapshots: Sequence[tuple[int, Sequence[str]]]
) -> None:
    doc = {
        "run_id": run_id,
        "seed": int(seed),
        "snapshots": [{"epoch": int(e), "episodes": list(paths)} for e, paths in snapshots],
    }
    atomic_write_text(path, json.dumps(doc, indent=1) + "\n")


# --------------------------------------------------------------------------
# splitting


def split_sequences(
    sequence_ids: Sequence[str], ratios: tuple[float, float, float], seed: int
) -> DatasetSplit:
    """Partition whole sequences into train/validation/test sets.

    Sizes are ``floor(r * n)`` per set with the remainder handed out by
    largest fractional part, so each set is within one sequence of its ratio.
    """
    ids = list(sequence_ids)
    if not ids:
        raise ValueError("no sequence ids to split")
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate sequence ids")
    r = np.asarray(ratios, dtype=np.float64)
    if r.shape != (3,) or np.any(r < 0) or abs(r.sum() - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three nonnegative numbers summing to 1, got {ratios}")

    n = len(ids)
    exact = r * n
    sizes = np.floor(exact + 1e-9).astype(int)
    remainder = n - sizes.sum()
    # stable order keeps the hand-out deterministic on ties
    for idx in np.argsort(-(exact - sizes), kind="stable")[:remainder]:
        sizes[idx] += 1

    order = np.random.default_rng(seed).permutation(n)
    shuffled = [ids[i] for i in order]
    a, b = sizes[0], sizes[0] + sizes[1]
    return DatasetSplit(train=tuple(shuffled[:a]), validation=tuple(shuffled[a:b]), test=tuple(shuffled[b:]))


__all__ = [
    "DOMAIN",
    "DatasetSplit",
    "EpisodeTrajectories",
    "Point2",
    "RunRecord",
    "Snapshot",
    "as_trajectory",
    "atomic_write_text",
    "episode_to_dict",
    "load_episode",
    "load_run",
    "save_episode",
    "save_run_manifest",
    "split_sequences",
]
