import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kptrack.errors import NonFiniteError, OutOfDomainWarning, ParseError, ShapeError
from kptrack.trajectory import (
    EpisodeTrajectories,
    RunRecord,
    Snapshot,
    as_trajectory,
    load_episode,
    load_run,
    save_episode,
    save_run_manifest,
    split_sequences,
)


def _episode(rng, n=2, k=1, t=5, names=None):
    return EpisodeTrajectories(
        episode_id="ep",
        keypoints=rng.uniform(-1, 1, size=(n, t, 2)),
        ground_truth=rng.uniform(-1, 1, size=(k, t, 2)),
        object_names=names or [f"obj{i}" for i in range(k)],
    )


def test_load_minimal_file(tmp_path):
    doc = {
        "episode_id": "e0",
        "T": 2,
        "object_names": ["cube"],
        "ground_truth": [[[0.0, 0.5], [0.1, 0.4]]],
        "keypoints": [[[0.2, 0.2], [0.3, 0.1]]],
    }
    path = tmp_path / "ep.json"
    path.write_text(json.dumps(doc))
    ep = load_episode(path)
    assert (ep.num_keypoints, ep.num_objects, ep.num_steps) == (1, 1, 2)
    assert ep.object_names == ("cube",)
    np.testing.assert_array_equal(ep.ground_truth[0], [[0.0, 0.5], [0.1, 0.4]])


def test_load_mismatched_lengths(tmp_path):
    doc = {
        "episode_id": "e0",
        "T": 2,
        "object_names": ["cube"],
        "ground_truth": [[[0.0, 0.5], [0.1, 0.4]]],
        "keypoints": [[[0.2, 0.2], [0.3, 0.1], [0.0, 0.0]]],
    }
    path = tmp_path / "ep.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ShapeError):
        load_episode(path)


def test_load_ragged(tmp_path):
    doc = {
        "episode_id": "e0",
        "T": 2,
        "object_names": ["a"],
        "ground_truth": [[[0.0, 0.5], [0.1, 0.4]]],
        "keypoints": [[[0.2, 0.2], [0.3, 0.1]], [[0.2, 0.2]]],
    }
    path = tmp_path / "ep.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ShapeError, match="ragged"):
        load_episode(path)


def test_malformed_json_names_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n "episode_id": "x",\n "T": 2,,\n}')
    with pytest.raises(ParseError) as info:
        load_episode(path)
    assert ":3:" in str(info.value)


def test_missing_field_named(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"episode_id": "x", "T": 1, "object_names": ["a"], "ground_truth": []}))
    with pytest.raises(ParseError, match="keypoints"):
        load_episode(path)


def test_nonfinite_in_file(tmp_path):
    path = tmp_path / "nan.json"
    path.write_text(
        '{"episode_id": "x", "T": 1, "object_names": ["a"], "ground_truth": [[[NaN, 0]]], "keypoints": [[[0, 0]]]}'
    )
    with pytest.raises(NonFiniteError):
        load_episode(path)


def test_out_of_domain_warns_not_raises(tmp_path):
    ep = EpisodeTrajectories("e", [[[1.5, 0.0], [0.0, 0.0]]], [[[0.0, 0.0], [0.1, 0.1]]], ["a"])
    save_episode(ep, tmp_path / "e.json")
    with pytest.warns(OutOfDomainWarning):
        back = load_episode(tmp_path / "e.json")
    assert back.equals(ep)


def test_round_trip(tmp_path, rng):
    ep = _episode(rng, n=4, k=3, t=17)
    save_episode(ep, tmp_path / "e.json")
    back = load_episode(tmp_path / "e.json")
    assert back.equals(ep, atol=1e-12)
    # repr-based floats round-trip exactly
    np.testing.assert_array_equal(back.keypoints, ep.keypoints)


@settings(max_examples=30, deadline=None)
@given(
    n=st.integers(1, 4),
    k=st.integers(1, 3),
    t=st.integers(1, 12),
    seed=st.integers(0, 2**32 - 1),
    scale=st.sampled_from([1e-12, 1.0, 1e3]),
)
def test_round_trip_property(tmp_path_factory, n, k, t, seed, scale):
    rng = np.random.default_rng(seed)
    ep = EpisodeTrajectories(
        "p", rng.normal(size=(n, t, 2)) * scale, rng.normal(size=(k, t, 2)) * scale, [str(i) for i in range(k)]
    )
    path = tmp_path_factory.mktemp("rt") / "e.json"
    save_episode(ep, path)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OutOfDomainWarning)
        back = load_episode(path)
    assert back.equals(ep, atol=1e-12 * max(scale, 1.0))


def test_save_rejects_nan(tmp_path, rng):
    ep = _episode(rng)
    bad = object.__new__(EpisodeTrajectories)
    kp = ep.keypoints.copy()
    kp[0, 0, 0] = np.nan
    for name, value in vars(ep).items():
        object.__setattr__(bad, name, value)
    object.__setattr__(bad, "keypoints", kp)
    with pytest.raises(NonFiniteError):
        save_episode(bad, tmp_path / "x.json")
    assert not (tmp_path / "x.json").exists()


def test_construct_rejects_nan_and_empty():
    with pytest.raises(NonFiniteError):
        EpisodeTrajectories("e", [[[np.nan, 0.0]]], [[[0.0, 0.0]]], ["a"])
    with pytest.raises(ShapeError):
        EpisodeTrajectories("e", np.zeros((0, 3, 2)), np.zeros((1, 3, 2)), ["a"])
    with pytest.raises(ShapeError):
        EpisodeTrajectories("e", np.zeros((1, 3, 2)), np.zeros((2, 3, 2)), ["a", "a"])


def test_episode_arrays_read_only(rng):
    ep = _episode(rng)
    with pytest.raises(ValueError):
        ep.keypoints[0, 0, 0] = 1.0


def test_as_trajectory():
    assert as_trajectory([(0, 0), (1, 1)]).shape == (2, 2)
    with pytest.raises(ShapeError):
        as_trajectory([(0, 0, 0)])
    with pytest.raises(NonFiniteError):
        as_trajectory([(0, np.inf)])


def test_run_manifest_round_trip(tmp_path, rng):
    run_dir = tmp_path / "run"
    (run_dir / "e0").mkdir(parents=True)
    (run_dir / "e5").mkdir()
    paths = []
    for epoch in (0, 5):
        rel = f"e{epoch}/ep.json"
        save_episode(_episode(rng, names=["cube"]), run_dir / rel)
        paths.append((epoch, [rel]))
    save_run_manifest(run_dir / "manifest.json", "r", 7, paths)
    run = load_run(run_dir / "manifest.json")
    assert run.run_id == "r" and run.seed == 7
    assert [s.epoch for s in run.snapshots] == [0, 5]
    assert run.object_names == ("cube",)


def test_run_record_invariants(rng):
    a = _episode(rng, n=2, k=1)
    b = _episode(rng, n=3, k=1)
    with pytest.raises(ShapeError):
        RunRecord("r", 0, (Snapshot(1, (a,)), Snapshot(1, (a,))))
    with pytest.raises(ShapeError):
        RunRecord("r", 0, (Snapshot(0, (a,)), Snapshot(1, (b,))))


# -- splitting


def test_split_all_train():
    ids = [f"s{i}" for i in range(7)]
    split = split_sequences(ids, (1.0, 0.0, 0.0), seed=0)
    assert sorted(split.train) == sorted(ids)
    assert split.validation == () and split.test == ()


def test_split_sizes_for_reported_dataset():
    ids = [f"seq{i:05d}" for i in range(10_000)]
    split = split_sequences(ids, (0.5, 0.25, 0.25), seed=3)
    assert (len(split.train), len(split.validation), len(split.test)) == (5000, 2500, 2500)


def test_split_determinism():
    ids = [str(i) for i in range(20)]
    assert split_sequences(ids, (0.6, 0.2, 0.2), 1) == split_sequences(ids, (0.6, 0.2, 0.2), 1)
    assert split_sequences(ids, (0.6, 0.2, 0.2), 1) != split_sequences(ids, (0.6, 0.2, 0.2), 2)


@pytest.mark.parametrize("ids,ratios", [([], (1, 0, 0)), (["a", "a"], (1, 0, 0)), (["a"], (0.5, 0.2, 0.2))])
def test_split_errors(ids, ratios):
    with pytest.raises(ValueError):
        split_sequences(ids, ratios, 0)


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(1, 200),
    weights=st.tuples(st.integers(0, 10), st.integers(0, 10), st.integers(0, 10)).filter(lambda w: sum(w) > 0),
    seed=st.integers(0, 1000),
)
def test_split_is_partition(n, weights, seed):
    ratios = tuple(w / sum(weights) for w in weights)
    ids = [f"id{i}" for i in range(n)]
    split = split_sequences(ids, ratios, seed)
    parts = [split.train, split.validation, split.test]
    assert sorted(sum(parts, ())) == sorted(ids)
    for part, r in zip(parts, ratios):
        assert abs(len(part) - r * n) < 1.0 + 1e-9
