import json
import os

import numpy as np
import pytest

from feta.data import Dataset, load_dataset, save_dataset
from feta.errors import ConfigError
from feta.spectral import Graph
from feta.synthetic import build_synthetic_dataset


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_round_trip(tmp_path):
    ds = build_synthetic_dataset("Synthetic_1", seed=7, counts=(4, 2, 2))
    save_dataset(ds, tmp_path)
    back = load_dataset(str(tmp_path))
    assert back.counts() == ds.counts()
    assert back.n_classes == 2 and back.name == "Synthetic_1" and back.seed == 7
    for split in ds.splits:
        for a, b in zip(ds.splits[split], back.splits[split]):
            assert np.array_equal(a.adjacency(), b.adjacency())
            assert np.array_equal(a.X, b.X)
            assert np.array_equal(a.labels, b.labels)
            assert np.array_equal(a.mask, b.mask)
            assert a.meta["id"] == b.meta["id"]
            assert a.meta["chosen_eig"] == b.meta["chosen_eig"]


def test_manifest_and_records(tmp_path):
    ds = build_synthetic_dataset("Synthetic_1", seed=1, counts=(3, 1, 1))
    save_dataset(ds, tmp_path)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["format"] == "feta-ds/1"
    assert man["counts"] == {"train": 3, "valid": 1, "test": 1}
    lines = (tmp_path / "graphs.jsonl").read_text().splitlines()
    assert len(lines) == 5
    rec = json.loads(lines[0])
    assert set(rec) == {"id", "split", "n", "edges", "features", "labels", "mask", "chosen_eig"}
    assert len(rec["features"]) == rec["n"] and len(rec["mask"]) == rec["n"]


def test_byte_identical_rebuild(tmp_path):
    for sub in ("a", "b"):
        save_dataset(build_synthetic_dataset("Synthetic_2", seed=3, counts=(3, 1, 1)), tmp_path / sub)
    for name in ("graphs.jsonl", "manifest.json"):
        assert _read(tmp_path / "a" / name) == _read(tmp_path / "b" / name)


def test_weighted_edges_survive(tmp_path):
    A = np.array([[0, 0.5, 0], [0.5, 0, 2.0], [0, 2.0, 0]])
    g = Graph.from_adjacency(A, X=np.eye(3), labels=np.array([0, 1, 0]), mask=np.array([1, 0, 1], bool), meta={"id": "w"})
    save_dataset(Dataset("w", "node-class", 2, {"train": [g], "valid": [], "test": []}), tmp_path)
    back = load_dataset(str(tmp_path / "manifest.json")).splits["train"][0]
    assert np.array_equal(back.adjacency(), A)


def test_missing_or_foreign_manifest(tmp_path):
    with pytest.raises(ConfigError):
        load_dataset(str(tmp_path))
    (tmp_path / "manifest.json").write_text(json.dumps({"format": "other/2"}))
    with pytest.raises(ConfigError):
        load_dataset(str(tmp_path))
