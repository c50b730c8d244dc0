"""Datasets of graphs and the ``feta-ds/1`` on-disk format.

A dataset directory holds ``manifest.json`` and ``graphs.jsonl``; each line
of the latter is one graph record::

    {"id", "split", "n", "edges": [[i, j], ...], "features", "labels",
     "mask", "chosen_eig"}
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .spectral import Graph

DATASET_FORMAT = "feta-ds/1"
SPLITS = ("train", "valid", "test")


@dataclass
class Dataset:
    name: str
    task: str
    n_classes: int
    splits: dict
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def in_dim(self) -> int:
        for graphs in self.splits.values():
            if graphs:
                return graphs[0].X.shape[1]
        return 0

    def counts(self) -> dict:
        return {k: len(v) for k, v in self.splits.items()}


def _record(split, g: Graph) -> dict:
    rec = {
        "id": g.meta.get("id"),
        "split": split,
        "n": g.n,
        "edges": [[i, j] if w == 1.0 else [i, j, w] for i, j, w in g.edges],
        "features": g.X.tolist(),
        "labels": None if g.labels is None else np.asarray(g.labels).tolist(),
        "mask": None if g.mask is None else [bool(b) for b in g.mask],
        "chosen_eig": g.meta.get("chosen_eig"),
    }
    return rec


def save_dataset(ds: Dataset, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "graphs.jsonl"), "w", encoding="utf-8") as fh:
        for split in SPLITS:
            for g in ds.splits.get(split, []):
                fh.write(json.dumps(_record(split, g), separators=(",", ":")) + "\n")
    manifest = {
        "format": DATASET_FORMAT,
        "preset": ds.name,
        "seed": ds.seed,
        "task": ds.task,
        "n_classes": ds.n_classes,
        "counts": {s: len(ds.splits.get(s, [])) for s in SPLITS},
        "records": "graphs.jsonl",
        "meta": ds.meta,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(path) -> Dataset:
    """Read a dataset directory (or its manifest file)."""
    manifest_path = path if os.path.isfile(path) else os.path.join(path, "manifest.json")
    try:
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read dataset manifest {manifest_path}: {exc}") from exc
    if manifest.get("format") != DATASET_FORMAT:
        raise ConfigError(f"unsupported dataset format {manifest.get('format')!r}")
    root = os.path.dirname(manifest_path)
    splits = {s: [] for s in SPLITS}
    with open(os.path.join(root, manifest["records"]), encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            labels = rec.get("labels")
            g = Graph(
                n=rec["n"],
                edges=[tuple(e) for e in rec["edges"]],
                X=np.asarray(rec["features"], dtype=np.float64).reshape(rec["n"], -1),
                labels=None if labels is None else np.asarray(labels),
                mask=None if rec.get("mask") is None else np.asarray(rec["mask"], dtype=bool),
                meta={"id": rec.get("id"), "chosen_eig": rec.get("chosen_eig")},
            )
            splits.setdefault(rec["split"], []).append(g)
    return Dataset(
        name=manifest.get("preset"),
        task=manifest.get("task", "node-class"),
        n_classes=manifest["n_classes"],
        splits=splits,
        seed=manifest.get("seed"),
        meta=manifest.get("meta", {}),
    )
