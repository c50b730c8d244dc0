"""Stochastic-block-model graphs whose node classes come from one Laplacian eigenvector."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ConfigError, DomainError, FetaError
from .spectral import Graph, build_laplacian, connected_components, eigendecompose, eigendecompose_many

MAX_ATTEMPTS = 20
KMEANS_ITERATIONS = 50


class GenerationError(FetaError, RuntimeError):
    """A random graph could not be made connected within the attempt budget."""


@dataclass
class SBMConfig:
    B: int = 2
    N: int = 10
    p_i: float = 0.9
    p_o: float = 0.05
    eig_indices: str | tuple = "ends"
    splits: tuple = (1000, 100, 100)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_o <= self.p_i <= 1.0:
            raise ConfigError(f"need 0 <= p_o <= p_i <= 1, got p_i={self.p_i}, p_o={self.p_o}")
        if self.B < 1 or self.N < 1:
            raise ConfigError("B and N must be positive")

    @property
    def n(self) -> int:
        return self.B * self.N

    def index_set(self) -> tuple:
        """Eigenvector indices (ascending eigenvalue order, 0 = constant vector)."""
        n = self.n
        if self.eig_indices == "ends":
            return (1, n - 1)
        if self.eig_indices == "ends_mid":
            return (1, math.ceil(n / 2), n - 1)
        if self.eig_indices == "all":
            return tuple(range(1, n))
        return tuple(int(i) for i in self.eig_indices)


PRESETS = {
    "Synthetic_1": dict(B=2, N=10, p_i=0.9, p_o=0.05, eig_indices="ends"),
    "Synthetic_2": dict(B=6, N=10, p_i=0.9, p_o=0.05, eig_indices="ends"),
    "Synthetic_3": dict(B=6, N=10, p_i=0.9, p_o=0.05, eig_indices="ends_mid"),
}


@dataclass
class SyntheticGraph:
    graph: Graph
    chosen_eig: int
    class_of: np.ndarray
    mask: np.ndarray


def preset(name: str, seed: int = 0, **overrides) -> SBMConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    kw = dict(PRESETS[name], seed=seed)
    kw.update(overrides)
    return SBMConfig(**kw)


def _sample_adjacency(cfg: SBMConfig, rng) -> np.ndarray:
    n = cfg.n
    block = np.repeat(np.arange(cfg.B), cfg.N)
    prob = np.where(block[:, None] == block[None, :], cfg.p_i, cfg.p_o)
    draw = rng.random((n, n))
    upper = np.triu(draw < prob, 1)
    return (upper | upper.T).astype(np.float64)


def generate_sbm(cfg: SBMConfig, rng) -> Graph:
    """Unit-weight SBM graph with blocks of exactly ``N`` nodes, resampled until connected."""
    for _ in range(MAX_ATTEMPTS):
        A = _sample_adjacency(cfg, rng)
        if connected_components(A) == 1:
            return Graph.from_adjacency(A)
    raise GenerationError(f"no connected graph in {MAX_ATTEMPTS} attempts (p_i={cfg.p_i}, p_o={cfg.p_o})")


def kmeans_1d(values, k: int, rng, iterations: int = KMEANS_ITERATIONS) -> np.ndarray:
    """Cluster scalars into ``k`` groups (k-means++ seeding, fixed iteration budget).

    Labels are renumbered so cluster 0 has the smallest centroid.  An empty
    cluster is reseeded at the point farthest from its assigned centroid.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if k < 1 or k > x.size:
        raise DomainError(f"cannot form {k} clusters from {x.size} points")
    centers = [x[rng.integers(x.size)]]
    for _ in range(1, k):
        d2 = np.min((x[:, None] - np.array(centers)[None, :]) ** 2, axis=1)
        total = d2.sum()
        if total <= 0:
            centers.append(x[rng.integers(x.size)])
        else:
            centers.append(x[rng.choice(x.size, p=d2 / total)])
    c = np.array(centers)
    for _ in range(iterations):
        lab = np.argmin(np.abs(x[:, None] - c[None, :]), axis=1)
        new = c.copy()
        for j in range(k):
            members = x[lab == j]
            if members.size:
                new[j] = members.mean()
            else:
                far = np.argmax(np.abs(x - c[lab]))
                new[j] = x[far]
                lab[far] = j
        if np.array_equal(new, c):
            break
        c = new
    lab = np.argmin(np.abs(x[:, None] - c[None, :]), axis=1)
    rank = np.argsort(np.argsort(c, kind="stable"), kind="stable")
    return rank[lab]


def _signals(g: Graph, vec, eig_index: int, C: int, rng) -> SyntheticGraph:
    if np.ptp(vec) < 1e-10:
        raise DomainError(f"eigenvector {eig_index} is constant; it cannot define {C} classes")
    classes = kmeans_1d(vec, C, rng)
    n = g.n
    hidden = np.zeros(n, dtype=bool)
    hidden[rng.permutation(n)[: math.ceil(n / 2)]] = True
    X = np.zeros((n, C))
    X[np.arange(n), classes] = 1.0
    X[hidden] = 0.0
    out = Graph(n=n, edges=g.edges, X=X, labels=classes, mask=hidden, meta=dict(g.meta, chosen_eig=int(eig_index)))
    return SyntheticGraph(graph=out, chosen_eig=int(eig_index), class_of=classes, mask=hidden)


def assign_spectral_signals(g: Graph, eig_index: int, C: int, rng, basis=None) -> SyntheticGraph:
    """One-hot classes from k-means on eigenvector ``eig_index`` of the combinatorial Laplacian.

    Half the nodes (rounded up) have their features zeroed; ``mask`` marks them.
    """
    if not 0 <= eig_index < g.n:
        raise DomainError(f"eigenvector index {eig_index} outside [0, {g.n})")
    if basis is None:
        basis = eigendecompose(build_laplacian(g, "unnormalized"))
    return _signals(g, basis.U[:, eig_index], eig_index, C, rng)


def build_synthetic_dataset(name, seed: int = 0, counts=None, **overrides) -> Dataset:
    """Build a preset dataset; ``counts`` overrides the (train, valid, test) sizes.

    Every graph draws from its own stream ``default_rng([seed, split, index])``.
    """
    cfg = name if isinstance(name, SBMConfig) else preset(name, seed, **overrides)
    label = name if isinstance(name, str) else "custom"
    counts = tuple(counts) if counts is not None else tuple(cfg.splits)
    choices = cfg.index_set()
    splits = {}
    for s, (split, count) in enumerate(zip(("train", "valid", "test"), counts)):
        rngs = [np.random.default_rng([cfg.seed, s, i]) for i in range(count)]
        graphs = [generate_sbm(cfg, r) for r in rngs]
        if not graphs:
            splits[split] = []
            continue
        Ls = np.stack([build_laplacian(g, "unnormalized").L for g in graphs])
        bases = eigendecompose_many(Ls)
        out = []
        for i, (g, r, b) in enumerate(zip(graphs, rngs, bases)):
            g.meta["id"] = f"{split}-{i}"
            idx = choices[r.integers(len(choices))]
            out.append(_signals(g, b.U[:, idx], idx, cfg.B, r).graph)
        splits[split] = out
    meta = {"B": cfg.B, "N": cfg.N, "p_i": cfg.p_i, "p_o": cfg.p_o, "eig_indices": list(choices)}
    return Dataset(name=label, task="node-class", n_classes=cfg.B, splits=splits, seed=cfg.seed, meta=meta)
