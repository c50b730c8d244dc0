"""Graphs, Laplacians, a Jacobi eigensolver and the graph Fourier transform."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ContractError, DimensionError, DomainError

LAPLACIAN_KINDS = ("normalized", "unnormalized", "self-loop-normalized")


@dataclass
class Graph:
    """Undirected weighted graph with node signals.

    ``edges`` holds ``(i, j, w)`` triples with ``i != j``; each undirected
    edge is stored once.  ``X`` is an ``n x d`` float array.
    """

    n: int
    edges: list = field(default_factory=list)
    X: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None
    mask: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = []
        for e in self.edges:
            i, j = int(e[0]), int(e[1])
            w = float(e[2]) if len(e) > 2 else 1.0
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise DomainError(f"edge ({i}, {j}) out of range for n={self.n}")
            if i == j:
                raise DomainError("self-loops are not stored explicitly")
            if w < 0:
                raise DomainError(f"negative edge weight {w} on ({i}, {j})")
            clean.append((i, j, w))
        self.edges = clean
        if self.X is None:
            self.X = np.zeros((self.n, 0))
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.shape[0] != self.n:
            raise DimensionError(f"X has {self.X.shape[0]} rows, graph has {self.n} nodes")

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        for i, j, w in self.edges:
            A[i, j] += w
            A[j, i] += w
        return A

    @classmethod
    def from_adjacency(cls, A, **kwargs):
        A = np.asarray(A, dtype=np.float64)
        iu, ju = np.nonzero(np.triu(A, 1))
        edges = [(int(i), int(j), float(A[i, j])) for i, j in zip(iu, ju)]
        return cls(n=A.shape[0], edges=edges, **kwargs)


@dataclass
class LaplacianMatrix:
    L: np.ndarray
    kind: str = "normalized"


@dataclass
class SpectralBasis:
    """Eigenvectors ``U`` (columns) and ascending eigenvalues ``lam``."""

    U: np.ndarray
    lam: np.ndarray

    @property
    def lambda_max(self) -> float:
        return float(self.lam[-1])

    @property
    def n(self) -> int:
        return self.U.shape[0]


def normalized_laplacian(A: np.ndarray) -> np.ndarray:
    """``I - D^-1/2 A D^-1/2`` for one adjacency or a stack of them.

    Degree-zero nodes get a zero row and column (so ``L[i, i] = 0``).
    """
    A = np.asarray(A, dtype=np.float64)
    if np.any(A < 0):
        raise DomainError("negative edge weight")
    deg = A.sum(axis=-1)
    inv = np.zeros_like(deg)
    np.divide(1.0, np.sqrt(deg), out=inv, where=deg > 0)
    n = A.shape[-1]
    S = inv[..., :, None] * A * inv[..., None, :]
    L = np.eye(n) - S
    iso = deg == 0
    if np.any(iso):
        idx = np.nonzero(iso)
        L[idx + (idx[-1],)] = 0.0
    return L


def build_laplacian(g, kind: str = "normalized") -> LaplacianMatrix:
    """Laplacian of a :class:`Graph` (or a raw adjacency array)."""
    if kind not in LAPLACIAN_KINDS:
        raise DomainError(f"unknown Laplacian kind {kind!r}")
    A = g.adjacency() if isinstance(g, Graph) else np.asarray(g, dtype=np.float64)
    if np.any(A < 0):
        raise DomainError("negative edge weight")
    if kind == "unnormalized":
        L = np.diag(A.sum(axis=1)) - A
    elif kind == "normalized":
        L = normalized_laplacian(A)
    else:
        L = normalized_laplacian(A + np.eye(A.shape[0]))
    return LaplacianMatrix(L=L, kind=kind)


# ---------------------------------------------------------------------------
# eigensolver


def _round_robin(m):
    """Pairings for one sweep: ``m - 1`` rounds of ``m / 2`` disjoint pairs."""
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        half = m // 2
        rounds.append((np.array(players[:half]), np.array(players[half:][::-1])))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(A, tol=1e-14, max_sweeps=100):
    """Symmetric eigendecomposition by cyclic Jacobi rotations.

    Works on a single ``n x n`` matrix or a stack ``(..., n, n)``.  Each
    sweep visits every off-diagonal pair once, grouped into rounds of
    disjoint pairs so that a round is one vectorised update.

    Returns unsorted eigenvalues and the matching eigenvector columns.
    """
    A = np.array(A, dtype=np.float64, copy=True)
    batch_shape = A.shape[:-2]
    n = A.shape[-1]
    A = A.reshape((-1, n, n))
    V = np.broadcast_to(np.eye(n), A.shape).copy()
    if n == 1:
        return A[:, 0, 0].reshape(batch_shape + (1,)), V.reshape(batch_shape + (1, 1))
    m = n + (n % 2)
    rounds = [(p[(p < n) & (q < n)], q[(p < n) & (q < n)]) for p, q in _round_robin(m)]
    rows = np.arange(A.shape[0])[:, None]
    offdiag = ~np.eye(n, dtype=bool)
    scale = np.maximum(np.sqrt((A * A).sum(axis=(1, 2))), np.finfo(float).tiny)
    prev = np.inf
    for _ in range(max_sweeps):
        worst = np.max(np.sqrt((A[:, offdiag] ** 2).sum(axis=1)) / scale)
        # stop at the tolerance, or once rounding noise stops the decrease
        if worst <= tol or (worst < 1e-10 and worst >= prev):
            break
        prev = worst
        for p, q in rounds:
            apq = A[:, p, q]
            app = A[:, p, p]
            aqq = A[:, q, q]
            active = np.abs(apq) > 1e-300
            safe = np.where(active, apq, 1.0)
            with np.errstate(over="ignore", divide="ignore"):
                theta = (aqq - app) / (2.0 * safe)
                t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
            t = np.where(theta == 0, 1.0, t)
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            c3, s3 = c[:, :, None], s[:, :, None]
            # rows p, q
            Ap, Aq = A[rows, p, :], A[rows, q, :]
            A[rows, p, :] = c3 * Ap - s3 * Aq
            A[rows, q, :] = s3 * Ap + c3 * Aq
            # columns p, q
            Ap = np.swapaxes(A[:, :, p], 1, 2)
            Aq = np.swapaxes(A[:, :, q], 1, 2)
            newp = c3 * Ap - s3 * Aq
            newq = s3 * Ap + c3 * Aq
            A[:, :, p] = np.swapaxes(newp, 1, 2)
            A[:, :, q] = np.swapaxes(newq, 1, 2)
            A[rows, p, q] = 0.0
            A[rows, q, p] = 0.0
            Vp = np.swapaxes(V[:, :, p], 1, 2)
            Vq = np.swapaxes(V[:, :, q], 1, 2)
            V[:, :, p] = np.swapaxes(c3 * Vp - s3 * Vq, 1, 2)
            V[:, :, q] = np.swapaxes(s3 * Vp + c3 * Vq, 1, 2)
    lam = np.diagonal(A, axis1=1, axis2=2).copy()
    return lam.reshape(batch_shape + (n,)), V.reshape(batch_shape + (n, n))


def _canonical(lam, U, tie_tol=1e-10):
    """Ascending order, first nonzero component positive, ties lexicographic."""
    order = np.argsort(lam, kind="stable")
    lam, U = lam[order], U[:, order]
    for k in range(U.shape[1]):
        nz = np.nonzero(np.abs(U[:, k]) > 1e-12)[0]
        if nz.size and U[nz[0], k] < 0:
            U[:, k] = -U[:, k]
    start = 0
    n = len(lam)
    while start < n:
        stop = start + 1
        while stop < n and lam[stop] - lam[start] <= tie_tol:
            stop += 1
        if stop - start > 1:
            block = U[:, start:stop]
            keys = [tuple(np.round(-block[:, k], 9)) for k in range(block.shape[1])]
            perm = sorted(range(len(keys)), key=keys.__getitem__)
            U[:, start:stop] = block[:, perm]
            lam[start:stop] = lam[start:stop][perm]
        start = stop
    return lam, U


def eigendecompose(l) -> SpectralBasis:
    """Spectral basis of a symmetric Laplacian with a deterministic sign convention."""
    L = l.L if isinstance(l, LaplacianMatrix) else np.asarray(l, dtype=np.float64)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise DimensionError(f"expected a square matrix, got {L.shape}")
    if np.max(np.abs(L - L.T), initial=0.0) > 1e-9:
        raise ContractError("eigendecompose requires a symmetric matrix")
    lam, U = jacobi_eigh((L + L.T) / 2.0)
    lam, U = _canonical(lam, U)
    return SpectralBasis(U=U, lam=lam)


def eigendecompose_many(Ls):
    """Batched :func:`eigendecompose` for a stack of equally sized matrices."""
    Ls = np.asarray(Ls, dtype=np.float64)
    lam, U = jacobi_eigh((Ls + np.swapaxes(Ls, -1, -2)) / 2.0)
    out = []
    for k in range(Ls.shape[0]):
        lk, Uk = _canonical(lam[k], U[k])
        out.append(SpectralBasis(U=Uk, lam=lk))
    return out


def graph_fourier(basis: SpectralBasis, X, direction="forward") -> np.ndarray:
    """``U^T X`` (forward) or ``U X_hat`` (inverse)."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != basis.n:
        raise DimensionError(f"signal has {X.shape[0]} rows, basis has {basis.n}")
    if direction == "forward":
        return basis.U.T @ X
    if direction == "inverse":
        return basis.U @ X
    raise DomainError(f"direction must be 'forward' or 'inverse', got {direction!r}")


def rescale_spectrum(l, lambda_max: float = 2.0) -> np.ndarray:
    """``2 L / lambda_max - I``; maps a spectrum in [0, lambda_max] onto [-1, 1]."""
    L = l.L if isinstance(l, LaplacianMatrix) else np.asarray(l, dtype=np.float64)
    if not lambda_max > 0:
        raise DomainError(f"lambda_max must be positive, got {lambda_max}")
    return 2.0 * L / lambda_max - np.eye(L.shape[-1])


def connected_components(A) -> int:
    A = np.asarray(A)
    n = A.shape[0]
    seen = np.zeros(n, dtype=bool)
    count = 0
    for s in range(n):
        if seen[s]:
            continue
        count += 1
        stack = [s]
        seen[s] = True
        while stack:
            v = stack.pop()
            for u in np.nonzero(A[v])[0]:
                if not seen[u]:
                    seen[u] = True
                    stack.append(u)
    return count
