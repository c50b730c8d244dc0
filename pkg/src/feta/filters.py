"""Chebyshev polynomial filters and a parallel ARMA rational filter."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import DimensionError, DomainError

RESPONSE_POINTS = 256


@dataclass
class FilterCoefficients:
    """Chebyshev coefficients ``alpha`` of length ``K + 1``."""

    alpha: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        if self.alpha.ndim != 1 or self.alpha.size == 0:
            raise DimensionError(f"alpha must be a non-empty vector, got shape {self.alpha.shape}")
        if not np.all(np.isfinite(self.alpha)):
            raise DomainError("alpha has non-finite entries")

    @property
    def order(self) -> int:
        return self.alpha.size - 1


@dataclass
class FrequencyResponse:
    grid: np.ndarray
    magnitude: np.ndarray


@dataclass
class ArmaParams:
    """Poles ``a`` and gains ``b`` of ``S`` first-order branches."""

    a: np.ndarray
    b: np.ndarray
    iterations: int = 15


def default_grid(m: int = RESPONSE_POINTS) -> np.ndarray:
    return np.linspace(-1.0, 1.0, m)


def cheb_eval(k: int, x):
    """Chebyshev polynomial ``T_k`` at a scalar, an array, or a square matrix.

    A 2-D square input is treated as a matrix argument (``T_k(M)``); any other
    array is evaluated elementwise.
    """
    if k < 0:
        raise DomainError(f"order must be non-negative, got {k}")
    x = np.asarray(x, dtype=np.float64)
    matrix = x.ndim == 2 and x.shape[0] == x.shape[1]
    one = np.eye(x.shape[0]) if matrix else np.ones_like(x)
    prod = (lambda a, b: a @ b) if matrix else (lambda a, b: a * b)
    if k == 0:
        return one
    prev, cur = one, x.copy()
    for _ in range(k - 1):
        prev, cur = cur, 2.0 * prod(x, cur) - prev
    return cur


def cheb_basis(grid, K: int) -> np.ndarray:
    """Matrix ``B[j, k] = T_k(grid[j])`` for ``k = 0..K``."""
    grid = np.asarray(grid, dtype=np.float64)
    B = np.empty((grid.size, K + 1))
    B[:, 0] = 1.0
    if K >= 1:
        B[:, 1] = grid
    for k in range(2, K + 1):
        B[:, k] = 2.0 * grid * B[:, k - 1] - B[:, k - 2]
    return B


def frequency_response(c, grid=None) -> FrequencyResponse:
    """Evaluate ``sum_k alpha[k] T_k`` on ``grid`` (256 points on [-1, 1] by default)."""
    alpha = c.alpha if isinstance(c, FilterCoefficients) else np.asarray(c, dtype=np.float64)
    grid = default_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    if np.any(grid < -1.0) or np.any(grid > 1.0):
        raise DomainError("response grid must lie within [-1, 1]")
    return FrequencyResponse(grid=grid, magnitude=cheb_basis(grid, alpha.size - 1) @ alpha)


def chebyshev_fit(target, K: int, grid=None):
    """Least-squares Chebyshev coefficients for ``target`` sampled on ``grid``.

    Returns ``(alpha, sup_error)`` where the error is measured on the grid.
    """
    grid = default_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    y = np.asarray(target(grid) if callable(target) else target, dtype=np.float64)
    B = cheb_basis(grid, K)
    alpha, *_ = np.linalg.lstsq(B, y, rcond=None)
    return alpha, float(np.max(np.abs(B @ alpha - y)))


def _coeff_column(alpha, k, batch_ndim):
    # alpha[..., k] reshaped to broadcast against (..., n, d)
    col = T.getitem(alpha, (Ellipsis, k))
    return T.reshape(col, col.shape + (1, 1)) if batch_ndim else col


def apply_filter(c, Lt, X) -> T.Tensor:
    """``sum_k alpha_k T_k(Lt) X`` via the three-term vector recursion.

    ``alpha`` may be a vector (one filter) or carry leading batch axes that
    match the leading axes of ``Lt`` and ``X``.  Gradients flow to ``alpha``
    and ``X`` when they are tensors.
    """
    alpha = c.alpha if isinstance(c, FilterCoefficients) else c
    alpha, Lt, X = T.as_tensor(alpha), T.as_tensor(Lt), T.as_tensor(X)
    if Lt.shape[-1] != Lt.shape[-2] or Lt.shape[-1] != X.shape[-2]:
        raise DimensionError(f"filter shapes disagree: L {Lt.shape}, X {X.shape}")
    batched = alpha.ndim > 1
    K = alpha.shape[-1] - 1
    z_prev = X
    out = _coeff_column(alpha, 0, batched) * X
    if K == 0:
        return out
    z = T.matmul(Lt, X)
    out = out + _coeff_column(alpha, 1, batched) * z
    for k in range(2, K + 1):
        z_prev, z = z, 2.0 * T.matmul(Lt, z) - z_prev
        out = out + _coeff_column(alpha, k, batched) * z
    return out


def arma_apply(p, Lt, X, iterations=None) -> T.Tensor:
    """Sum of ``S`` first-order rational branches ``b_s (I - a_s Lt)^-1 X``.

    Each inverse is approximated by unrolled fixed-point steps
    ``y <- a_s Lt y + X`` starting from ``y = X``.  ``p`` is an
    :class:`ArmaParams` or a pair ``(a, b)`` of tensors whose last axis
    indexes branches.
    """
    if isinstance(p, ArmaParams):
        a, b = p.a, p.b
        iterations = p.iterations if iterations is None else iterations
    else:
        a, b = p
    iterations = 15 if iterations is None else int(iterations)
    a, b, Lt, X = T.as_tensor(a), T.as_tensor(b), T.as_tensor(Lt), T.as_tensor(X)
    if np.any(np.abs(a.data) >= 1.0):
        raise DomainError("ARMA poles must satisfy |a| < 1 for the iteration to converge")
    if a.shape != b.shape:
        raise DimensionError(f"pole and gain shapes differ: {a.shape} vs {b.shape}")
    if Lt.shape[-1] != X.shape[-2]:
        raise DimensionError(f"filter shapes disagree: L {Lt.shape}, X {X.shape}")
    batched = a.ndim > 1
    out = None
    for s in range(a.shape[-1]):
        a_s = _coeff_column(a, s, batched)
        y = X
        for _ in range(iterations):
            y = a_s * T.matmul(Lt, y) + X
        term = _coeff_column(b, s, batched) * y
        out = term if out is None else out + term
    return out
