"""Dense attention maps: scaled dot-product, GAT-style masked, and kernel-modulated.

Weights are stored as ``(d_in, d_out)`` arrays and applied as ``X @ W``.
``params`` is a mapping with one entry per head in each list:

* scaled-dot / kernel-pe: ``"W_Q"``, ``"W_K"`` (unused when tied), ``"W_V"``
* gat: ``"W"``, ``"a_src"``, ``"a_dst"`` (``(d_out, 1)`` each)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import DimensionError, DomainError
from .spectral import Graph, LaplacianMatrix, SpectralBasis, eigendecompose

PE_MODES = ("none", "lap_static", "kernel_diffusion", "kernel_random_walk")


@dataclass
class AttentionConfig:
    heads: int = 1
    d_in: int = 16
    d_out: int = 16
    tie_query_key: bool = True
    pe_mode: str = "none"
    pe_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.heads < 1:
            raise DomainError("at least one attention head is required")
        if self.pe_mode not in PE_MODES:
            raise DomainError(f"unknown positional encoding mode {self.pe_mode!r}")


@dataclass
class AttentionMap:
    """Per-head row-stochastic maps, each a tensor of shape ``(..., n, n)``."""

    heads: list

    @property
    def C(self) -> np.ndarray:
        # head axis placed just before the node axes
        return np.stack([h.data for h in self.heads], axis=-3)


def init_attention_params(cfg: AttentionConfig, rng, kind="scaled-dot") -> dict:
    scale = 1.0 / np.sqrt(cfg.d_in)

    def w(shape, s=scale):
        return T.parameter(rng.normal(0.0, s, size=shape))

    if kind == "gat":
        return {
            "W": [w((cfg.d_in, cfg.d_out)) for _ in range(cfg.heads)],
            "a_src": [w((cfg.d_out, 1), 1.0 / np.sqrt(cfg.d_out)) for _ in range(cfg.heads)],
            "a_dst": [w((cfg.d_out, 1), 1.0 / np.sqrt(cfg.d_out)) for _ in range(cfg.heads)],
        }
    params = {
        "W_Q": [w((cfg.d_in, cfg.d_out)) for _ in range(cfg.heads)],
        "W_V": [w((cfg.d_in, cfg.d_out)) for _ in range(cfg.heads)],
    }
    if not cfg.tie_query_key:
        params["W_K"] = [w((cfg.d_in, cfg.d_out)) for _ in range(cfg.heads)]
    return params


def _check_width(X, W):
    if X.shape[-1] != W.shape[0]:
        raise DimensionError(f"input width {X.shape[-1]} does not match weight {W.shape}")


def _query_key(cfg, X, params, h):
    Wq = params["W_Q"][h]
    _check_width(X, Wq)
    Q = T.matmul(X, Wq)
    if cfg.tie_query_key:
        return Q, Q
    return Q, T.matmul(X, params["W_K"][h])


def scaled_dot_attention(cfg: AttentionConfig, X, params):
    """``softmax_rows(Q K^T / sqrt(d_out))`` per head, and ``C V``."""
    X = T.as_tensor(X)
    maps, outs = [], []
    for h in range(cfg.heads):
        Q, K = _query_key(cfg, X, params, h)
        V = T.matmul(X, params["W_V"][h])
        logits = T.matmul(Q, T.transpose(K)) * (1.0 / np.sqrt(Q.shape[-1]))
        C = T.softmax_rows(logits)
        maps.append(C)
        outs.append(T.matmul(C, V))
    return AttentionMap(maps), outs


def _neighbourhood(g):
    A = g.adjacency() if isinstance(g, Graph) else np.asarray(g, dtype=np.float64)
    n = A.shape[-1]
    return (A != 0) | np.eye(n, dtype=bool)


def gat_attention(cfg: AttentionConfig, g, X, params):
    """Masked attention ``e_ij = LeakyReLU(a_src.Wx_i + a_dst.Wx_j)`` over ``N(i) + {i}``.

    ``g`` is a :class:`Graph` or an adjacency array (optionally batched).
    Self-loops are always admitted so every row keeps at least one entry.
    """
    X = T.as_tensor(X)
    mask = _neighbourhood(g)
    maps, outs = [], []
    for h in range(cfg.heads):
        W = params["W"][h]
        _check_width(X, W)
        Z = T.matmul(X, W)
        src = T.matmul(Z, params["a_src"][h])
        dst = T.matmul(Z, params["a_dst"][h])
        logits = T.leaky_relu(src + T.transpose(dst), 0.2)
        C = T.softmax_rows(logits, mask=mask)
        maps.append(C)
        outs.append(T.matmul(C, Z))
    return AttentionMap(maps), outs


def build_pe_kernel(l, mode: str, params=None) -> np.ndarray:
    """Diffusion ``exp(-beta L)`` or ``p``-step random walk ``(I - gamma L)^p``."""
    params = params or {}
    L = l.L if isinstance(l, LaplacianMatrix) else np.asarray(l, dtype=np.float64)
    n = L.shape[-1]
    if mode in ("diffusion", "kernel_diffusion"):
        beta = float(params.get("beta", 1.0))
        if beta < 0:
            raise DomainError(f"diffusion time must be non-negative, got {beta}")
        if beta == 0:
            return np.eye(n)
        basis = eigendecompose(L)
        return (basis.U * np.exp(-beta * basis.lam)) @ basis.U.T
    if mode in ("random_walk", "kernel_random_walk"):
        gamma = float(params.get("gamma", 0.5))
        p = params.get("p", 3)
        if p < 0 or int(p) != p:
            raise DomainError(f"walk length must be a non-negative integer, got {p}")
        lam_max = eigendecompose(L).lambda_max
        if gamma * lam_max > 1.0 + 1e-12:
            raise DomainError(f"gamma={gamma} exceeds 1/lambda_max={1.0 / lam_max:.6g}; kernel may lose PSD")
        step = np.eye(n) - gamma * L
        out = np.eye(n)
        for _ in range(int(p)):
            out = out @ step
        return out
    raise DomainError(f"unknown kernel mode {mode!r}")


def kernel_pe_attention(cfg: AttentionConfig, X, K_p, params):
    """Row-normalised ``exp(Q Q^T / sqrt(d_out)) * K_p``; empty rows become uniform."""
    X = T.as_tensor(X)
    K_p = np.asarray(K_p, dtype=np.float64)
    if np.any(K_p < 0):
        raise DomainError("kernel entries must be non-negative")
    dead = K_p.sum(axis=-1, keepdims=True) <= 0
    # all-zero kernel rows become uniform rows
    kern = np.where(dead, 1.0, K_p)
    maps, outs = [], []
    for h in range(cfg.heads):
        Wq = params["W_Q"][h]
        _check_width(X, Wq)
        Q = T.matmul(X, Wq)
        V = T.matmul(X, params["W_V"][h])
        logits = T.matmul(Q, T.transpose(Q)) * (1.0 / np.sqrt(Q.shape[-1]))
        shift = np.max(logits.data, axis=-1, keepdims=True)
        w = T.exp(logits - shift) * kern
        C = w / T.sum(w, axis=-1, keepdims=True)
        maps.append(C)
        outs.append(T.matmul(C, V))
    return AttentionMap(maps), outs


def laplacian_pe_features(basis, X, k: int, proj=None, signs=None):
    """Add a projection of eigenvectors ``1..k`` to ``X``.

    ``basis`` is a :class:`SpectralBasis` or a raw eigenvector array
    ``(..., n, n)``.  ``proj`` maps ``k -> d`` (identity when omitted and
    ``k == d``); ``signs`` (length ``k``, entries +-1) flips eigenvectors.
    """
    U = basis.U if isinstance(basis, SpectralBasis) else np.asarray(basis, dtype=np.float64)
    n = U.shape[-2]
    if k < 0 or k > n:
        raise DomainError(f"need 0 <= k <= n, got k={k}, n={n}")
    X = T.as_tensor(X)
    if k == 0:
        return X
    vecs = U[..., :, 1 : k + 1]
    if vecs.shape[-1] < k:
        # fewer than k non-trivial eigenvectors: pad with zeros
        pad = np.zeros(vecs.shape[:-1] + (k - vecs.shape[-1],))
        vecs = np.concatenate([vecs, pad], axis=-1)
    if signs is not None:
        vecs = vecs * np.asarray(signs, dtype=np.float64)
    if proj is None:
        if k != X.shape[-1]:
            raise DimensionError("an identity projection needs k equal to the feature width")
        return X + vecs
    return X + T.matmul(vecs, proj)


def random_signs(rng, k: int) -> np.ndarray:
    return rng.choice(np.array([-1.0, 1.0]), size=k)
