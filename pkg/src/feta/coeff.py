"""Coefficient GNN: turns an attention map into Chebyshev filter coefficients.

Node states live in coefficient space (width ``K + 1``), start at all ones,
and are propagated over a graph built from the attention map.  A mean
readout followed by a two-layer MLP gives the coefficient vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import DimensionError


@dataclass
class CoeffGNNParams:
    W_p: list
    mlp_W1: T.Tensor
    mlp_b1: T.Tensor
    mlp_W2: T.Tensor
    mlp_b2: T.Tensor

    @property
    def layers(self) -> int:
        return len(self.W_p)

    @property
    def width(self) -> int:
        return self.W_p[0].shape[0]

    @classmethod
    def from_dict(cls, params, prefix="coeff."):
        layers = sum(1 for k in params if k.startswith(prefix + "W_p"))
        return cls(
            W_p=[params[f"{prefix}W_p{i}"] for i in range(layers)],
            mlp_W1=params[prefix + "mlp_W1"],
            mlp_b1=params[prefix + "mlp_b1"],
            mlp_W2=params[prefix + "mlp_W2"],
            mlp_b2=params[prefix + "mlp_b2"],
        )

    def as_dict(self, prefix="coeff.") -> dict:
        out = {f"{prefix}W_p{i}": w for i, w in enumerate(self.W_p)}
        out.update(
            {
                f"{prefix}mlp_W1": self.mlp_W1,
                f"{prefix}mlp_b1": self.mlp_b1,
                f"{prefix}mlp_W2": self.mlp_W2,
                f"{prefix}mlp_b2": self.mlp_b2,
            }
        )
        return out


def init_coeff_params(order: int, rng, layers: int = 2, hidden: int = 32, final_scale=1e-2, out_dim=None) -> CoeffGNNParams:
    """Random message weights and a readout whose output starts near ``e_0``.

    The final bias is ``e_0`` (the all-pass filter) and the final weights are
    small, so a fresh model filters with (almost) the identity response.
    ``out_dim`` overrides the readout width (default ``order + 1``).
    """
    m = order + 1
    out_dim = m if out_dim is None else out_dim
    W_p = [T.parameter(rng.normal(0.0, 1.0 / np.sqrt(m), size=(m, m))) for _ in range(layers)]
    b2 = np.zeros(out_dim)
    b2[0] = 1.0
    return CoeffGNNParams(
        W_p=W_p,
        mlp_W1=T.parameter(rng.normal(0.0, 1.0 / np.sqrt(m), size=(m, hidden))),
        mlp_b1=T.parameter(np.zeros(hidden)),
        mlp_W2=T.parameter(rng.normal(0.0, final_scale, size=(hidden, out_dim))),
        mlp_b2=T.parameter(b2),
    )


def attention_to_laplacian(C) -> T.Tensor:
    """Normalised Laplacian of ``(C + C^T) / 2 + I``; differentiable in ``C``."""
    C = T.as_tensor(C)
    n = C.shape[-1]
    eye = np.eye(n)
    A = (C + T.transpose(C)) * 0.5 + eye
    deg = T.sum(A, axis=-1, keepdims=True)
    inv_sqrt = T.exp(T.log(deg) * -0.5)
    S = inv_sqrt * A * T.transpose(inv_sqrt)
    return eye - S


def initial_state(n: int, order: int, batch_shape=()) -> T.Tensor:
    return T.Tensor(np.ones(tuple(batch_shape) + (n, order + 1)))


def coeff_message_pass(W, L_att, state) -> T.Tensor:
    """One layer: ``ReLU(L_att @ state @ W)``.

    ``W`` is a weight tensor, or a :class:`CoeffGNNParams` together with the
    layer index as ``(params, l)``.
    """
    if isinstance(W, tuple):
        params, layer = W
        W = params.W_p[layer]
    state = T.as_tensor(state)
    if state.shape[-1] != W.shape[0]:
        raise DimensionError(f"state width {state.shape[-1]} does not match W {W.shape}")
    return T.relu(T.matmul(T.matmul(L_att, state), W))


def coeff_readout(params: CoeffGNNParams, state) -> T.Tensor:
    """``MLP(mean over nodes)``; returns coefficients of shape ``(..., K + 1)``."""
    pooled = T.mean(state, axis=-2)
    hidden = T.relu(T.matmul(T.reshape(pooled, pooled.shape[:-1] + (1, pooled.shape[-1])), params.mlp_W1) + params.mlp_b1)
    out = T.matmul(hidden, params.mlp_W2) + params.mlp_b2
    return T.reshape(out, out.shape[:-2] + (out.shape[-1],))


def coefficients_from_attention(params: CoeffGNNParams, C) -> T.Tensor:
    """Full pipeline for one head: Laplacian, ``L_g`` message passes, readout."""
    C = T.as_tensor(C)
    L_att = attention_to_laplacian(C)
    state = initial_state(C.shape[-1], params.width - 1, C.shape[:-2])
    for layer in range(params.layers):
        state = coeff_message_pass((params, layer), L_att, state)
    return coeff_readout(params, state)


def orthogonality_penalty(alphas) -> T.Tensor:
    """``||(A^T A) * (11^T - I)||_F`` for coefficient columns ``A`` of shape ``(..., K+1, h)``.

    With leading batch axes the per-graph norms are averaged.
    """
    alphas = T.as_tensor(alphas)
    h = alphas.shape[-1]
    gram = T.matmul(T.transpose(alphas), alphas)
    off = gram * (1.0 - np.eye(h))
    if alphas.ndim == 2:
        return T.frobenius_norm(off)
    return T.mean(T.frobenius_norm(off, axes=(-2, -1)))
