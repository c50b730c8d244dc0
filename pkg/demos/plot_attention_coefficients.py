"""
From attention maps to filter coefficients
==========================================

Each attention head yields a row-stochastic matrix.  A small graph network
reads that matrix as a weighted graph and outputs Chebyshev coefficients,
so every graph gets its own filter.  Here we look at one untrained layer.
"""

import numpy as np

from feta.attention import AttentionConfig, init_attention_params, scaled_dot_attention
from feta.coeff import attention_to_laplacian, coefficients_from_attention, init_coeff_params
from feta.filters import frequency_response
from feta.model import FetaConfig, as_batch, forward, init_params
from feta.spectral import Graph

rng = np.random.default_rng(2)
A = np.triu(rng.random((6, 6)) < 0.5, 1).astype(float)
A = A + A.T + np.diag(np.ones(5), 1) + np.diag(np.ones(5), -1)
A = (A > 0).astype(float)
g = Graph.from_adjacency(A, X=rng.normal(size=(6, 4)))

# Two heads with tied queries and keys.
cfg = AttentionConfig(heads=2, d_in=4, d_out=4)
params = init_attention_params(cfg, rng)
att, _ = scaled_dot_attention(cfg, g.X, params)
print("row sums of head 0", att.heads[0].data.sum(1))

# The symmetrised map with self loops becomes a normalised Laplacian.
L_att = attention_to_laplacian(att.heads[0]).data
print("Laplacian eigenvalues", np.round(np.linalg.eigvalsh(L_att), 3))

# Fresh coefficient networks start at the all-pass vector e_0.
coeff = init_coeff_params(order=4, rng=rng)
alpha = coefficients_from_attention(coeff, att.heads[0]).data
print("coefficients", np.round(alpha, 4))
print("response at -1, 0, 1:", np.round(frequency_response(alpha, [-1.0, 0.0, 1.0]).magnitude, 4))

# The full model returns logits and, per layer, the coefficients of every
# graph in the batch and every head.
mcfg = FetaConfig(in_dim=4, n_classes=2, layers=1, hidden=8, heads=2, order=4)
P = init_params(mcfg, rng)
logits, per_layer = forward(mcfg, P, as_batch(mcfg, g))
print("logits shape", logits.shape, "coefficient shape", per_layer[0].shape)
