"""
How close can a stochastic map get to a spectral filter?
========================================================

Attention maps are row-stochastic.  A spectral filter with response ``f``
acts through ``U diag(f) U^T``.  This script measures the best achievable
Frobenius distance between the two on small graphs, in three settings:
unit row sums only (closed form), unit row sums plus non-negativity
(projected gradient), and actual softmax attention (gradient search).
"""

import numpy as np

from feta.verifier import (
    FilterTarget,
    attention_min_error_search,
    complete_graph,
    graph_basis,
    min_error_over_stochastic,
    optimal_filter_for_support,
    path_graph,
    random_stochastic,
    spectral_bounds,
)

rng = np.random.default_rng(3)
basis = graph_basis(path_graph(4))
print("path graph eigenvalues", np.round(basis.lam, 4))

# The all-pass response is met exactly by the identity.
rep = min_error_over_stochastic(FilterTarget(np.ones(4), basis))
print("all-pass error", rep.e_star)

# Compare the relaxed and constrained minima with the spectral bounds.
for name, f in [("low-pass", 0.5 ** np.arange(4)), ("high-pass", np.array([0.0, 0.0, 0.0, 1.0])),
                ("amplifying", 2.0 * np.ones(4))]:
    t = FilterTarget(f, basis)
    lo, hi = spectral_bounds(t)
    affine = min_error_over_stochastic(t, "affine").e_star
    nonneg = min_error_over_stochastic(t, "nonnegative", rng, restarts=5)
    print(f"{name:10s} bounds [{lo:.3f}, {hi:.3f}]  unit rows {affine:.3f}  "
          f"non-negative {nonneg.e_star:.3f} ({nonneg.method})")

# Softmax attention can realise the low-pass target almost exactly.
low = FilterTarget(0.5 ** np.arange(4), basis)
print("attention search, low-pass:", attention_min_error_search(low, restarts=2, steps=800, rng=rng))

# For a fixed map the best response is the diagonal of U^T C U.
K4 = graph_basis(complete_graph(4))
C = random_stochastic(rng, 4)
f_star, value = optimal_filter_for_support(C, K4)
print("best response for a random map", np.round(f_star, 3), "residual", round(value, 4))
