import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from feta import tensor as T
from feta.errors import DimensionError, DomainError
from feta.filters import (
    ArmaParams,
    FilterCoefficients,
    apply_filter,
    arma_apply,
    cheb_eval,
    chebyshev_fit,
    frequency_response,
)
from feta.spectral import build_laplacian, eigendecompose, rescale_spectrum

from conftest import random_graph


def rescaled(g):
    l = build_laplacian(g)
    b = eigendecompose(l)
    return rescale_spectrum(l, b.lambda_max), b


def spectral_oracle(alpha, g, X):
    """U diag(G(lambda~)) U^T X with G evaluated through cos(k arccos x)."""
    l = build_laplacian(g)
    b = eigendecompose(l)
    lt = np.clip(2 * b.lam / b.lambda_max - 1, -1, 1)
    G = sum(a * np.cos(k * np.arccos(lt)) for k, a in enumerate(alpha))
    return b.U @ np.diag(G) @ b.U.T @ X


def test_cheb_base_cases():
    assert cheb_eval(0, 0.7) == 1.0
    assert cheb_eval(1, 0.3) == pytest.approx(0.3)
    assert cheb_eval(2, 0.5) == pytest.approx(-0.5)


@pytest.mark.parametrize("k", range(0, 9))
def test_cheb_matches_trig_identity(k):
    x = np.linspace(-1, 1, 33)
    np.testing.assert_allclose(cheb_eval(k, x), np.cos(k * np.arccos(x)), atol=1e-12)
    assert cheb_eval(5, 0.8) == pytest.approx(np.cos(5 * np.arccos(0.8)), abs=1e-14)


def test_cheb_matrix_argument(rng):
    Lt, b = rescaled(random_graph(rng, 6))
    lt = np.clip(2 * b.lam / b.lambda_max - 1, -1, 1)
    oracle = b.U @ np.diag(np.cos(3 * np.arccos(lt))) @ b.U.T
    np.testing.assert_allclose(cheb_eval(3, Lt), oracle, atol=1e-12)


def test_cheb_negative_order():
    with pytest.raises(DomainError):
        cheb_eval(-1, 0.0)


def test_frequency_response_examples():
    grid = np.linspace(-1, 1, 11)
    np.testing.assert_allclose(frequency_response(FilterCoefficients([1, 0, 0, 0]), grid).magnitude, 1.0)
    np.testing.assert_allclose(frequency_response([0, 1, 0], grid).magnitude, grid)
    assert frequency_response([0, 0, 1], np.array([0.5])).magnitude[0] == pytest.approx(-0.5)
    assert frequency_response([1.0]).grid.size == 256


def test_frequency_response_domain():
    with pytest.raises(DomainError):
        frequency_response([1.0], np.array([1.5]))


def test_coefficients_validation():
    with pytest.raises(DomainError):
        FilterCoefficients([np.nan])
    assert FilterCoefficients([1, 2, 3]).order == 2


def test_all_pass_and_first_order(rng):
    Lt, _ = rescaled(random_graph(rng, 7))
    X = rng.normal(size=(7, 3))
    np.testing.assert_allclose(apply_filter(np.eye(5)[0], Lt, X).data, X)
    np.testing.assert_allclose(apply_filter(np.eye(5)[1], Lt, X).data, Lt @ X, atol=1e-14)


def test_ten_node_order_eight_matches_spectral_oracle(rng):
    g = random_graph(rng, 10)
    Lt, _ = rescaled(g)
    alpha, X = rng.normal(size=9), rng.normal(size=(10, 4))
    assert np.max(np.abs(apply_filter(alpha, Lt, X).data - spectral_oracle(alpha, g, X))) < 1e-8


@given(st.integers(2, 12), st.integers(0, 8), st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_spatial_spectral_equivalence(n, K, seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n)
    Lt, _ = rescaled(g)
    alpha, X = rng.normal(size=K + 1), rng.normal(size=(n, 2))
    assert np.max(np.abs(apply_filter(alpha, Lt, X).data - spectral_oracle(alpha, g, X))) < 1e-8


def test_linear_in_alpha(rng):
    Lt, _ = rescaled(random_graph(rng, 8))
    X = rng.normal(size=(8, 2))
    a1, a2 = rng.normal(size=5), rng.normal(size=5)
    lhs = apply_filter(a1 + a2, Lt, X).data
    rhs = apply_filter(a1, Lt, X).data + apply_filter(a2, Lt, X).data
    assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_batched_coefficients(rng):
    Lts = np.stack([rescaled(random_graph(rng, 6))[0] for _ in range(3)])
    X = rng.normal(size=(3, 6, 2))
    A = rng.normal(size=(3, 4))
    out = apply_filter(A, Lts, X).data
    for i in range(3):
        np.testing.assert_allclose(out[i], apply_filter(A[i], Lts[i], X[i]).data, atol=1e-13)


def test_filter_gradients(rng):
    Lt, _ = rescaled(random_graph(rng, 6))
    a = T.parameter(rng.normal(size=4))
    X = T.parameter(rng.normal(size=(6, 2)))
    assert T.finite_diff_check(lambda: T.sum(apply_filter(a, Lt, X) * apply_filter(a, Lt, X)), [a, X]) < 1e-6


def test_filter_shape_mismatch():
    with pytest.raises(DimensionError):
        apply_filter([1.0], np.eye(3), np.ones((4, 1)))


def test_arma_zero_pole_is_gain(rng):
    Lt, _ = rescaled(random_graph(rng, 6))
    X = rng.normal(size=(6, 2))
    out = arma_apply(ArmaParams(np.zeros(3), np.array([0.5, 1.0, -0.2]), 15), Lt, X).data
    np.testing.assert_allclose(out, 1.3 * X, atol=1e-14)


def test_arma_no_iterations():
    X = np.arange(6.0).reshape(3, 2)
    out = arma_apply(ArmaParams(np.array([0.5]), np.array([2.0]), 0), np.eye(3), X).data
    np.testing.assert_allclose(out, 2 * X)


def test_arma_matches_linear_solve(rng):
    Lt, _ = rescaled(random_graph(rng, 6))
    X = rng.normal(size=(6, 3))
    out = arma_apply(ArmaParams(np.array([0.4]), np.array([1.0]), 50), Lt, X).data
    np.testing.assert_allclose(out, np.linalg.solve(np.eye(6) - 0.4 * Lt, X), atol=1e-8)


def test_arma_divergence_guard():
    with pytest.raises(DomainError):
        arma_apply(ArmaParams(np.array([1.0]), np.array([1.0])), np.eye(2), np.ones((2, 1)))


def test_arma_gradients(rng):
    Lt, _ = rescaled(random_graph(rng, 5))
    a = T.parameter(np.array([0.3, -0.2]))
    b = T.parameter(np.array([1.0, 0.5]))
    X = rng.normal(size=(5, 2))
    assert T.finite_diff_check(lambda: T.sum(arma_apply((a, b), Lt, X, 6) * X), [a, b]) < 1e-6


def test_chebyshev_fit_converges():
    errs = [chebyshev_fit(lambda x: np.exp(-(x + 1)), K)[1] for K in range(2, 11)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-3


def test_chebyshev_fit_exact_for_polynomials():
    alpha = np.array([0.5, -1.0, 0.25])
    fit, err = chebyshev_fit(frequency_response(alpha).magnitude, 2)
    np.testing.assert_allclose(fit, alpha, atol=1e-12)
    assert err < 1e-12
