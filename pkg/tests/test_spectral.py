import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from feta.errors import ContractError, DimensionError, DomainError
from feta.spectral import (
    Graph,
    build_laplacian,
    connected_components,
    eigendecompose,
    eigendecompose_many,
    graph_fourier,
    jacobi_eigh,
    rescale_spectrum,
)

from conftest import random_graph


def test_p2_normalized_laplacian():
    L = build_laplacian(Graph(2, [(0, 1, 1.0)])).L
    np.testing.assert_allclose(L, [[1, -1], [-1, 1]])


def test_triangle_normalized_is_identity_minus_half_adjacency():
    g = Graph(3, [(0, 1), (1, 2), (0, 2)])
    np.testing.assert_allclose(build_laplacian(g).L, np.eye(3) - g.adjacency() / 2)


def test_unnormalized_rows_sum_to_zero(rng):
    L = build_laplacian(random_graph(rng, 5), "unnormalized").L
    np.testing.assert_allclose(L.sum(axis=1), 0.0, atol=1e-15)


def test_isolated_node_has_zero_diagonal():
    L = build_laplacian(Graph(3, [(0, 1)])).L
    assert L[2, 2] == 0.0


def test_negative_weight_rejected():
    with pytest.raises(DomainError):
        Graph(2, [(0, 1, -1.0)])
    with pytest.raises(DomainError):
        build_laplacian(np.array([[0.0, -1.0], [-1.0, 0.0]]))


def test_self_loop_normalized_kind():
    g = Graph(2, [(0, 1)])
    L = build_laplacian(g, "self-loop-normalized").L
    np.testing.assert_allclose(L, np.eye(2) - np.full((2, 2), 0.5))


def test_p2_eigenpairs():
    b = eigendecompose(build_laplacian(Graph(2, [(0, 1)])))
    np.testing.assert_allclose(b.lam, [0.0, 2.0], atol=1e-14)
    np.testing.assert_allclose(b.U[:, 0], [2**-0.5, 2**-0.5])


def test_k3_eigenvalues_from_characteristic_polynomial():
    L = build_laplacian(Graph(3, [(0, 1), (1, 2), (0, 2)])).L
    # det(L - x I) for I - A/2 has roots 0, 3/2, 3/2
    np.testing.assert_allclose(np.sort(np.roots(np.poly(L))).real, [0, 1.5, 1.5], atol=1e-7)
    np.testing.assert_allclose(eigendecompose(L).lam, [0, 1.5, 1.5], atol=1e-13)


@given(st.integers(1, 12), st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_random_symmetric_reconstruction(n, seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(n, n))
    M = M + M.T
    b = eigendecompose(M)
    assert np.linalg.norm(b.U @ np.diag(b.lam) @ b.U.T - M) < 1e-9
    np.testing.assert_allclose(b.U.T @ b.U, np.eye(n), atol=1e-9)
    assert np.all(np.diff(b.lam) >= -1e-12)
    np.testing.assert_allclose(b.lam, np.linalg.eigvalsh(M), atol=1e-9)


def test_sign_convention_first_nonzero_positive(rng):
    b = eigendecompose(build_laplacian(random_graph(rng, 8)))
    for k in range(8):
        col = b.U[:, k]
        first = col[np.nonzero(np.abs(col) > 1e-12)[0][0]]
        assert first > 0


def test_asymmetric_input_is_contract_error():
    with pytest.raises(ContractError):
        eigendecompose(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_batched_matches_single(rng):
    Ls = np.stack([build_laplacian(random_graph(rng, 7)).L for _ in range(4)])
    for L, b in zip(Ls, eigendecompose_many(Ls)):
        single = eigendecompose(L)
        np.testing.assert_allclose(b.lam, single.lam, atol=1e-12)
        np.testing.assert_allclose(np.abs(b.U.T @ single.U), np.eye(7), atol=1e-6)


def test_jacobi_handles_diagonal_input():
    lam, V = jacobi_eigh(np.diag([3.0, 1.0, 2.0]))
    np.testing.assert_allclose(np.sort(lam), [1, 2, 3])


def test_normalized_spectrum_in_range_and_component_count(rng):
    for _ in range(20):
        g = random_graph(rng, 9, p=0.25, connected=False)
        b = eigendecompose(build_laplacian(g))
        assert b.lam[0] >= -1e-10 and b.lam[-1] <= 2 + 1e-10
        # an isolated node is its own component and keeps a zero eigenvalue
        assert np.sum(b.lam < 1e-8) == connected_components(g.adjacency())


def test_fourier_first_eigenvector_maps_to_e0(rng):
    b = eigendecompose(build_laplacian(random_graph(rng, 6)))
    np.testing.assert_allclose(graph_fourier(b, b.U[:, :1]).ravel(), np.eye(6)[0], atol=1e-12)


def test_fourier_roundtrip_and_parseval(rng):
    b = eigendecompose(build_laplacian(random_graph(rng, 8)))
    X = rng.normal(size=(8, 3))
    Xh = graph_fourier(b, X)
    np.testing.assert_allclose(graph_fourier(b, Xh, "inverse"), X, atol=1e-10)
    assert abs(np.linalg.norm(Xh) - np.linalg.norm(X)) < 1e-10


def test_fourier_errors(rng):
    b = eigendecompose(np.eye(3))
    with pytest.raises(DimensionError):
        graph_fourier(b, np.ones((4, 1)))
    with pytest.raises(DomainError):
        graph_fourier(b, np.ones((3, 1)), "sideways")


def test_rescale_examples(rng):
    L = build_laplacian(Graph(2, [(0, 1)]))
    np.testing.assert_allclose(np.linalg.eigvalsh(rescale_spectrum(L, 2.0)), [-1, 1])
    np.testing.assert_allclose(rescale_spectrum(np.zeros((3, 3)), 2.0), -np.eye(3))
    with pytest.raises(DomainError):
        rescale_spectrum(L, 0.0)
    l = build_laplacian(random_graph(rng, 10))
    lt = np.linalg.eigvalsh(rescale_spectrum(l, eigendecompose(l).lambda_max))
    assert lt.min() >= -1 - 1e-10 and lt.max() <= 1 + 1e-10


def test_graph_roundtrip_through_adjacency(rng):
    g = random_graph(rng, 6)
    h = Graph.from_adjacency(g.adjacency())
    np.testing.assert_array_equal(h.adjacency(), g.adjacency())
