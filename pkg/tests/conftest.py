import numpy as np
import pytest

from feta.spectral import Graph


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_graph(rng, n, p=0.5, connected=True):
    """Erdos-Renyi graph, resampled until connected when requested."""
    from feta.spectral import connected_components

    while True:
        A = np.triu(rng.random((n, n)) < p, 1).astype(float)
        A = A + A.T
        if not connected or n == 1 or connected_components(A) == 1:
            return Graph.from_adjacency(A)
