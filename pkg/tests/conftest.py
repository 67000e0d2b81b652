import numpy as np
import pytest

from etconsensus import matlib
from etconsensus.config import preset_config, preset_scenario
from etconsensus.graph import DirectedGraph
from etconsensus.model import SystemModel, design_gain


@pytest.fixture(scope="session")
def bench_config():
    return preset_config("paper-sec5")


@pytest.fixture(scope="session")
def bench_model(bench_config):
    return bench_config.build_model()


@pytest.fixture(scope="session")
def bench_scenario():
    return preset_scenario("paper-sec5")


def random_spanning_tree_graph(rng, n_agents, extra_edges=None) -> DirectedGraph:
    """Random weighted digraph guaranteed to contain a directed spanning tree.

    Built root-first: each later node receives an edge from an
    already-reachable node, then a few extra random edges are sprinkled in.
    """
    order = rng.permutation(n_agents)
    w = np.zeros((n_agents, n_agents))
    for idx in range(1, n_agents):
        child = order[idx]
        parent = order[rng.integers(0, idx)]
        w[child, parent] = rng.uniform(0.5, 2.0)
    n_extra = int(rng.integers(0, n_agents)) if extra_edges is None else extra_edges
    for _ in range(n_extra):
        i, j = rng.integers(0, n_agents, size=2)
        if i != j:
            w[i, j] = rng.uniform(0.5, 2.0)
    return DirectedGraph(w)


def random_stabilizable_pair(rng, n, m):
    """Random (A, B) with a comfortable controllability margin.

    Near-degenerate pairs are rejected so that solver behaviour reflects the
    algorithm rather than the conditioning of the input.
    """
    while True:
        a = rng.normal(size=(n, n))
        b = rng.normal(size=(n, m))
        margin = min(
            np.linalg.svd(
                np.hstack([a - lam * np.eye(n), b]).astype(complex),
                compute_uv=False,
            )[-1]
            for lam in np.linalg.eigvals(a)
        )
        if margin > 0.2:
            return a, b


def random_model(rng, max_agents=6, max_dim=3) -> SystemModel:
    """Random spanning-tree model with a synthesized stabilizing gain."""
    n_agents = int(rng.integers(2, max_agents + 1))
    n = int(rng.integers(1, max_dim + 1))
    m = int(rng.integers(1, min(n, 2) + 1))
    graph = random_spanning_tree_graph(rng, n_agents)
    a, b = random_stabilizable_pair(rng, n, m)
    gain = design_gain(a, b, graph)
    return SystemModel(a, b, gain, graph)


def modal_union(model):
    """Union over the nonzero Laplacian spectrum of eig(A + lam B K).

    Independent spectral oracle for the assembled closed-loop matrices.
    """
    eigs = matlib.eigenvalues(model.graph.laplacian())
    union = []
    for lam in eigs:
        if abs(lam) > 1e-8:
            union.extend(
                np.linalg.eigvals(model.a_mat.astype(complex) + lam * model.bk)
            )
    return np.array(union)


def assert_spectra_match(got, expected, tol):
    """Multiset comparison of eigenvalue collections within a tolerance."""
    got = list(np.atleast_1d(got))
    expected = list(np.atleast_1d(expected))
    assert len(got) == len(expected), f"multiset sizes differ: {len(got)} vs {len(expected)}"
    for value in got:
        best = min(range(len(expected)), key=lambda k: abs(expected[k] - value))
        distance = abs(expected[best] - value)
        assert distance <= tol, f"eigenvalue {value} unmatched (closest at {distance:.3e})"
        expected.pop(best)


def sorted_spectrum(m):
    return np.array(sorted(matlib.eigenvalues(m), key=lambda z: (z.real, z.imag)))
