import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from agsp import autodiff as ad
from agsp.errors import ConfigError, ModeError, ShapeError
from agsp.graphs import (Graph, build_inter_graph, build_intra_graph, cosine_similarity, default_epsilon,
                         dump_graph, graph_operators, median_bandwidth, restrict, semantic_embeddings)
from agsp.numeric import sym_eig


def _graph(A):
    return Graph(ad.Tensor(np.asarray(A, dtype=float)), "intra", "t", np.arange(len(A)))


def test_cosine_reference_values():
    u = np.array([0.3, -2.0])
    assert cosine_similarity(u, u) == pytest.approx(1.0, abs=1e-15)
    assert cosine_similarity([1.0, 0.0], [0.0, 5.0]) == 0.0
    assert cosine_similarity([1.0, 0.0], [1.0, 1.0]) == pytest.approx(0.7071067811865475, abs=1e-15)
    assert cosine_similarity([0.0, 0.0], [1.0, 1.0]) == 0.0
    with pytest.raises(ShapeError):
        cosine_similarity([1.0], [1.0, 2.0])


def test_intra_duplicates_and_gate():
    X = np.array([[1.0, 2.0], [1.0, 2.0], [10.0, -3.0]])
    A = build_intra_graph(X, epsilon=1e-6).adjacency
    assert A[0, 1] == pytest.approx(1.0, abs=1e-12)
    assert A[0, 2] == 0.0 and A[1, 2] == 0.0
    assert np.all(np.diag(A) == 0)


def test_intra_brute_force_four_points():
    X = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [-0.5, 0.2]])
    eps = 2.0
    ref = np.zeros((4, 4))
    for i in range(4):
        for j in range(4):
            if i != j and np.sum((X[i] - X[j]) ** 2) < eps:
                c = X[i] @ X[j] / (np.linalg.norm(X[i]) * np.linalg.norm(X[j]))
                ref[i, j] = max(0.0, c)
    assert np.allclose(build_intra_graph(X, epsilon=eps).adjacency, ref, atol=1e-12)


def test_intra_errors_and_empty():
    with pytest.raises(ConfigError):
        build_intra_graph(np.ones((3, 2)), epsilon=0.0)
    assert build_intra_graph(np.zeros((0, 4))).n == 0


def test_default_epsilon_percentile():
    X = np.random.default_rng(0).normal(size=(10, 3))
    d = [np.linalg.norm(X[i] - X[j]) for i in range(10) for j in range(i + 1, 10)]
    assert default_epsilon(X) == pytest.approx(np.percentile(d, 25) ** 2, rel=1e-12)


def test_inter_kernel_values():
    E = np.array([[0.0, 0.0], [0.0, 0.0], [2.0, 0.0]])
    A = build_inter_graph(E, sigma=2.0).adjacency
    assert A[0, 1] == pytest.approx(1.0)
    assert A[0, 2] == pytest.approx(0.36787944117144233, abs=1e-15)
    wide = build_inter_graph(np.random.default_rng(1).normal(size=(6, 3)), sigma=1e6).adjacency
    assert np.all(wide[~np.eye(6, dtype=bool)] >= 0.999999)
    with pytest.raises(ConfigError):
        build_inter_graph(E, sigma=-1.0)


def test_median_bandwidth():
    E = np.array([[0.0], [1.0], [3.0]])  # distances 1, 3, 2
    assert median_bandwidth(E).value == pytest.approx(2.0)
    assert median_bandwidth(np.zeros((1, 2))).value == 1.0


def test_semantic_embeddings_modes():
    table = np.array([[1.0, 0.0], [0.0, 2.0]])
    E = semantic_embeddings(3, "labels", labels=np.array([1, 0, 1]), class_table=table).value
    assert np.array_equal(E[0], E[2])
    assert build_inter_graph(E).adjacency[0, 2] == pytest.approx(1.0)
    with pytest.raises(ModeError):
        semantic_embeddings(3, "labels", class_table=table)
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.array([[5.0, 6.0]])
    c = np.array([[0.0, 3.0]])
    E = semantic_embeddings(2, "centroid", projected={"t": (a, np.array([0, 1])), "i": (b, np.array([0])),
                                                       "a": (c, np.array([0]))}).value
    assert np.allclose(E[0], [(1 + 5 + 0) / 3, (2 + 6 + 3) / 3], atol=1e-15)
    assert np.array_equal(E[1], a[1])


def test_operators_reference_graphs():
    ops = graph_operators(_graph([[0, 1], [1, 0]]), with_eig=True)
    assert np.allclose(ops.laplacian.value, [[1, -1], [-1, 1]])
    assert np.allclose(ops.eig.eigenvalues, [0, 2], atol=1e-14)
    k3 = graph_operators(_graph(np.ones((3, 3)) - np.eye(3)), with_eig=True)
    assert np.allclose(k3.eig.eigenvalues, [0, 1.5, 1.5], atol=1e-12)
    assert graph_operators(_graph([[0, 1], [1, 0]])).eig is None


def test_isolated_node_convention():
    A = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]], dtype=float)
    ops = graph_operators(_graph(A))
    assert np.array_equal(ops.norm_adj.value[2], np.zeros(3))
    assert np.array_equal(ops.laplacian.value[2], [0, 0, 1])
    assert np.array_equal(ops.laplacian.value[:, 2], [0, 0, 1])


def test_restrict_is_induced_subgraph():
    A = np.arange(16.0).reshape(4, 4)
    A = A + A.T
    np.fill_diagonal(A, 0)
    sub = restrict(Graph(ad.Tensor(A), "inter", None, np.arange(4)), np.array([3, 1]), "t")
    assert np.array_equal(sub.adjacency, A[np.ix_([3, 1], [3, 1])])
    assert sub.nodes.tolist() == [3, 1]


def test_dump_graph(tmp_path):
    X = np.array([[1.0, 0.0], [1.0, 0.1], [0.0, 1.0], [0.0, 2.0]])
    g = build_intra_graph(X, epsilon=1.5, modality="text")
    dump_graph(g, tmp_path / "g.json")
    obj = json.loads((tmp_path / "g.json").read_text())
    assert obj["n"] == 4 and obj["kind"] == "intra:text"
    assert np.array_equal(np.array(obj["adjacency"]), g.adjacency)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 14), st.integers(1, 5), st.integers(0, 2**31 - 1), st.booleans())
def test_constructed_graph_properties(n, d, seed, inter):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d)) * rng.uniform(0.1, 5.0)
    g = build_inter_graph(X) if inter else build_intra_graph(X)
    A = g.adjacency
    assert np.array_equal(A, A.T)
    assert np.all(np.diag(A) == 0)
    assert np.all((A >= 0) & (A <= 1))
    w = sym_eig(graph_operators(g).laplacian.value).eigenvalues
    assert w.min() >= -1e-9 and w.max() <= 2 + 1e-9
    perm = rng.permutation(n)
    gp = build_inter_graph(X[perm]) if inter else build_intra_graph(X[perm])
    assert np.allclose(gp.adjacency, A[np.ix_(perm, perm)], atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 12), st.integers(0, 2**31 - 1))
def test_scaled_ones_in_null_space(n, seed):
    rng = np.random.default_rng(seed)
    g = build_inter_graph(rng.normal(size=(n, 3)))
    ops = graph_operators(g)
    deg = ops.degree.value
    assert np.all(deg > 0)
    assert np.max(np.abs(ops.laplacian.value @ np.sqrt(deg))) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 12), st.integers(0, 2**31 - 1), st.floats(0.05, 0.95))
def test_epsilon_gate_monotone(n, seed, shrink):
    X = np.random.default_rng(seed).normal(size=(n, 3))
    eps = float(np.max(np.sum((X[:, None] - X[None]) ** 2, axis=-1))) + 1.0
    big = build_intra_graph(X, epsilon=eps).adjacency
    small = build_intra_graph(X, epsilon=eps * shrink).adjacency
    kept = small > 0
    assert np.all(big[kept] == small[kept])
    assert not np.any((small > 0) & (big == 0))
