import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from agsp import autodiff as ad
from agsp.errors import ConfigError, ShapeError
from agsp.graphs import Graph, graph_operators
from agsp.spectral import ChebyshevFilter, chebyshev_apply, chebyshev_scalar, estimate_lambda_max, exact_filter

from conftest import random_graph_adjacency


def _ops(A, with_eig=True):
    return graph_operators(Graph(ad.Tensor(np.asarray(A, float)), "intra", None, np.arange(len(A))), with_eig)


K3 = np.ones((3, 3)) - np.eye(3)


def test_scalar_polynomials():
    assert chebyshev_scalar(0, 0.3) == 1.0
    assert chebyshev_scalar(2, 0.5) == pytest.approx(-0.5, abs=1e-15)
    assert chebyshev_scalar(5, 0.7) == pytest.approx(np.cos(5 * np.arccos(0.7)), abs=1e-12)
    with pytest.raises(ValueError):
        chebyshev_scalar(2, 1.5)


def test_exact_filter_reference_responses():
    rng = np.random.default_rng(0)
    ops = _ops(random_graph_adjacency(rng, 8))
    X = rng.normal(size=(8, 3))
    assert np.allclose(exact_filter(ops, lambda lam: np.ones_like(lam), X), X, atol=1e-10)
    assert np.allclose(exact_filter(ops, lambda lam: lam, X), ops.laplacian.value @ X, atol=1e-10)
    k3 = _ops(K3)
    L = k3.laplacian.value
    # K3: L = 1.5 (I - J/3), so exp(-L) = J/3 + e^-1.5 (I - J/3)
    J = np.ones((3, 3)) / 3
    ref = J + np.exp(-1.5) * (np.eye(3) - J)
    assert np.allclose(exact_filter(k3, np.exp(-k3.eig.eigenvalues), np.eye(3)), ref, atol=1e-10)
    assert np.allclose(L, 1.5 * (np.eye(3) - J), atol=1e-15)
    with pytest.raises(ShapeError):
        exact_filter(k3, np.ones(2), np.eye(3))


def test_chebyshev_low_orders():
    rng = np.random.default_rng(1)
    ops = _ops(random_graph_adjacency(rng, 6), with_eig=False)
    X = rng.normal(size=(6, 2))
    assert np.array_equal(chebyshev_apply(ChebyshevFilter(np.array([1.0])), ops, X).value, X)
    lt = ops.laplacian.value - np.eye(6)  # lambda_max = 2
    assert np.allclose(chebyshev_apply(ChebyshevFilter(np.array([0.0, 1.0])), ops, X).value, lt @ X, atol=1e-14)
    with pytest.raises(ConfigError):
        ChebyshevFilter(np.zeros(0))
    with pytest.raises(ConfigError):
        ChebyshevFilter(np.ones(2), lambda_max=0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 32), st.integers(0, 5), st.integers(0, 2**31 - 1))
def test_chebyshev_matches_exact(n, K, seed):
    rng = np.random.default_rng(seed)
    ops = _ops(random_graph_adjacency(rng, n))
    lam = float(estimate_lambda_max(ops).value)
    filt = ChebyshevFilter(rng.normal(size=K + 1), lam)
    X = rng.normal(size=(n, 3))
    assert np.max(np.abs(chebyshev_apply(filt, ops, X).value - exact_filter(ops, filt.response, X))) <= 1e-8


def test_sixteen_node_order_three():
    rng = np.random.default_rng(16)
    ops = _ops(random_graph_adjacency(rng, 16))
    filt = ChebyshevFilter(rng.normal(size=4), float(estimate_lambda_max(ops).value))
    X = rng.normal(size=(16, 5))
    assert np.allclose(chebyshev_apply(filt, ops, X).value, exact_filter(ops, filt.response, X), atol=1e-8)


def test_lambda_max_estimate_bounds_spectrum():
    rng = np.random.default_rng(3)
    ops = _ops(random_graph_adjacency(rng, 10))
    top = ops.eig.eigenvalues[-1]
    est = float(estimate_lambda_max(ops).value)
    assert top <= est <= top * (1 + 1e-3) + 1e-12
    empty = _ops(np.zeros((3, 3)), with_eig=False)
    assert float(estimate_lambda_max(empty).value) == pytest.approx(1.001)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 12), st.integers(0, 2**31 - 1), st.floats(-2, 2), st.floats(-2, 2))
def test_linearity_and_permutation(n, seed, a, b):
    rng = np.random.default_rng(seed)
    A = random_graph_adjacency(rng, n)
    ops = _ops(A, with_eig=False)
    filt = ChebyshevFilter(rng.normal(size=4), 1.9)
    X, Y = rng.normal(size=(n, 2)), rng.normal(size=(n, 2))
    f = lambda Z, o=ops: chebyshev_apply(filt, o, Z).value
    assert np.allclose(f(a * X + b * Y), a * f(X) + b * f(Y), atol=1e-10)
    p = rng.permutation(n)
    assert np.allclose(f(X[p], _ops(A[np.ix_(p, p)], with_eig=False)), f(X)[p], atol=1e-10)


def test_isolated_node_scaled_by_minus_one_response():
    A = np.zeros((4, 4))
    A[0, 1] = A[1, 0] = A[1, 2] = A[2, 1] = 1.0
    ops = _ops(A, with_eig=False)
    theta = np.array([0.3, -1.2, 0.7, 2.0])
    lam = 1.7
    X = np.zeros((4, 1))
    X[3] = 2.5
    out = chebyshev_apply(ChebyshevFilter(theta, lam), ops, X).value
    x = 2.0 / lam - 1.0  # L row of an isolated node is the identity row
    expected = sum(t * chebyshev_scalar(k, x) for k, t in enumerate(theta)) * 2.5
    assert np.allclose(out[:3], 0.0) and out[3, 0] == pytest.approx(expected, abs=1e-12)
