"""Spectral graph filtering: exact eigenbasis filter and Chebyshev recurrence."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ShapeError
from .graphs import GraphOperators
from .numeric import dominant_eigvec, sym_eig

LAMBDA_INFLATION = 1e-3


@dataclass
class ChebyshevFilter:
    """Coefficients ``theta_0..theta_K`` on the rescaled Laplacian.

    ``theta`` and ``lambda_max`` may be plain numbers/arrays or tape tensors.
    """

    theta: object
    lambda_max: object = 2.0

    def __post_init__(self):
        if ad.value(self.theta).ndim != 1 or ad.value(self.theta).size < 1:
            raise ConfigError("Chebyshev order K must be >= 0 (need at least one coefficient)")
        if not ad.value(self.lambda_max) > 0:
            raise ConfigError("lambda_max must be > 0")

    @property
    def K(self) -> int:
        return ad.value(self.theta).size - 1

    def response(self, lam) -> np.ndarray:
        """Scalar spectral response ``sum_k theta_k T_k(2 lam / lambda_max - 1)``."""
        lam = np.asarray(lam, dtype=np.float64)
        x = 2.0 * lam / float(ad.value(self.lambda_max)) - 1.0
        theta = ad.value(self.theta)
        return sum(theta[k] * chebyshev_poly(k, x) for k in range(theta.size))


def chebyshev_poly(k: int, x) -> np.ndarray:
    """``T_k(x)`` elementwise by the three-term recurrence (no domain check)."""
    x = np.asarray(x, dtype=np.float64)
    t_prev, t = np.ones_like(x), x
    if k == 0:
        return t_prev
    for _ in range(k - 1):
        t_prev, t = t, 2.0 * x * t - t_prev
    return t


def chebyshev_scalar(k: int, x: float) -> float:
    if k < 0:
        raise ConfigError("order must be >= 0")
    if abs(x) > 1.0 + 1e-12:
        raise ValueError(f"x={x} outside [-1, 1]")
    return float(chebyshev_poly(k, x))


def exact_filter(ops: GraphOperators, response, X) -> np.ndarray:
    """``U diag(g) U^T X`` using the Laplacian eigendecomposition.

    ``response`` is either the sampled values ``g(lambda_i)`` or a callable
    evaluated on the eigenvalues.
    """
    eig = ops.eig if ops.eig is not None else sym_eig(ad.value(ops.laplacian))
    g = response(eig.eigenvalues) if callable(response) else np.asarray(response, dtype=np.float64)
    X = np.asarray(ad.value(X), dtype=np.float64)
    if g.shape != eig.eigenvalues.shape:
        raise ShapeError(f"response has length {g.size}, graph has {eig.eigenvalues.size} nodes")
    if X.shape[0] != g.size:
        raise ShapeError("signal row count does not match node count")
    U = eig.eigenvectors
    return U @ (g[:, None] * (U.T @ X)) if X.ndim == 2 else U @ (g * (U.T @ X))


def estimate_lambda_max(ops: GraphOperators, tol: float = LAMBDA_INFLATION, iters: int = 1000):
    """``(1 + tol) * v^T L v`` with ``v`` the converged top eigenvector.

    The vector is held fixed, so on a tape the gradient with respect to ``L``
    is ``(1 + tol) v v^T``, the derivative of a simple top eigenvalue.
    Falls back to the spectral bound 2 for empty or zero Laplacians.
    """
    n = ops.n
    if n == 0:
        return ad.Tensor(2.0)
    L = ops.laplacian
    Lv = ad.value(L)
    rq, v = dominant_eigvec(0.5 * (Lv + Lv.T), iters=iters)
    if rq <= 0:
        return ad.Tensor(2.0)
    quad = ad.sum_(ad.as_tensor(v) * (L @ v))
    return quad * (1.0 + tol)


def chebyshev_apply(filt: ChebyshevFilter, ops: GraphOperators, X):
    """``sum_k theta_k T_k(L~) X`` with ``L~ = (2 / lambda_max) L - I``.

    Uses only Laplacian-times-signal products via the recurrence
    ``T_{k+1} = 2 L~ T_k - T_{k-1}``.
    """
    X = ad.as_tensor(X)
    if X.shape[0] != ops.n:
        raise ShapeError("signal row count does not match node count")
    L = ops.laplacian
    scale = 2.0 / ad.as_tensor(filt.lambda_max)
    theta = ad.as_tensor(filt.theta)
    K = filt.K

    def lt(Y):
        return scale * (L @ Y) - Y

    def coef(k):
        return ad.take_flat(theta, [k])

    t_prev = X
    out = coef(0) * t_prev
    if K == 0:
        return out
    t = lt(X)
    out = out + coef(1) * t
    for k in range(2, K + 1):
        t_prev, t = t, 2.0 * lt(t) - t_prev
        out = out + coef(k) * t
    return out
