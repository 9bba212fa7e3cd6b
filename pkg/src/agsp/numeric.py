"""Dense linear algebra helpers and seeded randomness.

Matrices are plain ``float64`` numpy arrays. The eigen solver is a cyclic
Jacobi rotation scheme so that results do not depend on the LAPACK build.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, ShapeError

MAX_SWEEPS = 100
OFFDIAG_TOL = 1e-12
SYMMETRY_TOL = 1e-10


class Rng:
    """Deterministic generator: numpy ``PCG64`` seeded through ``SeedSequence``.

    ``child(name)`` derives an independent stream from ``(seed, crc32(name))``
    so that consumers never share mutable generator state.
    """

    def __init__(self, seed: int, _key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._key = _key
        ss = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, *_key])
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def child(self, name: str) -> "Rng":
        return Rng(self.seed, self._key + (zlib.crc32(name.encode("utf-8")),))

    def normal(self, size=None, loc=0.0, scale=1.0):
        return self.generator.normal(loc, scale, size)

    def uniform(self, size=None, low=0.0, high=1.0):
        return self.generator.uniform(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, key={self._key})"


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int = field(default=0, compare=False)

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.T


def _check_symmetric(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {m.shape}")
    if m.size and not np.all(np.isfinite(m)):
        raise ShapeError("matrix has non-finite entries")
    if m.size and np.max(np.abs(m - m.T)) > SYMMETRY_TOL:
        raise ShapeError("matrix is not symmetric within 1e-10")
    return m


def sym_eig(m, max_sweeps: int = MAX_SWEEPS, tol: float = OFFDIAG_TOL) -> EigenDecomposition:
    """Eigendecomposition of a real symmetric matrix by cyclic Jacobi sweeps.

    Eigenvalues are returned ascending. Each eigenvector is signed so that its
    first component with magnitude above 1e-12 is positive.

    The sweep loop stops once the off-diagonal Frobenius norm falls below
    ``tol`` (relative to the Frobenius norm of ``m``, floor 1).
    """
    a = _check_symmetric(m).copy()
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    v = np.eye(n)
    if n == 0:
        return EigenDecomposition(np.zeros(0), np.zeros((0, 0)), 0)

    scale = max(np.linalg.norm(a), 1.0)
    sweeps = 0
    off = _offdiag_norm(a)
    while off > tol * scale:
        if sweeps >= max_sweeps:
            raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps", off)
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                app, aqq = a[p, p], a[q, q]
                if abs(apq) < 1e-300 or abs(apq) * 1e18 < min(abs(app), abs(aqq)):
                    a[p, q] = a[q, p] = 0.0  # negligible against the diagonal
                    continue
                # Rutishauser's stable rotation formulas.
                theta = (aqq - app) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        off = _offdiag_norm(a)

    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    w = w[order]
    v = v[:, order]
    for j in range(n):
        col = v[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            v[:, j] = -col
    return EigenDecomposition(w, v, sweeps)


def _offdiag_norm(a: np.ndarray) -> float:
    off = a - np.diag(np.diag(a))
    return float(np.sqrt(np.sum(off * off)))


def _power_start(n: int) -> np.ndarray:
    # Fixed, non-degenerate start vector; avoids orthogonality to common eigvecs.
    x = np.cos(np.arange(1, n + 1) * 1.6180339887) + 1.0 / np.sqrt(np.arange(1, n + 1))
    return x / np.linalg.norm(x)


def dominant_eigvec(m, iters: int = 1000, refine: int = 3) -> tuple[float, np.ndarray]:
    """Rayleigh quotient and unit vector for the largest eigenvalue of PSD ``m``.

    Plain power iteration followed by a few Rayleigh-quotient-iteration
    refinements; a refinement is kept only when it raises the quotient.
    """
    m = _check_symmetric(m)
    n = m.shape[0]
    if n == 0:
        return 0.0, np.zeros(0)
    x = _power_start(n)
    rq = float(x @ m @ x)
    for it in range(iters):
        y = m @ x
        ny = np.sqrt(y @ y)
        if ny == 0.0:
            return 0.0, x
        x = y / ny
        if it % 8 == 7:
            mx = m @ x
            rq = float(x @ mx)
            r = mx - rq * x
            if np.sqrt(r @ r) <= 1e-4 * max(abs(rq), 1.0):
                break
    rq = float(x @ m @ x)
    eye = np.eye(n)
    for _ in range(refine):
        try:
            y = np.linalg.solve(m - (rq + 1e-14 * max(rq, 1.0)) * eye, x)
        except np.linalg.LinAlgError:
            break
        ny = np.linalg.norm(y)
        if not np.isfinite(ny) or ny == 0.0:
            break
        y = y / ny
        cand = float(y @ m @ y)
        if cand < rq - 1e-15:
            break
        x, rq = y, cand
    return rq, x


def power_iteration_lambda_max(m, iters: int = 1000, tol: float = 1e-3) -> float:
    """Largest eigenvalue of a symmetric PSD matrix, inflated by ``(1 + tol)``.

    The inflation keeps the estimate at or above the true value whenever the
    Rayleigh quotient has converged to within ``tol`` relative accuracy.
    Returns 0 for the zero matrix.
    """
    rq, _ = dominant_eigvec(m, iters=iters)
    if rq <= 0.0:
        return 0.0
    return rq * (1.0 + tol)
