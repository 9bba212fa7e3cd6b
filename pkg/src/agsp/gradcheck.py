"""Central finite-difference check of tape gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np


def numerical_grad(f: Callable[[dict], float], params: dict[str, np.ndarray], name: str,
                   step: float = 1e-5) -> np.ndarray:
    base = params[name]
    out = np.zeros_like(base)
    for i in range(base.size):
        q = dict(params)
        plus = base.copy()
        plus.reshape(-1)[i] += step
        q[name] = plus
        fp = f(q)
        minus = base.copy()
        minus.reshape(-1)[i] -= step
        q[name] = minus
        fm = f(q)
        out.reshape(-1)[i] = (fp - fm) / (2.0 * step)
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """``max|a - n| / max(max|a|, max|n|, floor)`` over one parameter group."""
    scale = max(float(np.max(np.abs(analytic), initial=0.0)), float(np.max(np.abs(numeric), initial=0.0)), floor)
    return float(np.max(np.abs(analytic - numeric), initial=0.0)) / scale


def check_gradients(f: Callable[[dict], float], params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
                    step: float = 1e-5) -> dict[str, float]:
    """Per-group relative error between ``grads`` and central differences of ``f``."""
    return {k: relative_error(grads[k], numerical_grad(f, params, k, step)) for k in grads}
