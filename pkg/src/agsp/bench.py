"""Wall-clock scaling harness for the four pipeline stages."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .fusion import attention_weights, fuse, gate
from .gcn import GcnLayerParams, GcnStack, gcn_forward
from .graphs import build_inter_graph, build_intra_graph, graph_operators
from .numeric import Rng
from .spectral import ChebyshevFilter, chebyshev_apply

STAGES = ("graph_construction", "chebyshev_filtering", "gcn_forward", "attention_fusion")
DEFAULT_SIZES = (64, 128, 256, 512)


@dataclass
class BenchResult:
    sizes: list[int]
    times: dict[str, list[float]]  # stage -> median seconds per size
    slopes: dict[str, float]
    k_ratio: float  # filtering time at 2K over time at K, largest size
    checks: list[tuple[str, bool, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(passed for _, passed, _ in self.checks)


def _median_time(fn, repeats: int) -> float:
    fn()  # warm-up
    ts = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return float(np.median(ts))


def loglog_slope(sizes, times) -> float:
    return float(np.polyfit(np.log(sizes), np.log(times), 1)[0])


def run_bench(sizes=DEFAULT_SIZES, dim: int = 64, repeats: int = 5, modalities: int = 3,
              cheb_k: int = 3, hidden: int = 64, hops: int = 2, layers: int = 3, seed: int = 0) -> BenchResult:
    rng = Rng(seed).child("bench")
    times: dict[str, list[float]] = {s: [] for s in STAGES}
    theta = rng.normal(cheb_k + 1)
    theta2 = rng.normal(2 * cheb_k + 1)
    stack = GcnStack([GcnLayerParams([rng.normal((dim if l == 0 else hidden, hidden)) * 0.1
                                      for _ in range(hops + 1)]) for l in range(layers)])
    d_h = hidden
    W_a, W_s = rng.normal((d_h, d_h)) * 0.01, rng.normal((d_h, d_h)) * 0.1
    W_g, b_g = rng.normal((d_h, d_h)) * 0.1, np.zeros(d_h)
    k_ratio = float("nan")
    for n in sizes:
        Xs = [rng.normal((n, dim)) for _ in range(modalities)]

        def construct():
            graphs = [build_intra_graph(X) for X in Xs]
            graphs.append(build_inter_graph(sum(Xs) / modalities))
            return [graph_operators(g) for g in graphs]

        ops = construct()[0]
        filt = ChebyshevFilter(theta, 2.0)
        filt2 = ChebyshevFilter(theta2, 2.0)
        H = [rng.normal((n, d_h)) for _ in range(modalities)]
        mask = np.ones((n, modalities), dtype=bool)

        def fusion():
            S = sum(H) @ W_s.T / modalities
            a = attention_weights(H, S, W_a, mask)
            return gate(fuse(a, H), W_g, b_g)

        times["graph_construction"].append(_median_time(construct, repeats))
        times["chebyshev_filtering"].append(_median_time(lambda: chebyshev_apply(filt, ops, Xs[0]), repeats))
        times["gcn_forward"].append(_median_time(lambda: gcn_forward(Xs[0], ops, stack), repeats))
        times["attention_fusion"].append(_median_time(fusion, repeats))
        if n == sizes[-1]:
            t2 = _median_time(lambda: chebyshev_apply(filt2, ops, Xs[0]), repeats)
            k_ratio = t2 / times["chebyshev_filtering"][-1]
    slopes = {s: loglog_slope(sizes, times[s]) for s in STAGES}
    res = BenchResult(list(sizes), times, slopes, k_ratio)
    g = slopes["graph_construction"]
    res.checks.append(("graph-construction slope in [1.6, 2.4]", 1.6 <= g <= 2.4, f"{g:.3f}"))
    c = slopes["chebyshev_filtering"]
    res.checks.append(("filtering slope < construction slope + 0.2", c < g + 0.2, f"{c:.3f} vs {g:.3f}"))
    res.checks.append((f"K {cheb_k}->{2 * cheb_k} filtering time ratio in [1.5, 3.0]", 1.5 <= k_ratio <= 3.0,
                       f"{k_ratio:.3f}"))
    return res
