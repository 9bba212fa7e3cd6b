"""End-to-end acceptance checks; each test prints one PASS/FAIL line."""

import time

import numpy as np
import pytest

from agsp import autodiff as ad
from agsp.bench import run_bench
from agsp.cli import main as cli_main
from agsp.config import TrainConfig
from agsp.data import SynthConfig, generate_synthetic
from agsp.fusion import attention_weights, fuse, gate, softmax_from_logits
from agsp.gradcheck import check_gradients
from agsp.graphs import Graph, build_inter_graph, build_intra_graph, graph_operators
from agsp.metrics import mean_average_precision, report_from_confusion, average_precision
from agsp.model import bind, forward, init_params, loss_fn, make_batch
from agsp.numeric import Rng, sym_eig
from agsp.spectral import ChebyshevFilter, chebyshev_apply, estimate_lambda_max, exact_filter
from agsp.training import baseline_scores, evaluate, split_dataset, train, train_baseline

from conftest import random_graph_adjacency, record_criterion

BENCH_SEEDS = range(5)


def test_criterion_1_spectral_equivalence():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 33))
        A = random_graph_adjacency(rng, n, p=rng.uniform(0.1, 0.9))
        ops = graph_operators(Graph(ad.Tensor(A), "intra", None, np.arange(n)), with_eig=True)
        filt = ChebyshevFilter(rng.normal(size=int(rng.integers(1, 5))), float(estimate_lambda_max(ops).value))
        X = rng.normal(size=(n, int(rng.integers(1, 6))))
        worst = max(worst, float(np.max(np.abs(chebyshev_apply(filt, ops, X).value
                                               - exact_filter(ops, filt.response, X)))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 10
    record_criterion(1, "Chebyshev vs exact filter", ok, f"max-abs err {worst:.2e} (<=1e-8), {elapsed:.2f}s (<10s)")
    assert ok


def test_criterion_2_gradient_fidelity():
    cfg = SynthConfig(n=40, dims={"text": 5, "image": 4, "audio": 3},
                      separability={"text": 1.0, "image": 1.0, "audio": 0.0}, dropout=0.2)
    ds = generate_synthetic(cfg, Rng(1))
    tc = TrainConfig(latent_dim=4, hidden=3, dropout=0.0)
    batch = make_batch(ds.instances[:12], ds.schema)
    params = init_params(ds.schema, tc, Rng(3))
    params = {k: v + 0.1 * Rng(9).child(k).normal(v.shape) for k, v in params.items()}
    t0 = time.perf_counter()
    worst = {}
    for training in (True, False):
        tape = ad.Tape()
        loss = loss_fn(forward(batch, bind(params, tape), tc, training, Rng(5)).scores, batch.labels)
        g = ad.grad(tape, loss)
        f = lambda q: float(loss_fn(forward(batch, q, tc, training, Rng(5)).scores, batch.labels).value)
        for k, e in check_gradients(f, params, g, step=1e-5).items():
            worst[k] = max(worst.get(k, 0.0), e)
    elapsed = time.perf_counter() - t0
    name, err = max(worst.items(), key=lambda kv: kv[1])
    ok = err <= 1e-4 and elapsed < 120 and batch.mask.any(axis=0).all()
    record_criterion(2, "end-to-end gradient check", ok,
                     f"max rel err {err:.2e} ({name}) over {len(worst)} groups, {elapsed:.1f}s")
    assert ok


def test_criterion_3_graph_invariants():
    rng = np.random.default_rng(7)
    failures = []
    for case in range(1000):
        n = int(rng.integers(2, 17))
        X = rng.normal(size=(n, int(rng.integers(1, 7)))) * rng.uniform(0.1, 10.0)
        inter = case % 2 == 1
        eps = None if rng.uniform() < 0.5 else float(rng.uniform(0.1, 20.0))
        build = (lambda Z: build_inter_graph(Z)) if inter else (lambda Z: build_intra_graph(Z, eps))
        g = build(X)
        A = g.adjacency
        w = sym_eig(graph_operators(g).laplacian.value).eigenvalues
        p = rng.permutation(n)
        checks = {
            "symmetry": np.array_equal(A, A.T),
            "zero diagonal": np.all(np.diag(A) == 0),
            "range": np.all((A >= 0) & (A <= 1)),
            "spectrum": w.min() >= -1e-9 and w.max() <= 2 + 1e-9,
            "permutation": np.allclose(build(X[p]).adjacency, A[np.ix_(p, p)], atol=1e-12, rtol=0),
        }
        failures += [(case, k) for k, ok in checks.items() if not ok]
    ok = not failures
    record_criterion(3, "graph invariants", ok, f"1000 constructions, {len(failures)} violations {failures[:3]}")
    assert ok


def test_criterion_4_fusion_invariants():
    rng = np.random.default_rng(11)
    bad = {"simplex": 0, "shift": 0, "convexity": 0, "gate": 0}
    for _ in range(1000):
        n, M, d = int(rng.integers(1, 5)), int(rng.integers(1, 5)), int(rng.integers(1, 6))
        mask = rng.uniform(size=(n, M)) < 0.6
        mask[np.arange(n), rng.integers(0, M, n)] = True
        H = [rng.normal(size=(n, d)) * rng.uniform(0.1, 5) for _ in range(M)]
        S, W_a = rng.normal(size=(n, 3)), rng.normal(size=(d, 3))
        alpha = attention_weights(H, S, W_a, mask).value
        if not (np.all(np.abs(alpha.sum(axis=1) - 1) <= 1e-12) and np.all(alpha[~mask] == 0) and np.all(alpha >= 0)):
            bad["simplex"] += 1
        logits = rng.normal(size=(n, M)) * 5
        if not np.allclose(softmax_from_logits(logits + rng.normal() * 100, mask),
                           softmax_from_logits(logits, mask), atol=1e-12, rtol=0):
            bad["shift"] += 1
        z = fuse(alpha, H).value
        st = np.stack(H, axis=1)
        lo = np.where(mask[:, :, None], st, np.inf).min(axis=1)
        hi = np.where(mask[:, :, None], st, -np.inf).max(axis=1)
        if not (np.all(z >= lo - 1e-12) and np.all(z <= hi + 1e-12)):
            bad["convexity"] += 1
        out = gate(z, rng.normal(size=(d, d)) * 3, rng.normal(size=d)).value
        if not np.all(np.abs(out) <= np.abs(z)):
            bad["gate"] += 1
    ok = not any(bad.values())
    record_criterion(4, "fusion invariants", ok, f"1000 cases each, violations {bad}")
    assert ok


@pytest.fixture(scope="module")
def benchmark_runs():
    ds = generate_synthetic(SynthConfig(), Rng(42))
    runs = []
    for seed in BENCH_SEEDS:
        cfg = TrainConfig(seed=seed)
        tr, va, te = split_dataset(ds, seed)
        agsp = train(tr, cfg, va)
        base = train_baseline(tr, cfg, va)
        row = {"agsp": evaluate(te, agsp.params, cfg).accuracy,
               "baseline": evaluate(te, base.params, cfg, forward_fn=baseline_scores).accuracy}
        for m in ds.schema.names:
            row[f"drop:{m}"] = evaluate(te, agsp.params, cfg, drop_modality=m).accuracy
        runs.append(row)
    return runs


def test_criterion_5_synthetic_benchmark(benchmark_runs):
    agsp = np.mean([r["agsp"] for r in benchmark_runs])
    base = np.mean([r["baseline"] for r in benchmark_runs])
    ok = agsp >= 0.90 and agsp - base >= 0.03
    per_seed = ", ".join(f"{r['agsp']:.3f}/{r['baseline']:.3f}" for r in benchmark_runs)
    record_criterion(5, "synthetic benchmark", ok,
                     f"mean test acc {agsp:.4f} (>=0.90), baseline {base:.4f}, margin {100 * (agsp - base):+.2f} pts "
                     f"(>=+3); per seed agsp/baseline {per_seed}")
    assert ok


def test_criterion_6_missing_modality(benchmark_runs):
    full = np.mean([r["agsp"] for r in benchmark_runs])
    delta = {m: np.mean([r[f"drop:{m}"] for r in benchmark_runs]) - full for m in ("text", "image", "audio")}
    ok = abs(delta["audio"]) <= 0.02 and delta["text"] >= -0.15 and delta["image"] >= -0.15
    record_criterion(6, "missing-modality robustness", ok,
                     "mean change audio {:+.2f} pts (|.|<=2), text {:+.2f}, image {:+.2f} pts (>=-15)".format(
                         *(100 * delta[m] for m in ("audio", "text", "image"))))
    assert ok


def test_criterion_7_metrics_arithmetic():
    r = report_from_confusion(np.array([[470, 18], [21, 491]]))
    unit = [average_precision([0.9, 0.8, 0.7, 0.1], [1, 0, 1, 0]) == (1 + 2 / 3) / 2,
            average_precision([4, 3, 2, 1], [1, 1, 0, 0]) == 1.0,
            average_precision([4, 3, 2, 1], [0, 0, 0, 1]) == 0.25,
            mean_average_precision(np.eye(3), np.eye(3, dtype=bool))[0] == 1.0]
    ok = r.accuracy == 0.961 and abs(r.f1[1] - 0.96180) <= 1e-5 and all(unit)
    record_criterion(7, "metrics arithmetic", ok,
                     f"accuracy {r.accuracy!r} (==0.961), class-1 F1 {r.f1[1]:.6f} (0.96180+-1e-5), "
                     f"mAP unit cases {sum(unit)}/{len(unit)}")
    assert ok


def test_criterion_8_determinism(tmp_path):
    first = tmp_path / "first"
    assert cli_main(["gen-data", "--seed", "42", "--out", str(first)]) == 0
    assert cli_main(["train", "--out", str(first), "--seed", "0"]) == 0
    cfg = tmp_path / "resolved"
    cfg.write_text((first / "resolved-config").read_text())
    second = tmp_path / "second"
    assert cli_main(["train", "--config", str(cfg), "--out", str(second),
                     "--set", f"checkpoint={second / 'checkpoint.json'}"]) == 0
    same_ck = (first / "checkpoint.json").read_bytes() == (second / "checkpoint.json").read_bytes()
    same_log = (first / "epochs.csv").read_bytes() == (second / "epochs.csv").read_bytes()
    epochs = len((first / "epochs.csv").read_text().splitlines()) - 1
    ok = same_ck and same_log and epochs == 100
    record_criterion(8, "determinism", ok,
                     f"checkpoints identical={same_ck}, logs identical={same_log}, {epochs} epochs")
    assert ok


def test_criterion_9_complexity_harness(tmp_path):
    res = run_bench()
    g = res.slopes["graph_construction"]
    ok = 1.6 <= g <= 2.4
    record_criterion(9, "complexity harness", ok,
                     f"graph-construction log-log slope {g:.3f} in [1.6, 2.4] on n={res.sizes}; "
                     + ", ".join(f"{k} {v:.2f}" for k, v in res.slopes.items() if k != "graph_construction"))
    assert ok
