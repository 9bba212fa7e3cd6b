"""Command-line harness: ``agsp <command> [flags]``.

Commands: gen-data, build-graphs, train, eval, robustness, bench.

Configuration precedence (lowest first): built-in defaults, the config
stored in a checkpoint (eval/robustness), ``--config`` file, command flags.
The effective configuration is written to ``<out>/resolved-config`` before
any work starts; passing that file back via ``--config`` repeats the run.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .bench import DEFAULT_SIZES, STAGES, run_bench
from .config import TrainConfig, parse_value
from .data import DEFAULT_DIMS, SynthConfig, generate_synthetic, load_dataset, save_dataset
from .errors import AgspError, ConfigError
from .graphs import build_inter_graph, build_intra_graph, dump_graph, graph_operators, semantic_embeddings
from .model import init_params, load_checkpoint, make_batch, projection_params, save_checkpoint
from .data import project
from .numeric import Rng, sym_eig
from .training import evaluate, split_dataset, train, write_epoch_csv

TRAIN_KEYS = [f.name for f in dataclasses.fields(TrainConfig)]
EXTRA_DEFAULTS = {
    "dataset": "",
    "checkpoint": "",
    "out": "out",
    # gen-data
    "n": "600",
    "classes": "3",
    "dims": ",".join(f"{k}={v}" for k, v in DEFAULT_DIMS.items()),
    "separability": "text=1.2,image=1.2,audio=0.0",
    "modality_dropout": "0.0",
    "task": "multiclass",
    "allow_no_signal": "false",
    # eval / robustness
    "split": "test",
    "drop_modality": "",
    # bench
    "sizes": ",".join(str(s) for s in DEFAULT_SIZES),
    "bench_dim": "64",
    "repeats": "5",
    "strict": "false",
}
ALL_KEYS = set(TRAIN_KEYS) | set(EXTRA_DEFAULTS)


class CliError(Exception):
    pass


def read_config_file(path) -> dict[str, str]:
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise CliError(f"cannot read config {path}: {e.strerror}") from None
    for no, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CliError(f"{path}:{no}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in ALL_KEYS:
            raise CliError(f"{path}:{no}: unknown key {key!r}")
        out[key] = val
    return out


def _kv_list(text: str, cast) -> dict:
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "=" not in part:
            raise CliError(f"expected name=value, got {part!r}")
        k, v = part.split("=", 1)
        try:
            out[k.strip()] = cast(v)
        except ValueError:
            raise CliError(f"bad value in {part!r}") from None
    return out


def _bool(text: str) -> bool:
    return str(text).strip().lower() in ("1", "true", "yes", "on")


class Run:
    """Resolved settings for one invocation."""

    def __init__(self, values: dict[str, str]):
        self.values = values

    def __getitem__(self, key):
        return self.values[key]

    @property
    def out(self) -> Path:
        return Path(self.values["out"])

    def train_config(self) -> TrainConfig:
        kw = {}
        for k in TRAIN_KEYS:
            if k in self.values:
                kw[k] = parse_value(k, self.values[k])
        return TrainConfig(**kw)

    def path(self, key: str) -> Path:
        return Path(self.values[key])

    def write_resolved(self) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        lines = [f"{k}={self.values[k]}" for k in sorted(self.values)]
        (self.out / "resolved-config").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _stringify(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def resolve(args, base_train: dict | None = None) -> Run:
    values = {k: _stringify(v) for k, v in TrainConfig().to_dict().items()}
    values.update(EXTRA_DEFAULTS)
    if base_train:
        values.update({k: _stringify(v) for k, v in base_train.items() if k in TRAIN_KEYS})
    if args.config:
        values.update(read_config_file(args.config))
    for item in args.set or []:
        if "=" not in item:
            raise CliError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        if k not in ALL_KEYS:
            raise CliError(f"unknown key {k!r}")
        values[k] = v
    for key in ALL_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = _stringify(flag)
    out = Path(values["out"])
    if not values["dataset"]:
        values["dataset"] = str(out / "dataset.jsonl")
    if not values["checkpoint"]:
        values["checkpoint"] = str(out / "checkpoint.json")
    run = Run(values)
    run.train_config()  # validate early
    return run


# Commands ------------------------------------------------------------------

def cmd_gen_data(run: Run) -> int:
    try:
        n = int(run["n"])
        classes = int(run["classes"])
        dims = _kv_list(run["dims"], int)
        sep = _kv_list(run["separability"], float)
        drop = float(run["modality_dropout"])
    except ValueError as e:
        raise CliError(f"bad gen-data setting: {e}") from None
    if n <= 0:
        raise ConfigError("n must be positive")
    cfg = SynthConfig(n=n, num_classes=classes, dims=dims, separability=sep, dropout=drop,
                      task=run["task"], allow_no_signal=_bool(run["allow_no_signal"]))
    run.write_resolved()
    ds = generate_synthetic(cfg, Rng(run.train_config().seed).child("synthetic"))
    path = run.path("dataset")
    path.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, path)
    dims_txt = ", ".join(f"{m}={d}" for m, d in ds.schema.modalities)
    print(f"wrote {len(ds)} instances to {path}")
    print(f"schema: modalities [{dims_txt}], classes {ds.schema.num_classes}, task {ds.schema.task}")
    return 0


def _load_params(run: Run, schema, config):
    ck = Path(run["checkpoint"])
    if ck.exists():
        params, _ = load_checkpoint(ck, schema, config)
        return params
    return init_params(schema, config, Rng(config.seed).child("init"))


def cmd_build_graphs(run: Run) -> int:
    config = run.train_config()
    run.write_resolved()
    ds = load_dataset(run.path("dataset"))
    params = _load_params(run, ds.schema, config)
    batch = make_batch(ds.instances[:config.batch_size], ds.schema)
    proj = projection_params(params, ds.schema)
    projected = {m: (project(rows, proj, m), idx) for m, (rows, idx) in batch.features.items() if idx.size}
    graphs = [build_intra_graph(X, config.epsilon, modality=m, nodes=idx) for m, (X, idx) in projected.items()]
    E = semantic_embeddings(batch.n, config.graph_anchor_eval, projected=projected)
    graphs.append(build_inter_graph(E, config.sigma))
    gdir = run.out / "graphs"
    gdir.mkdir(parents=True, exist_ok=True)
    print("graph\tnodes\tedges\tdensity\tlambda_min\tlambda_max")
    for g in graphs:
        name = "inter" if g.kind == "inter" else f"intra-{g.modality}"
        dump_graph(g, gdir / f"{name}.json")
        w = sym_eig(graph_operators(g).laplacian.value).eigenvalues if g.n else np.zeros(1)
        print(f"{name}\t{g.n}\t{g.edge_count()}\t{g.density():.4f}\t{w[0]:.6f}\t{w[-1]:.6f}")
    return 0


def cmd_train(run: Run) -> int:
    config = run.train_config()
    run.write_resolved()
    ds = load_dataset(run.path("dataset"))
    tr, va, _ = split_dataset(ds, config.seed)
    result = train(tr, config, va)
    ck = run.path("checkpoint")
    ck.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(result.params, ck, ds.schema, config)
    write_epoch_csv(result.log, run.out / "epochs.csv")
    if result.log:
        last = result.log[-1]
        print(f"epoch {last.epoch}: train_loss {last.train_loss:.4f} train_acc {last.train_acc:.4f} "
              f"val_acc {last.val_acc if last.val_acc is not None else float('nan'):.4f}")
    print(f"checkpoint: {ck}")
    return 0


def _eval_setup(args):
    ck = resolve(args)["checkpoint"]
    _, meta = load_checkpoint(ck)
    run = resolve(args, base_train=meta.get("config"))
    config = run.train_config()
    run.write_resolved()
    ds = load_dataset(run.path("dataset"))
    params, _ = load_checkpoint(ck, ds.schema, config)
    split = run["split"]
    parts = dict(zip(("train", "val", "test"), split_dataset(ds, config.seed)))
    if split == "all":
        subset = ds
    elif split in parts:
        subset = parts[split]
    else:
        raise CliError(f"split must be train, val, test or all, got {split!r}")
    return run, config, subset, params


def cmd_eval(run_args) -> int:
    run, config, subset, params = _eval_setup(run_args)
    drop = run["drop_modality"] or None
    rep = evaluate(subset, params, config, drop_modality=drop)
    (run.out / "metrics.json").write_text(json.dumps(rep.to_json(), indent=2) + "\n", encoding="utf-8")
    if rep.confusion is not None:
        with open(run.out / "confusion.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            C = rep.confusion.shape[0]
            w.writerow(["true\\pred"] + [str(c) for c in range(C)])
            for c in range(C):
                w.writerow([str(c)] + [str(int(x)) for x in rep.confusion[c]])
    mAP = "n/a" if rep.mAP is None else f"{rep.mAP:.4f}"
    print(f"accuracy {rep.accuracy:.4f} macro_f1 {rep.macro_f1:.4f} mAP {mAP} "
          f"(n={rep.n_evaluated}, skipped={rep.n_skipped})")
    return 0


def cmd_robustness(run_args) -> int:
    run, config, subset, params = _eval_setup(run_args)
    rows = []
    for drop in [None, *subset.schema.names]:
        rep = evaluate(subset, params, config, drop_modality=drop)
        rows.append([drop or "none", repr(rep.accuracy), repr(rep.macro_f1),
                     "" if rep.mAP is None else repr(rep.mAP), rep.n_evaluated, rep.n_skipped])
        print(f"dropped={drop or 'none'}\taccuracy={rep.accuracy:.4f}\tskipped={rep.n_skipped}")
    with open(run.out / "robustness.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dropped", "accuracy", "macro_f1", "mAP", "n_evaluated", "n_skipped"])
        w.writerows(rows)
    return 0


def cmd_bench(run: Run) -> int:
    config = run.train_config()
    run.write_resolved()
    try:
        sizes = [int(s) for s in run["sizes"].split(",") if s.strip()]
        dim, repeats = int(run["bench_dim"]), int(run["repeats"])
    except ValueError as e:
        raise CliError(f"bad bench setting: {e}") from None
    res = run_bench(sizes, dim=dim, repeats=repeats, cheb_k=config.chebyshev_k, seed=config.seed)
    with open(run.out / "bench.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stage", "n", "median_seconds"])
        for s in STAGES:
            for n, t in zip(res.sizes, res.times[s]):
                w.writerow([s, n, repr(t)])
    with open(run.out / "bench-slopes.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stage", "loglog_slope"])
        for s in STAGES:
            w.writerow([s, repr(res.slopes[s])])
    for s in STAGES:
        print(f"{s}\tslope {res.slopes[s]:.3f}")
    strict = _bool(run["strict"])
    failed = False
    for name, ok, detail in res.checks:
        if ok:
            print(f"check ok: {name} ({detail})")
        elif strict:
            print(f"error: check failed: {name} ({detail})", file=sys.stderr)
            failed = True
        else:
            print(f"warning: advisory check failed: {name} ({detail})", file=sys.stderr)
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="key=value run configuration file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--set", action="append", default=argparse.SUPPRESS, metavar="KEY=VALUE",
                        help="override any configuration key")
    common.add_argument("--dataset", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="agsp", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", parents=[common], help="generate a synthetic dataset")
    g.add_argument("--n", type=int, default=argparse.SUPPRESS)
    g.add_argument("--classes", type=int, default=argparse.SUPPRESS)
    g.add_argument("--dims", default=argparse.SUPPRESS, help="e.g. text=32,image=64,audio=48")
    g.add_argument("--separability", default=argparse.SUPPRESS, help="e.g. text=1.2,image=1.2,audio=0")
    g.add_argument("--modality-dropout", dest="modality_dropout", type=float, default=argparse.SUPPRESS)
    g.add_argument("--task", choices=["multiclass", "multilabel"], default=argparse.SUPPRESS)
    g.add_argument("--allow-no-signal", dest="allow_no_signal", action="store_true", default=argparse.SUPPRESS)

    for name, helptext in (("build-graphs", "dump the dual graphs of the first batch"),
                           ("train", "train and write checkpoint + epoch CSV"),
                           ("eval", "evaluate a checkpoint"),
                           ("robustness", "evaluate with each modality dropped")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--checkpoint", default=argparse.SUPPRESS)
        s.add_argument("--epochs", type=int, default=argparse.SUPPRESS)
        s.add_argument("--batch-size", dest="batch_size", type=int, default=argparse.SUPPRESS)
        if name in ("eval", "robustness"):
            s.add_argument("--split", default=argparse.SUPPRESS, help="train, val, test (default) or all")
        if name == "eval":
            s.add_argument("--drop-modality", dest="drop_modality", default=argparse.SUPPRESS)

    b = sub.add_parser("bench", parents=[common], help="stage timing and log-log slopes")
    b.add_argument("--sizes", default=argparse.SUPPRESS, help="comma-separated node counts")
    b.add_argument("--bench-dim", dest="bench_dim", type=int, default=argparse.SUPPRESS)
    b.add_argument("--repeats", type=int, default=argparse.SUPPRESS)
    b.add_argument("--strict", action="store_true", default=argparse.SUPPRESS)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for key in ("config", "set"):
        if not hasattr(args, key):
            setattr(args, key, None)
    try:
        if args.command in ("eval", "robustness"):
            return (cmd_eval if args.command == "eval" else cmd_robustness)(args)
        run = resolve(args)
        return {"gen-data": cmd_gen_data, "build-graphs": cmd_build_graphs, "train": cmd_train,
                "bench": cmd_bench}[args.command](run)
    except (AgspError, CliError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
