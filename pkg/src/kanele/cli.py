"""Command line front end.

Subcommands cover the whole flow: gen-moons, train, compile, simulate,
emit-rtl, report, sweep.  Run configs are TOML files with [dataset],
[model], [train], and [prune] sections; any field can be overridden on the
command line with --set section.key=value.  Failures exit 2 with a single
greppable line: error[CODE] message.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import data as dat
from .kan import CheckpointError, init_network, load_checkpoint, save_checkpoint
from .lutir import GraphError, extract, load_graph, save_graph
from .prune import PruneConfig
from .report import (
    SWEEP_AXES,
    render_report_figure,
    render_sweep_figure,
    report_json,
    report_text,
    resources,
    sweep_rows,
    write_report_csv,
    write_sweep_csv,
)
from .rtl import RtlOptions, emit_vhdl, latency_cycles
from .sim import exhaustive_input_codes, sim_batch, sim_forward
from .train import TrainConfig, TrainError, train, write_history


class CliError(Exception):
    def __init__(self, code: str, msg: str) -> None:
        super().__init__(msg)
        self.code = code


def _parse_set(raw: str) -> tuple[list[str], object]:
    if "=" not in raw:
        raise CliError("E_CONFIG", f"--set needs section.key=value, got {raw!r}")
    key, val = raw.split("=", 1)
    path = key.strip().split(".")
    if len(path) < 2:
        raise CliError("E_CONFIG", f"--set key must be section.key, got {key!r}")
    try:
        parsed = tomllib.loads(f"v = {val}")["v"]
    except tomllib.TOMLDecodeError:
        parsed = val
    return path, parsed


def load_config(path: str, sets: list[str] | None = None) -> dict:
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except OSError as e:
        raise CliError("E_IO", f"cannot read config: {e}") from e
    except tomllib.TOMLDecodeError as e:
        raise CliError("E_CONFIG", f"{path}: {e}") from e
    for raw in sets or []:
        keys, val = _parse_set(raw)
        node = cfg
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise CliError("E_CONFIG", f"--set {raw!r}: {k} is not a section")
        node[keys[-1]] = val
    return cfg


def _require(cfg: dict, section: str, key: str):
    if section not in cfg:
        raise CliError("E_CONFIG", f"missing [{section}] section")
    if key not in cfg[section]:
        raise CliError("E_CONFIG", f"missing {section}.{key}")
    return cfg[section][key]


def build_dataset(cfg: dict) -> dat.Dataset:
    kind = _require(cfg, "dataset", "kind")
    d = cfg["dataset"]
    if kind == "moons":
        return dat.gen_moons(int(d.get("n", 1000)), float(d.get("noise", 0.1)), int(d.get("seed", 0)))
    if kind == "csv":
        return dat.load_csv(
            _require(cfg, "dataset", "path"),
            label_column=int(d.get("label_column", -1)),
            delimiter=d.get("delimiter", ","),
            has_header=bool(d.get("has_header", False)),
        )
    raise CliError("E_CONFIG", f"dataset.kind must be 'moons' or 'csv', got {kind!r}")


def split_dataset(cfg: dict, ds: dat.Dataset) -> tuple[dat.Dataset, dat.Dataset]:
    d = cfg.get("dataset", {})
    return dat.split(
        ds,
        float(d.get("split_fraction", 0.8)),
        seed=int(d.get("split_seed", 0)),
        stratified=bool(d.get("stratified", True)),
    )


def build_network(cfg: dict):
    m = cfg.get("model", {})
    dims = _require(cfg, "model", "dims")
    bits = _require(cfg, "model", "bits")
    domain = m.get("domain", [-8.0, 8.0])
    if not (isinstance(domain, list) and len(domain) == 2):
        raise CliError("E_CONFIG", "model.domain must be [lo, hi]")
    return init_network(
        [int(v) for v in dims],
        [int(v) for v in bits],
        grid_size=int(m.get("grid_size", 6)),
        order=int(m.get("order", 3)),
        lo=float(domain[0]),
        hi=float(domain[1]),
        seed=int(m.get("seed", 0)),
        guard_bits=int(m.get("guard_bits", 8)),
        base_kind=m.get("base_activation", "silu"),
    )


def build_train_config(cfg: dict) -> TrainConfig:
    t = cfg.get("train", {})
    p = cfg.get("prune", {})
    betas = t.get("betas", [0.9, 0.999])
    try:
        prune = PruneConfig(
            threshold=float(p.get("threshold", 0.0)),
            warmup_start=int(p.get("warmup_start", 0)),
            warmup_end=int(p.get("warmup_end", 50)),
        )
        return TrainConfig(
            epochs=int(t.get("epochs", 200)),
            batch_size=int(t.get("batch_size", 64)),
            learning_rate=float(t.get("learning_rate", 3e-3)),
            weight_decay=float(t.get("weight_decay", 1e-4)),
            beta1=float(betas[0]),
            beta2=float(betas[1]),
            eps=float(t.get("eps", 1e-8)),
            seed=int(t.get("seed", 1)),
            loss=t.get("loss", "cross_entropy"),
            prune=prune,
        )
    except ValueError as e:
        raise CliError("E_CONFIG", str(e)) from e


def cmd_gen_moons(args) -> int:
    ds = dat.gen_moons(args.n, args.noise, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    dat.save_csv(ds, out)
    print(f"wrote {ds.n} samples ({ds.d} features, {ds.n_classes} classes) to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.set)
    ds = build_dataset(cfg)
    train_ds, val_ds = split_dataset(cfg, ds)
    net = build_network(cfg)
    if ds.d != net.dims[0]:
        raise CliError("E_CONFIG", f"model.dims[0] = {net.dims[0]} but dataset has {ds.d} features")
    net.set_input_stats(*train_ds.stats())
    tcfg = build_train_config(cfg)
    try:
        history = train(net, train_ds.features, train_ds.labels, tcfg, val_ds.features, val_ds.labels)
    except TrainError as e:
        raise CliError("E_TRAIN", str(e)) from e
    net.meta["config"] = cfg
    net.meta["label_names"] = ds.label_names
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(net, out / "checkpoint.json")
    write_history(history, out / "history.csv")
    if history:
        last = history[-1]
        print(f"trained {tcfg.epochs} epochs: loss {last.loss:.4f}, train acc {last.train_acc:.4f}, "
              f"val acc {last.val_acc:.4f}, active edges {last.active_edges}")
    else:
        print("trained 0 epochs: checkpoint holds the initial parameters")
    print(f"wrote {out / 'checkpoint.json'} and {out / 'history.csv'}")
    return 0


def _load_ckpt(path: str):
    try:
        return load_checkpoint(path)
    except OSError as e:
        raise CliError("E_IO", f"cannot read checkpoint: {e}") from e
    except CheckpointError as e:
        raise CliError("E_CHECKPOINT", str(e)) from e


def _load_graph(path: str):
    try:
        return load_graph(path)
    except OSError as e:
        raise CliError("E_IO", f"cannot read graph: {e}") from e
    except GraphError as e:
        raise CliError("E_GRAPH", str(e)) from e


def cmd_compile(args) -> int:
    net = _load_ckpt(args.checkpoint)
    digest = hashlib.sha256(Path(args.checkpoint).read_bytes()).hexdigest()
    try:
        graph = extract(net, n_add=args.n_add, source_hash=digest)
    except (GraphError, OverflowError) as e:
        raise CliError("E_GRAPH", str(e)) from e
    out = Path(args.out)
    if out.suffix == ".json":
        out.parent.mkdir(parents=True, exist_ok=True)
        target = out
    else:
        out.mkdir(parents=True, exist_ok=True)
        target = out / "graph.json"
    save_graph(graph, target)
    rep = resources(graph)
    print(f"compiled {' -> '.join(str(d) for d in graph.dims)}: {rep.total_edges} edges, "
          f"{rep.total_table_bits} table bits, latency {rep.latency} cycles")
    print(f"wrote {target}")
    return 0


def cmd_simulate(args) -> int:
    graph = _load_graph(args.graph)
    first = graph.layers[0]
    metrics: dict = {"graph": args.graph}
    status = 0
    if args.checkpoint:
        net = _load_ckpt(args.checkpoint)
        if args.exhaustive:
            codes = exhaustive_input_codes(graph)
        else:
            rng = np.random.default_rng(args.seed)
            codes = rng.integers(0, 1 << first.in_bits, size=(args.samples, first.d_in), dtype=np.int64)
        net_out, _ = net.forward_codes(codes)
        sim_out = sim_forward(graph, codes)
        mismatches = int(np.any(net_out != sim_out, axis=1).sum())
        metrics["equivalence_vectors"] = int(codes.shape[0])
        metrics["equivalence_mismatches"] = mismatches
        if mismatches:
            print(f"equivalence: FAIL ({mismatches}/{codes.shape[0]} vectors differ)")
            status = 1
        else:
            print(f"equivalence: PASS ({codes.shape[0]} vectors)")
    if args.config:
        cfg = load_config(args.config, args.set)
        ds = build_dataset(cfg)
        _, test_ds = split_dataset(cfg, ds)
        m = sim_batch(graph, test_ds.features, test_ds.labels)
        metrics["test_samples"] = m.n
        metrics["test_accuracy"] = m.accuracy
        print(f"test accuracy: {m.accuracy:.4f} ({m.n} samples)")
    if not args.checkpoint and not args.config:
        raise CliError("E_CONFIG", "nothing to do: pass --checkpoint and/or --config")
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "sim_metrics.json").write_text(json.dumps(metrics, sort_keys=True, indent=2) + "\n")
        print(f"wrote {outdir / 'sim_metrics.json'}")
    return status


def cmd_emit_rtl(args) -> int:
    graph = _load_graph(args.graph)
    opts = RtlOptions(
        prefix=args.prefix,
        n_add=args.n_add,
        target_clock_ns=args.clock_ns,
        tb_vectors=args.tb_vectors,
        tb_seed=args.tb_seed,
    )
    try:
        bundle = emit_vhdl(graph, args.out, opts)
    except ValueError as e:
        raise CliError("E_GRAPH", str(e)) from e
    for rel in bundle.files:
        print(f"wrote {bundle.root / rel}")
    print(f"pipeline latency: {bundle.latency} cycles")
    return 0


def cmd_report(args) -> int:
    graph = _load_graph(args.graph)
    rep = resources(graph, n_add=args.n_add)
    if args.json:
        print(report_json(rep), end="")
    else:
        print(report_text(rep), end="")
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "report.txt").write_text(report_text(rep))
        (outdir / "report.json").write_text(report_json(rep))
        write_report_csv(rep, outdir / "report.csv")
        render_report_figure(rep, outdir / "report.png")
        print(f"wrote report.txt, report.json, report.csv, report.png under {outdir}")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, args.set)
    m = cfg.get("model", {})
    domain = m.get("domain", [-8.0, 8.0])
    model = {
        "dims": [int(v) for v in _require(cfg, "model", "dims")],
        "bits": [int(v) for v in _require(cfg, "model", "bits")],
        "grid_size": int(m.get("grid_size", 6)),
        "order": int(m.get("order", 3)),
        "lo": float(domain[0]),
        "hi": float(domain[1]),
        "seed": int(m.get("seed", 0)),
        "guard_bits": int(m.get("guard_bits", 8)),
        "base_kind": m.get("base_activation", "silu"),
    }
    try:
        values = [float(v) if args.axis == "prune" else int(v) for v in args.values.split(",") if v.strip()]
    except ValueError as e:
        raise CliError("E_CONFIG", f"bad --values: {e}") from e
    if not values:
        raise CliError("E_CONFIG", "--values is empty")
    net = _load_ckpt(args.checkpoint) if args.checkpoint else None
    try:
        rows = sweep_rows(model, args.axis, values, n_add=args.n_add, net=net)
    except (ValueError, OverflowError) as e:
        raise CliError("E_CONFIG", str(e)) from e
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(rows, outdir / "sweep.csv")
    render_sweep_figure(rows, outdir / "sweep.png")
    for r in rows:
        print(f"{args.axis}={r['value']}: {r['edges']} edges, {r['table_bits']} table bits, "
              f"{r['latency']} cycles")
    print(f"wrote {outdir / 'sweep.csv'} and {outdir / 'sweep.png'}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kanele", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-moons", help="write a two-moons CSV")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_moons)

    p = sub.add_parser("train", help="train a network from a TOML run config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--set", action="append", default=[], metavar="SEC.KEY=VAL")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compile", help="extract the LUT graph from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="graph .json path or a directory")
    p.add_argument("--n-add", type=int, default=4)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("simulate", help="run the bit-exact graph simulator")
    p.add_argument("--graph", required=True)
    p.add_argument("--checkpoint", help="check code-level equivalence against this checkpoint")
    p.add_argument("--config", help="score test-split accuracy for this run config")
    p.add_argument("--set", action="append", default=[], metavar="SEC.KEY=VAL")
    p.add_argument("--samples", type=int, default=1024)
    p.add_argument("--exhaustive", action="store_true", help="enumerate every input code vector")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("emit-rtl", help="write the VHDL bundle and testbench")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--prefix", default="kanele")
    p.add_argument("--n-add", type=int, default=None)
    p.add_argument("--clock-ns", type=float, default=2.0)
    p.add_argument("--tb-vectors", type=int, default=256)
    p.add_argument("--tb-seed", type=int, default=2024)
    p.set_defaults(func=cmd_emit_rtl)

    p = sub.add_parser("report", help="resource and latency summary of a graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--n-add", type=int, default=None)
    p.add_argument("--json", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sweep", help="resource metrics across a parameter axis")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--checkpoint", help="base network for prune-axis sweeps")
    p.add_argument("--n-add", type=int, default=4)
    p.add_argument("--out", required=True)
    p.add_argument("--set", action="append", default=[], metavar="SEC.KEY=VAL")
    p.set_defaults(func=cmd_sweep)

    return ap


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error[{e.code}] {e}", file=sys.stderr)
        return 2
    except dat.DataError as e:
        print(f"error[E_DATA] {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error[E_IO] {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
