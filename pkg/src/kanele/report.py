"""Resource and latency accounting for LUT graphs.

Counts are structural, straight off the IR and the same planning helpers
the VHDL emitter uses: table bits per edge, adder pipeline registers at
accumulator width, LUT output registers at layer entry width, one valid
bit per pipeline stage.  No device mapping is attempted; the point is a
transparent number that scales the way the hardware does.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

from .lutir import LutGraph
from .rtl import latency_cycles, layer_depth, layer_widths, plan_adder_tree


@dataclass
class LayerResources:
    index: int
    d_in: int
    d_out: int
    n_add: int
    active_edges: int
    table_entries: int
    table_bits: int
    entry_w: int
    acc_w: int
    adder_depth: int
    adder_count: int
    lut_reg_bits: int
    pipe_reg_bits: int


@dataclass
class ResourceReport:
    layers: list[LayerResources]
    latency: int
    input_reg_bits: int
    valid_reg_bits: int
    total_edges: int
    total_table_entries: int
    total_table_bits: int
    total_register_bits: int


def resources(graph: LutGraph, n_add: int | None = None) -> ResourceReport:
    rows = []
    for l, layer in enumerate(graph.layers):
        na = n_add or layer.adder_fanin
        w = layer_widths(layer)
        depth = layer_depth(layer, na)
        entries = len(layer.edges) * (1 << layer.in_bits)
        bits = sum((1 << layer.in_bits) * e.entry_bits for e in layer.edges)
        adders = 0
        stage_regs = 0
        for q in range(layer.d_out):
            fan = layer.fan_in(q)
            if fan == 0:
                continue
            plan = plan_adder_tree(fan, na)
            n_stage = sum(len(s) for s in plan.stages)
            adders += n_stage
            stage_regs += (n_stage + (depth - plan.depth)) * w.acc_w
        rows.append(
            LayerResources(
                index=l,
                d_in=layer.d_in,
                d_out=layer.d_out,
                n_add=na,
                active_edges=len(layer.edges),
                table_entries=entries,
                table_bits=bits,
                entry_w=w.entry_w,
                acc_w=w.acc_w,
                adder_depth=depth,
                adder_count=adders,
                lut_reg_bits=len(layer.edges) * w.entry_w,
                pipe_reg_bits=stage_regs,
            )
        )
    latency = latency_cycles(graph, n_add)
    first = graph.layers[0]
    input_bits = first.d_in * first.in_bits
    total_regs = input_bits + latency + sum(r.lut_reg_bits + r.pipe_reg_bits for r in rows)
    return ResourceReport(
        layers=rows,
        latency=latency,
        input_reg_bits=input_bits,
        valid_reg_bits=latency,
        total_edges=sum(r.active_edges for r in rows),
        total_table_entries=sum(r.table_entries for r in rows),
        total_table_bits=sum(r.table_bits for r in rows),
        total_register_bits=total_regs,
    )


def report_text(rep: ResourceReport) -> str:
    lines = []
    lines.append("layer  shape      edges  entries  table_bits  entry/acc  depth  adders")
    for r in rep.layers:
        lines.append(
            f"{r.index:<6d} {r.d_in:>3d} -> {r.d_out:<3d} {r.active_edges:>5d}  "
            f"{r.table_entries:>7d}  {r.table_bits:>10d}  {r.entry_w:>4d}/{r.acc_w:<4d} "
            f"{r.adder_depth:>5d}  {r.adder_count:>6d}"
        )
    lines.append("")
    lines.append(f"latency          : {rep.latency} cycles")
    lines.append(f"tables           : {rep.total_edges} edges, {rep.total_table_entries} entries, {rep.total_table_bits} bits")
    lines.append(
        f"registers (bits) : input {rep.input_reg_bits}, "
        f"lut {sum(r.lut_reg_bits for r in rep.layers)}, "
        f"pipeline {sum(r.pipe_reg_bits for r in rep.layers)}, "
        f"valid {rep.valid_reg_bits}, total {rep.total_register_bits}"
    )
    return "\n".join(lines) + "\n"


def report_json(rep: ResourceReport) -> str:
    return json.dumps(asdict(rep), sort_keys=True, indent=2) + "\n"


def write_report_csv(rep: ResourceReport, path: str | Path) -> None:
    cols = [
        "index", "d_in", "d_out", "n_add", "active_edges", "table_entries", "table_bits",
        "entry_w", "acc_w", "adder_depth", "adder_count", "lut_reg_bits", "pipe_reg_bits",
    ]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rep.layers:
            d = asdict(r)
            w.writerow([d[c] for c in cols])


def render_report_figure(rep: ResourceReport, path: str | Path) -> None:
    """Two-panel bar chart: table bits and register bits per layer."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    idx = [r.index for r in rep.layers]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.bar(idx, [r.table_bits for r in rep.layers], color="#356a9b")
    ax1.set_xlabel("layer")
    ax1.set_ylabel("table bits")
    ax1.set_title("LUT storage")
    ax1.set_xticks(idx)
    ax2.bar(idx, [r.lut_reg_bits + r.pipe_reg_bits for r in rep.layers], color="#9b5135")
    ax2.set_xlabel("layer")
    ax2.set_ylabel("register bits")
    ax2.set_title(f"pipeline registers ({rep.latency} cycle latency)")
    ax2.set_xticks(idx)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# -- parameter sweeps -----------------------------------------------------

SWEEP_AXES = ("width", "bits", "grid", "prune")


def sweep_rows(model: dict, axis: str, values: list, n_add: int = 4, net=None) -> list[dict]:
    """Resource/latency metrics across one parameter axis.

    `model` mirrors the [model] config section.  For the prune axis the
    threshold is applied to `net` (a trained network if supplied, else a
    fresh init) before extraction; other axes rebuild the network per value.
    """
    from .kan import init_network, load_checkpoint  # noqa: F401  (callers pass nets)
    from .lutir import extract
    from .prune import update_masks

    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
    rows = []
    for v in values:
        m = dict(model)
        if axis == "width":
            dims = list(m["dims"])
            for i in range(1, len(dims) - 1):
                dims[i] = int(v)
            m["dims"] = dims
        elif axis == "bits":
            m["bits"] = [int(v)] * len(m["bits"])
        elif axis == "grid":
            m["grid_size"] = int(v)
        if axis == "prune":
            base = net if net is not None else _build(m)
            work = _copy_net(base)
            update_masks(work, float(v))
        else:
            work = _build(m)
        rep = resources(extract(work, n_add=n_add))
        rows.append(
            {
                "axis": axis,
                "value": v,
                "edges": rep.total_edges,
                "table_entries": rep.total_table_entries,
                "table_bits": rep.total_table_bits,
                "register_bits": rep.total_register_bits,
                "latency": rep.latency,
            }
        )
    return rows


def _build(m: dict):
    from .kan import init_network

    return init_network(
        list(m["dims"]),
        list(m["bits"]),
        int(m["grid_size"]),
        int(m["order"]),
        float(m["lo"]),
        float(m["hi"]),
        seed=int(m.get("seed", 0)),
        guard_bits=int(m.get("guard_bits", 8)),
        base_kind=m.get("base_kind", "silu"),
    )


def _copy_net(net):
    from .kan import KanLayer, KanNetwork

    layers = [
        KanLayer(
            w_base=l.w_base.copy(),
            coeffs=l.coeffs.copy(),
            mask=l.mask.copy(),
            scale=l.scale,
            out_quant=l.out_quant,
        )
        for l in net.layers
    ]
    return KanNetwork(
        layers, net.input_quant, net.basis, base_kind=net.base_kind, seed=net.seed, meta=dict(net.meta)
    )


def write_sweep_csv(rows: list[dict], path: str | Path) -> None:
    cols = ["axis", "value", "edges", "table_entries", "table_bits", "register_bits", "latency"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([r[c] for c in cols])


def render_sweep_figure(rows: list[dict], path: str | Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs = [r["value"] for r in rows]
    fig, ax1 = plt.subplots(figsize=(6, 4))
    ax1.plot(xs, [r["table_bits"] for r in rows], "o-", color="#356a9b", label="table bits")
    ax1.set_xlabel(rows[0]["axis"] if rows else "value")
    ax1.set_ylabel("table bits", color="#356a9b")
    ax2 = ax1.twinx()
    ax2.plot(xs, [r["latency"] for r in rows], "s--", color="#9b5135", label="latency")
    ax2.set_ylabel("latency (cycles)", color="#9b5135")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
