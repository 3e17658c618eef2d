"""Integer LUT netlist: the compilation target of a trained network.

A graph is a chain of layers; each layer is a set of edges, and each edge is
one lookup table over its input codes, holding fixed-point entries in units
of step/2**guard_bits.  A node sums its incoming tables, adds a rebase
offset, and requantizes to its output code.  Everything downstream of
extraction (simulator, VHDL) consumes only this structure.

Serialization is canonical JSON ("kanele-lut-v1"): sorted keys, fixed
indentation, so equal graphs produce byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kan import KanNetwork, checkpoint_hash
from .quant import InputQuantSpec, QuantSpec, requant_code

LUT_FORMAT = "kanele-lut-v1"


class GraphError(ValueError):
    """Malformed LUT graph; message carries a JSON path to the offender."""


def signed_width(v: int) -> int:
    """Minimal two's-complement width holding v (width 1 covers {-1, 0})."""
    if v >= 0:
        return v.bit_length() + 1
    return (-v - 1).bit_length() + 1


def fits_signed(v: int, bits: int) -> bool:
    return -(1 << (bits - 1)) <= v <= (1 << (bits - 1)) - 1


@dataclass
class LutEdge:
    in_neuron: int
    out_neuron: int
    entry_bits: int
    table: np.ndarray  # (2**in_bits,) int64


@dataclass
class LutLayer:
    d_in: int
    d_out: int
    in_bits: int
    out_bits: int
    guard_bits: int
    lo: float
    hi: float
    adder_fanin: int
    offsets: list[int]
    edges: list[LutEdge]

    def edges_into(self, q: int) -> list[LutEdge]:
        return [e for e in self.edges if e.out_neuron == q]

    def fan_in(self, q: int) -> int:
        return len(self.edges_into(q))


@dataclass
class LutGraph:
    input_codec: InputQuantSpec
    layers: list[LutLayer]
    meta: dict = field(default_factory=dict)

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].d_in] + [l.d_out for l in self.layers]

    @property
    def input_width(self) -> int:
        return self.layers[0].d_in * self.layers[0].in_bits

    @property
    def output_width(self) -> int:
        return self.layers[-1].d_out * self.layers[-1].out_bits


def requantize_sum(layer: LutLayer, q: int, acc):
    """Accumulated entries for node q -> output code.  Single definition,
    shared by the simulator and mirrored by the emitted hardware."""
    return requant_code(acc, layer.offsets[q], layer.guard_bits, layer.out_bits)


def extract(net: KanNetwork, n_add: int = 4, source_hash: str | None = None) -> LutGraph:
    """Compile a trained network into its LUT graph.

    Tables come from the same `layer_int_table` the training forward uses,
    so the graph is bit-exact against the network by construction.  The
    result is validated before being returned.
    """
    if n_add < 2:
        raise GraphError(f"adder fan-in must be >= 2, got {n_add}")
    layers = []
    for l, layer in enumerate(net.layers):
        int_tab = net.layer_int_table(l)
        spec = layer.out_quant
        edges = []
        for q in range(layer.d_out):
            for p in range(layer.d_in):
                if not layer.mask[q, p]:
                    continue
                tbl = int_tab[q, p].copy()
                width = max(signed_width(int(v)) for v in tbl)
                edges.append(LutEdge(in_neuron=p, out_neuron=q, entry_bits=width, table=tbl))
        layers.append(
            LutLayer(
                d_in=layer.d_in,
                d_out=layer.d_out,
                in_bits=net.layer_in_spec(l).bits,
                out_bits=spec.bits,
                guard_bits=spec.guard_bits,
                lo=spec.lo,
                hi=spec.hi,
                adder_fanin=n_add,
                offsets=[spec.offset_int()] * layer.d_out,
                edges=edges,
            )
        )
    graph = LutGraph(
        input_codec=net.input_quant,
        layers=layers,
        meta={
            "dims": net.dims,
            "bits": net.bits,
            "base_kind": net.base_kind,
            "grid_size": net.basis.grid_size,
            "order": net.basis.order,
            "source_checkpoint_sha256": source_hash or checkpoint_hash(net),
        },
    )
    validate_graph(graph)
    return graph


# -- validation -----------------------------------------------------------


def _ok(cond: bool, path: str, msg: str) -> None:
    if not cond:
        raise GraphError(f"{path}: {msg}")


def validate_graph(graph: LutGraph) -> None:
    """Structural sanity of a graph; raises GraphError with a JSON path."""
    codec = graph.input_codec
    _ok(1 <= codec.base.bits <= 16, "$.input_quant.bits", f"bits {codec.base.bits} outside [1, 16]")
    _ok(len(graph.layers) >= 1, "$.layers", "graph needs at least one layer")
    for l, layer in enumerate(graph.layers):
        at = f"$.layers[{l}]"
        _ok(layer.d_in >= 1 and layer.d_out >= 1, at, f"widths must be >= 1, got {layer.d_in}x{layer.d_out}")
        _ok(1 <= layer.in_bits <= 16, f"{at}.in_bits", f"{layer.in_bits} outside [1, 16]")
        _ok(1 <= layer.out_bits <= 16, f"{at}.out_bits", f"{layer.out_bits} outside [1, 16]")
        _ok(layer.guard_bits >= 0, f"{at}.guard_bits", f"{layer.guard_bits} is negative")
        _ok(layer.lo < layer.hi, f"{at}.lo", f"range [{layer.lo}, {layer.hi}] is empty")
        _ok(layer.adder_fanin >= 2, f"{at}.adder_fanin", f"{layer.adder_fanin} must be >= 2")
        _ok(
            len(layer.offsets) == layer.d_out,
            f"{at}.offsets",
            f"expected {layer.d_out} entries, got {len(layer.offsets)}",
        )
        if l == 0:
            _ok(
                layer.in_bits == codec.base.bits,
                f"{at}.in_bits",
                f"{layer.in_bits} != input codec bits {codec.base.bits}",
            )
            _ok(
                layer.d_in == codec.n_features,
                f"{at}.d_in",
                f"{layer.d_in} != input codec feature count {codec.n_features}",
            )
        else:
            prev = graph.layers[l - 1]
            _ok(
                layer.in_bits == prev.out_bits,
                f"{at}.in_bits",
                f"{layer.in_bits} != layer {l - 1} out_bits {prev.out_bits}",
            )
            _ok(
                layer.d_in == prev.d_out,
                f"{at}.d_in",
                f"{layer.d_in} != layer {l - 1} d_out {prev.d_out}",
            )
        seen = set()
        for e, edge in enumerate(layer.edges):
            ep = f"{at}.edges[{e}]"
            _ok(0 <= edge.in_neuron < layer.d_in, f"{ep}.in", f"{edge.in_neuron} outside [0, {layer.d_in})")
            _ok(0 <= edge.out_neuron < layer.d_out, f"{ep}.out", f"{edge.out_neuron} outside [0, {layer.d_out})")
            key = (edge.out_neuron, edge.in_neuron)
            _ok(key not in seen, ep, f"duplicate edge {edge.in_neuron} -> {edge.out_neuron}")
            seen.add(key)
            _ok(edge.entry_bits >= 1, f"{ep}.entry_bits", f"{edge.entry_bits} must be >= 1")
            _ok(
                edge.table.shape == (1 << layer.in_bits,),
                f"{ep}.table",
                f"length {edge.table.shape[0]} != 2**in_bits = {1 << layer.in_bits}",
            )
            bad = [int(v) for v in edge.table if not fits_signed(int(v), edge.entry_bits)]
            _ok(not bad, f"{ep}.table", f"entry {bad[0] if bad else 0} does not fit {edge.entry_bits} signed bits")
        # No dangling hidden neurons: every input this layer reads must be driven.
        if l >= 1:
            driven = {e.out_neuron for e in graph.layers[l - 1].edges}
            for e, edge in enumerate(layer.edges):
                _ok(
                    edge.in_neuron in driven,
                    f"{at}.edges[{e}].in",
                    f"reads neuron {edge.in_neuron} which no layer {l - 1} edge drives",
                )
        # Worst-case accumulator must stay inside 63-bit signed magnitude.
        for q in range(layer.d_out):
            bound = sum(int(np.abs(e.table).max()) for e in layer.edges_into(q))
            half = 1 << max(layer.guard_bits - 1, 0)
            _ok(
                bound + abs(layer.offsets[q]) + half < 2**63,
                f"{at}.offsets[{q}]",
                "worst-case accumulator exceeds 63-bit magnitude",
            )


# -- serialization --------------------------------------------------------


def graph_to_obj(graph: LutGraph) -> dict:
    return {
        "version": LUT_FORMAT,
        "dims": graph.dims,
        "input_quant": {
            "bits": graph.input_codec.base.bits,
            "a": graph.input_codec.base.lo,
            "b": graph.input_codec.base.hi,
            "scale": graph.input_codec.scale.tolist(),
            "bias": graph.input_codec.bias.tolist(),
        },
        "layers": [
            {
                "d_in": layer.d_in,
                "d_out": layer.d_out,
                "in_bits": layer.in_bits,
                "out_bits": layer.out_bits,
                "guard_bits": layer.guard_bits,
                "a": layer.lo,
                "b": layer.hi,
                "adder_fanin": layer.adder_fanin,
                "offsets": [int(o) for o in layer.offsets],
                "edges": [
                    {
                        "in": e.in_neuron,
                        "out": e.out_neuron,
                        "entry_bits": e.entry_bits,
                        "table": [int(v) for v in e.table],
                    }
                    for e in layer.edges
                ],
            }
            for layer in graph.layers
        ],
        "meta": graph.meta,
    }


def graph_to_json(graph: LutGraph) -> str:
    return json.dumps(graph_to_obj(graph), sort_keys=True, indent=2) + "\n"


def save_graph(graph: LutGraph, path: str | Path) -> None:
    Path(path).write_text(graph_to_json(graph))


def _field(obj, key: str, path: str, kind=None):
    if not isinstance(obj, dict):
        raise GraphError(f"{path}: expected an object")
    if key not in obj:
        raise GraphError(f"{path}.{key}: missing")
    v = obj[key]
    if kind is not None and not isinstance(v, kind):
        raise GraphError(f"{path}.{key}: expected {kind.__name__ if not isinstance(kind, tuple) else 'number'}")
    return v


def graph_from_obj(doc: dict) -> LutGraph:
    if _field(doc, "version", "$", str) != LUT_FORMAT:
        raise GraphError(f"$.version: expected {LUT_FORMAT!r}, got {doc['version']!r}")
    ic = _field(doc, "input_quant", "$", dict)
    num = (int, float)
    try:
        codec = InputQuantSpec(
            base=QuantSpec(
                bits=_field(ic, "bits", "$.input_quant", int),
                lo=float(_field(ic, "a", "$.input_quant", num)),
                hi=float(_field(ic, "b", "$.input_quant", num)),
            ),
            scale=np.asarray(_field(ic, "scale", "$.input_quant", list), dtype=np.float64),
            bias=np.asarray(_field(ic, "bias", "$.input_quant", list), dtype=np.float64),
        )
    except ValueError as e:
        raise GraphError(f"$.input_quant: {e}") from e
    layers_doc = _field(doc, "layers", "$", list)
    layers = []
    for l, ld in enumerate(layers_doc):
        at = f"$.layers[{l}]"
        edges = []
        for e, ed in enumerate(_field(ld, "edges", at, list)):
            ep = f"{at}.edges[{e}]"
            tbl = _field(ed, "table", ep, list)
            if not all(isinstance(v, int) for v in tbl):
                raise GraphError(f"{ep}.table: entries must be integers")
            edges.append(
                LutEdge(
                    in_neuron=_field(ed, "in", ep, int),
                    out_neuron=_field(ed, "out", ep, int),
                    entry_bits=_field(ed, "entry_bits", ep, int),
                    table=np.asarray(tbl, dtype=np.int64),
                )
            )
        offs = _field(ld, "offsets", at, list)
        if not all(isinstance(o, int) for o in offs):
            raise GraphError(f"{at}.offsets: entries must be integers")
        layers.append(
            LutLayer(
                d_in=_field(ld, "d_in", at, int),
                d_out=_field(ld, "d_out", at, int),
                in_bits=_field(ld, "in_bits", at, int),
                out_bits=_field(ld, "out_bits", at, int),
                guard_bits=_field(ld, "guard_bits", at, int),
                lo=float(_field(ld, "a", at, num)),
                hi=float(_field(ld, "b", at, num)),
                adder_fanin=_field(ld, "adder_fanin", at, int),
                offsets=offs,
                edges=edges,
            )
        )
    graph = LutGraph(input_codec=codec, layers=layers, meta=dict(doc.get("meta", {})))
    dims = _field(doc, "dims", "$", list)
    if dims != graph.dims:
        raise GraphError(f"$.dims: {dims} does not match layer shapes {graph.dims}")
    validate_graph(graph)
    return graph


def graph_from_json(text: str) -> LutGraph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise GraphError(f"not valid JSON: {e}") from e
    return graph_from_obj(doc)


def load_graph(path: str | Path) -> LutGraph:
    return graph_from_json(Path(path).read_text())
