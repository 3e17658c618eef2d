"""Bit-exact reference simulator for LUT graphs.

Between input codes and output codes everything here is int64: table
gathers, sums, offset add, rounding shift, clamp.  This is the golden model
the generated VHDL testbench checks against, and the oracle for
training/extraction equivalence.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lutir import LutGraph, requantize_sum
from .train import predict


def sim_forward(graph: LutGraph, codes: np.ndarray) -> np.ndarray:
    """Run input codes through the graph; accepts (d,) or (batch, d)."""
    codes = np.asarray(codes, dtype=np.int64)
    squeeze = codes.ndim == 1
    if squeeze:
        codes = codes[None, :]
    if codes.shape[1] != graph.layers[0].d_in:
        raise ValueError(f"expected {graph.layers[0].d_in} input codes, got {codes.shape[1]}")
    for l, layer in enumerate(graph.layers):
        if np.any(codes < 0) or np.any(codes >= 1 << layer.in_bits):
            raise ValueError(f"layer {l} input code outside [0, {(1 << layer.in_bits) - 1}]")
        acc = np.zeros((codes.shape[0], layer.d_out), dtype=np.int64)
        for edge in layer.edges:
            acc[:, edge.out_neuron] += edge.table[codes[:, edge.in_neuron]]
        nxt = np.empty_like(acc)
        for q in range(layer.d_out):
            nxt[:, q] = requantize_sum(layer, q, acc[:, q])
        codes = nxt
    return codes[0] if squeeze else codes


@dataclass
class SimMetrics:
    n: int
    accuracy: float
    predictions: np.ndarray
    output_codes: np.ndarray


def sim_batch(graph: LutGraph, features: np.ndarray, labels: np.ndarray | None = None) -> SimMetrics:
    """Encode raw features, simulate, and score against labels if given."""
    in_codes = graph.input_codec.encode(features).astype(np.int64)
    out_codes = sim_forward(graph, in_codes)
    final = graph.layers[-1]
    logits = final.lo + out_codes * ((final.hi - final.lo) / ((1 << final.out_bits) - 1))
    preds = predict(logits)
    acc = float(np.mean(preds == labels)) if labels is not None and labels.size else float("nan")
    return SimMetrics(n=features.shape[0], accuracy=acc, predictions=preds, output_codes=out_codes)


def exhaustive_input_codes(graph: LutGraph) -> np.ndarray:
    """Every possible input code vector, one row each (careful: 2**total_bits rows)."""
    first = graph.layers[0]
    total = first.d_in * first.in_bits
    if total > 24:
        raise ValueError(f"exhaustive enumeration of {total} input bits is too large")
    r = np.arange(1 << total, dtype=np.int64)
    m = (1 << first.in_bits) - 1
    return np.stack([(r >> (p * first.in_bits)) & m for p in range(first.d_in)], axis=1)


# -- code vector files (kanele-vec-v1) ------------------------------------
#
# One vector per line, packed little-endian by neuron index (neuron p sits
# at bit positions [p*bits, (p+1)*bits)), written as lowercase hex padded
# to ceil(total_bits/4) digits.  Highest-numbered neuron lands in the most
# significant digits, matching the x_in/y_out port slicing of the RTL.


def pack_codes(row: np.ndarray, bits: int) -> int:
    v = 0
    for p, c in enumerate(row):
        v |= int(c) << (p * bits)
    return v


def unpack_codes(v: int, bits: int, count: int) -> np.ndarray:
    m = (1 << bits) - 1
    return np.array([(v >> (p * bits)) & m for p in range(count)], dtype=np.int64)


def vec_line(row: np.ndarray, bits: int) -> str:
    width = (len(row) * bits + 3) // 4
    return format(pack_codes(row, bits), f"0{width}x")


def write_vec_file(path: str | Path, codes: np.ndarray, bits: int) -> None:
    codes = np.atleast_2d(np.asarray(codes, dtype=np.int64))
    with open(path, "w") as fh:
        for row in codes:
            fh.write(vec_line(row, bits) + "\n")


def read_vec_file(path: str | Path, bits: int, count: int) -> np.ndarray:
    rows = []
    for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            v = int(line, 16)
        except ValueError as e:
            raise ValueError(f"{path}:{ln}: not a hex vector: {line!r}") from e
        rows.append(unpack_codes(v, bits, count))
    return np.array(rows, dtype=np.int64).reshape(-1, count)
