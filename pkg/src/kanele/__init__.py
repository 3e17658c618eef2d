"""Quantized Kolmogorov-Arnold networks compiled to lookup-table netlists.

The pipeline: train a KAN whose edges are base-activation + B-spline
functions under quantization-aware training, prune weak edges, extract an
integer LUT graph, simulate it bit-exactly, and emit pipelined VHDL.
"""

__version__ = "0.1.0"

from .spline import SplineBasis, make_basis
from .quant import QuantSpec, InputQuantSpec, round_half_away, requant_code
from .kan import KanLayer, KanNetwork, init_network, save_checkpoint, load_checkpoint
from .lutir import LutGraph, LutLayer, LutEdge, extract, graph_to_json, graph_from_json
from .sim import sim_forward

__all__ = [
    "SplineBasis",
    "make_basis",
    "QuantSpec",
    "InputQuantSpec",
    "round_half_away",
    "requant_code",
    "KanLayer",
    "KanNetwork",
    "init_network",
    "save_checkpoint",
    "load_checkpoint",
    "LutGraph",
    "LutLayer",
    "LutEdge",
    "extract",
    "graph_to_json",
    "graph_from_json",
    "sim_forward",
]
