"""Kolmogorov-Arnold network with quantized edge functions.

Each edge carries w_base * act(x) + sum_k c_k * B_k(x), scaled by a learnable
per-layer factor; nodes sum their incoming edges.  The quantized forward pass
is table-driven: for every layer the full per-edge value table over all input
codes is built, snapped to fixed point with `entry_fixed_point`, gathered at
the input codes, integer-summed, and requantized with `requant_code`.  Graph
extraction reuses the identical table construction, so the compiled LUT
netlist is bit-exact against training by design.

Gradients follow the straight-through convention: every encode/decode round
trip and every entry snap backpropagates as the identity, so the backward
pass is the gradient of the continuous surrogate evaluated at the quantized
grid points.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .quant import InputQuantSpec, QuantSpec, requant_code
from .spline import SplineBasis, make_basis


def _silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


def _dsilu(x: np.ndarray) -> np.ndarray:
    s = 1.0 / (1.0 + np.exp(-x))
    return s * (1.0 + x * (1.0 - s))


# name -> (f, df); the base term of every edge function
ACTIVATIONS = {
    "silu": (_silu, _dsilu),
    "linear": (lambda x: x, lambda x: np.ones_like(x)),
    "none": (lambda x: np.zeros_like(x), lambda x: np.zeros_like(x)),
}


class CheckpointError(ValueError):
    """Raised when a checkpoint document is malformed."""


@dataclass
class KanLayer:
    """One KAN layer: d_out nodes, each summing d_in edge functions."""

    w_base: np.ndarray  # (d_out, d_in)
    coeffs: np.ndarray  # (d_out, d_in, n_basis)
    mask: np.ndarray    # (d_out, d_in) bool, False = pruned
    scale: float        # learnable output scale, applied per edge
    out_quant: QuantSpec

    @property
    def d_in(self) -> int:
        return self.w_base.shape[1]

    @property
    def d_out(self) -> int:
        return self.w_base.shape[0]

    def active_count(self) -> int:
        return int(self.mask.sum())


@dataclass
class LayerCache:
    """Per-layer forward state needed by the backward pass."""

    phi: np.ndarray
    dphi: np.ndarray
    bas: np.ndarray
    dbas: np.ndarray
    raw: np.ndarray  # (B, d_out, d_in), pre-scale edge values


@dataclass
class LayerGrads:
    w_base: np.ndarray
    coeffs: np.ndarray
    scale: float


def _gather_edges(tab: np.ndarray, codes: np.ndarray) -> np.ndarray:
    """tab (d_out, d_in, M), codes (B, d_in) -> (B, d_out, d_in)."""
    q = np.arange(tab.shape[0])[None, :, None]
    p = np.arange(tab.shape[1])[None, None, :]
    return tab[q, p, codes[:, None, :]]


class KanNetwork:
    """A stack of KanLayers behind a quantized input codec."""

    def __init__(
        self,
        layers: list[KanLayer],
        input_quant: InputQuantSpec,
        basis: SplineBasis,
        base_kind: str = "silu",
        seed: int = 0,
        meta: dict | None = None,
    ) -> None:
        if base_kind not in ACTIVATIONS:
            raise ValueError(f"unknown base activation {base_kind!r}")
        self.layers = layers
        self.input_quant = input_quant
        self.basis = basis
        self.base_kind = base_kind
        self.seed = seed
        self.meta = dict(meta or {})
        self._const_cache: dict[int, tuple[np.ndarray, ...]] = {}

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].d_in] + [l.d_out for l in self.layers]

    @property
    def bits(self) -> list[int]:
        return [self.input_quant.base.bits] + [l.out_quant.bits for l in self.layers]

    def layer_in_spec(self, l: int) -> QuantSpec:
        """Quantizer governing the codes entering layer l."""
        return self.input_quant.base if l == 0 else self.layers[l - 1].out_quant

    def set_input_stats(self, mean: np.ndarray, std: np.ndarray) -> None:
        """Freeze a standardization fit into the input codec."""
        std = np.where(np.asarray(std) < 1e-12, 1.0, np.asarray(std, dtype=np.float64))
        mean = np.asarray(mean, dtype=np.float64)
        self.input_quant = InputQuantSpec(
            base=self.input_quant.base, scale=1.0 / std, bias=-mean / std
        )
        self._const_cache.clear()

    # -- table construction ----------------------------------------------

    def _const_tabs(self, l: int) -> tuple[np.ndarray, ...]:
        """Code-grid tables that depend only on the (immutable) quantizer specs."""
        if l not in self._const_cache:
            spec = self.layer_in_spec(l)
            xs = spec.decode(np.arange(spec.n_codes))
            f, df = ACTIVATIONS[self.base_kind]
            self._const_cache[l] = (
                xs,
                f(xs),
                df(xs),
                self.basis.eval_many(xs),
                self.basis.deriv_many(xs),
            )
        return self._const_cache[l]

    def layer_value_table(self, l: int) -> np.ndarray:
        """Pre-scale edge values over the full input code grid, (d_out, d_in, M)."""
        _, phi, _, bas, _ = self._const_tabs(l)
        layer = self.layers[l]
        return layer.w_base[:, :, None] * phi[None, None, :] + np.einsum(
            "qpk,mk->qpm", layer.coeffs, bas
        )

    def layer_int_table(self, l: int, raw: np.ndarray | None = None) -> np.ndarray:
        """Fixed-point entry table with pruned edges zeroed, (d_out, d_in, M) int64.

        This is the one table definition shared by the training forward and
        graph extraction.
        """
        layer = self.layers[l]
        if raw is None:
            raw = self.layer_value_table(l)
        ints = layer.out_quant.entry_fixed_point(layer.scale * raw)
        ints = ints * layer.mask[:, :, None]
        self._check_headroom(l, ints)
        return ints

    def _check_headroom(self, l: int, ints: np.ndarray) -> None:
        layer = self.layers[l]
        spec = layer.out_quant
        worst = int(np.abs(ints).max(axis=2).sum(axis=1).max()) if ints.size else 0
        half = 1 << max(spec.guard_bits - 1, 0)
        if worst + abs(spec.offset_int()) + half >= 2**63:
            raise OverflowError(f"layer {l} accumulator exceeds 63-bit magnitude")

    # -- forward / backward ----------------------------------------------

    def encode_inputs(self, x: np.ndarray) -> np.ndarray:
        return self.input_quant.encode(x).astype(np.int64)

    def forward_codes(
        self, codes: np.ndarray, want_cache: bool = False
    ) -> tuple[np.ndarray, list[LayerCache]]:
        """Quantized forward pass from input codes to output codes."""
        codes = np.asarray(codes, dtype=np.int64)
        squeeze = codes.ndim == 1
        if squeeze:
            codes = codes[None, :]
        caches: list[LayerCache] = []
        for l, layer in enumerate(self.layers):
            _, phi, dphi, bas, dbas = self._const_tabs(l)
            raw_tab = self.layer_value_table(l)
            int_tab = self.layer_int_table(l, raw_tab)
            acc = _gather_edges(int_tab, codes).sum(axis=2)
            if want_cache:
                caches.append(
                    LayerCache(
                        phi=phi[codes],
                        dphi=dphi[codes],
                        bas=bas[codes],
                        dbas=dbas[codes],
                        raw=_gather_edges(raw_tab, codes),
                    )
                )
            codes = requant_code(
                acc, layer.out_quant.offset_int(), layer.out_quant.guard_bits, layer.out_quant.bits
            )
        return (codes[0] if squeeze else codes), caches

    def forward(self, x: np.ndarray, want_cache: bool = False):
        """Raw features -> (logits, final codes, caches) through the quantized path."""
        codes, caches = self.forward_codes(self.encode_inputs(x), want_cache)
        logits = self.layers[-1].out_quant.decode(codes)
        return logits, codes, caches

    def forward_soft(self, x: np.ndarray, want_cache: bool = False):
        """Continuous surrogate: all quantizers replaced by the identity.

        This is the exact function whose gradient the straight-through
        backward computes, so finite differences on it match `backward`.
        """
        f, df = ACTIVATIONS[self.base_kind]
        h = self.input_quant.affine(x)
        caches: list[LayerCache] = []
        for layer in self.layers:
            b, d_in = h.shape
            phi, dphi = f(h), df(h)
            bas = self.basis.eval_many(h.reshape(-1)).reshape(b, d_in, -1)
            dbas = self.basis.deriv_many(h.reshape(-1)).reshape(b, d_in, -1)
            raw = layer.w_base[None, :, :] * phi[:, None, :] + np.einsum(
                "bpk,qpk->bqp", bas, layer.coeffs
            )
            if want_cache:
                caches.append(LayerCache(phi=phi, dphi=dphi, bas=bas, dbas=dbas, raw=raw))
            h = layer.scale * (raw * layer.mask[None, :, :]).sum(axis=2)
        return h, caches

    def backward(self, caches: list[LayerCache], dlogits: np.ndarray) -> list[LayerGrads]:
        """Straight-through gradients for every layer, output to input."""
        g = np.asarray(dlogits, dtype=np.float64)
        grads: list[LayerGrads | None] = [None] * len(self.layers)
        for l in range(len(self.layers) - 1, -1, -1):
            layer, c = self.layers[l], caches[l]
            m = layer.mask.astype(np.float64)
            gw = layer.scale * np.einsum("bq,bp->qp", g, c.phi) * m
            gc = layer.scale * np.einsum("bq,bpk->qpk", g, c.bas) * m[:, :, None]
            gs = float(np.einsum("bq,bqp,qp->", g, c.raw, m))
            gx = layer.scale * (
                (g @ (layer.w_base * m)) * c.dphi
                + np.einsum("bq,qpk,bpk->bp", g, layer.coeffs * m[:, :, None], c.dbas)
            )
            grads[l] = LayerGrads(w_base=gw, coeffs=gc, scale=gs)
            g = gx
        return grads  # type: ignore[return-value]

    def edge_value(self, l: int, q: int, p: int, x: np.ndarray) -> np.ndarray:
        """Float evaluation of one edge function (inspection helper)."""
        layer = self.layers[l]
        f, _ = ACTIVATIONS[self.base_kind]
        bas = self.basis.eval_many(np.asarray(x, dtype=np.float64))
        return layer.scale * (layer.w_base[q, p] * f(np.asarray(x)) + bas @ layer.coeffs[q, p])

    def invalidate_tables(self) -> None:
        """Drop cached code-grid tables (call after swapping quantizer specs)."""
        self._const_cache.clear()


def init_network(
    dims: list[int],
    bits: list[int],
    grid_size: int,
    order: int,
    lo: float,
    hi: float,
    seed: int = 0,
    guard_bits: int = 8,
    base_kind: str = "silu",
) -> KanNetwork:
    """Random-initialize a network; `bits[0]` is the input code width, `bits[l+1]`
    the output width of layer l."""
    if len(dims) < 2:
        raise ValueError("dims needs at least an input and an output width")
    if len(bits) != len(dims):
        raise ValueError(f"need one bit width per boundary: len(bits) {len(bits)} != len(dims) {len(dims)}")
    if any(d < 1 for d in dims):
        raise ValueError(f"all dims must be >= 1, got {dims}")
    basis = make_basis(grid_size, order, lo, hi)
    rng = np.random.default_rng(seed)
    layers = []
    for l in range(len(dims) - 1):
        d_in, d_out = dims[l], dims[l + 1]
        w = rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(d_out, d_in))
        c = rng.normal(0.0, 0.1 / np.sqrt(basis.n_basis), size=(d_out, d_in, basis.n_basis))
        layers.append(
            KanLayer(
                w_base=w,
                coeffs=c,
                mask=np.ones((d_out, d_in), dtype=bool),
                scale=1.0,
                out_quant=QuantSpec(bits[l + 1], lo, hi, guard_bits),
            )
        )
    codec = InputQuantSpec(
        base=QuantSpec(bits[0], lo, hi, guard_bits),
        scale=np.ones(dims[0]),
        bias=np.zeros(dims[0]),
    )
    return KanNetwork(layers, codec, basis, base_kind=base_kind, seed=seed)


# -- checkpoint serialization (kanele-ckpt-v1) ----------------------------

CKPT_FORMAT = "kanele-ckpt-v1"


def checkpoint_obj(net: KanNetwork) -> dict:
    return {
        "version": CKPT_FORMAT,
        "model": {
            "dims": net.dims,
            "bits": net.bits,
            "grid_size": net.basis.grid_size,
            "order": net.basis.order,
            "lo": net.basis.lo,
            "hi": net.basis.hi,
            "guard_bits": net.input_quant.base.guard_bits,
            "base_kind": net.base_kind,
            "seed": net.seed,
        },
        "input_quant": {
            "scale": net.input_quant.scale.tolist(),
            "bias": net.input_quant.bias.tolist(),
        },
        "layers": [
            {
                "w_base": layer.w_base.tolist(),
                "coeffs": layer.coeffs.tolist(),
                "mask": layer.mask.astype(int).tolist(),
                "scale": layer.scale,
            }
            for layer in net.layers
        ],
        "meta": net.meta,
    }


def checkpoint_json(net: KanNetwork) -> str:
    return json.dumps(checkpoint_obj(net), sort_keys=True, indent=2) + "\n"


def save_checkpoint(net: KanNetwork, path: str | Path) -> None:
    Path(path).write_text(checkpoint_json(net))


def checkpoint_hash(net: KanNetwork) -> str:
    return hashlib.sha256(checkpoint_json(net).encode()).hexdigest()


def _need(obj: dict, key: str, where: str):
    if not isinstance(obj, dict) or key not in obj:
        raise CheckpointError(f"{where}: missing key {key!r}")
    return obj[key]


def load_checkpoint(path: str | Path) -> KanNetwork:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise CheckpointError(f"not valid JSON: {e}") from e
    if _need(doc, "version", "$") != CKPT_FORMAT:
        raise CheckpointError(f"$.version: expected {CKPT_FORMAT!r}, got {doc.get('version')!r}")
    m = _need(doc, "model", "$")
    dims = _need(m, "dims", "$.model")
    bits = _need(m, "bits", "$.model")
    net = init_network(
        dims,
        bits,
        _need(m, "grid_size", "$.model"),
        _need(m, "order", "$.model"),
        _need(m, "lo", "$.model"),
        _need(m, "hi", "$.model"),
        seed=m.get("seed", 0),
        guard_bits=_need(m, "guard_bits", "$.model"),
        base_kind=_need(m, "base_kind", "$.model"),
    )
    iq = _need(doc, "input_quant", "$")
    net.input_quant = InputQuantSpec(
        base=net.input_quant.base,
        scale=np.asarray(_need(iq, "scale", "$.input_quant"), dtype=np.float64),
        bias=np.asarray(_need(iq, "bias", "$.input_quant"), dtype=np.float64),
    )
    layers_doc = _need(doc, "layers", "$")
    if len(layers_doc) != len(net.layers):
        raise CheckpointError(f"$.layers: expected {len(net.layers)} entries, got {len(layers_doc)}")
    for l, (layer, ld) in enumerate(zip(net.layers, layers_doc)):
        where = f"$.layers[{l}]"
        for name in ("w_base", "coeffs", "mask"):
            arr = np.asarray(_need(ld, name, where), dtype=np.float64)
            want = getattr(layer, name).shape
            if arr.shape != want:
                raise CheckpointError(f"{where}.{name}: shape {arr.shape} != {want}")
        layer.w_base = np.asarray(ld["w_base"], dtype=np.float64)
        layer.coeffs = np.asarray(ld["coeffs"], dtype=np.float64)
        layer.mask = np.asarray(ld["mask"]).astype(bool)
        layer.scale = float(_need(ld, "scale", where))
    net.meta = dict(doc.get("meta", {}))
    net.invalidate_tables()
    return net
