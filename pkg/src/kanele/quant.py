"""Affine quantizers and the integer rounding rules shared by all backends.

Every rounding in the toolchain is round-half-away-from-zero, and the
sum-to-code requantization (`requant_code`) has exactly one definition here.
The network forward pass, the graph simulator, and the generated VHDL all
implement this same arithmetic, which is what makes them bit-exact against
each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def round_half_away(x: np.ndarray | float) -> np.ndarray | int:
    """Round to nearest integer, ties away from zero (0.5 -> 1, -0.5 -> -1)."""
    r = np.sign(x) * np.floor(np.abs(x) + 0.5)
    if np.isscalar(x):
        return int(r)
    return r.astype(np.int64)


def shift_round_half_away(v: np.ndarray | int, f: int) -> np.ndarray | int:
    """Integer right shift by f bits with round-half-away-from-zero.

    Matches round_half_away(v / 2**f) without leaving integer arithmetic;
    this is the form the generated hardware implements.
    """
    if f < 0:
        raise ValueError(f"shift amount must be >= 0, got {f}")
    if f == 0:
        return v
    half = 1 << (f - 1)
    if np.isscalar(v):
        m = (abs(int(v)) + half) >> f
        return m if v >= 0 else -m
    v = np.asarray(v, dtype=np.int64)
    m = (np.abs(v) + half) >> f
    return np.where(v >= 0, m, -m)


def requant_code(acc: np.ndarray | int, offset: int, guard_bits: int, out_bits: int) -> np.ndarray | int:
    """Collapse an integer accumulator into an output code.

    The accumulator holds a sum of fixed-point table entries (units of
    step/2**guard_bits); adding `offset` rebases it to the bottom of the
    output range, the rounding shift drops the guard bits, and the result is
    clamped to the code range [0, 2**out_bits - 1].
    """
    t = shift_round_half_away(acc + offset, guard_bits)
    lim = (1 << out_bits) - 1
    if np.isscalar(t):
        return min(max(int(t), 0), lim)
    return np.clip(t, 0, lim)


@dataclass(frozen=True)
class QuantSpec:
    """Uniform affine quantizer: n-bit codes spanning [lo, hi].

    Code 0 decodes to lo, code 2**bits - 1 to hi, with step
    (hi - lo) / (2**bits - 1).
    """

    bits: int
    lo: float
    hi: float
    guard_bits: int = 8

    def __post_init__(self) -> None:
        if not 1 <= self.bits <= 16:
            raise ValueError(f"bits must be in [1, 16], got {self.bits}")
        if not self.lo < self.hi:
            raise ValueError(f"range must satisfy lo < hi, got [{self.lo}, {self.hi}]")
        if self.guard_bits < 0:
            raise ValueError(f"guard_bits must be >= 0, got {self.guard_bits}")

    @property
    def n_codes(self) -> int:
        return 1 << self.bits

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.n_codes - 1)

    def encode(self, x: np.ndarray | float) -> np.ndarray | int:
        """Clamp to [lo, hi] and map to the nearest code."""
        xc = np.clip(x, self.lo, self.hi)
        c = round_half_away((xc - self.lo) / self.step)
        return np.clip(c, 0, self.n_codes - 1) if not np.isscalar(c) else min(max(c, 0), self.n_codes - 1)

    def decode(self, code: np.ndarray | int) -> np.ndarray | float:
        """Map codes back to real values; rejects out-of-range codes."""
        c = np.asarray(code)
        if np.any(c < 0) or np.any(c >= self.n_codes):
            raise ValueError(f"code out of range [0, {self.n_codes - 1}]")
        out = self.lo + c * self.step
        return float(out) if np.isscalar(code) else out

    def fake_quant(self, x: np.ndarray | float) -> np.ndarray | float:
        """decode(encode(x)): the value the quantized datapath sees.

        Under straight-through training the gradient of this map is taken
        as 1 everywhere, including the clamped regions.
        """
        return self.decode(self.encode(x))

    @property
    def entry_scale(self) -> float:
        """Fixed-point scale for table entries: 2**guard_bits / step."""
        return (1 << self.guard_bits) / self.step

    def entry_fixed_point(self, y: np.ndarray | float) -> np.ndarray | int:
        """Snap a real edge value to an integer in units of step/2**guard_bits.

        Rejects magnitudes that do not fit in a 63-bit signed integer; such
        a value means the quantizer range or guard width is misconfigured.
        """
        scaled = np.asarray(y, dtype=np.float64) * self.entry_scale
        if np.any(~np.isfinite(scaled)) or np.any(np.abs(scaled) >= 2.0**63):
            raise OverflowError("fixed-point entry exceeds 63-bit magnitude")
        v = round_half_away(scaled)
        if np.isscalar(y):
            return int(v)
        return v

    def offset_int(self) -> int:
        """Accumulator rebase constant: round_half_away(-lo * 2**guard_bits / step)."""
        return int(round_half_away(-self.lo * (1 << self.guard_bits) / self.step))


def fake_quant_ste(spec: QuantSpec, x: np.ndarray | float) -> tuple[np.ndarray | float, np.ndarray | float]:
    """Straight-through fake quantization: (quantized value, gradient).

    The declared gradient is identically 1; the backward pass treats the
    whole encode/decode round trip as the identity map.
    """
    val = spec.fake_quant(x)
    grad = 1.0 if np.isscalar(x) else np.ones_like(np.asarray(x, dtype=np.float64))
    return val, grad


@dataclass(frozen=True)
class InputQuantSpec:
    """Input feature codec: per-feature affine map followed by a shared quantizer.

    Raw feature p is first mapped to scale[p] * x + bias[p] (typically a
    frozen standardization fit on training data), then encoded by `base`.
    """

    base: QuantSpec
    scale: np.ndarray = field(repr=False)
    bias: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        s = np.asarray(self.scale, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if s.ndim != 1 or b.shape != s.shape:
            raise ValueError("scale and bias must be 1-D arrays of equal length")
        if np.any(s <= 0) or np.any(~np.isfinite(s)) or np.any(~np.isfinite(b)):
            raise ValueError("scale entries must be finite and > 0, bias finite")
        object.__setattr__(self, "scale", s)
        object.__setattr__(self, "bias", b)

    @property
    def n_features(self) -> int:
        return self.scale.shape[0]

    def affine(self, x: np.ndarray) -> np.ndarray:
        """Per-feature scale/shift of raw features (last axis = features)."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {x.shape[-1]}")
        return self.scale * x + self.bias

    def encode(self, x: np.ndarray) -> np.ndarray:
        return self.base.encode(self.affine(x))

    def decode(self, code: np.ndarray) -> np.ndarray:
        """Decode to the affine-transformed domain (what the splines see)."""
        return self.base.decode(code)
