"""Uniform B-spline bases on a closed interval.

A basis is defined by a grid of `grid_size` equal cells on [lo, hi] and a
polynomial degree `order`.  The open uniform knot vector extends `order`
cells past each end, giving `grid_size + order` basis functions that form a
partition of unity on the interval.  Evaluation clamps its argument to
[lo, hi], is right-continuous at interior knots, and closes the last cell
at `hi`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SplineBasis:
    """Uniform B-spline basis of degree `order` on `grid_size` cells of [lo, hi]."""

    grid_size: int
    order: int
    lo: float
    hi: float
    knots: np.ndarray = field(repr=False)

    @property
    def n_basis(self) -> int:
        return self.grid_size + self.order

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / self.grid_size

    def eval_many(self, x: np.ndarray) -> np.ndarray:
        """Evaluate all basis functions at each point.

        Returns an array of shape (len(x), n_basis).  At most order + 1
        entries per row are nonzero.
        """
        x = np.asarray(x, dtype=np.float64)
        xc, span = self._spans(x)
        nz = self._nonzero(xc, span, self.order)
        out = np.zeros((x.shape[0], self.n_basis))
        first = span - self.order
        cols = first[:, None] + np.arange(self.order + 1)[None, :]
        out[np.arange(x.shape[0])[:, None], cols] = nz
        return out

    def eval_one(self, x: float) -> np.ndarray:
        return self.eval_many(np.array([x]))[0]

    def deriv_many(self, x: np.ndarray) -> np.ndarray:
        """First derivative of every basis function at each (clamped) point."""
        x = np.asarray(x, dtype=np.float64)
        m = x.shape[0]
        out = np.zeros((m, self.n_basis))
        s = self.order
        if s == 0:
            return out
        xc, span = self._spans(x)
        # Degree-reduction identity: the degree-s derivative is a signed,
        # scaled difference of two degree-(s-1) functions.
        low = self._nonzero(xc, span, s - 1)
        t = self.knots
        first = span - s
        rows = np.arange(m)
        for r in range(s + 1):
            k = first + r
            term = np.zeros(m)
            if r >= 1:
                term += low[:, r - 1] / (t[k + s] - t[k])
            if r <= s - 1:
                term -= low[:, r] / (t[k + s + 1] - t[k + 1])
            out[rows, k] = s * term
        return out

    def deriv_one(self, x: float) -> np.ndarray:
        return self.deriv_many(np.array([x]))[0]

    def _spans(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Clamp points to [lo, hi] and find their knot span indices."""
        xc = np.clip(x, self.lo, self.hi)
        cell = np.floor((xc - self.lo) / self.step).astype(np.int64)
        # Points at hi fall in the last cell: the final interval is closed.
        cell = np.clip(cell, 0, self.grid_size - 1)
        return xc, cell + self.order

    def _nonzero(self, xc: np.ndarray, span: np.ndarray, deg: int) -> np.ndarray:
        """de Boor triangle: the deg+1 nonzero degree-`deg` functions per point."""
        m = xc.shape[0]
        vals = np.zeros((m, deg + 1))
        vals[:, 0] = 1.0
        t = self.knots
        left = np.zeros((m, deg + 1))
        right = np.zeros((m, deg + 1))
        for j in range(1, deg + 1):
            left[:, j] = xc - t[span + 1 - j]
            right[:, j] = t[span + j] - xc
            saved = np.zeros(m)
            for r in range(j):
                tmp = vals[:, r] / (right[:, r + 1] + left[:, j - r])
                vals[:, r] = saved + right[:, r + 1] * tmp
                saved = left[:, j - r] * tmp
            vals[:, j] = saved
        return vals


def make_basis(grid_size: int, order: int, lo: float, hi: float) -> SplineBasis:
    """Build the uniform open knot vector and wrap it in a SplineBasis.

    Knots are t_i = lo + (i - order) * h for i in [0, grid_size + 2*order],
    h = (hi - lo) / grid_size.
    """
    if grid_size < 1:
        raise ValueError(f"grid_size must be >= 1, got {grid_size}")
    if order < 0:
        raise ValueError(f"order must be >= 0, got {order}")
    if not (np.isfinite(lo) and np.isfinite(hi)) or not lo < hi:
        raise ValueError(f"domain must satisfy lo < hi, got [{lo}, {hi}]")
    h = (hi - lo) / grid_size
    idx = np.arange(grid_size + 2 * order + 1)
    knots = lo + (idx - order) * h
    return SplineBasis(grid_size=grid_size, order=order, lo=float(lo), hi=float(hi), knots=knots)
