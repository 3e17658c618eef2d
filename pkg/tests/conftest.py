"""Shared builders and independent oracles for the test suite."""

from pathlib import Path

import numpy as np
import pytest

from kanele import init_network
from kanele.prune import update_masks

REPO = Path(__file__).resolve().parent.parent


def naive_bspline(knots, k, d, x, hi):
    """Textbook two-term recursion, written independently of the package's
    triangular evaluation.  Right-continuous; the last interval closes at hi."""
    if d == 0:
        if knots[k] <= x < knots[k + 1]:
            return 1.0
        return 1.0 if x == hi and abs(knots[k + 1] - hi) < 1e-12 and knots[k] < hi else 0.0
    out = 0.0
    den1 = knots[k + d] - knots[k]
    if den1 > 0:
        out += (x - knots[k]) / den1 * naive_bspline(knots, k, d - 1, x, hi)
    den2 = knots[k + d + 1] - knots[k + 1]
    if den2 > 0:
        out += (knots[k + d + 1] - x) / den2 * naive_bspline(knots, k + 1, d - 1, x, hi)
    return out


def identity_net():
    """1x1 single-layer net whose LUT is hand-computable.

    Basis G=1, S=1 on [0, 3]; 2-bit codes both sides with step 1; the lone
    edge is f(x) = x (hat coefficients [0, 3], no base term).  With two
    guard bits the entry table is [0, 4, 8, 12] and offset 0.
    """
    net = init_network([1, 1], [2, 2], grid_size=1, order=1, lo=0.0, hi=3.0,
                       seed=0, guard_bits=2, base_kind="none")
    net.layers[0].w_base[:] = 0.0
    net.layers[0].coeffs[0, 0] = [0.0, 3.0]
    net.layers[0].scale = 1.0
    return net


def random_net(rng, max_in=8, max_hidden=8, max_out=4, prune_frac=0.0):
    """Random small topology, optionally with random latched pruning applied."""
    dims = [
        int(rng.integers(1, max_in + 1)),
        int(rng.integers(1, max_hidden + 1)),
        int(rng.integers(1, max_out + 1)),
    ]
    bits = [int(rng.integers(2, 7)) for _ in range(3)]
    grid = int(rng.integers(2, 7))
    order = int(rng.integers(0, 4))
    guard = int(rng.choice([6, 8]))
    net = init_network(dims, bits, grid, order, -8.0, 8.0,
                       seed=int(rng.integers(0, 2**31)), guard_bits=guard)
    if prune_frac > 0:
        for layer in net.layers:
            drop = rng.random(layer.mask.shape) < prune_frac
            # keep at least one edge into each output node so the graph stays useful
            for q in range(layer.d_out):
                if drop[q].all():
                    drop[q, rng.integers(0, layer.d_in)] = False
            layer.mask &= ~drop
        update_masks(net, -1.0)  # threshold below any norm: only backward cleanup runs
    return net


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
