"""Magnitude pruning of edge functions with a warmup threshold schedule.

An edge's saliency is the l2 norm of its spline component sampled over the
full input code grid of its layer, so the measure sees exactly the inputs
the quantized datapath can produce.  Pruning latches: once an edge is
masked it never returns.  After thresholding, a backward sweep removes
every edge feeding a hidden neuron that no longer drives anything.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kan import KanNetwork


@dataclass(frozen=True)
class PruneConfig:
    """Target threshold and the epoch window over which it ramps up."""

    threshold: float = 0.0
    warmup_start: int = 0
    warmup_end: int = 50

    def __post_init__(self) -> None:
        if self.threshold < 0:
            raise ValueError(f"threshold must be >= 0, got {self.threshold}")
        if self.threshold > 0 and not 0 <= self.warmup_start < self.warmup_end:
            raise ValueError(
                f"need 0 <= warmup_start < warmup_end, got [{self.warmup_start}, {self.warmup_end}]"
            )


def threshold_at(epoch: int, cfg: PruneConfig) -> float:
    """Effective threshold at an epoch.

    Zero before warmup_start; from there it rises exponentially, reaching
    5% of the target at warmup_start and the full target at warmup_end,
    where it stays.
    """
    if cfg.threshold == 0.0:
        return 0.0
    if epoch < cfg.warmup_start:
        return 0.0
    span = cfg.warmup_end - cfg.warmup_start
    e = (cfg.warmup_end - min(epoch, cfg.warmup_end)) / span
    return cfg.threshold * 20.0 ** (-e)


def edge_norms(net: KanNetwork, l: int) -> np.ndarray:
    """l2 norms of each edge's spline component over the layer's input codes."""
    _, _, _, bas, _ = net._const_tabs(l)
    f_tab = np.einsum("qpk,mk->qpm", net.layers[l].coeffs, bas)
    return np.sqrt((f_tab**2).sum(axis=2))


@dataclass
class PruneReport:
    """What one mask update did."""

    threshold: float
    newly_pruned: list[int]
    backward_pruned: list[int]
    active: list[int]

    @property
    def total_active(self) -> int:
        return sum(self.active)


def backward_prune(net: KanNetwork) -> list[int]:
    """Remove edges into hidden neurons whose outputs drive no active edge.

    Sweeps boundaries from output to input; one descending pass reaches a
    fixed point because masking layer l-1 only changes usage at boundaries
    below it.  Returns per-layer counts of edges removed.
    """
    removed = [0] * len(net.layers)
    changed = True
    while changed:
        changed = False
        for l in range(len(net.layers) - 1, 0, -1):
            used = net.layers[l].mask.any(axis=0)  # which inputs of layer l are consumed
            prev = net.layers[l - 1]
            dead = ~used & prev.mask.any(axis=1)
            if dead.any():
                removed[l - 1] += int(prev.mask[dead].sum())
                prev.mask[dead, :] = False
                changed = True
    return removed


def update_masks(net: KanNetwork, tau: float) -> PruneReport:
    """Prune active edges with norm <= tau, then backward-prune dead neurons."""
    newly = []
    for l, layer in enumerate(net.layers):
        norms = edge_norms(net, l)
        cut = layer.mask & (norms <= tau)
        newly.append(int(cut.sum()))
        layer.mask = layer.mask & ~cut
    backward = backward_prune(net)
    return PruneReport(
        threshold=tau,
        newly_pruned=newly,
        backward_pruned=backward,
        active=[layer.active_count() for layer in net.layers],
    )
