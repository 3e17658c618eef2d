"""Quantization-aware training loop with AdamW and scheduled pruning.

The forward pass runs the real quantized datapath (table lookup, integer
sum, requantize); the backward pass is straight-through.  Pruned edges get
no updates of any kind, so a mask, once set, freezes its parameters.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kan import KanNetwork, LayerGrads
from .prune import PruneConfig, threshold_at, update_masks


class TrainError(RuntimeError):
    """Raised when training cannot continue (diverged loss and the like)."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 3e-3
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 1
    loss: str = "cross_entropy"
    prune: PruneConfig = field(default_factory=PruneConfig)

    def __post_init__(self) -> None:
        if self.loss not in ("cross_entropy", "mse"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean CE over a batch; returns (loss, dloss/dlogits)."""
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    p = ez / ez.sum(axis=1, keepdims=True)
    n = logits.shape[0]
    eps = 1e-12
    loss = -float(np.mean(np.log(p[np.arange(n), labels] + eps)))
    dlog = p.copy()
    dlog[np.arange(n), labels] -= 1.0
    return loss, dlog / n


def logistic_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Binary CE on a single-logit output; labels in {0, 1}."""
    z = logits.reshape(-1)
    y = labels.astype(np.float64)
    # log(1 + exp(-|z|)) + max(z, 0) - z*y, the overflow-safe form
    loss = float(np.mean(np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0) - z * y))
    p = 1.0 / (1.0 + np.exp(-z))
    return loss, ((p - y) / z.shape[0]).reshape(logits.shape)


def mse_loss(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    d = logits - targets.reshape(logits.shape)
    loss = float(np.mean(d**2))
    return loss, 2.0 * d / d.size


def loss_and_grad(kind: str, logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    if kind == "mse":
        return mse_loss(logits, targets)
    if logits.shape[1] == 1:
        return logistic_cross_entropy(logits, targets)
    return softmax_cross_entropy(logits, targets)


def predict(logits: np.ndarray) -> np.ndarray:
    """Class decisions: argmax, or sign threshold for a single logit."""
    if logits.shape[1] == 1:
        return (logits.reshape(-1) > 0).astype(np.int64)
    return logits.argmax(axis=1)


def accuracy(net: KanNetwork, x: np.ndarray, y: np.ndarray) -> float:
    logits, _, _ = net.forward(x)
    return float(np.mean(predict(logits) == y))


class AdamW:
    """Adam with decoupled weight decay.

    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta.
    Decay applies to base weights and spline coefficients, not to the layer
    scale.  Updates are masked so pruned edges stay exactly frozen.
    """

    def __init__(self, net: KanNetwork, cfg: TrainConfig) -> None:
        self.cfg = cfg
        self.t = 0
        self.m: list[dict] = []
        self.v: list[dict] = []
        for layer in net.layers:
            self.m.append({"w": np.zeros_like(layer.w_base), "c": np.zeros_like(layer.coeffs), "s": 0.0})
            self.v.append({"w": np.zeros_like(layer.w_base), "c": np.zeros_like(layer.coeffs), "s": 0.0})

    def step(self, net: KanNetwork, grads: list[LayerGrads]) -> None:
        cfg = self.cfg
        self.t += 1
        bc1 = 1.0 - cfg.beta1**self.t
        bc2 = 1.0 - cfg.beta2**self.t

        def adam_delta(m, v):
            return cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)

        for layer, g, m, v in zip(net.layers, grads, self.m, self.v):
            mask2 = layer.mask
            mask3 = layer.mask[:, :, None]
            m["w"] = cfg.beta1 * m["w"] + (1 - cfg.beta1) * g.w_base
            v["w"] = cfg.beta2 * v["w"] + (1 - cfg.beta2) * g.w_base**2
            step_w = adam_delta(m["w"], v["w"]) + cfg.learning_rate * cfg.weight_decay * layer.w_base
            layer.w_base = layer.w_base - np.where(mask2, step_w, 0.0)

            m["c"] = cfg.beta1 * m["c"] + (1 - cfg.beta1) * g.coeffs
            v["c"] = cfg.beta2 * v["c"] + (1 - cfg.beta2) * g.coeffs**2
            step_c = adam_delta(m["c"], v["c"]) + cfg.learning_rate * cfg.weight_decay * layer.coeffs
            layer.coeffs = layer.coeffs - np.where(mask3, step_c, 0.0)

            m["s"] = cfg.beta1 * m["s"] + (1 - cfg.beta1) * g.scale
            v["s"] = cfg.beta2 * v["s"] + (1 - cfg.beta2) * g.scale**2
            layer.scale = layer.scale - float(adam_delta(m["s"], v["s"]))


@dataclass
class EpochStats:
    epoch: int
    loss: float
    train_acc: float
    val_acc: float
    tau: float
    active_edges: int


def train(
    net: KanNetwork,
    x: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig,
    val_x: np.ndarray | None = None,
    val_y: np.ndarray | None = None,
) -> list[EpochStats]:
    """Run the full loop; mutates `net` in place and returns per-epoch stats."""
    rng = np.random.default_rng(cfg.seed)
    opt = AdamW(net, cfg)
    n = x.shape[0]
    history: list[EpochStats] = []
    classify = cfg.loss != "mse"
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        running = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            logits, _, caches = net.forward(x[idx], want_cache=True)
            loss, dlog = loss_and_grad(cfg.loss, logits, y[idx])
            if not np.isfinite(loss):
                raise TrainError(
                    f"loss became non-finite at epoch {epoch}; lower the learning rate "
                    f"or widen the quantizer range"
                )
            grads = net.backward(caches, dlog)
            opt.step(net, grads)
            running += loss * len(idx)
        tau = threshold_at(epoch, cfg.prune)
        if cfg.prune.threshold > 0:
            update_masks(net, tau)
        train_acc = accuracy(net, x, y) if classify else float("nan")
        val_acc = (
            accuracy(net, val_x, val_y)
            if classify and val_x is not None and val_y is not None
            else float("nan")
        )
        history.append(
            EpochStats(
                epoch=epoch,
                loss=running / n,
                train_acc=train_acc,
                val_acc=val_acc,
                tau=tau,
                active_edges=sum(layer.active_count() for layer in net.layers),
            )
        )
    net.meta["epochs_trained"] = int(net.meta.get("epochs_trained", 0)) + cfg.epochs
    if history:
        net.meta["final_train_acc"] = history[-1].train_acc
        if np.isfinite(history[-1].val_acc):
            net.meta["final_val_acc"] = history[-1].val_acc
    return history


def write_history(history: list[EpochStats], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss", "train_acc", "val_acc", "tau", "active_edges"])
        for row in history:
            w.writerow(
                [row.epoch, repr(row.loss), repr(row.train_acc), repr(row.val_acc), repr(row.tau), row.active_edges]
            )
