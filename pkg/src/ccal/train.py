"""Minibatch training of a DualNet under one of the three heads.

Heads:
  * ``tno``          - maximize the trace norm of the tower outputs (DCCA)
  * ``learned-rank`` - ranking loss directly on the tower outputs
  * ``ccal-rank``    - ranking loss on the outputs of a CCA layer

Learning-rate schedule: after ``patience`` epochs without validation
improvement the rate is divided by ``lr_divisor`` and the patience drops to
``patience_after``; after ``reductions`` such cuts the next stall ends training.
"""
import logging
from dataclasses import asdict, dataclass, field
from typing import List

import numpy as np

from . import cca, losses, net, retrieval
from .errors import ContractError, DegenerateSpectrumError
from .layer import CCALayer

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 100
    max_epochs: int = 100
    patience: int = 50
    patience_after: int = 10
    lr_divisor: float = 10.0
    reductions: int = 3
    margin: float = 0.5
    symmetric: bool = False
    reg: float = cca.DEFAULT_REG
    weight_decay: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0 or self.batch_size < 2 or self.max_epochs < 1 or self.patience < 1 \
                or self.patience_after < 1 or self.lr_divisor <= 0 or self.reductions < 0 \
                or self.margin <= 0 or self.reg < 0 or self.weight_decay < 0:
            raise ContractError(f"invalid training configuration: {self}")


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    val_mrr: float
    lr: float
    events: List[str] = field(default_factory=list)

    def line(self):
        ev = ";".join(self.events) if self.events else "-"
        return f"{self.epoch} {self.loss:.6f} {self.val_mrr:.4f} {self.lr:.3g} {ev}"


@dataclass
class TrainLog:
    epochs: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_mrr: float = float("-inf")
    reductions_done: int = 0
    stop_reason: str = ""

    def lines(self):
        return [r.line() for r in self.epochs]


def _head_step(model, layer, X, Y, cfg, events, batch_no):
    """Loss and tower-output adjoints for one batch; ``None`` if the batch is skipped."""
    loss_cfg = losses.LossConfig(cfg.margin, cfg.symmetric)
    nq = X.shape[0] * loss_cfg.queries_per_row

    if model.head == "learned-rank":
        value = losses.ranking_loss(X, Y, loss_cfg)
        gx, gy = losses.ranking_loss_adjoint(X, Y, loss_cfg)
        return value / nq, gx / nq, gy / nq

    r = cfg.reg
    for attempt in range(2):
        try:
            if model.head == "tno":
                return losses.tno_loss(X, Y, r)
            Xs, Ys, tape = layer.forward_train(X, Y, r)
            value = losses.ranking_loss(Xs, Ys, loss_cfg)
            ax, ay = losses.ranking_loss_adjoint(Xs, Ys, loss_cfg)
            gx, gy = layer.backward(tape, ax / nq, ay / nq)
            return value / nq, gx, gy
        except DegenerateSpectrumError as exc:
            if attempt == 0:
                events.append(f"retry(batch={batch_no},r={r * 10:g})")
                log.info("degenerate spectrum (%s); retrying with r=%g", exc, r * 10)
                r *= 10
            else:
                events.append(f"skip(batch={batch_no})")
                log.warning("degenerate spectrum after retry (%s); skipping batch", exc)
    return None


def _fit_cca_state(model, data, cfg):
    x, y = model.towers(data.X, data.Y)
    return cca.cca_fit(x, y, cfg.reg, model.k)


def validation_mrr(model, train_data, val_data, cfg):
    """Mean MRR over both directions; CCA heads are refit on the training set first."""
    if model.uses_cca():
        probe = model.copy()
        probe.cca_state = _fit_cca_state(model, train_data, cfg)
        return retrieval.mean_mrr(probe, val_data)
    return retrieval.mean_mrr(model, val_data)


def train(model, train_data, val_data, cfg, on_epoch=None):
    """Train ``model`` in place and return ``(model, TrainLog)`` with the best-on-validation weights."""
    if train_data.dx != model.tower_f.spec.widths[0] or train_data.dy != model.tower_g.spec.widths[0]:
        raise ContractError("dataset widths do not match the tower inputs")
    k = model.k
    if model.uses_cca() and cfg.batch_size < k + 1:
        raise ContractError(f"batch size {cfg.batch_size} must exceed k={k} for head {model.head}")
    model.config = asdict(cfg)
    layer = CCALayer(k, cfg.reg) if model.head == "ccal-rank" else None
    adam = net.AdamState(lr=cfg.lr)
    shuffle_rng = np.random.default_rng([cfg.seed, 7919])
    m = len(train_data)
    drop_last = model.uses_cca()
    n_batches = m // cfg.batch_size if drop_last else -(-m // cfg.batch_size)
    if n_batches < 1:
        raise ContractError(f"training set of {m} rows gives no full batch of {cfg.batch_size}")

    tlog = TrainLog()
    best = model.copy()
    patience = cfg.patience
    stall = 0
    for epoch in range(1, cfg.max_epochs + 1):
        perm = shuffle_rng.permutation(m)
        events = []
        batch_losses = []
        for b in range(n_batches):
            idx = perm[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            if idx.size < 2:
                continue
            A, B = train_data.X[idx], train_data.Y[idx]
            X, tape_f = net.mlp_forward(model.tower_f, A)
            Y, tape_g = net.mlp_forward(model.tower_g, B)
            step = _head_step(model, layer, X, Y, cfg, events, b)
            if step is None:
                continue
            value, gx, gy = step
            grads_f, _ = net.mlp_backward(tape_f, gx)
            grads_g, _ = net.mlp_backward(tape_g, gy)
            net.adam_step(model.params(), grads_f + grads_g, adam, cfg.weight_decay)
            model.bump()
            batch_losses.append(value)

        val = validation_mrr(model, train_data, val_data, cfg)
        rec = EpochRecord(epoch, float(np.mean(batch_losses)) if batch_losses else float("nan"),
                          val, adam.lr, events)
        if val > tlog.best_val_mrr:
            tlog.best_val_mrr = val
            tlog.best_epoch = epoch
            best = model.copy()
            stall = 0
        else:
            stall += 1
            if stall >= patience:
                if tlog.reductions_done >= cfg.reductions:
                    tlog.epochs.append(rec)
                    tlog.stop_reason = "patience exhausted"
                    if on_epoch:
                        on_epoch(rec)
                    break
                tlog.reductions_done += 1
                adam.lr /= cfg.lr_divisor
                patience = cfg.patience_after
                stall = 0
                rec.events.append(f"lr->{adam.lr:.3g}")
        tlog.epochs.append(rec)
        if on_epoch:
            on_epoch(rec)
    else:
        tlog.stop_reason = "max epochs"

    model.tower_f, model.tower_g = best.tower_f, best.tower_g
    model.cca_state = _fit_cca_state(model, train_data, cfg) if model.head == "ccal-rank" else None
    return model, tlog


def refit(model, data, reg=None):
    """Fit the CCA statistics of ``model`` on ``data`` (the whole training set, typically)."""
    if not model.uses_cca():
        raise ContractError(f"head {model.head!r} has no CCA statistics")
    if reg is None:
        reg = model.config.get("reg", cca.DEFAULT_REG)
    layer = CCALayer(model.k, reg)
    x, y = model.towers(data.X, data.Y)
    model.cca_state = layer.refit_statistics(x, y)
    return model
