"""Supervised-only and confidence-threshold self-training comparison arms."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .data import SemiDataset
from .game import elementwise_loss_A
from .metrics import (DROPOUT_SEED_OFFSET, DivergenceError, EpochMetrics,
                      RunResult, predict_values, pseudo_score, test_metric_value)
from .models import MainModel, forward_main

Array = np.ndarray


@dataclass
class SelfTrainConfig:
    """Settings for the classic pseudo-labeling baseline.

    tau is the admission threshold on max class probability; tau = 1.0 is the
    degenerate setting where nothing is ever admitted and the run reduces
    exactly to supervised training.
    """

    tau: float = 0.95
    interval: int = 10
    epochs: int = 300
    batch_size: int = 64
    lr: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not 0.5 < self.tau <= 1.0:
            raise ValueError(f"tau must lie in (0.5, 1], got {self.tau}")
        if self.interval < 1:
            raise ValueError(f"interval must be >= 1, got {self.interval}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")


def _train_on_rows(f: MainModel, ds: SemiDataset, labels: Array, rows: Array,
                   batch_rng: np.random.Generator,
                   dropout_rng: np.random.Generator | None,
                   batch_size: int, lr: float, epoch: int) -> float:
    """One epoch of unweighted training restricted to the given rows."""
    order = rows[batch_rng.permutation(rows.size)]
    batch_losses = []
    # The finite check below reports overflow as DivergenceError, so the raw
    # numpy warnings are suppressed.
    with np.errstate(over="ignore", invalid="ignore"):
        for start in range(0, order.size, batch_size):
            bidx = order[start:start + batch_size]
            y_hat = forward_main(f, ds.x[bidx], dropout_rng=dropout_rng)
            g = elementwise_loss_A(ds.task, labels[bidx], y_hat)
            loss = g.mean()
            val = loss.item()
            if not np.isfinite(val):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, batch "
                                      f"{start // batch_size}: loss_A={val}")
            f.params.zero_grad()
            ad.backward(loss)
            ad.adam_step(f.params, lr)
            batch_losses.append(val)
    return float(np.mean(batch_losses)) if batch_losses else None


def train_supervised(f: MainModel, ds: SemiDataset, epochs: int, lr: float,
                     seed: int, *, batch_size: int = 64, run_id: str | None = None,
                     collect_timing: bool = True) -> RunResult:
    """Train on the observed rows only with the unweighted per-sample loss."""
    labeled = ds.labeled_idx
    if labeled.size == 0:
        raise ValueError("supervised training needs at least one observed label")
    batch_rng = np.random.default_rng(seed)
    dropout_rng = (np.random.default_rng(seed + DROPOUT_SEED_OFFSET)
                   if f.input_dropout > 0.0 else None)
    rid = run_id if run_id is not None else f"supervised_s{seed}"
    result = RunResult(method="supervised", seed=seed, metrics=[], model=f)
    for epoch in range(epochs):
        t0 = time.perf_counter()
        loss_a = _train_on_rows(f, ds, ds.y, labeled, batch_rng, dropout_rng,
                                batch_size, lr, epoch)
        wall = (time.perf_counter() - t0) * 1000.0 if collect_timing else None
        result.metrics.append(EpochMetrics(
            run_id=rid, method="supervised", seed=seed, epoch=epoch,
            loss_a=loss_a, test_metric=test_metric_value(f, ds), wall_ms=wall))
    return result


def train_self_training(f: MainModel, ds: SemiDataset, cfg: SelfTrainConfig,
                        *, run_id: str | None = None,
                        collect_timing: bool = True) -> RunResult:
    """Classic self-training: periodically admit confident hidden rows.

    Every interval epochs, hidden rows whose max class probability exceeds
    tau join the training set with their predicted label frozen; membership
    only ever grows. Classification tasks only.
    """
    if not ds.task.is_classification:
        raise ValueError("self-training needs max-probability confidence; "
                         "classification tasks only")
    labeled = ds.labeled_idx
    if labeled.size == 0:
        raise ValueError("self-training needs at least one observed label")
    admitted = np.zeros(ds.n, dtype=bool)
    working = ds.y.copy()
    batch_rng = np.random.default_rng(cfg.seed)
    dropout_rng = (np.random.default_rng(cfg.seed + DROPOUT_SEED_OFFSET)
                   if f.input_dropout > 0.0 else None)
    rid = run_id if run_id is not None else f"self-training_s{cfg.seed}"
    result = RunResult(method="self-training", seed=cfg.seed, metrics=[], model=f)

    for epoch in range(cfg.epochs):
        if epoch > 0 and epoch % cfg.interval == 0:
            candidates = np.flatnonzero((ds.mask == 0) & ~admitted)
            if candidates.size:
                preds = predict_values(f, ds.x[candidates])
                take = preds.max(axis=1) > cfg.tau
                newly = candidates[take]
                admitted[newly] = True
                working[newly] = preds[take].argmax(axis=1)
            result.pseudo_rounds.append(
                pseudo_score(ds, working, subset=np.flatnonzero(admitted)))
            result.admitted_sizes.append(int(admitted.sum()))
        t0 = time.perf_counter()
        rows = np.flatnonzero((ds.mask == 1) | admitted)
        loss_a = _train_on_rows(f, ds, working, rows, batch_rng, dropout_rng,
                                cfg.batch_size, cfg.lr, epoch)
        wall = (time.perf_counter() - t0) * 1000.0 if collect_timing else None
        result.metrics.append(EpochMetrics(
            run_id=rid, method="self-training", seed=cfg.seed, epoch=epoch,
            loss_a=loss_a, test_metric=test_metric_value(f, ds),
            pseudo_acc=pseudo_score(ds, working, subset=np.flatnonzero(admitted)),
            wall_ms=wall))
    return result
