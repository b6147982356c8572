"""Shared run plumbing: per-epoch metrics, run results, evaluation helpers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .data import SemiDataset
from .models import MainModel, forward_main

Array = np.ndarray

# Offsets that separate the auxiliary random streams of a run from its batch
# shuffling stream (which uses the run seed directly).
INIT_SEED_OFFSET = 1_000_003
DISC_SEED_OFFSET = 2_000_033
DROPOUT_SEED_OFFSET = 3_000_017
MASK_SEED_OFFSET = 4_000_037
NOISE_SEED_OFFSET = 5_000_011


class DivergenceError(RuntimeError):
    """Raised when a training loss turns non-finite."""


@dataclass
class EpochMetrics:
    """One row of the metrics CSV; None fields are written as empty cells."""

    run_id: str
    method: str
    seed: int
    epoch: int
    loss_a: float | None = None
    loss_b: float | None = None
    test_metric: float | None = None
    pseudo_acc: float | None = None
    mean_p_labeled: float | None = None
    mean_p_unlabeled: float | None = None
    auc_p_mask: float | None = None
    wall_ms: float | None = None


# CSV header name -> EpochMetrics attribute, in fixed column order.
METRIC_COLUMNS = (
    ("run_id", "run_id"),
    ("method", "method"),
    ("seed", "seed"),
    ("epoch", "epoch"),
    ("loss_A", "loss_a"),
    ("loss_B", "loss_b"),
    ("test_metric", "test_metric"),
    ("pseudo_acc", "pseudo_acc"),
    ("mean_p_labeled", "mean_p_labeled"),
    ("mean_p_unlabeled", "mean_p_unlabeled"),
    ("auc_p_mask", "auc_p_mask"),
    ("wall_ms", "wall_ms"),
)


@dataclass
class RunResult:
    """Everything one training run produces."""

    method: str
    seed: int
    metrics: list[EpochMetrics]
    model: MainModel
    discriminator: object | None = None
    final_p: Array | None = None
    pseudo_rounds: list[float] = field(default_factory=list)
    admitted_sizes: list[int] = field(default_factory=list)
    snapshots: dict[int, Array] = field(default_factory=dict)

    @property
    def final_test_metric(self) -> float | None:
        return self.metrics[-1].test_metric if self.metrics else None


def predict_values(model: MainModel, x: Array) -> Array:
    """Forward pass outside the graph, no dropout."""
    with ad.no_grad(), np.errstate(over="ignore", invalid="ignore"):
        return forward_main(model, x).values


def test_metric_value(model: MainModel, ds: SemiDataset) -> float:
    """Transductive score on the unlabeled rows against retained ground truth.

    Accuracy for classification, mean squared error for regression. With no
    unlabeled rows the score is taken over the whole dataset.
    """
    idx = ds.unlabeled_idx
    if idx.size == 0:
        idx = np.arange(ds.n)
    preds = predict_values(model, ds.x[idx])
    if ds.task.is_classification:
        return float(np.mean(preds.argmax(axis=1) == ds.y[idx]))
    return float(np.mean((preds - ds.y[idx]) ** 2))


def pseudo_score(ds: SemiDataset, labels: Array, subset: Array | None = None) -> float | None:
    """Quality of working labels against ground truth over a row subset.

    Defaults to the unlabeled rows. Accuracy for classification, MSE for
    regression; None when the subset is empty.
    """
    idx = ds.unlabeled_idx if subset is None else subset
    if idx.size == 0:
        return None
    if ds.task.is_classification:
        return float(np.mean(labels[idx] == ds.y[idx]))
    return float(np.mean((labels[idx] - ds.y[idx]) ** 2))


def rank_auc(scores: Array, labels: Array) -> float | None:
    """Area under the ROC curve by the rank-sum statistic, ties averaged.

    labels are 0/1; returns None unless both groups are non-empty.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    cum = np.cumsum(counts)
    avg_rank = cum - (counts - 1) / 2.0
    ranks = avg_rank[inverse]
    rank_sum = ranks[labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))
