"""Joint training of the main model with a label-observability discriminator.

Each batch runs one discriminator update on its observability loss, then one
main-model update on the per-sample loss reweighted by closed-form functions
of the discriminator's confidence. High confidence on a pseudo-labeled row
drives its weight negative, pushing the model away from a target the
discriminator can tell apart from genuine labels.
"""
from __future__ import annotations

import enum
import json
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import SemiDataset
from .metrics import (DISC_SEED_OFFSET, DROPOUT_SEED_OFFSET, INIT_SEED_OFFSET,
                      DivergenceError, EpochMetrics, RunResult, pseudo_score,
                      rank_auc, test_metric_value)
from .models import (Discriminator, MainModel, TaskKind, build_discriminator,
                     build_main_model, forward_discriminator, forward_main)

Array = np.ndarray

CE_CLAMP = 1e-12


class LossVariant(enum.Enum):
    """Discriminator loss family; also selects the matching weight formulas."""

    BCE = "bce"
    EXPONENTIAL = "exp"
    LOGISTIC = "logistic"

    @classmethod
    def parse(cls, name: str) -> "LossVariant":
        for variant in cls:
            if variant.value == name:
                return variant
        raise ValueError(f"unknown loss variant {name!r}, expected one of "
                         f"{[v.value for v in cls]}")


@dataclass
class GameConfig:
    """Hyperparameters of one joint training run."""

    alpha: float = 0.6
    variant: LossVariant = LossVariant.BCE
    clip_h: float = 10.0
    refresh_interval: int = 10
    epochs: int = 300
    batch_size: int = 64
    lr_f: float = 0.01
    lr_d: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.variant, str):
            self.variant = LossVariant.parse(self.variant)
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.clip_h <= 1.0:
            raise ValueError(f"clip_h must exceed 1, got {self.clip_h}")
        if self.refresh_interval < 1:
            raise ValueError(f"refresh_interval must be >= 1, got {self.refresh_interval}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr_f <= 0 or self.lr_d <= 0:
            raise ValueError(f"learning rates must be positive, got {self.lr_f}, {self.lr_d}")

    def to_json_dict(self) -> dict:
        doc = {f.name: getattr(self, f.name) for f in fields(self)}
        doc["variant"] = self.variant.value
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "GameConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown GameConfig fields: {sorted(unknown)}")
        return cls(**doc)


def soft_weights(variant: LossVariant, p: Array, mask: Array,
                 alpha: float, clip_h: float) -> Array:
    """Per-sample multipliers on the main loss, keyed by the loss variant.

      bce       observed 1 + a*min(1/p, H)          hidden 1 - a*min(1/(1-p), H)
      exp       observed 1 + a*e^(-p)               hidden 1 - a*e^p
      logistic  observed 1 + a*e^(-p)/(1+e^(-p))    hidden 1 - a*e^p/(1+e^p)

    Weights are plain numbers: no gradient flows through them.
    """
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    mask = np.asarray(mask).reshape(-1)
    if p.shape != mask.shape:
        raise ValueError(f"p and mask lengths differ: {p.shape} vs {mask.shape}")
    if not np.all(np.isfinite(p)) or np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("confidence values must lie strictly inside (0, 1)")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if clip_h <= 1.0:
        raise ValueError(f"clip bound must exceed 1, got {clip_h}")

    observed = mask == 1
    if variant is LossVariant.BCE:
        w_l = 1.0 + alpha * np.minimum(1.0 / p, clip_h)
        w_u = 1.0 - alpha * np.minimum(1.0 / (1.0 - p), clip_h)
    elif variant is LossVariant.EXPONENTIAL:
        w_l = 1.0 + alpha * np.exp(-p)
        w_u = 1.0 - alpha * np.exp(p)
    else:
        e_neg = np.exp(-p)
        e_pos = np.exp(p)
        w_l = 1.0 + alpha * e_neg / (1.0 + e_neg)
        w_u = 1.0 - alpha * e_pos / (1.0 + e_pos)
    return np.where(observed, w_l, w_u)


def elementwise_loss_A(task: TaskKind, y_work, y_hat: Tensor) -> Tensor:
    """Per-sample main-task loss as an (n, 1) graph tensor.

    Cross entropy (probabilities clamped at 1e-12) for classification; mean
    squared error over output dimensions for regression. Classification
    targets may be class indices or one-hot rows.
    """
    if task.is_classification:
        k = task.out_dim
        if y_hat.ndim != 2 or y_hat.shape[1] != k:
            raise ValueError(f"expected predictions (n, {k}), got {y_hat.shape}")
        y_work = np.asarray(y_work)
        if y_work.ndim == 1:
            if y_work.shape[0] != y_hat.shape[0]:
                raise ValueError(f"target count {y_work.shape[0]} does not match "
                                 f"prediction count {y_hat.shape[0]}")
            if y_work.size and (y_work.min() < 0 or y_work.max() >= k):
                raise ValueError(f"class indices must lie in [0, {k})")
            onehot = np.zeros((y_work.shape[0], k))
            onehot[np.arange(y_work.shape[0]), y_work.astype(np.int64)] = 1.0
        elif y_work.shape == y_hat.shape:
            onehot = y_work.astype(np.float64)
        else:
            raise ValueError(f"targets {y_work.shape} do not match predictions {y_hat.shape}")
        picked = ad.clip(y_hat, CE_CLAMP, None) if np.any(y_hat.values < CE_CLAMP) \
            else y_hat
        return (ad.log(picked) * Tensor(onehot)).sum(axis=1, keepdims=True) * -1.0
    y_work = np.asarray(y_work, dtype=np.float64)
    if y_work.ndim == 1:
        y_work = y_work.reshape(-1, 1)
    if y_work.shape != y_hat.shape:
        raise ValueError(f"targets {y_work.shape} do not match predictions {y_hat.shape}")
    return ad.square(y_hat - Tensor(y_work)).mean(axis=1, keepdims=True)


def main_loss(g: Tensor, weights: Array) -> Tensor:
    """Batch mean of the weighted per-sample losses; may be negative."""
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    if g.ndim != 2 or g.shape[1] != 1 or g.shape[0] != weights.shape[0]:
        raise ValueError(f"g must be (n, 1) matching {weights.shape[0]} weights, "
                         f"got {g.shape}")
    return (g * Tensor(weights.reshape(-1, 1))).mean()


def discriminator_loss(variant: LossVariant, p: Tensor, mask: Array) -> Tensor:
    """Batch mean of the observability loss between confidences and the mask."""
    mask = np.asarray(mask).reshape(-1)
    if p.ndim != 2 or p.shape[1] != 1 or p.shape[0] != mask.shape[0]:
        raise ValueError(f"p must be (n, 1) matching {mask.shape[0]} mask entries, "
                         f"got {p.shape}")
    if np.any(p.values <= 0.0) or np.any(p.values >= 1.0):
        raise ValueError("confidence values must lie strictly inside (0, 1)")
    m = Tensor(mask.reshape(-1, 1).astype(np.float64))
    u = Tensor((1 - mask).reshape(-1, 1).astype(np.float64))
    if variant is LossVariant.BCE:
        return -((m * ad.log(p) + u * ad.log(1.0 - p)).mean())
    if variant is LossVariant.EXPONENTIAL:
        return (m * ad.exp(-p) + u * ad.exp(p)).mean()
    return (m * ad.log(1.0 + ad.exp(-p)) + u * ad.log(1.0 + ad.exp(p))).mean()


@dataclass
class PseudoState:
    """Working labels for training plus the pseudo-labeling round history.

    labels holds the observed label for every mask==1 row at all times;
    mask==0 rows carry the current pseudo-labels.
    """

    labels: Array
    mask: Array
    round_k: int = 0
    round_history: list = field(default_factory=list)


def init_pseudo_labels(task: TaskKind, ds: SemiDataset, seed: int) -> PseudoState:
    """Fill hidden rows with uniform random classes, or the observed-label
    mean plus Normal(0, 0.1 * std) noise for regression."""
    labeled = ds.labeled_idx
    hidden = ds.unlabeled_idx
    labels = ds.y.copy()
    rng = np.random.default_rng(seed)
    if task.is_classification:
        labels[hidden] = rng.integers(0, task.out_dim, size=hidden.size)
    else:
        if labeled.size == 0:
            raise ValueError("regression pseudo-label init needs at least one observed label")
        mu = ds.y[labeled].mean(axis=0)
        sigma = ds.y[labeled].std(axis=0)
        labels[hidden] = mu + rng.normal(0.0, 1.0, size=(hidden.size, ds.y.shape[1])) \
            * 0.1 * sigma
    return PseudoState(labels=labels, mask=ds.mask.copy())


def refresh_pseudo_labels(f: MainModel, state: PseudoState, ds: SemiDataset) -> PseudoState:
    """Replace pseudo-labels with the model's current hard predictions.

    Classification rows get the argmax class, regression rows the raw
    prediction. Appends the refreshed pseudo-label score (accuracy or MSE
    against retained ground truth) to the round history.
    """
    hidden = ds.unlabeled_idx
    if hidden.size:
        with ad.no_grad():
            preds = forward_main(f, ds.x[hidden]).values
        if ds.task.is_classification:
            state.labels[hidden] = preds.argmax(axis=1)
        else:
            state.labels[hidden] = preds
        state.round_history.append(pseudo_score(ds, state.labels))
    state.round_k += 1
    labeled = ds.labeled_idx
    assert np.array_equal(state.labels[labeled], ds.y[labeled]), \
        "observed labels drifted during refresh"
    return state


def _eval_confidences(f: MainModel, d: Discriminator, ds: SemiDataset,
                      state: PseudoState) -> Array:
    """Discriminator confidence for every row at the current parameters."""
    with ad.no_grad(), np.errstate(over="ignore", invalid="ignore"):
        y_hat = forward_main(f, ds.x)
        g = elementwise_loss_A(ds.task, state.labels, y_hat)
        return forward_discriminator(d, ds.x, y_hat.values, g.values).values.reshape(-1)


def train_epoch(f: MainModel, d: Discriminator, ds: SemiDataset, state: PseudoState,
                cfg: GameConfig, epoch: int, batch_rng: np.random.Generator,
                *, dropout_rng: np.random.Generator | None = None,
                weight_hook=None, run_id: str | None = None,
                collect_timing: bool = True) -> EpochMetrics:
    """One epoch of alternating discriminator/main-model updates.

    Per batch: forward the main model, form per-sample losses, score the
    batch with the discriminator, update the discriminator, then update the
    main model on losses weighted by the pre-update confidences. weight_hook,
    when given, replaces soft_weights (test seam).
    """
    t0 = time.perf_counter()
    order = batch_rng.permutation(ds.n)
    loss_a_batches = []
    loss_b_batches = []
    # Overflow in a forward or backward pass surfaces as non-finite values;
    # the explicit checks below turn those into DivergenceError with context,
    # so the raw numpy warnings would only add noise.
    with np.errstate(over="ignore", invalid="ignore"):
        for start in range(0, ds.n, cfg.batch_size):
            bidx = order[start:start + cfg.batch_size]
            xb = ds.x[bidx]
            mb = ds.mask[bidx]
            y_hat = forward_main(f, xb, dropout_rng=dropout_rng)
            g = elementwise_loss_A(ds.task, state.labels[bidx], y_hat)
            p = forward_discriminator(d, xb, y_hat.values, g.values)
            p_before = p.values.copy()
            if not np.isfinite(p_before).all():
                raise DivergenceError(
                    f"non-finite confidence at epoch {epoch}, batch "
                    f"{start // cfg.batch_size}")

            loss_b = discriminator_loss(cfg.variant, p, mb)
            if weight_hook is not None:
                w = weight_hook(p_before, mb)
            else:
                w = soft_weights(cfg.variant, p_before, mb, cfg.alpha, cfg.clip_h)
            loss_a = main_loss(g, w)
            la, lb = loss_a.item(), loss_b.item()
            if not (np.isfinite(la) and np.isfinite(lb)):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, batch "
                                      f"{start // cfg.batch_size}: loss_A={la}, loss_B={lb}")

            d.params.zero_grad()
            ad.backward(loss_b)
            ad.adam_step(d.params, cfg.lr_d)

            f.params.zero_grad()
            ad.backward(loss_a)
            ad.adam_step(f.params, cfg.lr_f)

            loss_a_batches.append(la)
            loss_b_batches.append(lb)

    p_all = _eval_confidences(f, d, ds, state)
    labeled = ds.labeled_idx
    hidden = ds.unlabeled_idx
    wall = (time.perf_counter() - t0) * 1000.0 if collect_timing else None
    return EpochMetrics(
        run_id=run_id if run_id is not None else f"flexssl_s{cfg.seed}",
        method="flexssl",
        seed=cfg.seed,
        epoch=epoch,
        loss_a=float(np.mean(loss_a_batches)) if loss_a_batches else None,
        loss_b=float(np.mean(loss_b_batches)) if loss_b_batches else None,
        test_metric=test_metric_value(f, ds),
        pseudo_acc=pseudo_score(ds, state.labels),
        mean_p_labeled=float(p_all[labeled].mean()) if labeled.size else None,
        mean_p_unlabeled=float(p_all[hidden].mean()) if hidden.size else None,
        auc_p_mask=rank_auc(p_all, ds.mask),
        wall_ms=wall,
    )


def run_game(cfg: GameConfig, ds: SemiDataset, *, hidden=(32, 32), emb_width: int = 32,
             input_dropout: float = 0.0, run_id: str | None = None,
             weight_hook=None, snapshot_epochs=(), collect_timing: bool = True) -> RunResult:
    """Full joint training run: init pseudo-labels, train, refresh on schedule.

    snapshot_epochs collects the full-dataset confidence vector immediately
    before training of the named epoch (an entry equal to cfg.epochs captures
    the final state).
    """
    snap_set = set(int(e) for e in snapshot_epochs)
    bad = [e for e in snap_set if e < 0 or e > cfg.epochs]
    if bad:
        raise ValueError(f"snapshot epochs {sorted(bad)} outside [0, {cfg.epochs}]")

    f = build_main_model(ds.task, ds.input_dim, hidden, cfg.seed, input_dropout)
    d = build_discriminator(ds.input_dim, ds.task.out_dim, emb_width,
                            cfg.seed + DISC_SEED_OFFSET)
    state = init_pseudo_labels(ds.task, ds, cfg.seed + INIT_SEED_OFFSET)
    batch_rng = np.random.default_rng(cfg.seed)
    dropout_rng = (np.random.default_rng(cfg.seed + DROPOUT_SEED_OFFSET)
                   if input_dropout > 0.0 else None)

    result = RunResult(method="flexssl", seed=cfg.seed, metrics=[], model=f,
                       discriminator=d)
    for epoch in range(cfg.epochs):
        if epoch in snap_set:
            result.snapshots[epoch] = _eval_confidences(f, d, ds, state)
        if epoch > 0 and epoch % cfg.refresh_interval == 0:
            refresh_pseudo_labels(f, state, ds)
        row = train_epoch(f, d, ds, state, cfg, epoch, batch_rng,
                          dropout_rng=dropout_rng, weight_hook=weight_hook,
                          run_id=run_id, collect_timing=collect_timing)
        result.metrics.append(row)
    if cfg.epochs in snap_set:
        result.snapshots[cfg.epochs] = _eval_confidences(f, d, ds, state)
    result.final_p = _eval_confidences(f, d, ds, state)
    result.pseudo_rounds = list(state.round_history)
    return result


def save_game_config(cfg: GameConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(cfg.to_json_dict(), fh, indent=2)


def load_game_config(path) -> GameConfig:
    with open(path) as fh:
        return GameConfig.from_json_dict(json.load(fh))


def with_seed(cfg: GameConfig, seed: int) -> GameConfig:
    return replace(cfg, seed=seed)
