"""Synthetic datasets, label masking, label-noise injection and CSV round-trip.

A SemiDataset keeps the full ground truth Y alongside the observability mask
M, so experiments can score pseudo-labels and transductive accuracy. Training
code only ever sees (X, working labels, M); Y for masked rows is evaluation
material.
"""
from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .models import TaskKind

Array = np.ndarray


@dataclass(eq=False)
class SemiDataset:
    """Features, ground-truth labels, observability mask and task metadata.

    y holds class indices (n,) for classification and float targets (n, out)
    for regression. mask[i] == 1 marks an observed label. noisy_idx lists the
    observed rows whose labels were deliberately corrupted.
    """

    x: Array
    y: Array
    mask: Array
    task: TaskKind
    noisy_idx: Array = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=np.int64)
        self.noisy_idx = np.asarray(self.noisy_idx, dtype=np.int64)
        if self.x.ndim != 2:
            raise ValueError(f"x must be 2-D, got shape {self.x.shape}")
        n = self.x.shape[0]
        if self.mask.shape != (n,):
            raise ValueError(f"mask shape {self.mask.shape} does not match n={n}")
        if not np.isin(self.mask, (0, 1)).all():
            raise ValueError("mask entries must be 0 or 1")
        if self.task.is_classification:
            self.y = np.asarray(self.y, dtype=np.int64)
            if self.y.shape != (n,):
                raise ValueError(f"classification y must have shape ({n},), got {self.y.shape}")
            if self.y.size and (self.y.min() < 0 or self.y.max() >= self.task.out_dim):
                raise ValueError(f"labels must lie in [0, {self.task.out_dim})")
        else:
            self.y = np.asarray(self.y, dtype=np.float64)
            if self.y.ndim == 1:
                self.y = self.y.reshape(-1, 1)
            if self.y.shape != (n, self.task.out_dim):
                raise ValueError(f"regression y must have shape ({n}, {self.task.out_dim}), "
                                 f"got {self.y.shape}")
        if self.noisy_idx.size:
            if self.noisy_idx.min() < 0 or self.noisy_idx.max() >= n:
                raise ValueError("noisy_idx out of range")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def input_dim(self) -> int:
        return self.x.shape[1]

    @property
    def labeled_idx(self) -> Array:
        return np.flatnonzero(self.mask == 1)

    @property
    def unlabeled_idx(self) -> Array:
        return np.flatnonzero(self.mask == 0)


def gen_two_moons(n: int, noise_sigma: float, seed: int) -> SemiDataset:
    """Two interleaved half-circles with isotropic Gaussian noise, labels 0/1.

    Moon A traces (cos t, sin t) and moon B traces (1 - cos t, 0.5 - sin t)
    for t uniform on [0, pi]. The dataset starts fully observed.
    """
    if n < 2 or n % 2 != 0:
        raise ValueError(f"n must be an even number >= 2, got {n}")
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be non-negative, got {noise_sigma}")
    rng = np.random.default_rng(seed)
    half = n // 2
    t_a = rng.uniform(0.0, math.pi, size=half)
    t_b = rng.uniform(0.0, math.pi, size=half)
    a = np.column_stack([np.cos(t_a), np.sin(t_a)])
    b = np.column_stack([1.0 - np.cos(t_b), 0.5 - np.sin(t_b)])
    x = np.vstack([a, b]) + rng.normal(0.0, noise_sigma, size=(n, 2))
    y = np.concatenate([np.zeros(half, dtype=np.int64), np.ones(half, dtype=np.int64)])
    return SemiDataset(x=x, y=y, mask=np.ones(n, dtype=np.int64),
                       task=TaskKind.classification(2))


def gen_tabular_regression(n: int, d: int, seed: int, *,
                           linear_only: bool = False) -> SemiDataset:
    """Standard-normal features with target X@w + sin(X@v) + Normal(0, 0.1) noise.

    w and v are fixed draws from the same seed. With linear_only the
    sinusoidal term and the noise are dropped, leaving the pure linear map
    (used to validate the generator against least squares).
    """
    if n < 1 or d < 1:
        raise ValueError(f"n and d must be >= 1, got n={n}, d={d}")
    rng = np.random.default_rng(seed)
    w = rng.normal(size=(d, 1))
    v = rng.normal(size=(d, 1))
    x = rng.normal(size=(n, d))
    y = x @ w
    if not linear_only:
        y = y + np.sin(x @ v) + rng.normal(0.0, 0.1, size=(n, 1))
    return SemiDataset(x=x, y=y, mask=np.ones(n, dtype=np.int64),
                       task=TaskKind.regression(1))


def apply_missing(ds: SemiDataset, rate: float, seed: int) -> SemiDataset:
    """Hide exactly floor(rate * n) labels of a fully observed dataset.

    The hidden rows are chosen by a seeded shuffle, redrawn if any class
    would lose its last observed label.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"missing rate must lie in [0, 1), got {rate}")
    if not np.all(ds.mask == 1):
        raise ValueError("apply_missing expects a fully observed dataset")
    n = ds.n
    n_hide = int(math.floor(rate * n))
    mask = np.ones(n, dtype=np.int64)
    if n_hide == 0:
        return dataclasses.replace(ds, mask=mask)
    if ds.task.is_classification:
        k = ds.task.out_dim
        if n - n_hide < k:
            raise ValueError(f"rate {rate} leaves {n - n_hide} labels for {k} classes")
    rng = np.random.default_rng(seed)
    for _ in range(1000):
        perm = rng.permutation(n)
        mask = np.ones(n, dtype=np.int64)
        mask[perm[:n_hide]] = 0
        if not ds.task.is_classification:
            break
        kept = ds.y[mask == 1]
        if np.array_equal(np.unique(kept), np.arange(ds.task.out_dim)):
            break
    else:
        raise ValueError(f"could not keep one label per class at rate {rate}")
    return dataclasses.replace(ds, mask=mask)


def inject_label_noise(ds: SemiDataset, noise_rate: float, seed: int) -> SemiDataset:
    """Corrupt floor(noise_rate * |L|) observed labels and record their indices.

    Classification labels are replaced by a uniformly random different class;
    regression targets get additive Normal(0, 5 * std) noise per output
    dimension, with std taken over the observed targets.
    """
    if not 0.0 <= noise_rate < 1.0:
        raise ValueError(f"noise_rate must lie in [0, 1), got {noise_rate}")
    labeled = ds.labeled_idx
    n_noisy = int(math.floor(noise_rate * labeled.size))
    if n_noisy == 0:
        return dataclasses.replace(ds, y=ds.y.copy(),
                                   noisy_idx=np.empty(0, dtype=np.int64))
    rng = np.random.default_rng(seed)
    chosen = rng.permutation(labeled)[:n_noisy]
    y = ds.y.copy()
    if ds.task.is_classification:
        k = ds.task.out_dim
        # Draw from k-1 alternatives and shift past the original class so the
        # corrupted label always differs.
        draws = rng.integers(0, k - 1, size=n_noisy)
        y[chosen] = draws + (draws >= y[chosen])
    else:
        sigma = ds.y[labeled].std(axis=0)
        y[chosen] = y[chosen] + rng.normal(0.0, 1.0, size=y[chosen].shape) * 5.0 * sigma
    return dataclasses.replace(ds, y=y, noisy_idx=np.sort(chosen))


def save_csv(ds: SemiDataset, path) -> None:
    """Write the dataset as columns x0..x{d-1}, y, observed."""
    if not ds.task.is_classification and ds.task.out_dim != 1:
        raise ValueError("CSV schema supports a single target column")
    header = [f"x{i}" for i in range(ds.input_dim)] + ["y", "observed"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(ds.n):
            row = [f"{v:.17g}" for v in ds.x[i]]
            if ds.task.is_classification:
                row.append(str(int(ds.y[i])))
            else:
                row.append(f"{ds.y[i, 0]:.17g}")
            row.append(str(int(ds.mask[i])))
            writer.writerow(row)


def load_csv(path, task: TaskKind | None = None) -> SemiDataset:
    """Read a dataset written by save_csv.

    Without an explicit task, all-integral non-negative targets are read as
    classification over classes 0..max(y); anything else as 1-D regression.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = rows[0]
    if len(header) < 3 or header[-2:] != ["y", "observed"]:
        raise ValueError(f"{path}: header must end with columns y, observed")
    d = len(header) - 2
    expect = [f"x{i}" for i in range(d)]
    if header[:d] != expect:
        raise ValueError(f"{path}: feature columns must be named x0..x{d - 1}")

    x = np.empty((len(rows) - 1, d))
    y_raw = np.empty(len(rows) - 1)
    mask = np.empty(len(rows) - 1, dtype=np.int64)
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != d + 2:
            raise ValueError(f"{path}: line {r}: expected {d + 2} cells, got {len(row)}")
        for c, cell in enumerate(row):
            try:
                val = float(cell)
            except ValueError:
                raise ValueError(f"{path}: line {r}: column {header[c]}: "
                                 f"non-numeric cell {cell!r}") from None
            if c < d:
                x[r - 2, c] = val
            elif c == d:
                y_raw[r - 2] = val
            else:
                if val not in (0.0, 1.0):
                    raise ValueError(f"{path}: line {r}: observed must be 0 or 1, got {cell}")
                mask[r - 2] = int(val)

    if task is None:
        integral = np.all(y_raw == np.floor(y_raw)) and y_raw.size and y_raw.min() >= 0
        if integral:
            task = TaskKind.classification(max(int(y_raw.max()) + 1, 2))
        else:
            task = TaskKind.regression(1)
    y = y_raw.astype(np.int64) if task.is_classification else y_raw.reshape(-1, 1)
    return SemiDataset(x=x, y=y, mask=mask, task=task)
