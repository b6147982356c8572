"""Experiment orchestration: builds datasets, dispatches runs, writes outputs.

All data files are pure functions of the experiment spec: floats are printed
with repr (shortest round-trip form), rows follow spec order regardless of
worker completion order, and wall-clock cells are left empty when timing is
disabled.
"""
from __future__ import annotations

import dataclasses
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .baselines import SelfTrainConfig, train_self_training, train_supervised
from .data import (SemiDataset, apply_missing, gen_tabular_regression,
                   gen_two_moons, inject_label_noise)
from .game import GameConfig, run_game
from .metrics import (MASK_SEED_OFFSET, METRIC_COLUMNS, NOISE_SEED_OFFSET,
                      EpochMetrics, RunResult)
from .models import build_main_model, save_model_json

METHODS = ("supervised", "self-training", "flexssl")
DATASETS = ("two-moons", "tabular")
SWEEP_AXES = ("missing_rate", "alpha")


class SpecError(ValueError):
    """An experiment spec that cannot be run as given."""


@dataclass
class ExperimentSpec:
    """Everything needed to reproduce one experiment's outputs."""

    dataset: str = "two-moons"
    n: int = 1000
    d: int = 8
    noise_sigma: float = 0.2
    missing_rate: float = 0.9
    noise_rate: float = 0.0
    methods: tuple[str, ...] = ("flexssl",)
    game: GameConfig = field(default_factory=GameConfig)
    tau: float = 0.95
    hidden: tuple[int, ...] = (32, 32)
    emb_width: int = 32
    input_dropout: float = 0.0
    seeds: tuple[int, ...] = (0,)
    out: str = "out"
    no_timing: bool = False
    figures: bool = True
    workers: int = 1

    def __post_init__(self):
        self.methods = tuple(self.methods)
        self.hidden = tuple(int(w) for w in self.hidden)
        self.seeds = tuple(int(s) for s in self.seeds)
        if self.dataset not in DATASETS:
            raise SpecError(f"dataset must be one of {DATASETS}, got {self.dataset!r}")
        for m in self.methods:
            if m not in METHODS:
                raise SpecError(f"method must be one of {METHODS}, got {m!r}")
        if not self.methods:
            raise SpecError("at least one method is required")
        if not self.seeds:
            raise SpecError("at least one seed is required")
        if self.dataset == "tabular" and "self-training" in self.methods:
            raise SpecError("self-training needs a classification dataset")
        if not 0.0 <= self.missing_rate < 1.0:
            raise SpecError(f"missing_rate must lie in [0, 1), got {self.missing_rate}")
        if not 0.0 <= self.noise_rate < 1.0:
            raise SpecError(f"noise_rate must lie in [0, 1), got {self.noise_rate}")
        if not 0.5 < self.tau <= 1.0:
            raise SpecError(f"tau must lie in (0.5, 1], got {self.tau}")
        if self.workers < 1:
            raise SpecError(f"workers must be >= 1, got {self.workers}")

    def to_json_dict(self) -> dict:
        doc = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "game":
                doc[f.name] = value.to_json_dict()
            elif isinstance(value, tuple):
                doc[f.name] = list(value)
            else:
                doc[f.name] = value
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ExperimentSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise SpecError(f"unknown spec fields: {sorted(unknown)}")
        doc = dict(doc)
        if "game" in doc:
            doc["game"] = GameConfig.from_json_dict(doc["game"])
        try:
            return cls(**doc)
        except TypeError as exc:
            raise SpecError(str(exc)) from None


def load_spec(path) -> ExperimentSpec:
    with open(path) as fh:
        return ExperimentSpec.from_json_dict(json.load(fh))


def make_dataset(spec: ExperimentSpec, seed: int) -> SemiDataset:
    """Generate, mask, and optionally corrupt one seed's dataset."""
    if spec.dataset == "two-moons":
        ds = gen_two_moons(spec.n, spec.noise_sigma, seed)
    else:
        ds = gen_tabular_regression(spec.n, spec.d, seed)
    ds = apply_missing(ds, spec.missing_rate, seed + MASK_SEED_OFFSET)
    if spec.noise_rate > 0.0:
        ds = inject_label_noise(ds, spec.noise_rate, seed + NOISE_SEED_OFFSET)
    return ds


def run_single(spec: ExperimentSpec, method: str, seed: int,
               *, run_id: str | None = None, snapshot_epochs=()) -> tuple[RunResult, SemiDataset]:
    """Run one (method, seed) cell of the experiment."""
    ds = make_dataset(spec, seed)
    rid = run_id if run_id is not None else f"{method}_s{seed}"
    timing = not spec.no_timing
    game = dataclasses.replace(spec.game, seed=seed)
    if method == "flexssl":
        result = run_game(game, ds, hidden=spec.hidden, emb_width=spec.emb_width,
                          input_dropout=spec.input_dropout, run_id=rid,
                          snapshot_epochs=snapshot_epochs, collect_timing=timing)
    elif method == "supervised":
        f = build_main_model(ds.task, ds.input_dim, spec.hidden, seed,
                             spec.input_dropout)
        result = train_supervised(f, ds, epochs=game.epochs, lr=game.lr_f,
                                  seed=seed, batch_size=game.batch_size,
                                  run_id=rid, collect_timing=timing)
    elif method == "self-training":
        f = build_main_model(ds.task, ds.input_dim, spec.hidden, seed,
                             spec.input_dropout)
        st = SelfTrainConfig(tau=spec.tau, interval=game.refresh_interval,
                             epochs=game.epochs, batch_size=game.batch_size,
                             lr=game.lr_f, seed=seed)
        result = train_self_training(f, ds, st, run_id=rid, collect_timing=timing)
    else:
        raise SpecError(f"unknown method {method!r}")
    return result, ds


def run_pool(jobs, workers: int):
    """Run callables on a bounded pool; results come back in job order."""
    if workers <= 1 or len(jobs) <= 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(job) for job in jobs]
        return [f.result() for f in futures]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics_csv(path, rows: list[EpochMetrics], *, extra: dict | None = None,
                      extra_per_row: list[dict] | None = None) -> None:
    """Write metric rows in fixed column order; None becomes an empty cell.

    extra/extra_per_row prepend constant or per-row columns (sweep axes).
    """
    lead = list(extra.keys()) if extra else \
        (list(extra_per_row[0].keys()) if extra_per_row else [])
    header = lead + [name for name, _ in METRIC_COLUMNS]
    lines = [",".join(header)]
    for i, row in enumerate(rows):
        front = extra if extra else (extra_per_row[i] if extra_per_row else {})
        cells = [_fmt(front[k]) for k in lead]
        cells += [_fmt(getattr(row, attr)) for _, attr in METRIC_COLUMNS]
        lines.append(",".join(cells))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _metric_name(spec: ExperimentSpec) -> tuple[str, bool]:
    if spec.dataset == "tabular":
        return "mse", False
    return "accuracy", True


def summarize(spec: ExperimentSpec, results: dict[str, list[RunResult]]) -> dict:
    """Per-method final-metric mean/std plus a win marker for the best mean."""
    metric, higher_better = _metric_name(spec)
    table = {}
    for method, runs in results.items():
        finals = [r.final_test_metric for r in runs]
        table[method] = {
            "final_per_seed": finals,
            "mean": float(np.mean(finals)),
            "std": float(np.std(finals)),
            "n_seeds": len(finals),
        }
    best = (max if higher_better else min)(table, key=lambda m: table[m]["mean"])
    for method in table:
        table[method]["win"] = method == best
    return {"metric": metric, "higher_is_better": higher_better, "methods": table}


def cmd_train(spec: ExperimentSpec) -> dict:
    """One method over the seed list: metrics CSV plus final model JSON files."""
    if len(spec.methods) != 1:
        raise SpecError(f"train runs exactly one method, got {list(spec.methods)}")
    method = spec.methods[0]
    os.makedirs(spec.out, exist_ok=True)
    jobs = [(lambda s=s: run_single(spec, method, s)) for s in spec.seeds]
    outcomes = run_pool(jobs, spec.workers)

    rows = []
    model_paths = []
    for seed, (result, _) in zip(spec.seeds, outcomes):
        rows.extend(result.metrics)
        mpath = os.path.join(spec.out, f"model_{method}_s{seed}.json")
        save_model_json(result.model, mpath)
        model_paths.append(mpath)
        if result.discriminator is not None:
            dpath = os.path.join(spec.out, f"discriminator_{method}_s{seed}.json")
            save_model_json(result.discriminator, dpath)
            model_paths.append(dpath)
    csv_path = os.path.join(spec.out, "metrics.csv")
    write_metrics_csv(csv_path, rows)

    figure_paths = []
    if spec.figures:
        from . import figures
        metric, _ = _metric_name(spec)
        fig_path = os.path.join(spec.out, "fig_test_metric.png")
        series = {f"seed {seed}": ([m.epoch for m in result.metrics],
                                   [m.test_metric for m in result.metrics])
                  for seed, (result, _) in zip(spec.seeds, outcomes)}
        figures.fig_curves(fig_path, series, xlabel="epoch", ylabel=metric,
                           title=f"{method} on {spec.dataset}")
        figure_paths.append(fig_path)
    return {"csv": csv_path, "models": model_paths, "figures": figure_paths}


def cmd_compare(spec: ExperimentSpec) -> dict:
    """All listed methods over the seed list: combined CSV plus summary JSON."""
    if len(spec.seeds) < 2:
        raise SpecError("compare needs at least 2 seeds for a std")
    os.makedirs(spec.out, exist_ok=True)
    cells = [(m, s) for m in spec.methods for s in spec.seeds]
    jobs = [(lambda m=m, s=s: run_single(spec, m, s)) for m, s in cells]
    outcomes = run_pool(jobs, spec.workers)

    rows = []
    results: dict[str, list[RunResult]] = {m: [] for m in spec.methods}
    for (method, _), (result, _) in zip(cells, outcomes):
        rows.extend(result.metrics)
        results[method].append(result)
    csv_path = os.path.join(spec.out, "metrics.csv")
    write_metrics_csv(csv_path, rows)
    summary = summarize(spec, results)
    summary_path = os.path.join(spec.out, "summary.json")
    with open(summary_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)

    figure_paths = []
    if spec.figures:
        from . import figures
        metric, _ = _metric_name(spec)
        fig_path = os.path.join(spec.out, "fig_compare.png")
        series = {}
        for method, runs in results.items():
            curve = np.mean([[m.test_metric for m in r.metrics] for r in runs], axis=0)
            series[method] = (list(range(len(curve))), curve.tolist())
        figures.fig_curves(fig_path, series, xlabel="epoch", ylabel=f"mean {metric}",
                           title=f"{spec.dataset}, missing rate {spec.missing_rate}")
        figure_paths.append(fig_path)
        pseudo = {m: rs for m, rs in results.items()
                  if any(r.pseudo_rounds for r in rs)}
        if pseudo:
            fig2 = os.path.join(spec.out, "fig_pseudo_rounds.png")
            series2 = {}
            for method, runs in pseudo.items():
                hists = [r.pseudo_rounds for r in runs if r.pseudo_rounds]
                length = min(len(h) for h in hists)
                vals = np.array([[v if v is not None else np.nan for v in h[:length]]
                                 for h in hists], dtype=float)
                series2[method] = (list(range(1, length + 1)),
                                   np.nanmean(vals, axis=0).tolist())
            figures.fig_curves(fig2, series2, xlabel="refresh round",
                               ylabel="pseudo-label quality",
                               title="pseudo-label quality per round")
            figure_paths.append(fig2)
    return {"csv": csv_path, "summary": summary_path, "figures": figure_paths,
            "summary_data": summary}


def cmd_sweep(spec: ExperimentSpec, axis: str, values) -> dict:
    """Repeat the comparison at each axis value; long-format CSV."""
    if axis not in SWEEP_AXES:
        raise SpecError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    values = [float(v) for v in values]
    if not values:
        raise SpecError("sweep needs at least one value")
    for v in values:
        if axis == "missing_rate" and not 0.0 <= v < 1.0:
            raise SpecError(f"missing_rate value {v} outside [0, 1)")
        if axis == "alpha" and not 0.0 < v <= 1.0:
            raise SpecError(f"alpha value {v} outside (0, 1]")
    os.makedirs(spec.out, exist_ok=True)

    cells = []
    for v in values:
        if axis == "missing_rate":
            point = dataclasses.replace(spec, missing_rate=v)
        else:
            point = dataclasses.replace(spec, game=dataclasses.replace(spec.game, alpha=v))
        for m in spec.methods:
            for s in spec.seeds:
                cells.append((v, point, m, s))
    jobs = [(lambda p=p, m=m, s=s: run_single(p, m, s)) for _, p, m, s in cells]
    outcomes = run_pool(jobs, spec.workers)

    rows = []
    tags = []
    finals: dict[tuple[float, str], list[float]] = {}
    for (v, _, m, _), (result, _) in zip(cells, outcomes):
        rows.extend(result.metrics)
        tags.extend({"axis": axis, "value": v} for _ in result.metrics)
        finals.setdefault((v, m), []).append(result.final_test_metric)
    csv_path = os.path.join(spec.out, "sweep.csv")
    write_metrics_csv(csv_path, rows, extra_per_row=tags)

    figure_paths = []
    if spec.figures:
        from . import figures
        metric, _ = _metric_name(spec)
        fig_path = os.path.join(spec.out, f"fig_sweep_{axis}.png")
        series = {}
        for m in spec.methods:
            means = [float(np.mean(finals[(v, m)])) for v in values]
            stds = [float(np.std(finals[(v, m)])) for v in values]
            series[m] = (values, means, stds)
        figures.fig_sweep(fig_path, series, xlabel=axis, ylabel=f"final {metric}")
        figure_paths.append(fig_path)
    return {"csv": csv_path, "figures": figure_paths, "finals": finals}


def cmd_dump_discriminator(spec: ExperimentSpec, snapshot_epochs) -> dict:
    """Confidence snapshots of flexssl runs: per-sample CSV + histogram JSON."""
    if tuple(spec.methods) != ("flexssl",):
        raise SpecError("dump-discriminator runs the flexssl method only")
    snaps = sorted(set(int(e) for e in snapshot_epochs))
    if not snaps:
        raise SpecError("at least one snapshot epoch is required")
    bad = [e for e in snaps if e < 0 or e > spec.game.epochs]
    if bad:
        raise SpecError(f"snapshot epochs {bad} outside [0, {spec.game.epochs}]")
    os.makedirs(spec.out, exist_ok=True)

    jobs = [(lambda s=s: run_single(spec, "flexssl", s, snapshot_epochs=snaps))
            for s in spec.seeds]
    outcomes = run_pool(jobs, spec.workers)

    sample_paths, hist_paths, figure_paths = [], [], []
    edges = np.linspace(0.0, 1.0, 21)
    for seed, (result, ds) in zip(spec.seeds, outcomes):
        noisy = np.zeros(ds.n, dtype=int)
        noisy[ds.noisy_idx] = 1
        for epoch in snaps:
            p = result.snapshots[epoch]
            spath = os.path.join(spec.out, f"p_samples_s{seed}_e{epoch}.csv")
            lines = ["index,p,observed,noisy"]
            for i in range(ds.n):
                lines.append(f"{i},{repr(float(p[i]))},{ds.mask[i]},{noisy[i]}")
            with open(spath, "w", newline="") as fh:
                fh.write("\n".join(lines) + "\n")
            sample_paths.append(spath)

            counts, _ = np.histogram(p, bins=edges)
            hpath = os.path.join(spec.out, f"p_hist_s{seed}_e{epoch}.json")
            with open(hpath, "w") as fh:
                json.dump({"seed": seed, "epoch": epoch,
                           "bin_edges": edges.tolist(),
                           "counts": counts.tolist()}, fh, indent=2)
            hist_paths.append(hpath)
        if spec.figures:
            from . import figures
            fig_path = os.path.join(spec.out, f"fig_p_hist_s{seed}.png")
            figures.fig_confidence_hists(
                fig_path, [(e, result.snapshots[e]) for e in snaps],
                ds.mask, noisy, edges)
            figure_paths.append(fig_path)
    return {"samples": sample_paths, "histograms": hist_paths,
            "figures": figure_paths}
