"""Main task model and label-observability discriminator.

The main model is a relu MLP with a softmax head for classification or an
identity head for regression. The discriminator embeds X and the prediction
Yhat with two equal-width extractors, fuses them by elementwise product,
appends the per-sample main-task loss as one extra column, and maps the
result through a single affine + sigmoid head.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tensor

# Sigmoid saturates to exactly 0.0/1.0 in float64 for |logit| around 37;
# the head output is clamped to keep every p strictly inside (0, 1).
P_EPS = 1e-12


@dataclass(frozen=True)
class TaskKind:
    """Either classification over k classes or regression to out_dim values."""

    kind: str
    out_dim: int

    def __post_init__(self):
        if self.kind not in ("classification", "regression"):
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.kind == "classification" and self.out_dim < 2:
            raise ValueError(f"classification needs >= 2 classes, got {self.out_dim}")
        if self.kind == "regression" and self.out_dim < 1:
            raise ValueError(f"regression needs out_dim >= 1, got {self.out_dim}")

    @staticmethod
    def classification(k: int) -> "TaskKind":
        return TaskKind("classification", k)

    @staticmethod
    def regression(out_dim: int) -> "TaskKind":
        return TaskKind("regression", out_dim)

    @property
    def is_classification(self) -> bool:
        return self.kind == "classification"


class MainModel:
    """Relu MLP whose head matches the task: softmax rows or identity."""

    def __init__(self, task: TaskKind, input_dim: int, hidden: tuple[int, ...],
                 params: ParamStore, input_dropout: float = 0.0):
        self.task = task
        self.input_dim = input_dim
        self.hidden = tuple(hidden)
        self.params = params
        self.input_dropout = input_dropout

    def n_params(self) -> int:
        return self.params.n_scalars()


def build_main_model(task: TaskKind, input_dim: int, hidden_widths,
                     seed: int, input_dropout: float = 0.0) -> MainModel:
    """Fan-in-scaled normal init (weights ~ N(0, sqrt(2/fan_in)), zero biases)."""
    hidden = tuple(int(w) for w in hidden_widths)
    if input_dim < 1:
        raise ValueError(f"input_dim must be >= 1, got {input_dim}")
    if any(w < 1 for w in hidden):
        raise ValueError(f"hidden widths must be positive, got {hidden}")
    if not 0.0 <= input_dropout < 1.0:
        raise ValueError(f"input_dropout must lie in [0, 1), got {input_dropout}")
    rng = np.random.default_rng(seed)
    params = ParamStore()
    dims = (input_dim,) + hidden + (task.out_dim,)
    for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
        params.add(f"w{i}", rng.normal(0.0, math.sqrt(2.0 / d_in), size=(d_in, d_out)))
        params.add(f"b{i}", np.zeros(d_out))
    return MainModel(task, input_dim, hidden, params, input_dropout)


def forward_main(model: MainModel, x, *, dropout_rng: np.random.Generator | None = None) -> Tensor:
    """Run the main model on a batch; rows sum to 1 for classification.

    Input dropout is applied only when a dropout generator is supplied
    (training passes); evaluation passes leave the input untouched.
    """
    xt = x if isinstance(x, Tensor) else Tensor(x)
    if xt.ndim != 2 or xt.shape[1] != model.input_dim:
        raise ValueError(f"expected input shape (n, {model.input_dim}), got {xt.shape}")
    h = xt
    if model.input_dropout > 0.0 and dropout_rng is not None:
        keep = 1.0 - model.input_dropout
        drop_mask = (dropout_rng.random(h.shape) < keep) / keep
        h = h * Tensor(drop_mask)
    n_layers = len(model.hidden) + 1
    for i in range(n_layers):
        h = ad.affine(h, model.params[f"w{i}"], model.params[f"b{i}"])
        if i < n_layers - 1:
            h = ad.relu(h)
    if model.task.is_classification:
        h = ad.softmax_rows(h)
    return h


class Discriminator:
    """Two-stream embedding network scoring label observability in (0, 1)."""

    def __init__(self, input_dim: int, out_dim: int, emb_width: int, params: ParamStore):
        if params["xw"].shape[1] != params["yw"].shape[1]:
            raise ValueError(f"extractor widths must match for the elementwise fusion, "
                             f"got {params['xw'].shape[1]} and {params['yw'].shape[1]}")
        self.input_dim = input_dim
        self.out_dim = out_dim
        self.emb_width = emb_width
        self.params = params

    def n_params(self) -> int:
        return self.params.n_scalars()


def build_discriminator(input_dim: int, out_dim: int, emb_width: int, seed: int) -> Discriminator:
    """One relu layer per input stream, fused, plus a single sigmoid head unit."""
    if input_dim < 1 or out_dim < 1 or emb_width < 1:
        raise ValueError(f"dims must be positive, got input_dim={input_dim}, "
                         f"out_dim={out_dim}, emb_width={emb_width}")
    rng = np.random.default_rng(seed)
    params = ParamStore()
    params.add("xw", rng.normal(0.0, math.sqrt(2.0 / input_dim), size=(input_dim, emb_width)))
    params.add("xb", np.zeros(emb_width))
    params.add("yw", rng.normal(0.0, math.sqrt(2.0 / out_dim), size=(out_dim, emb_width)))
    params.add("yb", np.zeros(emb_width))
    params.add("fw", rng.normal(0.0, math.sqrt(2.0 / (emb_width + 1)), size=(emb_width + 1, 1)))
    params.add("fb", np.zeros(1))
    return Discriminator(input_dim, out_dim, emb_width, params)


def forward_discriminator(disc: Discriminator, x, y_hat, g) -> Tensor:
    """Score each row's label observability; output is strictly inside (0, 1).

    All three inputs are taken as constants: no gradient flows back into the
    model that produced y_hat or g.
    """
    xv = np.asarray(x.values if isinstance(x, Tensor) else x, dtype=np.float64)
    yv = np.asarray(y_hat.values if isinstance(y_hat, Tensor) else y_hat, dtype=np.float64)
    gv = np.asarray(g.values if isinstance(g, Tensor) else g, dtype=np.float64)
    if gv.ndim == 1:
        gv = gv.reshape(-1, 1)
    n = xv.shape[0]
    if xv.ndim != 2 or xv.shape[1] != disc.input_dim:
        raise ValueError(f"expected x shape (n, {disc.input_dim}), got {xv.shape}")
    if yv.shape != (n, disc.out_dim):
        raise ValueError(f"expected y_hat shape ({n}, {disc.out_dim}), got {yv.shape}")
    if gv.shape != (n, 1):
        raise ValueError(f"expected g shape ({n}, 1), got {gv.shape}")

    p = disc.params
    ex = ad.relu(ad.affine(Tensor(xv), p["xw"], p["xb"]))
    ey = ad.relu(ad.affine(Tensor(yv), p["yw"], p["yb"]))
    fused = ad.hadamard(ex, ey)
    z = ad.concat_cols([fused, Tensor(gv)])
    out = ad.sigmoid(ad.affine(z, p["fw"], p["fb"]))
    return ad.clip(out, P_EPS, 1.0 - P_EPS)


def _params_to_json(params: ParamStore) -> dict:
    return {name: {"shape": list(t.values.shape), "values": t.values.reshape(-1).tolist()}
            for name, t in params.items()}


def _params_from_json(blob: dict) -> ParamStore:
    params = ParamStore()
    for name, entry in blob.items():
        values = np.asarray(entry["values"], dtype=np.float64).reshape(entry["shape"])
        params.add(name, values)
    return params


def save_model_json(model, path) -> None:
    """Serialize a MainModel or Discriminator; the round trip is value-exact."""
    if isinstance(model, MainModel):
        doc = {"kind": "main",
               "task": {"kind": model.task.kind, "out_dim": model.task.out_dim},
               "input_dim": model.input_dim,
               "hidden": list(model.hidden),
               "input_dropout": model.input_dropout,
               "params": _params_to_json(model.params)}
    elif isinstance(model, Discriminator):
        doc = {"kind": "discriminator",
               "input_dim": model.input_dim,
               "out_dim": model.out_dim,
               "emb_width": model.emb_width,
               "params": _params_to_json(model.params)}
    else:
        raise ValueError(f"cannot serialize {type(model).__name__}")
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model_json(path):
    """Load whichever model kind the file holds."""
    with open(path) as fh:
        doc = json.load(fh)
    kind = doc.get("kind")
    if kind == "main":
        task = TaskKind(doc["task"]["kind"], doc["task"]["out_dim"])
        return MainModel(task, doc["input_dim"], tuple(doc["hidden"]),
                         _params_from_json(doc["params"]), doc["input_dropout"])
    if kind == "discriminator":
        return Discriminator(doc["input_dim"], doc["out_dim"], doc["emb_width"],
                             _params_from_json(doc["params"]))
    raise ValueError(f"{path}: unknown model kind {kind!r}")
