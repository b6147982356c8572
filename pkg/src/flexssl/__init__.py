"""Semi-supervised learning lab: discriminator-weighted soft labeling plus
supervised and self-training baselines, on a small reverse-mode autodiff core.
"""
from .autodiff import ParamStore, Tensor, adam_step, backward, finite_diff_check, no_grad
from .baselines import SelfTrainConfig, train_self_training, train_supervised
from .data import (SemiDataset, apply_missing, gen_tabular_regression,
                   gen_two_moons, inject_label_noise, load_csv, save_csv)
from .game import (GameConfig, LossVariant, PseudoState, discriminator_loss,
                   elementwise_loss_A, init_pseudo_labels, main_loss,
                   refresh_pseudo_labels, run_game, soft_weights, train_epoch)
from .metrics import DivergenceError, EpochMetrics, RunResult, rank_auc
from .models import (Discriminator, MainModel, TaskKind, build_discriminator,
                     build_main_model, forward_discriminator, forward_main,
                     load_model_json, save_model_json)

__version__ = "0.1.0"

__all__ = [
    "ParamStore", "Tensor", "adam_step", "backward", "finite_diff_check", "no_grad",
    "SelfTrainConfig", "train_self_training", "train_supervised",
    "SemiDataset", "apply_missing", "gen_tabular_regression", "gen_two_moons",
    "inject_label_noise", "load_csv", "save_csv",
    "GameConfig", "LossVariant", "PseudoState", "discriminator_loss",
    "elementwise_loss_A", "init_pseudo_labels", "main_loss",
    "refresh_pseudo_labels", "run_game", "soft_weights", "train_epoch",
    "DivergenceError", "EpochMetrics", "RunResult", "rank_auc",
    "Discriminator", "MainModel", "TaskKind", "build_discriminator",
    "build_main_model", "forward_discriminator", "forward_main",
    "load_model_json", "save_model_json",
    "__version__",
]
