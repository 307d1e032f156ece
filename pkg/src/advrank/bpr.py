"""Pairwise ranking training: objective, gradients, optimizers, fit loop.

The per-instance loss for a triplet (u, i, j) is

    -ln sigmoid(x_uij) + lambda_reg * (|p_u|^2 + |q_i|^2 + |q_j|^2)

with x_uij = p_u . (q_i - q_j). A batch objective is the mean of its
per-instance losses; gradient contributions of instances sharing a row are
summed into one update per touched row, so an item appearing as both a
positive and a negative in the same batch gets a single combined step.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit

from .data import InteractionDataset, TripletBatch, sample_batch
from .model import FactorModel, init_model
from .rng import named_rng


class TrainingDiverged(RuntimeError):
    """Raised when gradients or parameters stop being finite."""


def softplus(x: np.ndarray | float) -> np.ndarray | float:
    """-ln sigmoid(-x), computed without overflow for large |x|."""
    return np.logaddexp(0.0, x)


@dataclass
class TrainConfig:
    """Knobs for pairwise training.

    ``eval_interval`` controls how often validation ranking metrics are
    computed (in epochs); the final epoch is always evaluated.
    """

    factors: int = 64
    eta: float = 0.05
    lambda_reg: float = 1e-5
    batch_size: int = 512
    epochs: int = 100
    optimizer: str = "adagrad"
    seed: int = 0
    eval_interval: int = 10
    eval_cutoff: int = 100

    def __post_init__(self) -> None:
        if self.factors < 1:
            raise ValueError("factors must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.eval_interval < 1:
            raise ValueError("eval_interval must be >= 1")
        if self.lambda_reg < 0:
            raise ValueError("lambda_reg must be >= 0")
        if self.optimizer not in ("adagrad", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class EpochRecord:
    epoch: int
    stage: str
    loss: float
    val_hr: float | None
    val_ndcg: float | None
    emb_norm: float
    seconds: float
    adv_gain: float | None = None


@dataclass
class TrainResult:
    """Final parameters plus the best-validation snapshot and epoch log."""

    model: FactorModel
    history: list[EpochRecord]
    best_model: FactorModel | None = None
    best_metric: float | None = None
    best_epoch: int | None = None


@dataclass
class BatchGradients:
    """Mean-loss gradients collapsed to one row per touched entity."""

    users: np.ndarray
    user_grads: np.ndarray
    items: np.ndarray
    item_grads: np.ndarray
    loss: float


def _instance_terms(
    model: FactorModel, batch: TripletBatch, lambda_reg: float
) -> tuple[np.ndarray, ...]:
    """Per-instance losses and gradients of the pairwise objective.

    Returns (pu, qi, qj, x, loss_vec, g_pu, g_qi, g_qj); the gathered factor
    rows are handed back so callers can build on them without re-indexing.
    """
    pu = model.user_vecs[batch.users]
    qi = model.item_vecs[batch.pos_items]
    qj = model.item_vecs[batch.neg_items]
    diff = qi - qj
    x = np.einsum("kd,kd->k", pu, diff)
    coeff = expit(x) - 1.0
    loss_vec = softplus(-x) + lambda_reg * (
        np.einsum("kd,kd->k", pu, pu)
        + np.einsum("kd,kd->k", qi, qi)
        + np.einsum("kd,kd->k", qj, qj)
    )
    two_reg = 2.0 * lambda_reg
    g_pu = coeff[:, None] * diff + two_reg * pu
    g_qi = coeff[:, None] * pu + two_reg * qi
    g_qj = -(coeff[:, None] * pu) + two_reg * qj
    return pu, qi, qj, x, loss_vec, g_pu, g_qi, g_qj


def _accumulate(indices: np.ndarray, per_instance: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sum per-instance gradient rows into one row per unique index."""
    uniq, inv = np.unique(indices, return_inverse=True)
    grads = np.zeros((uniq.size, per_instance.shape[1]))
    np.add.at(grads, inv, per_instance)
    return uniq, grads


def _collapse(
    batch: TripletBatch,
    loss_vec: np.ndarray,
    g_pu: np.ndarray,
    g_qi: np.ndarray,
    g_qj: np.ndarray,
) -> BatchGradients:
    n = len(batch)
    users, user_grads = _accumulate(batch.users, g_pu)
    items, item_grads = _accumulate(
        np.concatenate([batch.pos_items, batch.neg_items]),
        np.concatenate([g_qi, g_qj]),
    )
    user_grads /= n
    item_grads /= n
    return BatchGradients(users, user_grads, items, item_grads, float(loss_vec.mean()))


def bpr_batch_loss(model: FactorModel, batch: TripletBatch, lambda_reg: float) -> float:
    """The scalar batch objective matching :func:`bpr_batch_gradients`."""
    _, _, _, _, loss_vec, _, _, _ = _instance_terms(model, batch, lambda_reg)
    return float(loss_vec.mean())


def bpr_batch_gradients(
    model: FactorModel, batch: TripletBatch, lambda_reg: float
) -> BatchGradients:
    _, _, _, _, loss_vec, g_pu, g_qi, g_qj = _instance_terms(model, batch, lambda_reg)
    return _collapse(batch, loss_vec, g_pu, g_qi, g_qj)


class SgdOptimizer:
    """Plain SGD on the touched rows."""

    def __init__(self, model: FactorModel, eta: float):
        self.eta = eta

    def step(self, model: FactorModel, grads: BatchGradients) -> None:
        _check_finite(grads)
        model.user_vecs[grads.users] -= self.eta * grads.user_grads
        model.item_vecs[grads.items] -= self.eta * grads.item_grads


class AdagradOptimizer:
    """Per-coordinate Adagrad; the squared-gradient accumulator lives for
    the whole training phase and is never reset between epochs."""

    def __init__(self, model: FactorModel, eta: float, eps: float = 1e-8):
        self.eta = eta
        self.eps = eps
        self.acc_user = np.zeros_like(model.user_vecs)
        self.acc_item = np.zeros_like(model.item_vecs)

    def step(self, model: FactorModel, grads: BatchGradients) -> None:
        _check_finite(grads)
        acc = self.acc_user[grads.users] + grads.user_grads**2
        self.acc_user[grads.users] = acc
        model.user_vecs[grads.users] -= self.eta * grads.user_grads / np.sqrt(acc + self.eps)
        acc = self.acc_item[grads.items] + grads.item_grads**2
        self.acc_item[grads.items] = acc
        model.item_vecs[grads.items] -= self.eta * grads.item_grads / np.sqrt(acc + self.eps)


Optimizer = SgdOptimizer | AdagradOptimizer


def _check_finite(grads: BatchGradients) -> None:
    if not (np.isfinite(grads.user_grads).all() and np.isfinite(grads.item_grads).all()):
        raise TrainingDiverged("non-finite gradient")


def make_optimizer(config: TrainConfig, model: FactorModel) -> Optimizer:
    if config.optimizer == "sgd":
        return SgdOptimizer(model, config.eta)
    return AdagradOptimizer(model, config.eta)


def bpr_batch_step(
    model: FactorModel,
    batch: TripletBatch,
    optimizer: Optimizer,
    lambda_reg: float,
) -> float:
    """One in-place training step; returns the batch loss before the update."""
    grads = bpr_batch_gradients(model, batch, lambda_reg)
    optimizer.step(model, grads)
    return grads.loss


StepFn = Callable[[FactorModel, TripletBatch, Optimizer], tuple[float, float | None]]
LogFn = Callable[[EpochRecord], None]


def _fit(
    train: InteractionDataset,
    model: FactorModel,
    config: TrainConfig,
    stage: str,
    step_fn: StepFn,
    validation: dict[int, int] | None = None,
    patience: int | None = None,
    log: LogFn | None = None,
) -> TrainResult:
    """Shared epoch loop: sample batches, step, track validation bests.

    The batch sampler stream depends only on (seed, training data), so two
    phases started from the same seed see the same batch sequence.
    """
    from . import evaluate as _ev

    rng = named_rng(config.seed, "sampler")
    n_batches = max(1, math.ceil(train.n_interactions / config.batch_size))
    optimizer = make_optimizer(config, model)
    history: list[EpochRecord] = []
    best_model: FactorModel | None = None
    best_metric = -np.inf
    best_epoch: int | None = None

    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        loss_sum = 0.0
        gain_sum = 0.0
        gain_seen = False
        for batch_no in range(n_batches):
            batch = sample_batch(train, config.batch_size, rng)
            try:
                loss, gain = step_fn(model, batch, optimizer)
            except TrainingDiverged as exc:
                raise TrainingDiverged(
                    f"epoch {epoch} batch {batch_no + 1}: {exc}"
                ) from None
            loss_sum += loss
            if gain is not None:
                gain_sum += gain
                gain_seen = True

        val_hr = val_ndcg = None
        if validation and (epoch % config.eval_interval == 0 or epoch == config.epochs):
            report = _ev.evaluate_model(
                model, train, validation, cutoffs=(config.eval_cutoff,)
            )
            val_hr = report.hr[config.eval_cutoff]
            val_ndcg = report.ndcg[config.eval_cutoff]
            if val_ndcg > best_metric:
                best_metric = val_ndcg
                best_model = model.copy()
                best_epoch = epoch

        record = EpochRecord(
            epoch=epoch,
            stage=stage,
            loss=loss_sum / n_batches,
            val_hr=val_hr,
            val_ndcg=val_ndcg,
            emb_norm=model.embedding_norm(),
            seconds=time.perf_counter() - started,
            adv_gain=(gain_sum / n_batches) if gain_seen else None,
        )
        history.append(record)
        if log is not None:
            log(record)
        if (
            patience is not None
            and best_epoch is not None
            and epoch - best_epoch >= patience
        ):
            break

    return TrainResult(
        model=model,
        history=history,
        best_model=best_model,
        best_metric=None if best_epoch is None else best_metric,
        best_epoch=best_epoch,
    )


def train_bpr(
    train: InteractionDataset,
    config: TrainConfig,
    validation: dict[int, int] | None = None,
    start: FactorModel | None = None,
    log: LogFn | None = None,
) -> TrainResult:
    """Train a factor model with the pairwise objective.

    ``start`` continues from existing parameters (they are copied, not
    modified); otherwise factors are freshly initialized from the config
    seed.
    """
    if start is None:
        model = init_model(
            train.n_users, train.n_items, config.factors, named_rng(config.seed, "init")
        )
    else:
        if start.n_users != train.n_users or start.n_items != train.n_items:
            raise ValueError("start model shape does not match the training data")
        model = start.copy()

    def step(m: FactorModel, batch: TripletBatch, opt: Optimizer) -> tuple[float, float | None]:
        return bpr_batch_step(m, batch, opt, config.lambda_reg), None

    return _fit(train, model, config, "bpr", step, validation=validation, log=log)


def write_history(path, history: list[EpochRecord], cutoff: int = 100) -> None:
    """Write the epoch log as CSV.

    The adversarial-gain column is included only when some record has it;
    optional fields render as empty cells. Floats use shortest round-trip
    formatting so identical runs produce identical files.
    """
    from pathlib import Path

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with_gain = any(r.adv_gain is not None for r in history)
    cols = [
        "epoch",
        "stage",
        "loss",
        f"val_hr@{cutoff}",
        f"val_ndcg@{cutoff}",
        "emb_norm",
        "seconds",
    ]
    if with_gain:
        cols.append("mean_batch_ladv_gain")

    def cell(value: float | None) -> str:
        return "" if value is None else repr(value)

    with open(path, "w", encoding="utf-8") as handle:
        handle.write(",".join(cols) + "\n")
        for r in history:
            row = [
                str(r.epoch),
                r.stage,
                repr(r.loss),
                cell(r.val_hr),
                cell(r.val_ndcg),
                repr(r.emb_norm),
                repr(r.seconds),
            ]
            if with_gain:
                row.append(cell(r.adv_gain))
            handle.write(",".join(row) + "\n")
