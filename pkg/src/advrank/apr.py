"""Adversarial training for pairwise ranking.

Each step alternates two moves on the same batch. First a fast-gradient
perturbation is built against the current parameters: the gradient of the
pairwise loss with respect to each touched factor row is accumulated across
the batch (items appearing as positive and negative contribute to the same
row) and rescaled so every nonzero row has norm exactly ``epsilon``. Then
the parameters take a descent step on

    pairwise loss + lambda_adv * pairwise loss at (params + delta)

with the perturbation held fixed, so the model is pulled toward rankings
that survive the worst local weight noise. With ``lambda_adv = 0`` the step
reduces exactly, bit for bit, to the plain pairwise step.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np
from scipy.special import expit

from .bpr import (
    BatchGradients,
    LogFn,
    Optimizer,
    TrainConfig,
    TrainResult,
    _accumulate,
    _collapse,
    _fit,
    _instance_terms,
    softplus,
)
from .data import InteractionDataset, TripletBatch
from .model import FactorModel, PerturbationField, init_model
from .rng import named_rng


@dataclass
class AprConfig:
    """Adversarial-phase settings on top of a base :class:`TrainConfig`.

    ``patience`` stops training once the validation metric has not improved
    for that many epochs (requires validation data; None disables).
    """

    base: TrainConfig = dataclass_field(default_factory=TrainConfig)
    epsilon: float = 0.5
    lambda_adv: float = 1.0
    patience: int | None = 20

    def __post_init__(self) -> None:
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.lambda_adv < 0:
            raise ValueError("lambda_adv must be >= 0")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be >= 1 or None")


def _raw_adv_rows(
    model: FactorModel, batch: TripletBatch
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Unnormalized loss gradients per unique entity row touched by ``batch``.

    Returns (users, user_rows, items, item_rows); each row is the summed
    gradient of the pairwise loss, the local direction of steepest loss
    increase for that entity.
    """
    pu = model.user_vecs[batch.users]
    qi = model.item_vecs[batch.pos_items]
    qj = model.item_vecs[batch.neg_items]
    diff = qi - qj
    x = np.einsum("kd,kd->k", pu, diff)
    coeff = expit(x) - 1.0
    g_pu = coeff[:, None] * diff
    g_qi = coeff[:, None] * pu
    g_qj = -(coeff[:, None] * pu)
    users, user_rows = _accumulate(batch.users, g_pu)
    items, item_rows = _accumulate(
        np.concatenate([batch.pos_items, batch.neg_items]),
        np.concatenate([g_qi, g_qj]),
    )
    return users, user_rows, items, item_rows


def _scale_rows(rows: np.ndarray, epsilon: float) -> np.ndarray:
    """Rescale each row to norm ``epsilon``; zero rows stay zero."""
    norms = np.linalg.norm(rows, axis=1)
    out = np.zeros_like(rows)
    nz = norms > 0.0
    out[nz] = rows[nz] * (epsilon / norms[nz])[:, None]
    return out


def _compact_adv(
    model: FactorModel, batch: TripletBatch, epsilon: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Fast-gradient perturbation rows, compact form (users, du, items, di)."""
    users, user_rows, items, item_rows = _raw_adv_rows(model, batch)
    return users, _scale_rows(user_rows, epsilon), items, _scale_rows(item_rows, epsilon)


def build_adv_perturbations(
    model: FactorModel, batch: TripletBatch, epsilon: float
) -> PerturbationField:
    """Worst-direction perturbation field for ``batch`` at the current model.

    The direction is the batch-summed loss gradient per entity row, scaled to
    norm ``epsilon``; rows with zero gradient are left unperturbed. The
    adversarial weight scales this gradient uniformly, so the direction is
    independent of it.
    """
    users, du, items, di = _compact_adv(model, batch, epsilon)
    user_deltas = {int(u): du[k] for k, u in enumerate(users) if du[k].any()}
    item_deltas = {int(i): di[k] for k, i in enumerate(items) if di[k].any()}
    return PerturbationField(user_deltas, item_deltas, epsilon)


def _gather_field(
    field: PerturbationField, batch: TripletBatch, n_factors: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-instance delta rows (du, di, dj) from a sparse field."""
    n = len(batch)
    du = np.zeros((n, n_factors))
    di = np.zeros((n, n_factors))
    dj = np.zeros((n, n_factors))
    for k in range(n):
        v = field.user_deltas.get(int(batch.users[k]))
        if v is not None:
            du[k] = v
        v = field.item_deltas.get(int(batch.pos_items[k]))
        if v is not None:
            di[k] = v
        v = field.item_deltas.get(int(batch.neg_items[k]))
        if v is not None:
            dj[k] = v
    return du, di, dj


def apr_batch_loss(
    model: FactorModel,
    batch: TripletBatch,
    lambda_reg: float,
    lambda_adv: float,
    field: PerturbationField,
) -> float:
    """Scalar batch objective with a frozen perturbation field."""
    pu, qi, qj, x, loss_vec, _, _, _ = _instance_terms(model, batch, lambda_reg)
    if lambda_adv > 0.0:
        du, di, dj = _gather_field(field, batch, model.n_factors)
        x_adv = np.einsum("kd,kd->k", pu + du, (qi + di) - (qj + dj))
        loss_vec = loss_vec + lambda_adv * softplus(-x_adv)
    return float(loss_vec.mean())


def apr_batch_gradients(
    model: FactorModel,
    batch: TripletBatch,
    lambda_reg: float,
    lambda_adv: float,
    epsilon: float,
    field: PerturbationField | None = None,
) -> tuple[BatchGradients, float | None]:
    """Gradients of the adversarially regularized batch objective.

    The perturbation is treated as a constant: it is rebuilt from the current
    parameters when ``field`` is None, but its dependence on the parameters
    is not differentiated through. Returns the gradients and the mean rise
    in pairwise loss caused by the perturbation (None when ``lambda_adv``
    is zero, in which case the result matches the plain pairwise gradients
    exactly).
    """
    pu, qi, qj, x, loss_vec, g_pu, g_qi, g_qj = _instance_terms(model, batch, lambda_reg)
    gain = None
    if lambda_adv > 0.0:
        if field is None:
            users, du_rows, items, di_rows = _compact_adv(model, batch, epsilon)
            du = du_rows[np.searchsorted(users, batch.users)]
            di = di_rows[np.searchsorted(items, batch.pos_items)]
            dj = di_rows[np.searchsorted(items, batch.neg_items)]
        else:
            du, di, dj = _gather_field(field, batch, model.n_factors)
        pu_adv = pu + du
        diff_adv = (qi + di) - (qj + dj)
        x_adv = np.einsum("kd,kd->k", pu_adv, diff_adv)
        coeff_adv = lambda_adv * (expit(x_adv) - 1.0)
        g_pu = g_pu + coeff_adv[:, None] * diff_adv
        g_qi = g_qi + coeff_adv[:, None] * pu_adv
        g_qj = g_qj - coeff_adv[:, None] * pu_adv
        adv_vec = softplus(-x_adv)
        loss_vec = loss_vec + lambda_adv * adv_vec
        gain = float(adv_vec.mean() - softplus(-x).mean())
    return _collapse(batch, loss_vec, g_pu, g_qi, g_qj), gain


def apr_batch_step(
    model: FactorModel,
    batch: TripletBatch,
    optimizer: Optimizer,
    lambda_reg: float,
    lambda_adv: float,
    epsilon: float,
) -> tuple[float, float | None]:
    """One adversarial training step in place.

    Returns (batch loss, mean pairwise-loss rise under the perturbation).
    """
    grads, gain = apr_batch_gradients(model, batch, lambda_reg, lambda_adv, epsilon)
    optimizer.step(model, grads)
    return grads.loss, gain


def train_apr(
    train: InteractionDataset,
    config: AprConfig,
    validation: dict[int, int] | None = None,
    start: FactorModel | None = None,
    log: LogFn | None = None,
) -> TrainResult:
    """Adversarial training phase, normally continuing from a converged
    pairwise model passed as ``start`` (copied, not modified).

    The optimizer state starts fresh: the squared-gradient history of any
    earlier phase does not carry over.
    """
    base = config.base
    if start is None:
        model = init_model(
            train.n_users, train.n_items, base.factors, named_rng(base.seed, "init")
        )
    else:
        if start.n_users != train.n_users or start.n_items != train.n_items:
            raise ValueError("start model shape does not match the training data")
        model = start.copy()

    def step(m: FactorModel, batch: TripletBatch, opt: Optimizer) -> tuple[float, float | None]:
        return apr_batch_step(m, batch, opt, base.lambda_reg, config.lambda_adv, config.epsilon)

    return _fit(
        train,
        model,
        base,
        "apr",
        step,
        validation=validation,
        patience=config.patience,
        log=log,
    )
