"""Parameter-perturbation robustness probe.

The probe fixes a set of evaluation triplets (one per training interaction),
then measures how much ranking quality degrades when every touched factor
row is shifted by a norm-``epsilon`` offset, comparing two ways of picking
the direction: uniform random on the sphere, and the worst local direction
given by the loss gradient. A robust model should barely move under random
noise and degrade gracefully under the adversarial direction; a brittle one
shows a large gap between the two.

Directions are drawn once per repeat and rescaled across the epsilon grid,
so adding grid points never changes which directions are tested.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .apr import _raw_adv_rows, _scale_rows
from .data import InteractionDataset, TripletBatch, sample_negatives, sample_reduced_set
from .evaluate import evaluate_model
from .model import FactorModel, PerturbationField
from .rng import named_rng


@dataclass
class ProbeRow:
    epsilon: float
    mode: str
    repeat: int
    hr: float
    ndcg: float
    train_acc: float
    ndcg_drop_pct: float


@dataclass
class ProbeResult:
    rows: list[ProbeRow]
    baseline_hr: float
    baseline_ndcg: float
    baseline_acc: float
    cutoff: int


def triplet_accuracy(model: FactorModel, batch: TripletBatch) -> float:
    """Fraction of triplets whose positive outscores its negative."""
    margins = model.triplet_margins(batch.users, batch.pos_items, batch.neg_items)
    return float(np.mean(margins > 0.0))


def _unit_rows(rng: np.random.Generator, count: int, n_factors: int) -> np.ndarray:
    """Rows drawn uniformly from the unit sphere."""
    rows = rng.standard_normal((count, n_factors))
    norms = np.linalg.norm(rows, axis=1)
    while (norms == 0.0).any():
        redo = norms == 0.0
        rows[redo] = rng.standard_normal((int(redo.sum()), n_factors))
        norms = np.linalg.norm(rows, axis=1)
    return rows / norms[:, None]


def _touched_entities(batch: TripletBatch) -> tuple[np.ndarray, np.ndarray]:
    users = np.unique(batch.users)
    items = np.unique(np.concatenate([batch.pos_items, batch.neg_items]))
    return users, items


def random_perturbations(
    model: FactorModel,
    batch: TripletBatch,
    epsilon: float,
    rng: np.random.Generator,
) -> PerturbationField:
    """Independent random directions of norm ``epsilon`` on every factor row
    the batch touches; rows the batch never uses stay unperturbed, matching
    the footprint of the adversarial construction."""
    users, items = _touched_entities(batch)
    user_rows = _unit_rows(rng, users.size, model.n_factors) * epsilon
    item_rows = _unit_rows(rng, items.size, model.n_factors) * epsilon
    return PerturbationField(
        {int(u): user_rows[k] for k, u in enumerate(users)},
        {int(i): item_rows[k] for k, i in enumerate(items)},
        epsilon,
    )


def _field_from_compact(
    users: np.ndarray, du: np.ndarray, items: np.ndarray, di: np.ndarray, epsilon: float
) -> PerturbationField:
    return PerturbationField(
        {int(u): du[k] for k, u in enumerate(users)},
        {int(i): di[k] for k, i in enumerate(items)},
        epsilon,
    )


def adversarial_perturbations(
    model: FactorModel, batch: TripletBatch, epsilon: float
) -> PerturbationField:
    """Loss-gradient direction per entity over the whole probe set, scaled to
    norm ``epsilon``. Deterministic given the model and batch."""
    users, gu, items, gi = _raw_adv_rows(model, batch)
    return _field_from_compact(
        users, _scale_rows(gu, epsilon), items, _scale_rows(gi, epsilon), epsilon
    )


def probe_sweep(
    model: FactorModel,
    train: InteractionDataset,
    test: dict[int, int],
    epsilons: list[float],
    repeats: int = 1,
    seed: int = 0,
    cutoff: int = 100,
    modes: tuple[str, ...] = ("random", "adversarial"),
    fresh_negatives: bool = False,
    n_threads: int | None = None,
) -> ProbeResult:
    """Measure metric degradation across a perturbation-size grid.

    The probe triplet set pairs every training interaction with one sampled
    negative and is shared by all modes, sizes, and repeats. Random-mode
    rows vary by ``repeat``; the adversarial direction is deterministic, so
    it is evaluated once per size (repeat 0). ``ndcg_drop_pct`` is relative
    to the unperturbed model. With ``fresh_negatives`` the accuracy of each
    repeat uses its own negative sample instead of the shared one.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    for mode in modes:
        if mode not in ("random", "adversarial"):
            raise ValueError(f"unknown probe mode {mode!r}")
    eps_values = [float(e) for e in epsilons]
    if any(e < 0 for e in eps_values):
        raise ValueError("epsilon must be >= 0")

    probe_set = sample_reduced_set(train, named_rng(seed, "probe", "triplets"))
    base_report = evaluate_model(model, train, test, cutoffs=(cutoff,), n_threads=n_threads)
    base_hr = base_report.hr[cutoff]
    base_ndcg = base_report.ndcg[cutoff]
    base_acc = triplet_accuracy(model, probe_set)

    # unit directions per repeat, reused across the epsilon grid
    users, items = _touched_entities(probe_set)
    random_dirs = []
    acc_batches = []
    for r in range(repeats):
        rng = named_rng(seed, "probe", "repeat", r)
        random_dirs.append(
            (
                _unit_rows(rng, users.size, model.n_factors),
                _unit_rows(rng, items.size, model.n_factors),
            )
        )
        if fresh_negatives:
            neg = sample_negatives(train, probe_set.users, named_rng(seed, "probe", "neg", r))
            acc_batches.append(
                TripletBatch(probe_set.users, probe_set.pos_items, neg)
            )
        else:
            acc_batches.append(probe_set)
    adv_users, adv_gu, adv_items, adv_gi = _raw_adv_rows(model, probe_set)

    def measure(field: PerturbationField, acc_batch: TripletBatch) -> tuple[float, float, float]:
        perturbed = field.apply(model)
        report = evaluate_model(perturbed, train, test, cutoffs=(cutoff,), n_threads=n_threads)
        return report.hr[cutoff], report.ndcg[cutoff], triplet_accuracy(perturbed, acc_batch)

    rows: list[ProbeRow] = []
    for eps in eps_values:
        for mode in modes:
            if mode == "adversarial":
                field = _field_from_compact(
                    adv_users,
                    _scale_rows(adv_gu, eps),
                    adv_items,
                    _scale_rows(adv_gi, eps),
                    eps,
                )
                hr, ndcg, acc = measure(field, probe_set)
                rows.append(ProbeRow(eps, mode, 0, hr, ndcg, acc, _drop_pct(base_ndcg, ndcg)))
            else:
                for r in range(repeats):
                    du, di = random_dirs[r]
                    field = _field_from_compact(users, du * eps, items, di * eps, eps)
                    hr, ndcg, acc = measure(field, acc_batches[r])
                    rows.append(
                        ProbeRow(eps, mode, r, hr, ndcg, acc, _drop_pct(base_ndcg, ndcg))
                    )
    return ProbeResult(
        rows=rows,
        baseline_hr=base_hr,
        baseline_ndcg=base_ndcg,
        baseline_acc=base_acc,
        cutoff=cutoff,
    )


def _drop_pct(base: float, value: float) -> float:
    if base == 0.0:
        return float("nan")
    return (base - value) / base * 100.0


def aggregate_rows(rows: list[ProbeRow]) -> list[ProbeRow]:
    """Mean over repeats per (epsilon, mode), in first-seen order; the
    repeat field of an aggregate row holds the repeat count."""
    groups: dict[tuple[float, str], list[ProbeRow]] = {}
    order: list[tuple[float, str]] = []
    for row in rows:
        key = (row.epsilon, row.mode)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(row)
    out = []
    for key in order:
        members = groups[key]
        out.append(
            ProbeRow(
                epsilon=key[0],
                mode=key[1],
                repeat=len(members),
                hr=float(np.mean([m.hr for m in members])),
                ndcg=float(np.mean([m.ndcg for m in members])),
                train_acc=float(np.mean([m.train_acc for m in members])),
                ndcg_drop_pct=float(np.mean([m.ndcg_drop_pct for m in members])),
            )
        )
    return out


def write_probe_csv(path: str | Path, result: ProbeResult) -> None:
    """Per-measurement rows; the unperturbed baseline is the first row with
    mode 'baseline' and epsilon 0."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    c = result.cutoff
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"epsilon,mode,repeat,hr@{c},ndcg@{c},train_acc,ndcg_drop_pct\n")
        handle.write(
            f"0.0,baseline,0,{result.baseline_hr!r},{result.baseline_ndcg!r},"
            f"{result.baseline_acc!r},0.0\n"
        )
        for r in result.rows:
            handle.write(
                f"{r.epsilon!r},{r.mode},{r.repeat},{r.hr!r},{r.ndcg!r},"
                f"{r.train_acc!r},{r.ndcg_drop_pct!r}\n"
            )


def write_probe_summary(path: str | Path, result: ProbeResult) -> None:
    """Repeat-averaged rows: epsilon,mode,hr,ndcg,train_acc,ndcg_drop_pct,repeats."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    c = result.cutoff
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"epsilon,mode,hr@{c},ndcg@{c},train_acc,ndcg_drop_pct,repeats\n")
        for r in aggregate_rows(result.rows):
            handle.write(
                f"{r.epsilon!r},{r.mode},{r.hr!r},{r.ndcg!r},"
                f"{r.train_acc!r},{r.ndcg_drop_pct!r},{r.repeat}\n"
            )
