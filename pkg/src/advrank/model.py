"""Matrix factorization model state, perturbation fields, and checkpoints.

The model is a pair of dense factor matrices; the predicted preference of
user u for item i is the inner product of their vectors. Checkpoints are a
small self-describing binary format so training can be resumed exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import as_generator

CHECKPOINT_MAGIC = b"ADVRANK\x00"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Raised when a checkpoint file is malformed or incompatible."""


@dataclass(eq=False)
class FactorModel:
    """Latent factor matrices: ``user_vecs[u]`` and ``item_vecs[i]`` rows."""

    user_vecs: np.ndarray
    item_vecs: np.ndarray

    def __post_init__(self) -> None:
        if self.user_vecs.ndim != 2 or self.item_vecs.ndim != 2:
            raise ValueError("factor matrices must be 2-dimensional")
        if self.user_vecs.shape[1] != self.item_vecs.shape[1]:
            raise ValueError("user and item factor dimensions disagree")
        self.user_vecs = np.ascontiguousarray(self.user_vecs, dtype=np.float64)
        self.item_vecs = np.ascontiguousarray(self.item_vecs, dtype=np.float64)

    @property
    def n_users(self) -> int:
        return self.user_vecs.shape[0]

    @property
    def n_items(self) -> int:
        return self.item_vecs.shape[0]

    @property
    def n_factors(self) -> int:
        return self.user_vecs.shape[1]

    def copy(self) -> "FactorModel":
        return FactorModel(self.user_vecs.copy(), self.item_vecs.copy())

    def predict(self, user: int, items: np.ndarray | None = None) -> np.ndarray:
        """Scores of one user against ``items`` (all items by default)."""
        mat = self.item_vecs if items is None else self.item_vecs[items]
        return mat @ self.user_vecs[user]

    def predict_pairs(self, users: np.ndarray, items: np.ndarray) -> np.ndarray:
        """Elementwise scores for aligned (user, item) index arrays."""
        return np.einsum(
            "kd,kd->k", self.user_vecs[users], self.item_vecs[items]
        )

    def triplet_margins(
        self, users: np.ndarray, pos_items: np.ndarray, neg_items: np.ndarray
    ) -> np.ndarray:
        """Score differences s(u, i) - s(u, j) for triplet arrays."""
        p = self.user_vecs[users]
        return np.einsum("kd,kd->k", p, self.item_vecs[pos_items] - self.item_vecs[neg_items])

    def embedding_norm(self) -> float:
        """Squared Frobenius norm of both factor matrices combined."""
        return float(np.sum(self.user_vecs**2) + np.sum(self.item_vecs**2))


def init_model(
    n_users: int,
    n_items: int,
    n_factors: int,
    seed: int | np.random.Generator = 0,
    scale: float = 0.01,
) -> FactorModel:
    """Gaussian-initialized factors, N(0, scale^2), drawn user matrix first."""
    rng = as_generator(seed)
    user_vecs = rng.normal(0.0, scale, size=(n_users, n_factors))
    item_vecs = rng.normal(0.0, scale, size=(n_items, n_factors))
    return FactorModel(user_vecs, item_vecs)


@dataclass(eq=False)
class PerturbationField:
    """Sparse additive offsets on factor rows, bounded per row by ``epsilon``.

    Only rows present in the dicts are perturbed; everything else is left
    untouched. ``epsilon`` records the per-row norm budget the field was
    built under.
    """

    user_deltas: dict[int, np.ndarray]
    item_deltas: dict[int, np.ndarray]
    epsilon: float

    def materialize(self, model: FactorModel) -> tuple[np.ndarray, np.ndarray]:
        """Dense delta matrices shaped like the model's factor matrices."""
        du = np.zeros_like(model.user_vecs)
        di = np.zeros_like(model.item_vecs)
        for u, vec in self.user_deltas.items():
            du[u] = vec
        for i, vec in self.item_deltas.items():
            di[i] = vec
        return du, di

    def apply(self, model: FactorModel) -> FactorModel:
        """A perturbed copy of ``model`` (the original is not modified)."""
        out = model.copy()
        for u, vec in self.user_deltas.items():
            out.user_vecs[u] += vec
        for i, vec in self.item_deltas.items():
            out.item_vecs[i] += vec
        return out

    def max_row_norm(self) -> float:
        norms = [0.0]
        norms += [float(np.linalg.norm(v)) for v in self.user_deltas.values()]
        norms += [float(np.linalg.norm(v)) for v in self.item_deltas.values()]
        return max(norms)


def perturbed_margins(
    model: FactorModel,
    field: PerturbationField,
    users: np.ndarray,
    pos_items: np.ndarray,
    neg_items: np.ndarray,
) -> np.ndarray:
    """Triplet margins evaluated at the perturbed parameters.

    Gathers per-row deltas without materializing dense matrices, so it stays
    cheap when the field touches few rows.
    """
    pu = model.user_vecs[users].copy()
    qi = model.item_vecs[pos_items].copy()
    qj = model.item_vecs[neg_items].copy()
    if field.user_deltas:
        for k, u in enumerate(users):
            vec = field.user_deltas.get(int(u))
            if vec is not None:
                pu[k] += vec
    if field.item_deltas:
        for k in range(len(pos_items)):
            vi = field.item_deltas.get(int(pos_items[k]))
            if vi is not None:
                qi[k] += vi
            vj = field.item_deltas.get(int(neg_items[k]))
            if vj is not None:
                qj[k] += vj
    return np.einsum("kd,kd->k", pu, qi - qj)


# ---------------------------------------------------------------------------
# checkpoint format
#
# magic(8) version(<I) stage(4 bytes, 'bpr\0' or 'apr\0') seed(<q)
# n_users(<Q) n_items(<Q) n_factors(<Q)
# then row-major little-endian float64: user matrix, item matrix
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<8sI4sqQQQ")
_STAGES = {"bpr": b"bpr\x00", "apr": b"apr\x00"}


def save_checkpoint(
    path: str | Path, model: FactorModel, stage: str, seed: int
) -> None:
    if stage not in _STAGES:
        raise ValueError(f"unknown training stage {stage!r}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _HEADER.pack(
        CHECKPOINT_MAGIC,
        CHECKPOINT_VERSION,
        _STAGES[stage],
        seed,
        model.n_users,
        model.n_items,
        model.n_factors,
    )
    with open(path, "wb") as handle:
        handle.write(header)
        handle.write(np.ascontiguousarray(model.user_vecs, dtype="<f8").tobytes())
        handle.write(np.ascontiguousarray(model.item_vecs, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[FactorModel, str, int]:
    """Returns (model, stage, seed); raises :class:`CheckpointError` on damage."""
    path = Path(path)
    with open(path, "rb") as handle:
        raw = handle.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise CheckpointError(f"{path}: truncated header")
        magic, version, stage_bytes, seed, n_users, n_items, n_factors = _HEADER.unpack(raw)
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        stage = {v: k for k, v in _STAGES.items()}.get(stage_bytes)
        if stage is None:
            raise CheckpointError(f"{path}: unknown training stage {stage_bytes!r}")
        want = (n_users + n_items) * n_factors * 8
        body = handle.read(want + 1)
        if len(body) != want:
            raise CheckpointError(f"{path}: body size mismatch")
    flat = np.frombuffer(body, dtype="<f8")
    user_vecs = flat[: n_users * n_factors].reshape(n_users, n_factors).copy()
    item_vecs = flat[n_users * n_factors :].reshape(n_items, n_factors).copy()
    return FactorModel(user_vecs, item_vecs), stage, seed
