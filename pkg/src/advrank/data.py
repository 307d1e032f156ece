"""Interaction data: ingestion, leave-one-out splitting, and triplet sampling.

Input logs are plain text, one interaction per line::

    user_token item_token [timestamp]

separated by whitespace, with ``#`` comment lines and blank lines skipped.
Ingestion merges repeated (user, item) pairs to the earliest timestamp,
applies item-count and then user-count filters once each, and compacts the
surviving tokens to dense 0-based indices in first-seen order.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .rng import as_generator


class DatasetError(ValueError):
    """Raised for unusable input data (parse failures, empty results)."""


class RawInteraction(NamedTuple):
    user_token: str
    item_token: str
    timestamp: int | None = None


class Triplet(NamedTuple):
    """A pairwise training instance: user, interacted item, unobserved item."""

    user: int
    pos_item: int
    neg_item: int


@dataclass
class TripletBatch:
    """Column-wise batch of triplets for vectorized training steps."""

    users: np.ndarray
    pos_items: np.ndarray
    neg_items: np.ndarray

    def __len__(self) -> int:
        return len(self.users)

    def __iter__(self) -> Iterator[Triplet]:
        for u, i, j in zip(self.users, self.pos_items, self.neg_items):
            yield Triplet(int(u), int(i), int(j))

    @classmethod
    def from_triplets(cls, triplets: Iterable[Triplet]) -> "TripletBatch":
        ts = list(triplets)
        return cls(
            users=np.array([t.user for t in ts], dtype=np.int64),
            pos_items=np.array([t.pos_item for t in ts], dtype=np.int64),
            neg_items=np.array([t.neg_item for t in ts], dtype=np.int64),
        )


@dataclass(eq=False)
class InteractionDataset:
    """Deduplicated implicit-feedback interactions with dense ids.

    ``positives[u]`` is the sorted array of item indices user ``u`` interacted
    with; ``timestamps[u]`` (when present) is aligned with it. The structure
    is immutable after construction and safe to share across threads.
    """

    n_users: int
    n_items: int
    positives: list[np.ndarray]
    timestamps: list[np.ndarray] | None
    user_map: dict[str, int]
    item_map: dict[str, int]

    def __post_init__(self) -> None:
        if self.n_users < 1 or self.n_items < 1:
            raise DatasetError("empty dataset: no users or no items")
        if len(self.positives) != self.n_users:
            raise DatasetError("positives length does not match n_users")
        for u, items in enumerate(self.positives):
            if items.size == 0:
                raise DatasetError(f"user {u} has no interactions")
            if items[-1] >= self.n_items or items[0] < 0:
                raise DatasetError(f"item index out of range for user {u}")
            items.setflags(write=False)
        if self.timestamps is not None:
            for u, ts in enumerate(self.timestamps):
                if ts.shape != self.positives[u].shape:
                    raise DatasetError(f"timestamp array mismatch for user {u}")
                ts.setflags(write=False)
        # flat interaction view, user-major with items ascending
        self._users_flat = np.repeat(
            np.arange(self.n_users, dtype=np.int64),
            [p.size for p in self.positives],
        )
        self._items_flat = np.concatenate(self.positives).astype(np.int64)
        self._pair_codes = np.sort(self._users_flat * self.n_items + self._items_flat)
        self._covers_all = np.array(
            [p.size >= self.n_items for p in self.positives], dtype=bool
        )
        for arr in (self._users_flat, self._items_flat, self._pair_codes, self._covers_all):
            arr.setflags(write=False)

    @property
    def n_interactions(self) -> int:
        return int(self._items_flat.size)

    @property
    def users_flat(self) -> np.ndarray:
        return self._users_flat

    @property
    def items_flat(self) -> np.ndarray:
        return self._items_flat

    @property
    def sparsity(self) -> float:
        return 1.0 - self.n_interactions / (self.n_users * self.n_items)

    def item_counts(self) -> np.ndarray:
        """Interaction count per item (the ItemPop statistic)."""
        return np.bincount(self._items_flat, minlength=self.n_items)

    def is_positive(self, user: int, item: int) -> bool:
        pos = self.positives[user]
        k = np.searchsorted(pos, item)
        return k < pos.size and pos[k] == item

    def contains_pairs(self, users: np.ndarray, items: np.ndarray) -> np.ndarray:
        """Vectorized membership test for (user, item) pairs."""
        codes = users * self.n_items + items
        idx = np.searchsorted(self._pair_codes, codes)
        idx = np.minimum(idx, self._pair_codes.size - 1)
        return self._pair_codes[idx] == codes

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, InteractionDataset):
            return NotImplemented
        if (self.n_users, self.n_items) != (other.n_users, other.n_items):
            return False
        if self.user_map != other.user_map or self.item_map != other.item_map:
            return False
        if any(not np.array_equal(a, b) for a, b in zip(self.positives, other.positives)):
            return False
        if (self.timestamps is None) != (other.timestamps is None):
            return False
        if self.timestamps is not None:
            return all(
                np.array_equal(a, b) for a, b in zip(self.timestamps, other.timestamps)
            )
        return True

    @classmethod
    def from_pairs(
        cls,
        pairs: Iterable[tuple[int, int]],
        n_items: int | None = None,
        timestamps: Iterable[int] | None = None,
    ) -> "InteractionDataset":
        """Build a dataset directly from dense (user, item) index pairs.

        Users must form a contiguous 0-based range; items may leave gaps up
        to ``n_items``. Tokens are the stringified indices.
        """
        pair_list = list(pairs)
        ts_list = list(timestamps) if timestamps is not None else None
        if not pair_list:
            raise DatasetError("empty dataset: no interactions")
        n_users = max(u for u, _ in pair_list) + 1
        full_items = (max(i for _, i in pair_list) + 1) if n_items is None else n_items
        per_user: list[list[tuple[int, int | None]]] = [[] for _ in range(n_users)]
        seen: set[tuple[int, int]] = set()
        for k, (u, i) in enumerate(pair_list):
            if (u, i) in seen:
                raise DatasetError(f"duplicate pair ({u}, {i}) in from_pairs")
            seen.add((u, i))
            per_user[u].append((i, None if ts_list is None else ts_list[k]))
        positives: list[np.ndarray] = []
        times: list[np.ndarray] | None = None if ts_list is None else []
        for rows in per_user:
            rows.sort(key=lambda r: r[0])
            positives.append(np.array([r[0] for r in rows], dtype=np.int64))
            if times is not None:
                times.append(np.array([r[1] for r in rows], dtype=np.int64))
        return cls(
            n_users=n_users,
            n_items=full_items,
            positives=positives,
            timestamps=times,
            user_map={str(u): u for u in range(n_users)},
            item_map={str(i): i for i in range(full_items)},
        )


@dataclass
class SplitDataset:
    """Leave-one-out split: training data plus held-out items per user."""

    train: InteractionDataset
    validation: dict[int, int]
    test: dict[int, int]
    n_excluded: int = 0


def parse_line(line: str, line_no: int) -> RawInteraction | None:
    """Parse one log line; returns None for comments and blank lines."""
    stripped = line.strip()
    if not stripped or stripped.startswith("#"):
        return None
    parts = stripped.split()
    if len(parts) not in (2, 3):
        raise DatasetError(
            f"line {line_no}: expected 'user item [timestamp]', got {len(parts)} fields"
        )
    timestamp: int | None = None
    if len(parts) == 3:
        try:
            timestamp = int(parts[2])
        except ValueError:
            raise DatasetError(f"line {line_no}: bad timestamp {parts[2]!r}") from None
    return RawInteraction(parts[0], parts[1], timestamp)


def read_interactions(path: str | Path) -> list[RawInteraction]:
    """Read an interaction log file, erroring with the offending line number."""
    records = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            rec = parse_line(line, line_no)
            if rec is not None:
                records.append(rec)
    return records


def ingest(
    records: Iterable[RawInteraction],
    min_item_interactions: int = 0,
    min_user_interactions: int = 0,
    merge_repeats: bool = True,
) -> InteractionDataset:
    """Preprocess raw interactions into an :class:`InteractionDataset`.

    Repeated (user, item) pairs are merged to the earliest timestamp (first
    occurrence when untimestamped); with ``merge_repeats`` off a repeat is an
    error. The item-count filter runs first, then the user-count filter, one
    pass each (not iterated to a fixpoint). Timestamps must be present on
    either all records or none.
    """
    if min_item_interactions < 0 or min_user_interactions < 0:
        raise ValueError("filter thresholds must be >= 0")

    merged: dict[tuple[str, str], int | None] = {}
    order: list[tuple[str, str]] = []
    has_ts = None
    for rec in records:
        if not rec.user_token or not rec.item_token:
            raise DatasetError("empty user or item token")
        if has_ts is None:
            has_ts = rec.timestamp is not None
        elif has_ts != (rec.timestamp is not None):
            raise DatasetError("timestamps must be present on all records or none")
        key = (rec.user_token, rec.item_token)
        if key in merged:
            if not merge_repeats:
                raise DatasetError(
                    f"duplicate interaction ({rec.user_token}, {rec.item_token}) "
                    "with merge_repeats disabled"
                )
            old = merged[key]
            if rec.timestamp is not None and (old is None or rec.timestamp < old):
                merged[key] = rec.timestamp
        else:
            merged[key] = rec.timestamp
            order.append(key)

    if not order:
        raise DatasetError("empty dataset: no interactions after preprocessing")

    # item-count filter, then user-count filter, one pass each
    item_counts: dict[str, int] = {}
    for _, item in order:
        item_counts[item] = item_counts.get(item, 0) + 1
    kept = [k for k in order if item_counts[k[1]] >= min_item_interactions]
    user_counts: dict[str, int] = {}
    for user, _ in kept:
        user_counts[user] = user_counts.get(user, 0) + 1
    kept = [k for k in kept if user_counts[k[0]] >= min_user_interactions]
    if not kept:
        raise DatasetError("empty dataset: no interactions after filtering")

    user_map: dict[str, int] = {}
    item_map: dict[str, int] = {}
    per_user: list[list[tuple[int, int | None]]] = []
    for user, item in kept:
        u = user_map.setdefault(user, len(user_map))
        i = item_map.setdefault(item, len(item_map))
        if u == len(per_user):
            per_user.append([])
        per_user[u].append((i, merged[(user, item)]))

    positives: list[np.ndarray] = []
    timestamps: list[np.ndarray] | None = [] if has_ts else None
    for rows in per_user:
        rows.sort(key=lambda r: r[0])
        positives.append(np.array([r[0] for r in rows], dtype=np.int64))
        if timestamps is not None:
            timestamps.append(np.array([r[1] for r in rows], dtype=np.int64))

    return InteractionDataset(
        n_users=len(user_map),
        n_items=len(item_map),
        positives=positives,
        timestamps=timestamps,
        user_map=user_map,
        item_map=item_map,
    )


def split_leave_one_out(
    data: InteractionDataset,
    with_validation: bool = False,
    seed: int | np.random.Generator = 0,
) -> SplitDataset:
    """Hold out one test (and optionally one validation) item per user.

    The test item is the latest-timestamp interaction (ties broken toward the
    larger item index); on untimestamped data it is drawn uniformly. The
    validation item is drawn uniformly from the remaining interactions.
    Users with too few interactions (< 2, or < 3 with validation) keep all
    their interactions in training and are counted in ``n_excluded``.
    """
    rng = as_generator(seed)
    need = 3 if with_validation else 2
    train_pos: list[np.ndarray] = []
    train_ts: list[np.ndarray] | None = [] if data.timestamps is not None else None
    validation: dict[int, int] = {}
    test: dict[int, int] = {}
    n_excluded = 0

    for u in range(data.n_users):
        items = data.positives[u]
        if items.size < need:
            n_excluded += 1
            train_pos.append(items)
            if train_ts is not None:
                assert data.timestamps is not None
                train_ts.append(data.timestamps[u])
            continue
        if data.timestamps is not None:
            ts = data.timestamps[u]
            best = np.flatnonzero(ts == ts.max())
            test_idx = int(best[np.argmax(items[best])])
        else:
            test_idx = int(rng.integers(items.size))
        keep = np.ones(items.size, dtype=bool)
        keep[test_idx] = False
        test[u] = int(items[test_idx])
        if with_validation:
            remaining = np.flatnonzero(keep)
            val_idx = int(remaining[rng.integers(remaining.size)])
            keep[val_idx] = False
            validation[u] = int(items[val_idx])
        train_pos.append(items[keep])
        if train_ts is not None:
            assert data.timestamps is not None
            train_ts.append(data.timestamps[u][keep])

    train = InteractionDataset(
        n_users=data.n_users,
        n_items=data.n_items,
        positives=train_pos,
        timestamps=train_ts,
        user_map=data.user_map,
        item_map=data.item_map,
    )
    return SplitDataset(train=train, validation=validation, test=test, n_excluded=n_excluded)


def sample_triplet(
    train: InteractionDataset,
    user: int | None = None,
    rng: int | np.random.Generator = 0,
) -> Triplet:
    """Draw one (user, positive, negative) instance.

    With ``user`` omitted, (u, i) is uniform over training interactions;
    otherwise i is uniform over that user's positives. The negative is
    rejection-sampled uniformly from the items the user has not interacted
    with.
    """
    rng = as_generator(rng)
    if user is None:
        idx = int(rng.integers(train.n_interactions))
        u = int(train.users_flat[idx])
        i = int(train.items_flat[idx])
    else:
        u = user
        pos = train.positives[u]
        i = int(pos[rng.integers(pos.size)])
    if train._covers_all[u]:
        raise DatasetError(f"no negative available: user {u} interacted with every item")
    while True:
        j = int(rng.integers(train.n_items))
        if not train.is_positive(u, j):
            return Triplet(u, i, j)


def sample_negatives(
    train: InteractionDataset, users: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Vectorized rejection sampling of one negative item per user entry."""
    if train._covers_all[users].any():
        bad = int(users[train._covers_all[users]][0])
        raise DatasetError(f"no negative available: user {bad} interacted with every item")
    neg = rng.integers(train.n_items, size=users.size)
    bad = train.contains_pairs(users, neg)
    while bad.any():
        neg[bad] = rng.integers(train.n_items, size=int(bad.sum()))
        bad[bad] = train.contains_pairs(users[bad], neg[bad])
    return neg


def sample_batch(
    train: InteractionDataset, size: int, rng: np.random.Generator
) -> TripletBatch:
    """Draw ``size`` training instances uniformly over interactions."""
    idx = rng.integers(train.n_interactions, size=size)
    users = train.users_flat[idx]
    pos = train.items_flat[idx]
    neg = sample_negatives(train, users, rng)
    return TripletBatch(users=users, pos_items=pos, neg_items=neg)


def sample_reduced_set(
    train: InteractionDataset, rng: int | np.random.Generator = 0
) -> TripletBatch:
    """One triplet per training interaction: pair every observed (u, i) with
    one sampled unobserved item. Deterministic under a fixed seed."""
    rng = as_generator(rng)
    users = train.users_flat.copy()
    pos = train.items_flat.copy()
    neg = sample_negatives(train, users, rng)
    return TripletBatch(users=users, pos_items=pos, neg_items=neg)


# ---------------------------------------------------------------------------
# split file I/O
#
# Split files use the input line format with dense integer indices; the
# token <-> index assignment is recorded in <prefix>.user.map / .item.map.
# ---------------------------------------------------------------------------


def _write_lines(path: Path, rows: Iterable[str]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(row + "\n")


def write_split(split: SplitDataset, prefix: str | Path) -> None:
    """Write <prefix>.{train,valid,test} plus the two token map files."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    train = split.train

    def train_rows() -> Iterator[str]:
        for u in range(train.n_users):
            for k, i in enumerate(train.positives[u]):
                if train.timestamps is not None:
                    yield f"{u}\t{i}\t{train.timestamps[u][k]}"
                else:
                    yield f"{u}\t{i}"

    _write_lines(prefix.with_suffix(prefix.suffix + ".train"), train_rows())
    _write_lines(
        prefix.with_suffix(prefix.suffix + ".valid"),
        (f"{u}\t{i}" for u, i in sorted(split.validation.items())),
    )
    _write_lines(
        prefix.with_suffix(prefix.suffix + ".test"),
        (f"{u}\t{i}" for u, i in sorted(split.test.items())),
    )
    _write_lines(
        prefix.with_suffix(prefix.suffix + ".user.map"),
        (f"{tok}\t{idx}" for tok, idx in train.user_map.items()),
    )
    _write_lines(
        prefix.with_suffix(prefix.suffix + ".item.map"),
        (f"{tok}\t{idx}" for tok, idx in train.item_map.items()),
    )


def _read_map(path: Path) -> dict[str, int]:
    mapping: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            parts = line.split()
            if len(parts) != 2:
                raise DatasetError(f"{path}: line {line_no}: expected 'token index'")
            mapping[parts[0]] = int(parts[1])
    return mapping


def _read_heldout(path: Path) -> dict[int, int]:
    held: dict[int, int] = {}
    for rec in read_interactions(path):
        held[int(rec.user_token)] = int(rec.item_token)
    return held


def load_split(prefix: str | Path) -> SplitDataset:
    """Load a split written by :func:`write_split`."""
    prefix = Path(prefix)

    def part(ext: str) -> Path:
        return prefix.with_suffix(prefix.suffix + ext)

    user_map = _read_map(part(".user.map"))
    item_map = _read_map(part(".item.map"))
    n_users = max(user_map.values()) + 1
    n_items = max(item_map.values()) + 1

    records = read_interactions(part(".train"))
    per_user: list[list[tuple[int, int | None]]] = [[] for _ in range(n_users)]
    has_ts = records[0].timestamp is not None if records else False
    for rec in records:
        per_user[int(rec.user_token)].append((int(rec.item_token), rec.timestamp))
    positives = []
    timestamps: list[np.ndarray] | None = [] if has_ts else None
    for rows in per_user:
        rows.sort(key=lambda r: r[0])
        positives.append(np.array([r[0] for r in rows], dtype=np.int64))
        if timestamps is not None:
            timestamps.append(np.array([r[1] for r in rows], dtype=np.int64))
    train = InteractionDataset(
        n_users=n_users,
        n_items=n_items,
        positives=positives,
        timestamps=timestamps,
        user_map=user_map,
        item_map=item_map,
    )
    valid_path = part(".valid")
    validation = _read_heldout(valid_path) if valid_path.exists() else {}
    return SplitDataset(
        train=train,
        validation=validation,
        test=_read_heldout(part(".test")),
    )


def summarize(data: InteractionDataset) -> dict[str, float | int]:
    """Dataset statistics: interaction/user/item counts and sparsity."""
    return {
        "interactions": data.n_interactions,
        "users": data.n_users,
        "items": data.n_items,
        "sparsity": round(data.sparsity, 6),
    }
