"""Leave-one-out ranking evaluation: HR@K, NDCG@K, paired significance.

Each held-out item is ranked against every item the user has not interacted
with in training. Ranks are exact: an item beats the held-out item if its
score is strictly higher, or equal with a smaller item index, so score ties
cannot inflate metrics. Per-user metrics are averaged with pairwise
summation, making the result independent of user processing order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol

import numpy as np
from scipy import stats

from .data import InteractionDataset


class Scorer(Protocol):
    """Anything that scores all items for one user."""

    def predict(self, user: int, items: np.ndarray | None = None) -> np.ndarray: ...


@dataclass
class ItemPopScorer:
    """Non-personalized baseline: every user sees items ranked by training
    popularity."""

    item_scores: np.ndarray

    @classmethod
    def fit(cls, train: InteractionDataset) -> "ItemPopScorer":
        return cls(train.item_counts().astype(np.float64))

    def predict(self, user: int, items: np.ndarray | None = None) -> np.ndarray:
        return self.item_scores if items is None else self.item_scores[items]


@dataclass
class EvalReport:
    """Mean metrics per cutoff plus the per-user ranks they came from."""

    cutoffs: tuple[int, ...]
    hr: dict[int, float]
    ndcg: dict[int, float]
    n_users: int
    users: np.ndarray
    ranks: np.ndarray


def rank_against_candidates(
    scores: np.ndarray, test_item: int, excluded: np.ndarray
) -> int:
    """1-based rank of ``test_item`` among all items except ``excluded``.

    ``excluded`` must be sorted, must not contain ``test_item``, and is
    dropped from the candidate pool (the usual train-positive exclusion).
    """
    target = scores[test_item]
    greater = int(np.count_nonzero(scores > target))
    ties = np.flatnonzero(scores == target)
    ties_before = int(np.count_nonzero(ties < test_item))
    if excluded.size:
        exc_scores = scores[excluded]
        greater -= int(np.count_nonzero(exc_scores > target))
        ties_before -= int(np.count_nonzero((exc_scores == target) & (excluded < test_item)))
    return 1 + greater + ties_before


def hit_rate_from_ranks(ranks: np.ndarray, cutoff: int) -> float:
    return float(np.mean(ranks <= cutoff))


def ndcg_from_ranks(ranks: np.ndarray, cutoff: int) -> np.ndarray:
    """Per-user NDCG with a single relevant item: 1/log2(rank+1) inside the
    cutoff, 0 outside."""
    gains = 1.0 / np.log2(ranks + 1.0)
    return np.where(ranks <= cutoff, gains, 0.0)


def _resolve_threads(n_threads: int | None) -> int:
    if n_threads is None:
        env = os.environ.get("APR_THREADS", "").strip()
        n_threads = int(env) if env else 1
    if n_threads < 1:
        raise ValueError("thread count must be >= 1")
    return n_threads


def compute_ranks(
    scorer: Scorer,
    train: InteractionDataset,
    heldout: dict[int, int],
    n_threads: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Ranks of each user's held-out item; returns (users, ranks).

    Users are processed in ascending order and written to preallocated
    slots, so the result is identical for any thread count (APR_THREADS
    sets the default).
    """
    users = np.array(sorted(heldout), dtype=np.int64)
    ranks = np.zeros(users.size, dtype=np.int64)
    n_threads = _resolve_threads(n_threads)

    def run(slice_start: int, slice_stop: int) -> None:
        for k in range(slice_start, slice_stop):
            u = int(users[k])
            ranks[k] = rank_against_candidates(
                scorer.predict(u), heldout[u], train.positives[u]
            )

    if n_threads == 1 or users.size < 2 * n_threads:
        run(0, users.size)
    else:
        bounds = np.linspace(0, users.size, n_threads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            futures = [
                pool.submit(run, int(bounds[t]), int(bounds[t + 1]))
                for t in range(n_threads)
            ]
            for fut in futures:
                fut.result()
    return users, ranks


def evaluate_model(
    scorer: Scorer,
    train: InteractionDataset,
    heldout: dict[int, int],
    cutoffs: Iterable[int] = (100,),
    n_threads: int | None = None,
) -> EvalReport:
    """Mean HR and NDCG at each cutoff over the held-out users."""
    cutoffs = tuple(int(c) for c in cutoffs)
    if not heldout:
        raise ValueError("no held-out interactions to evaluate")
    if any(c < 1 for c in cutoffs):
        raise ValueError("cutoffs must be >= 1")
    users, ranks = compute_ranks(scorer, train, heldout, n_threads)
    hr = {c: hit_rate_from_ranks(ranks, c) for c in cutoffs}
    ndcg = {c: float(np.mean(ndcg_from_ranks(ranks, c))) for c in cutoffs}
    return EvalReport(
        cutoffs=cutoffs, hr=hr, ndcg=ndcg, n_users=users.size, users=users, ranks=ranks
    )


def paired_significance(
    metric_a: np.ndarray, metric_b: np.ndarray
) -> tuple[float, float, float]:
    """Two-sided paired t-test on per-user metrics.

    Returns (mean difference a-b, t statistic, p value). The statistic is
    NaN when every paired difference is identical.
    """
    a = np.asarray(metric_a, dtype=np.float64)
    b = np.asarray(metric_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired metrics must be 1-d arrays of equal length")
    if a.size < 2:
        raise ValueError("need at least two pairs")
    result = stats.ttest_rel(a, b)
    return float(a.mean() - b.mean()), float(result.statistic), float(result.pvalue)


def write_eval_csv(path: str | Path, report: EvalReport) -> None:
    """One row per cutoff: cutoff,hr,ndcg,n_users."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("cutoff,hr,ndcg,n_users\n")
        for c in report.cutoffs:
            handle.write(f"{c},{report.hr[c]!r},{report.ndcg[c]!r},{report.n_users}\n")
