"""Synthetic implicit-feedback generators for tests and demos.

Both generators plant low-rank structure (user groups preferring item
clusters) so that factor models have signal to find, while popularity skew
and noise keep the task from being trivial.
"""

from __future__ import annotations

import numpy as np

from .data import InteractionDataset
from .rng import as_generator


def separable_blocks(
    n_groups: int = 3,
    users_per_group: int = 10,
    items_per_group: int = 8,
    positives_per_user: int = 5,
    seed: int | np.random.Generator = 0,
) -> InteractionDataset:
    """Tiny perfectly block-structured data: user group g interacts only with
    item block g. A factor model should separate the blocks quickly."""
    rng = as_generator(seed)
    pairs: list[tuple[int, int]] = []
    if positives_per_user > items_per_group:
        raise ValueError("positives_per_user cannot exceed items_per_group")
    for g in range(n_groups):
        block = np.arange(g * items_per_group, (g + 1) * items_per_group)
        for u in range(g * users_per_group, (g + 1) * users_per_group):
            chosen = rng.choice(block, size=positives_per_user, replace=False)
            pairs.extend((u, int(i)) for i in chosen)
    return InteractionDataset.from_pairs(pairs, n_items=n_groups * items_per_group)


def clustered_interactions(
    n_users: int = 2000,
    n_items: int = 1500,
    n_groups: int = 20,
    n_clusters: int = 20,
    clusters_per_group: int = 3,
    mean_extra: float = 16.0,
    min_per_user: int = 2,
    noise: float = 0.05,
    zipf_exponent: float = 1.0,
    with_timestamps: bool = True,
    seed: int | np.random.Generator = 0,
) -> InteractionDataset:
    """Desk-scale data with planted preference structure.

    Users belong to one of ``n_groups`` groups; each group prefers
    ``clusters_per_group`` of the ``n_clusters`` item clusters. A user's
    interaction count is ``min_per_user`` plus a Poisson draw. Each
    interaction picks a preferred-cluster item (popularity within a cluster
    follows a Zipf-like law) except with probability ``noise``, when it is
    uniform over all items. Timestamps, when on, are unique random ints so
    leave-one-out picks an unambiguous latest interaction.
    """
    rng = as_generator(seed)
    if n_clusters > n_items:
        raise ValueError("more clusters than items")
    cluster_of_item = np.arange(n_items) % n_clusters
    items_by_cluster = [np.flatnonzero(cluster_of_item == c) for c in range(n_clusters)]
    group_clusters = [
        rng.choice(n_clusters, size=clusters_per_group, replace=False)
        for _ in range(n_groups)
    ]
    # Zipf-like within-cluster popularity over item slots
    cluster_weights = []
    for c in range(n_clusters):
        w = 1.0 / np.arange(1, items_by_cluster[c].size + 1) ** zipf_exponent
        cluster_weights.append(w / w.sum())

    pairs: list[tuple[int, int]] = []
    for u in range(n_users):
        group = u % n_groups
        clusters = group_clusters[group]
        count = min_per_user + int(rng.poisson(mean_extra))
        count = min(count, n_items)
        seen: set[int] = set()
        while len(seen) < count:
            if rng.random() < noise:
                item = int(rng.integers(n_items))
            else:
                c = int(clusters[rng.integers(clusters.size)])
                slot = rng.choice(items_by_cluster[c].size, p=cluster_weights[c])
                item = int(items_by_cluster[c][slot])
            if item in seen:
                continue
            seen.add(item)
            pairs.append((u, item))
    # unique random timestamps so the latest interaction is unambiguous
    times = [int(t) for t in rng.permutation(len(pairs))] if with_timestamps else None
    return InteractionDataset.from_pairs(pairs, n_items=n_items, timestamps=times)
