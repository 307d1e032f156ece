"""
Preparing an interaction log for ranking experiments
====================================================

Walks a raw user/item log through ingestion, activity filtering, and the
leave-one-out split, then writes the split files that the training and
evaluation tools consume.

Run from the repository root:

    python3 demos/01_dataset_preprocessing.py
"""

import tempfile
from pathlib import Path

import numpy as np

import advrank as ar
from advrank.data import summarize

# ----------------------------------------------------------------------------
# Fabricate a small log with the usual warts: repeat interactions, a few
# near-inactive users, and a long-tailed item distribution. Each line is
# "user item timestamp"; tokens are arbitrary strings.
# ----------------------------------------------------------------------------
rng = np.random.default_rng(7)
work = Path(tempfile.mkdtemp())
log_path = work / "ratings.txt"

with open(log_path, "w") as handle:
    handle.write("# synthetic demo log\n")
    stamp = 0
    for user in range(120):
        n_events = int(rng.integers(1, 18))
        favorites = rng.choice(90, size=min(n_events, 90), replace=False)
        for item in favorites:
            stamp += 1
            handle.write(f"user{user}\titem{int(item)}\t{stamp}\n")
            if rng.random() < 0.08:  # occasional re-consumption of the same item
                stamp += 1
                handle.write(f"user{user}\titem{int(item)}\t{stamp}\n")

raw = ar.read_interactions(log_path)
print(f"raw log: {len(raw)} events")

# ----------------------------------------------------------------------------
# Ingest: merge repeated user/item pairs (keeping the earliest timestamp),
# then drop items seen fewer than 3 times and users with fewer than 5
# remaining interactions. Token ids are compacted to dense indices; the
# token-to-index maps ride along on the dataset.
# ----------------------------------------------------------------------------
data = ar.ingest(raw, min_user_interactions=5, min_item_interactions=3)
print(summarize(data))

counts = data.item_counts()
print(f"item popularity: max {counts.max()}, median {np.median(counts):.0f}, min {counts.min()}")

# ----------------------------------------------------------------------------
# Leave-one-out split: each user's latest interaction becomes the test item,
# the second latest the validation item, everything else stays in train.
# Users too small to donate held-out items remain wholly in train.
# ----------------------------------------------------------------------------
split = ar.split_leave_one_out(data, with_validation=True, seed=0)
print(
    f"split: {split.train.n_interactions} train, {len(split.validation)} validation,"
    f" {len(split.test)} test, {split.n_excluded} users kept intact"
)

# Every test item really is its user's latest event, and never leaks into train.
for user, item in list(split.test.items())[:5]:
    assert not split.train.is_positive(user, item)
print("spot check: held-out items are absent from the training positives")

# ----------------------------------------------------------------------------
# Persist. The prefix gains .train/.valid/.test plus .user.map/.item.map so
# results can be traced back to the original tokens.
# ----------------------------------------------------------------------------
prefix = work / "demo"
ar.write_split(split, prefix)
reloaded = ar.load_split(prefix)
assert reloaded.train == split.train and reloaded.test == split.test
print(f"split files written under {prefix}.* and verified to round-trip")
