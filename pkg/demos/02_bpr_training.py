"""
Training a pairwise-ranking factor model
========================================

Fits a matrix factorization model with the sampled pairwise objective on a
synthetic implicit-feedback dataset, tracks validation ranking quality while
training, and compares the result against the item-popularity baseline.

Run from the repository root:

    python3 demos/02_bpr_training.py
"""

import advrank as ar

# A clustered synthetic catalog: users in the same group share preferred item
# clusters, so there is real structure for the factors to recover.
data = ar.clustered_interactions(
    n_users=800, n_items=600, n_groups=12, n_clusters=12, clusters_per_group=3,
    mean_extra=14.0, seed=11,
)
split = ar.split_leave_one_out(data, with_validation=True, seed=12)
print(
    f"{data.n_users} users x {data.n_items} items, "
    f"{data.n_interactions} interactions, {len(split.test)} test users"
)

config = ar.TrainConfig(
    factors=32,
    eta=0.05,
    lambda_reg=1e-5,
    batch_size=512,
    epochs=240,
    eval_interval=40,
    eval_cutoff=50,
    seed=13,
)

# The log callback receives each finished epoch record; the validation
# metrics are only present on evaluation epochs, so print just those.
def show(record):
    if record.val_ndcg is not None:
        print(
            f"epoch {record.epoch:3d}  loss {record.loss:.4f}"
            f"  val HR@50 {record.val_hr:.4f}  val NDCG@50 {record.val_ndcg:.4f}"
        )

result = ar.train_bpr(split.train, config, validation=split.validation, log=show)
print(f"best validation NDCG@50 {result.best_metric:.4f} at epoch {result.best_epoch}")

# ----------------------------------------------------------------------------
# Held-out test metrics, factor model vs. popularity ranking. Candidates are
# all items the user has not trained on; ties are broken pessimistically.
# ----------------------------------------------------------------------------
model_report = ar.evaluate_model(result.model, split.train, split.test, cutoffs=(10, 50, 100))
pop_report = ar.evaluate_model(
    ar.ItemPopScorer.fit(split.train), split.train, split.test, cutoffs=(10, 50, 100)
)

print(f"{'cutoff':>6} {'model HR':>9} {'pop HR':>7} {'model NDCG':>11} {'pop NDCG':>9}")
for c in (10, 50, 100):
    print(
        f"{c:>6} {model_report.hr[c]:>9.4f} {pop_report.hr[c]:>7.4f}"
        f" {model_report.ndcg[c]:>11.4f} {pop_report.ndcg[c]:>9.4f}"
    )

gain = model_report.ndcg[100] / pop_report.ndcg[100] - 1.0
print(f"NDCG@100 relative improvement over popularity: {gain * 100:+.0f}%")

# Persist the trained factors for the probe and adversarial-training demos.
ar.save_checkpoint("/tmp/demo_bpr.ckpt", result.model, stage="bpr", seed=config.seed)
print("checkpoint saved to /tmp/demo_bpr.ckpt")
