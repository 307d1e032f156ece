"""Command line interface: split, train, probe, eval subcommands.

The train subcommand reads optional flat ``key = value`` config files;
command line flags override config values, which override built-in
defaults. Unknown config keys are rejected rather than ignored.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import __version__
from .apr import AprConfig, train_apr
from .bpr import EpochRecord, TrainConfig, TrainingDiverged, train_bpr, write_history
from .data import (
    DatasetError,
    ingest,
    load_split,
    read_interactions,
    split_leave_one_out,
    summarize,
    write_split,
)
from .evaluate import ItemPopScorer, evaluate_model, write_eval_csv
from .model import CheckpointError, load_checkpoint, save_checkpoint
from .probe import aggregate_rows, probe_sweep, write_probe_csv, write_probe_summary


class ConfigError(ValueError):
    """Bad config file contents (unknown key, unparsable value)."""


_CONFIG_TYPES = {
    "factors": int,
    "eta": float,
    "lambda_reg": float,
    "batch_size": int,
    "epochs": int,
    "optimizer": str,
    "seed": int,
    "eval_interval": int,
    "eval_cutoff": int,
    "epsilon": float,
    "lambda_adv": float,
    "patience": lambda s: None if s.lower() == "none" else int(s),
}


def read_config(path: str | Path) -> dict[str, object]:
    """Parse a flat key=value file; # comments and blank lines are skipped."""
    values: dict[str, object] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}: line {line_no}: expected key = value")
            key, _, raw = stripped.partition("=")
            key = key.strip()
            raw = raw.strip()
            if key not in _CONFIG_TYPES:
                raise ConfigError(f"{path}: line {line_no}: unknown key {key!r}")
            try:
                values[key] = _CONFIG_TYPES[key](raw)
            except ValueError:
                raise ConfigError(
                    f"{path}: line {line_no}: bad value {raw!r} for {key!r}"
                ) from None
    return values


def _resolve_settings(args: argparse.Namespace) -> dict[str, object]:
    """Merge defaults < config file < explicit flags for train settings."""
    merged: dict[str, object] = {}
    if args.config is not None:
        merged.update(read_config(args.config))
    for key in _CONFIG_TYPES:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            merged[key] = flag_value
    return merged


def _build_configs(settings: dict[str, object]) -> tuple[TrainConfig, AprConfig]:
    base_fields = {f.name for f in dataclasses.fields(TrainConfig)}
    base = TrainConfig(**{k: v for k, v in settings.items() if k in base_fields})
    apr_kwargs = {
        k: v for k, v in settings.items() if k in ("epsilon", "lambda_adv", "patience")
    }
    return base, AprConfig(base=base, **apr_kwargs)


def _epoch_printer(cutoff: int):
    def log(record: EpochRecord) -> None:
        parts = [f"epoch {record.epoch:4d}", record.stage, f"loss={record.loss:.6f}"]
        if record.val_hr is not None:
            parts.append(f"val_hr@{cutoff}={record.val_hr:.4f}")
            parts.append(f"val_ndcg@{cutoff}={record.val_ndcg:.4f}")
        parts.append(f"norm={record.emb_norm:.3f}")
        if record.adv_gain is not None:
            parts.append(f"adv_gain={record.adv_gain:.5f}")
        parts.append(f"({record.seconds:.2f}s)")
        print("  ".join(parts))

    return log


def cmd_split(args: argparse.Namespace) -> int:
    records = read_interactions(args.input)
    data = ingest(
        records,
        min_item_interactions=args.min_item_interactions,
        min_user_interactions=args.min_user_interactions,
        merge_repeats=not args.no_merge_repeats,
    )
    split = split_leave_one_out(data, with_validation=args.validation, seed=args.seed)
    write_split(split, args.out_prefix)
    stats = summarize(data)
    for key, value in stats.items():
        print(f"{key}: {value}")
    print(f"test users: {len(split.test)}")
    if args.validation:
        print(f"validation users: {len(split.validation)}")
    print(f"excluded users (too few interactions): {split.n_excluded}")
    print(f"wrote split files with prefix {args.out_prefix}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    settings = _resolve_settings(args)
    base, apr_config = _build_configs(settings)
    split = load_split(args.data)
    validation = split.validation if split.validation else None

    start = None
    if args.init is not None:
        start, init_stage, _ = load_checkpoint(args.init)
        print(f"starting from {args.init} (stage {init_stage})")

    log = None if args.quiet else _epoch_printer(base.eval_cutoff)
    if args.stage == "bpr":
        result = train_bpr(split.train, base, validation=validation, start=start, log=log)
    else:
        result = train_apr(split.train, apr_config, validation=validation, start=start, log=log)

    model = result.model
    if args.best:
        if result.best_model is None:
            print("warning: no validation data, saving final model", file=sys.stderr)
        else:
            model = result.best_model
            print(
                f"saving best model (epoch {result.best_epoch}, "
                f"val ndcg@{base.eval_cutoff}={result.best_metric:.5f})"
            )
    save_checkpoint(args.out, model, args.stage, base.seed)
    print(f"wrote checkpoint {args.out}")
    if args.history is not None:
        write_history(args.history, result.history, cutoff=base.eval_cutoff)
        print(f"wrote history {args.history}")
    return 0


def cmd_probe(args: argparse.Namespace) -> int:
    split = load_split(args.data)
    model, _, _ = load_checkpoint(args.model)
    epsilons = [float(tok) for tok in args.epsilons.split(",") if tok.strip()]
    modes = tuple(tok.strip() for tok in args.modes.split(",") if tok.strip())
    result = probe_sweep(
        model,
        split.train,
        split.test,
        epsilons,
        repeats=args.repeats,
        seed=args.seed,
        cutoff=args.cutoff,
        modes=modes,
        fresh_negatives=args.fresh_negatives,
    )
    write_probe_csv(args.out, result)
    print(f"wrote probe rows {args.out}")
    if args.summary is not None:
        write_probe_summary(args.summary, result)
        print(f"wrote probe summary {args.summary}")
    print(
        f"baseline hr@{args.cutoff}={result.baseline_hr:.4f} "
        f"ndcg@{args.cutoff}={result.baseline_ndcg:.4f} acc={result.baseline_acc:.4f}"
    )
    for row in aggregate_rows(result.rows):
        print(
            f"eps={row.epsilon:g} {row.mode}: ndcg@{args.cutoff}={row.ndcg:.4f} "
            f"drop={row.ndcg_drop_pct:.1f}% acc={row.train_acc:.4f}"
        )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    split = load_split(args.data)
    if args.itempop:
        scorer = ItemPopScorer.fit(split.train)
    else:
        if args.model is None:
            raise DatasetError("eval needs --model unless --itempop is given")
        scorer, _, _ = load_checkpoint(args.model)
    heldout = split.validation if args.on == "validation" else split.test
    if not heldout:
        raise DatasetError(f"split has no {args.on} interactions")
    cutoffs = [int(tok) for tok in args.cutoffs.split(",") if tok.strip()]
    report = evaluate_model(scorer, split.train, heldout, cutoffs=cutoffs)
    if args.out is not None:
        write_eval_csv(args.out, report)
        print(f"wrote metrics {args.out}")
    for c in report.cutoffs:
        print(f"hr@{c}={report.hr[c]:.5f} ndcg@{c}={report.ndcg[c]:.5f}")
    print(f"users evaluated: {report.n_users}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="advrank",
        description="Matrix factorization ranking with adversarial training and probes.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_split = sub.add_parser("split", help="preprocess a log and write a leave-one-out split")
    p_split.add_argument("input", help="interaction log: user item [timestamp] per line")
    p_split.add_argument("--out-prefix", required=True, help="prefix for the split files")
    p_split.add_argument("--min-user-interactions", type=int, default=0)
    p_split.add_argument("--min-item-interactions", type=int, default=0)
    p_split.add_argument("--validation", action="store_true", help="also hold out a validation item")
    p_split.add_argument("--seed", type=int, default=0)
    p_split.add_argument(
        "--no-merge-repeats",
        action="store_true",
        help="treat repeated (user, item) pairs as an error instead of merging",
    )
    p_split.set_defaults(func=cmd_split)

    p_train = sub.add_parser("train", help="train a model on a split")
    p_train.add_argument("--data", required=True, help="split file prefix")
    p_train.add_argument("--out", required=True, help="checkpoint to write")
    p_train.add_argument("--stage", choices=("bpr", "apr"), default="bpr")
    p_train.add_argument("--init", help="checkpoint to continue from")
    p_train.add_argument("--config", help="key = value settings file")
    p_train.add_argument("--history", help="write per-epoch CSV here")
    p_train.add_argument("--best", action="store_true", help="save the best validation model")
    p_train.add_argument("--quiet", action="store_true")
    p_train.add_argument("--factors", type=int)
    p_train.add_argument("--eta", type=float)
    p_train.add_argument("--lambda-reg", dest="lambda_reg", type=float)
    p_train.add_argument("--batch-size", dest="batch_size", type=int)
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--optimizer", choices=("adagrad", "sgd"))
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--eval-interval", dest="eval_interval", type=int)
    p_train.add_argument("--eval-cutoff", dest="eval_cutoff", type=int)
    p_train.add_argument("--epsilon", type=float, help="perturbation size (apr)")
    p_train.add_argument("--lambda-adv", dest="lambda_adv", type=float, help="adversarial weight (apr)")
    p_train.add_argument("--patience", type=int, help="early stop after this many stale epochs (apr)")
    p_train.set_defaults(func=cmd_train)

    p_probe = sub.add_parser("probe", help="perturbation robustness sweep")
    p_probe.add_argument("--data", required=True, help="split file prefix")
    p_probe.add_argument("--model", required=True, help="checkpoint to probe")
    p_probe.add_argument("--epsilons", required=True, help="comma list, e.g. 0,0.25,0.5,1")
    p_probe.add_argument("--repeats", type=int, default=1, help="random-direction repeats")
    p_probe.add_argument("--modes", default="random,adversarial")
    p_probe.add_argument("--seed", type=int, default=0)
    p_probe.add_argument("--cutoff", type=int, default=100)
    p_probe.add_argument(
        "--fresh-negatives",
        action="store_true",
        help="resample accuracy negatives per repeat",
    )
    p_probe.add_argument("--out", required=True, help="per-measurement CSV")
    p_probe.add_argument("--summary", help="repeat-averaged CSV")
    p_probe.set_defaults(func=cmd_probe)

    p_eval = sub.add_parser("eval", help="ranking metrics on held-out items")
    p_eval.add_argument("--data", required=True, help="split file prefix")
    p_eval.add_argument("--model", help="checkpoint to evaluate")
    p_eval.add_argument("--itempop", action="store_true", help="popularity baseline instead of a model")
    p_eval.add_argument("--on", choices=("test", "validation"), default="test")
    p_eval.add_argument("--cutoffs", default="100")
    p_eval.add_argument("--out", help="metrics CSV")
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DatasetError, CheckpointError, TrainingDiverged, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
