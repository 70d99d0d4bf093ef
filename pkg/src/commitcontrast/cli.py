"""Command-line surface for the pipeline.

Subcommands: ingest, train, eval, predict, fewshot, bench.  Exit codes:
0 success, 2 input/config error, 3 runtime failure.  stdout carries only
report payloads; diagnostics and progress go to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .config import CONFIG_KEYS, load_config, merge_configs
from .corpus import CommitRecord, load_dataset, save_dataset, split_corpus
from .encoder import (
    INTERCHANGE_VERSION,
    CommitVectorizer,
    HashingEncoder,
    HashingEncoderConfig,
    PrecomputedEncoder,
    load_precomputed,
    vectorizer_from_spec,
)
from .errors import ConfigError, DigestMismatch, InputError, RuntimeFailure
from .evaluate import (
    REPORT_VERSION,
    bench_inference,
    carve_validation_ids,
    evaluate_records,
    predict,
    run_fewshot_benchmark,
    stored_prototypes,
)
from .trainer import CHECKPOINT_VERSION, load_checkpoint, save_checkpoint, train

_VERSION_LINE = (
    f"commitcontrast {__version__} "
    f"(checkpoint schema {CHECKPOINT_VERSION}, report schema {REPORT_VERSION}, "
    f"interchange schema {INTERCHANGE_VERSION})"
)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    """Flags mirroring the config-file keys one to one (flag wins)."""
    group = parser.add_argument_group("configuration overrides")
    group.add_argument("--config", help="flat key=value config file")
    group.add_argument("--batch-rows", type=int)
    group.add_argument("--learning-rate", type=float)
    group.add_argument("--beta1", type=float)
    group.add_argument("--beta2", type=float)
    group.add_argument("--eps-opt", type=float)
    group.add_argument("--weight-decay", type=float)
    group.add_argument("--max-epochs", type=int)
    group.add_argument("--patience", type=int)
    group.add_argument("--tau", type=float)
    group.add_argument("--n-regroups", type=int)
    group.add_argument("--inference-space", choices=("projection", "encoder"))
    group.add_argument("--r-pairs", type=int)
    group.add_argument("--anchors-per-class", type=int)
    group.add_argument("--template")
    group.add_argument("--seed", type=int)


def _add_encoder_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("encoder")
    group.add_argument(
        "--encoder",
        default="hashing",
        help="hashing (built-in) or precomputed:PATH (interchange store)",
    )
    group.add_argument("--hash-dim", type=int, default=256)
    group.add_argument("--ngram-min", type=int, default=3)
    group.add_argument("--ngram-max", type=int, default=5)


def _merged_configs(args):
    file_values = load_config(args.config) if args.config else {}
    overrides = {key: getattr(args, key, None) for key in CONFIG_KEYS}
    return merge_configs(file_values, overrides)


def _build_vectorizer(corpus, args) -> CommitVectorizer:
    spec = args.encoder
    if spec == "hashing":
        cfg = HashingEncoderConfig(
            dimension=args.hash_dim,
            ngram_min=args.ngram_min,
            ngram_max=args.ngram_max,
        )
        has_text_cc = any(r.has_text_cc for r in corpus.records)
        return CommitVectorizer(
            HashingEncoder(cfg),
            HashingEncoder(cfg) if has_text_cc else None,
            cc_dim=corpus.cc_dimension(),
            fill_missing_cc=True,
        )
    if spec.startswith("precomputed:"):
        path = spec.split(":", 1)[1]
        if not Path(path).is_file():
            raise ConfigError(f"precomputed store {path!r} not found")
        store = load_precomputed(path)
        cc_encoder = (
            PrecomputedEncoder(store, "cc") if store.dimension("cc") else None
        )
        return CommitVectorizer(
            PrecomputedEncoder(store, "msg"),
            cc_encoder,
            cc_dim=corpus.cc_dimension() if cc_encoder is None else None,
            fill_missing_cc=True,
        )
    raise ConfigError(f"unknown encoder {spec!r}; use hashing or precomputed:PATH")


def _vectorizer_for_checkpoint(checkpoint, encoder_arg: str | None) -> CommitVectorizer:
    spec = checkpoint.encoder_spec
    parts = [spec.get("msg") or {}, spec.get("cc") or {}]
    needs_store = any(p.get("kind") == "precomputed" for p in parts)
    store = None
    if needs_store:
        if not encoder_arg or not encoder_arg.startswith("precomputed:"):
            raise ConfigError(
                "this checkpoint was trained against a precomputed store; "
                "pass --encoder precomputed:PATH"
            )
        path = encoder_arg.split(":", 1)[1]
        if not Path(path).is_file():
            raise ConfigError(f"precomputed store {path!r} not found")
        store = load_precomputed(path)
    vectorizer = vectorizer_from_spec(spec, store)
    if vectorizer.config_digest() != checkpoint.encoder_digest:
        raise DigestMismatch(
            "rebuilt encoder digest does not match the checkpoint; "
            "the store differs from the one used at training time"
        )
    return vectorizer


def _emit_report(report, args) -> None:
    if getattr(args, "table", False):
        aggregate = "weighted" if getattr(args, "weighted", False) else "macro"
        try:
            text = report.format_table(aggregate)
        except TypeError:
            text = report.format_table()
        sys.stdout.write(text)
    else:
        sys.stdout.write(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    out = getattr(args, "out", None)
    if out:
        Path(out).write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )


def _parse_int_list(raw: str, flag: str) -> list[int]:
    try:
        values = [int(x) for x in raw.split(",") if x.strip() != ""]
    except ValueError:
        raise ConfigError(f"{flag} expects comma-separated integers, got {raw!r}") from None
    if not values:
        raise ConfigError(f"{flag} is empty")
    return values


def cmd_ingest(args) -> int:
    corpus = load_dataset(args.input, args.schema)
    save_dataset(corpus, args.out)
    for label, count in corpus.class_counts().items():
        sys.stdout.write(f"{label}\t{count}\n")
    return 0


def cmd_train(args) -> int:
    corpus = load_dataset(args.corpus, args.schema)
    train_config, augment_config, _ = _merged_configs(args)
    vectorizer = _build_vectorizer(corpus, args)

    val_ids = set(carve_validation_ids(corpus, train_config.seed, args.val_fraction))
    labeled = [r for r in corpus.records if r.label is not None]
    val_records = [r for r in labeled if r.id in val_ids]
    train_records = [r for r in labeled if r.id not in val_ids]

    epochs_run = 0

    def log_epoch(epoch: int, loss: float, accuracy: float) -> None:
        nonlocal epochs_run
        epochs_run = epoch
        sys.stderr.write(f"epoch={epoch} loss={loss:.6f} val_accuracy={accuracy:.6f}\n")

    checkpoint = train(
        train_records,
        val_records,
        vectorizer,
        augment_config,
        train_config,
        out_dim=args.out_dim,
        on_epoch=log_epoch,
    )
    save_checkpoint(checkpoint, args.out)
    sys.stdout.write(
        json.dumps(
            {
                "checkpoint": str(args.out),
                "best_epoch": checkpoint.best_epoch,
                "best_val_accuracy": checkpoint.best_val_accuracy,
                "epochs_run": epochs_run,
            }
        )
        + "\n"
    )
    return 0


def _parse_fractions(raw: str) -> tuple[float, float, float]:
    try:
        parts = tuple(float(x) for x in raw.split(","))
    except ValueError:
        raise ConfigError(f"--fractions expects three comma-separated reals, got {raw!r}") from None
    if len(parts) != 3:
        raise ConfigError(f"--fractions expects three values, got {len(parts)}")
    return parts  # validated further by split_corpus


def cmd_eval(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    corpus = load_dataset(args.corpus, args.schema)
    vectorizer = _vectorizer_for_checkpoint(checkpoint, args.encoder)
    if args.split == "all":
        records = corpus.records
    else:
        seed = args.seed if args.seed is not None else checkpoint.train_config.seed
        split = split_corpus(corpus, _parse_fractions(args.fractions), seed)
        wanted = set(split.part(args.split))
        records = [r for r in corpus.records if r.id in wanted]
    report = evaluate_records(checkpoint, records, vectorizer)
    _emit_report(report, args)
    if args.confusion_csv:
        Path(args.confusion_csv).write_text(
            report.confusion_matrix.to_csv(), encoding="utf-8"
        )
    return 0


def cmd_predict(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    vectorizer = _vectorizer_for_checkpoint(checkpoint, args.encoder)
    record = CommitRecord(
        id="cli:input", message=args.message, code_change=args.cc
    )
    prediction = predict(checkpoint, record, stored_prototypes(checkpoint), vectorizer)
    sys.stdout.write(
        json.dumps({"label": prediction.label, "scores": prediction.scores}) + "\n"
    )
    return 0


def cmd_fewshot(args) -> int:
    corpus = load_dataset(args.corpus, args.schema)
    train_config, augment_config, _ = _merged_configs(args)
    vectorizer = _build_vectorizer(corpus, args)
    shots = _parse_int_list(args.shots, "--shots")
    seeds = _parse_int_list(args.seeds, "--seeds")

    def progress(s: int, seed: int, report) -> None:
        sys.stderr.write(
            f"shots={s} seed={seed} accuracy={report.accuracy:.4f} "
            f"macro_f1={report.macro_f1:.4f}\n"
        )

    report = run_fewshot_benchmark(
        corpus,
        shots,
        seeds,
        vectorizer,
        augment_config,
        train_config,
        out_dim=args.out_dim,
        val_fraction=args.val_fraction,
        on_cell=progress,
    )
    _emit_report(report, args)
    return 0


def cmd_bench(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    vectorizer = _vectorizer_for_checkpoint(checkpoint, args.encoder)
    report = bench_inference(
        checkpoint,
        vectorizer,
        lengths=_parse_int_list(args.lengths, "--lengths"),
        reps=args.reps,
    )
    _emit_report(report, args)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="commitcontrast",
        description="Few-shot commit classification via contrastive projection heads.",
    )
    parser.add_argument("--version", action="version", version=_VERSION_LINE)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="normalize a corpus CSV and print class counts")
    p.add_argument("--input", required=True)
    p.add_argument("--schema", required=True, choices=("three_way", "two_way", "generic"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="fit a projection head and write a checkpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--schema", default="generic")
    p.add_argument("--out", required=True)
    p.add_argument("--out-dim", type=int, default=128)
    p.add_argument("--val-fraction", type=float, default=0.15)
    _add_encoder_flags(p)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a corpus split against a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--schema", default="generic")
    p.add_argument("--split", default="test", choices=("train", "validation", "test", "all"))
    p.add_argument("--fractions", default="0.7,0.15,0.15")
    p.add_argument("--seed", type=int, help="split shuffle seed (default: the checkpoint's)")
    p.add_argument("--encoder", help="precomputed:PATH when the checkpoint needs a store")
    p.add_argument("--out", help="also write the JSON report here")
    p.add_argument("--confusion-csv", help="write the confusion matrix as CSV here")
    p.add_argument("--table", action="store_true", help="aligned table instead of JSON")
    p.add_argument("--weighted", action="store_true", help="weighted aggregate in the table")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="classify one commit message")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--message", required=True)
    p.add_argument("--cc", help="raw code-change text, if the encoder uses it")
    p.add_argument("--encoder", help="precomputed:PATH when the checkpoint needs a store")
    p.add_argument("--seed", type=int, help="accepted for uniformity; prediction is deterministic")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("fewshot", help="run the shots x seeds benchmark grid")
    p.add_argument("--corpus", required=True)
    p.add_argument("--schema", default="generic")
    p.add_argument("--shots", default="5,10,15,20,50")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--out-dim", type=int, default=128)
    p.add_argument("--val-fraction", type=float, default=0.15)
    p.add_argument("--out", help="also write the JSON report here")
    p.add_argument("--table", action="store_true")
    _add_encoder_flags(p)
    _add_config_flags(p)
    p.set_defaults(func=cmd_fewshot)

    p = sub.add_parser("bench", help="encode+predict latency across message lengths")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--lengths", default="8,32,128,512")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--encoder", help="precomputed:PATH when the checkpoint needs a store")
    p.add_argument("--seed", type=int, help="accepted for uniformity; timing uses no RNG")
    p.add_argument("--out", help="also write the JSON report here")
    p.add_argument("--table", action="store_true")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as e:
        sys.stderr.write(f"error: {e}\n")
        return 2
    except OSError as e:
        sys.stderr.write(f"error: {e}\n")
        return 2
    except RuntimeFailure as e:
        sys.stderr.write(f"error: {e}\n")
        return 3
