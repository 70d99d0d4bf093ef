"""Prototype-based inference and the evaluation harness.

Classes are represented by unit-norm mean vectors (prototypes) built from
support records plus their template anchors; prediction is nearest-prototype
by cosine.  The metric suite covers one-vs-rest precision/recall/F1 with
macro and support-weighted aggregates, plus the few-shot benchmark protocol
and a latency benchmark across synthetic message lengths.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, replace
from typing import Callable

import numpy as np

from .augment import generate_anchors
from .corpus import CommitRecord, Corpus, LabelSet, sample_episode
from .encoder import CommitVectorizer
from .errors import (
    ConfigError,
    DigestMismatch,
    EmptyClass,
    EmptyMatrix,
    EmptyPrototype,
    ShapeMismatch,
    UnknownLabel,
)
from .projection import ProjectionModel, project

REPORT_VERSION = "1"

_ZERO_NORM = 1e-12


def to_inference_space(model: ProjectionModel, h, space: str) -> np.ndarray:
    """Representation used for prototypes and scoring: the projected vector
    in `projection` space, the raw encoder vector in `encoder` space."""
    if space == "projection":
        return project(model, h)
    if space == "encoder":
        return np.asarray(h, dtype=np.float64)
    raise ConfigError(f"unknown inference space {space!r}")


def prototypes_from_rows(
    model: ProjectionModel, support_rows: dict[str, np.ndarray], space: str
) -> dict[str, np.ndarray]:
    """Unit-norm class means over pre-encoded support rows."""
    prototypes = {}
    for label, rows in support_rows.items():
        if rows.shape[0] == 0:
            raise EmptyClass(f"class {label!r} has no support rows")
        reps = to_inference_space(model, rows, space)
        mean = reps.mean(axis=0)
        norm = float(np.linalg.norm(mean))
        if norm < _ZERO_NORM:
            raise EmptyPrototype(
                f"class {label!r}: support representations cancel to a zero mean"
            )
        prototypes[label] = mean / norm
    return prototypes


def nearest_class(
    rep: np.ndarray, prototypes: dict[str, np.ndarray], label_order
) -> tuple[str, dict[str, float]]:
    """Cosine scores against every prototype and the argmax label.

    Ties (and the zero representation, which scores 0 everywhere) resolve to
    the earliest class in canonical order.
    """
    labels = list(label_order)
    rep = np.asarray(rep, dtype=np.float64)
    norm = float(np.linalg.norm(rep))
    if norm < _ZERO_NORM:
        return labels[0], {c: 0.0 for c in labels}
    scores = {}
    for c in labels:
        proto = prototypes[c]
        scores[c] = float(rep @ proto) / (norm * float(np.linalg.norm(proto)))
    best = labels[0]
    for c in labels[1:]:
        if scores[c] > scores[best]:
            best = c
    return best, scores


@dataclass(frozen=True)
class Prototypes:
    """Per-class unit vectors bound to the checkpoint they came from."""

    vectors: dict[str, np.ndarray]
    space: str
    checkpoint_digest: str


def class_prototypes(
    checkpoint, support_records: list[CommitRecord], encoders: CommitVectorizer,
    space: str | None = None,
) -> Prototypes:
    """Prototypes over explicit support records plus each class's anchors.

    Every checkpoint class must appear in the support set; anchors alone
    never carry a class.
    """
    if encoders.config_digest() != checkpoint.encoder_digest:
        raise DigestMismatch(
            "encoder configuration does not match the checkpoint's encoder digest"
        )
    if space is None:
        space = checkpoint.train_config.inference_space
    by_class: dict[str, list[CommitRecord]] = {c: [] for c in checkpoint.label_set}
    for r in support_records:
        if r.label in by_class:
            by_class[r.label].append(r)
    empty = [c for c, rs in by_class.items() if not rs]
    if empty:
        raise EmptyClass(f"no support records for class(es) {empty}")
    anchors = generate_anchors(checkpoint.label_set, checkpoint.augment_config)
    for a in anchors:
        by_class[a.label].append(a)
    support_rows = {c: encoders.matrix(rs) for c, rs in by_class.items()}
    vectors = prototypes_from_rows(checkpoint.model, support_rows, space)
    return Prototypes(vectors=vectors, space=space, checkpoint_digest=checkpoint.digest())


def stored_prototypes(checkpoint) -> Prototypes:
    """The prototypes the trainer froze at the best epoch."""
    return Prototypes(
        vectors={c: np.asarray(v, dtype=np.float64) for c, v in checkpoint.prototypes.items()},
        space=checkpoint.train_config.inference_space,
        checkpoint_digest=checkpoint.digest(),
    )


@dataclass(frozen=True)
class Prediction:
    label: str
    scores: dict[str, float]


def predict(
    checkpoint, record: CommitRecord, prototypes: Prototypes,
    encoders: CommitVectorizer,
) -> Prediction:
    """Nearest-prototype prediction for one record."""
    if prototypes.checkpoint_digest != checkpoint.digest():
        raise DigestMismatch("prototypes were built from a different checkpoint")
    if encoders.config_digest() != checkpoint.encoder_digest:
        raise DigestMismatch(
            "encoder configuration does not match the checkpoint's encoder digest"
        )
    h = encoders.vectorize(record)
    rep = to_inference_space(checkpoint.model, h, prototypes.space)
    label, scores = nearest_class(rep, prototypes.vectors, checkpoint.label_set)
    return Prediction(label=label, scores=scores)


class ConfusionMatrix:
    """Counts[true][pred] on canonical label axes."""

    def __init__(self, labels, counts: np.ndarray | None = None):
        self.labels = tuple(labels)
        k = len(self.labels)
        if counts is None:
            counts = np.zeros((k, k), dtype=np.int64)
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (k, k):
            raise ShapeMismatch(
                f"counts shape {counts.shape} does not match {k} labels"
            )
        if np.any(counts < 0):
            raise ValueError("confusion counts must be non-negative")
        self.counts = counts

    def add(self, true_label: str, predicted_label: str) -> None:
        self.counts[self._index(true_label), self._index(predicted_label)] += 1

    def _index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise UnknownLabel(f"label {label!r} not in {self.labels}") from None

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def trace(self) -> int:
        return int(np.trace(self.counts))

    def to_lists(self) -> list[list[int]]:
        return [[int(x) for x in row] for row in self.counts]

    def to_csv(self) -> str:
        lines = ["true\\pred," + ",".join(self.labels)]
        for label, row in zip(self.labels, self.counts):
            lines.append(label + "," + ",".join(str(int(x)) for x in row))
        return "\n".join(lines) + "\n"


def confusion(predictions, gold_labels, labels) -> ConfusionMatrix:
    """Tally aligned prediction/gold lists into a matrix."""
    predictions = list(predictions)
    gold_labels = list(gold_labels)
    if len(predictions) != len(gold_labels):
        raise ShapeMismatch(
            f"{len(predictions)} predictions vs {len(gold_labels)} gold labels"
        )
    cm = ConfusionMatrix(tuple(labels))
    for pred, gold in zip(predictions, gold_labels):
        cm.add(gold, pred)
    return cm


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    degenerate_precision: bool = False
    degenerate_recall: bool = False


@dataclass(frozen=True)
class EvalReport:
    labels: tuple[str, ...]
    per_class: dict[str, ClassMetrics]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    accuracy: float
    confusion_matrix: ConfusionMatrix
    counts: int

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_VERSION,
            "kind": "eval",
            "labels": list(self.labels),
            "per_class": {
                c: {
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "support": m.support,
                    "degenerate_precision": m.degenerate_precision,
                    "degenerate_recall": m.degenerate_recall,
                }
                for c, m in self.per_class.items()
            },
            "macro": {
                "precision": self.macro_precision,
                "recall": self.macro_recall,
                "f1": self.macro_f1,
            },
            "weighted": {
                "precision": self.weighted_precision,
                "recall": self.weighted_recall,
                "f1": self.weighted_f1,
            },
            "accuracy": self.accuracy,
            "confusion_matrix": self.confusion_matrix.to_lists(),
            "counts": self.counts,
        }

    def format_table(self, aggregate: str = "macro") -> str:
        name_width = max(len("class"), *(len(c) for c in self.labels))
        header = (
            f"{'class':<{name_width}}  {'precision':>9}  {'recall':>9}  "
            f"{'f1':>9}  {'support':>7}"
        )
        lines = [header, "-" * len(header)]
        for c in self.labels:
            m = self.per_class[c]
            lines.append(
                f"{c:<{name_width}}  {m.precision:>9.4f}  {m.recall:>9.4f}  "
                f"{m.f1:>9.4f}  {m.support:>7d}"
            )
        lines.append("-" * len(header))
        if aggregate == "weighted":
            agg = (self.weighted_precision, self.weighted_recall, self.weighted_f1)
        else:
            agg = (self.macro_precision, self.macro_recall, self.macro_f1)
        lines.append(
            f"{aggregate:<{name_width}}  {agg[0]:>9.4f}  {agg[1]:>9.4f}  "
            f"{agg[2]:>9.4f}  {self.counts:>7d}"
        )
        lines.append(f"accuracy: {self.accuracy:.4f}  ({self.counts} scored)")
        return "\n".join(lines) + "\n"


def metrics(cm: ConfusionMatrix) -> EvalReport:
    """One-vs-rest metrics from a confusion matrix.

    A class that was never predicted gets precision 0 (never present in the
    gold labels: recall 0), with the division-by-zero case flagged rather
    than silently folded into the averages.
    """
    total = cm.total
    if total == 0:
        raise EmptyMatrix("confusion matrix has no scored predictions")
    per_class: dict[str, ClassMetrics] = {}
    row_sums = cm.counts.sum(axis=1)
    col_sums = cm.counts.sum(axis=0)
    for i, label in enumerate(cm.labels):
        tp = int(cm.counts[i, i])
        fp = int(col_sums[i]) - tp
        fn = int(row_sums[i]) - tp
        degenerate_p = (tp + fp) == 0
        degenerate_r = (tp + fn) == 0
        precision = 0.0 if degenerate_p else tp / (tp + fp)
        recall = 0.0 if degenerate_r else tp / (tp + fn)
        f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
        per_class[label] = ClassMetrics(
            precision=precision,
            recall=recall,
            f1=f1,
            support=int(row_sums[i]),
            degenerate_precision=degenerate_p,
            degenerate_recall=degenerate_r,
        )
    k = len(cm.labels)
    macro_p = sum(m.precision for m in per_class.values()) / k
    macro_r = sum(m.recall for m in per_class.values()) / k
    macro_f1 = sum(m.f1 for m in per_class.values()) / k
    weighted_p = sum(m.precision * m.support for m in per_class.values()) / total
    weighted_r = sum(m.recall * m.support for m in per_class.values()) / total
    weighted_f1 = sum(m.f1 * m.support for m in per_class.values()) / total
    return EvalReport(
        labels=cm.labels,
        per_class=per_class,
        macro_precision=macro_p,
        macro_recall=macro_r,
        macro_f1=macro_f1,
        weighted_precision=weighted_p,
        weighted_recall=weighted_r,
        weighted_f1=weighted_f1,
        accuracy=cm.trace / total,
        confusion_matrix=cm,
        counts=total,
    )


def evaluate_records(
    checkpoint, records: list[CommitRecord], encoders: CommitVectorizer,
    prototypes: Prototypes | None = None,
) -> EvalReport:
    """Score labeled records against a checkpoint (stored prototypes by
    default) and summarize into a report."""
    if prototypes is None:
        prototypes = stored_prototypes(checkpoint)
    preds = []
    golds = []
    for r in records:
        if r.label is None:
            continue
        preds.append(predict(checkpoint, r, prototypes, encoders).label)
        golds.append(r.label)
    cm = confusion(preds, golds, checkpoint.label_set)
    return metrics(cm)


@dataclass(frozen=True)
class FewshotCell:
    mean_accuracy: float
    mean_macro_f1: float
    per_seed: dict[int, EvalReport]


@dataclass(frozen=True)
class FewshotReport:
    shots: tuple[int, ...]
    seeds: tuple[int, ...]
    cells: dict[int, FewshotCell]
    config_digest: str

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_VERSION,
            "kind": "fewshot",
            "shots": list(self.shots),
            "seeds": list(self.seeds),
            "config_digest": self.config_digest,
            "cells": {
                str(s): {
                    "mean_accuracy": cell.mean_accuracy,
                    "mean_macro_f1": cell.mean_macro_f1,
                    "per_seed": {
                        str(seed): report.to_dict()
                        for seed, report in cell.per_seed.items()
                    },
                }
                for s, cell in self.cells.items()
            },
        }

    def format_table(self) -> str:
        header = f"{'shots':>5}  {'mean acc':>9}  {'mean F1':>9}  seeds"
        lines = [header, "-" * len(header)]
        for s in self.shots:
            cell = self.cells[s]
            lines.append(
                f"{s:>5}  {cell.mean_accuracy:>9.4f}  {cell.mean_macro_f1:>9.4f}  "
                f"{len(cell.per_seed)}"
            )
        return "\n".join(lines) + "\n"


_VAL_STREAM = 0x56414C49


def carve_validation_ids(corpus: Corpus, seed: int, fraction: float = 0.15) -> list[str]:
    """Seeded sample of record ids reserved for early-stopping validation."""
    if not (0 < fraction < 1):
        raise ConfigError(f"validation fraction must lie in (0, 1), got {fraction}")
    ids = corpus.ids()
    n_val = max(1, int(np.floor(fraction * len(ids))))
    rng = np.random.default_rng(np.random.SeedSequence([seed, _VAL_STREAM]))
    picked = rng.choice(len(ids), size=n_val, replace=False)
    chosen = set(picked.tolist())
    return [rid for i, rid in enumerate(ids) if i in chosen]


def run_fewshot_benchmark(
    corpus: Corpus,
    shots: list[int],
    seeds: list[int],
    vectorizer: CommitVectorizer,
    augment_config,
    train_config,
    *,
    out_dim: int = 128,
    val_fraction: float = 0.15,
    on_cell: Callable[[int, int, EvalReport], None] | None = None,
) -> FewshotReport:
    """The episode protocol: per (shots, seed), reserve a validation sample,
    draw a stratified support set from the remainder, train, and score the
    episode query set (the remainder minus the support).

    Cells are fully independent: each derives every random draw from its own
    (seed, config) pair.
    """
    from .trainer import train  # deferred to avoid an import cycle

    if not shots:
        raise ConfigError("shots list is empty")
    if not seeds:
        raise ConfigError("seeds list is empty")
    by_id = corpus.by_id()
    way = len(corpus.label_set)
    cells: dict[int, FewshotCell] = {}
    for s in sorted(set(shots)):
        per_seed: dict[int, EvalReport] = {}
        for seed in seeds:
            aug_cfg = replace(augment_config, seed=seed)
            train_cfg = replace(train_config, seed=seed)
            val_ids = carve_validation_ids(corpus, seed, val_fraction)
            val_set = set(val_ids)
            pool_ids = [rid for rid in corpus.ids() if rid not in val_set]
            episode = sample_episode(
                corpus, pool_ids, way=way, shots=s, seed=seed, eval_pool=pool_ids
            )
            support = [by_id[rid] for rid in episode.support]
            val_records = [by_id[rid] for rid in val_ids]
            checkpoint = train(
                support, val_records, vectorizer, aug_cfg, train_cfg, out_dim=out_dim
            )
            query = [by_id[rid] for rid in episode.query]
            report = evaluate_records(checkpoint, query, vectorizer)
            per_seed[seed] = report
            if on_cell is not None:
                on_cell(s, seed, report)
        cells[s] = FewshotCell(
            mean_accuracy=float(np.mean([r.accuracy for r in per_seed.values()])),
            mean_macro_f1=float(np.mean([r.macro_f1 for r in per_seed.values()])),
            per_seed=per_seed,
        )
    digest_payload = json.dumps(
        {
            "augment": asdict(augment_config),
            "train": train_config.to_dict(),
            "encoder": vectorizer.config_digest(),
            "shots": sorted(set(shots)),
            "seeds": list(seeds),
            "out_dim": out_dim,
            "val_fraction": val_fraction,
        },
        sort_keys=True,
        default=str,
    )
    return FewshotReport(
        shots=tuple(sorted(set(shots))),
        seeds=tuple(seeds),
        cells=cells,
        config_digest=hashlib.sha256(digest_payload.encode("utf-8")).hexdigest(),
    )


@dataclass(frozen=True)
class BenchReport:
    latencies: dict[int, float]
    reps: int

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_VERSION,
            "kind": "bench",
            "reps": self.reps,
            "latencies_seconds": {str(k): v for k, v in sorted(self.latencies.items())},
        }

    def format_table(self) -> str:
        header = f"{'length':>6}  {'mean seconds':>12}"
        lines = [header, "-" * len(header)]
        for length in sorted(self.latencies):
            lines.append(f"{length:>6}  {self.latencies[length]:>12.6f}")
        lines.append(f"reps: {self.reps} (3 warmup calls excluded)")
        return "\n".join(lines) + "\n"


def bench_inference(
    checkpoint,
    encoders: CommitVectorizer,
    lengths=(8, 32, 128, 512),
    reps: int = 100,
) -> BenchReport:
    """Mean encode+predict wall-clock per synthetic message length.

    Messages are exactly `length` whitespace-separated tokens; each length
    gets 3 untimed warmup calls, then `reps` timed passes.
    """
    if reps < 10:
        raise ConfigError(f"reps must be >= 10, got {reps}")
    prototypes = stored_prototypes(checkpoint)
    latencies: dict[int, float] = {}
    for length in sorted(set(int(x) for x in lengths)):
        if length < 1:
            raise ConfigError(f"lengths must be >= 1, got {length}")
        message = " ".join(f"tok{i}" for i in range(length))
        record = CommitRecord(id=f"bench:{length}", message=message)

        def one_pass() -> None:
            h = encoders.vectorize(record)
            rep = to_inference_space(checkpoint.model, h, prototypes.space)
            nearest_class(rep, prototypes.vectors, checkpoint.label_set)

        for _ in range(3):
            one_pass()
        start = time.perf_counter()
        for _ in range(reps):
            one_pass()
        latencies[length] = (time.perf_counter() - start) / reps
    return BenchReport(latencies=latencies, reps=reps)
