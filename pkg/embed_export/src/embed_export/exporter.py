"""Batch-embed commit texts with a pretrained sentence encoder.

Reads a generic corpus CSV (columns ``id``, ``message``, optionally
``code_change``), runs one text feature through a sentence-transformers
model in inference mode, and writes the vectors in the line-delimited
interchange format consumed by the classification engine: one flat JSON
object per line with fields ``id``, ``feature`` and ``vector``, numbers
serialized with 9 significant digits.  A single leading ``#`` comment
line records the model reference and its sequence-truncation limit;
interchange readers skip comment lines.

The writer is atomic: vectors land in a sibling ``.partial`` file that is
renamed onto the target only once every line is complete, so a failed
export never leaves partial output behind.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FEATURE_TAGS = ("msg", "cc")

_FEATURE_COLUMNS = {"msg": "message", "cc": "code_change"}


class ExportError(Exception):
    """Base class for exporter failures."""


class ModelLoadError(ExportError):
    """The sentence-encoder reference could not be resolved or loaded."""


class EncodeError(ExportError):
    """A record could not be embedded; the message names the record id."""


@dataclass(frozen=True)
class ExportJob:
    """One export run: which corpus, which model, which feature, where to."""

    corpus_path: str
    model_ref: str
    feature_tag: str = "msg"
    batch_size: int = 32
    output_path: str = "vectors.jsonl"

    def __post_init__(self) -> None:
        if self.feature_tag not in FEATURE_TAGS:
            raise ExportError(f"feature_tag must be one of {FEATURE_TAGS}")
        if self.batch_size < 1:
            raise ExportError("batch_size must be >= 1")


@dataclass(frozen=True)
class ExportResult:
    path: Path
    records: int
    dimension: int


def _read_texts(path: str | Path, feature_tag: str) -> list[tuple[str, str]]:
    """Return (record id, text) pairs in file order from a generic CSV."""
    column = _FEATURE_COLUMNS[feature_tag]
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ExportError(f"{path}: empty file, no header row") from None
        for needed in ("id", column):
            if needed not in header:
                raise ExportError(f"{path}: missing column {needed!r}")
        id_at = header.index("id")
        text_at = header.index(column)
        pairs: list[tuple[str, str]] = []
        seen: set[str] = set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if max(id_at, text_at) >= len(row):
                raise ExportError(f"{path}: line {lineno}: too few columns")
            rid = row[id_at]
            if rid in seen:
                raise ExportError(f"{path}: duplicate record id {rid!r}")
            seen.add(rid)
            pairs.append((rid, row[text_at]))
    if not pairs:
        raise ExportError(f"{path}: no records")
    return pairs


def _load_model(model_ref: str):
    # imported lazily: pulling in torch costs seconds and --help should not pay it
    try:
        from sentence_transformers import SentenceTransformer
    except Exception as exc:  # pragma: no cover - environment problem
        raise ModelLoadError(f"sentence-transformers unavailable: {exc}") from exc
    try:
        return SentenceTransformer(model_ref, device="cpu")
    except Exception as exc:
        raise ModelLoadError(f"cannot load encoder {model_ref!r}: {exc}") from exc


def _encode_chunk(model, ids: list[str], texts: list[str]) -> np.ndarray:
    """Embed one batch; on failure retry singly so the bad record is named."""
    try:
        matrix = model.encode(
            texts,
            batch_size=len(texts),
            convert_to_numpy=True,
            show_progress_bar=False,
        )
    except Exception:
        rows = []
        for rid, text in zip(ids, texts):
            try:
                rows.append(
                    model.encode(
                        [text], convert_to_numpy=True, show_progress_bar=False
                    )[0]
                )
            except Exception as inner:
                raise EncodeError(f"record {rid!r}: {inner}") from inner
        matrix = np.stack(rows)
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != len(ids):
        raise EncodeError(
            f"record {ids[0]!r}: encoder returned shape {matrix.shape} "
            f"for a batch of {len(ids)}"
        )
    for rid, row in zip(ids, matrix):
        if not np.all(np.isfinite(row)):
            raise EncodeError(f"record {rid!r}: non-finite embedding")
    return matrix


def _format_line(rid: str, feature_tag: str, row: np.ndarray) -> str:
    nums = ", ".join(format(float(x), ".9g") for x in row)
    return '{"id": %s, "feature": %s, "vector": [%s]}' % (
        json.dumps(rid),
        json.dumps(feature_tag),
        nums,
    )


def _header_comment(job: ExportJob, model, dimension: int) -> str:
    limit = getattr(model, "max_seq_length", None)
    return (
        f"# embed-export model={job.model_ref} feature={job.feature_tag} "
        f"dim={dimension} max_seq_length={limit} truncation=model-default"
    )


def export(job: ExportJob) -> ExportResult:
    """Embed every record of the corpus and write an interchange file.

    Record order is preserved.  Raises ModelLoadError if the encoder
    cannot be loaded and EncodeError (naming the record id) if a record
    cannot be embedded; in either case no output file is left behind.
    """
    records = _read_texts(job.corpus_path, job.feature_tag)
    model = _load_model(job.model_ref)

    chunks: list[tuple[list[str], np.ndarray]] = []
    dimension: int | None = None
    for start in range(0, len(records), job.batch_size):
        batch = records[start : start + job.batch_size]
        ids = [rid for rid, _ in batch]
        matrix = _encode_chunk(model, ids, [text for _, text in batch])
        if dimension is None:
            dimension = matrix.shape[1]
        elif matrix.shape[1] != dimension:
            raise ExportError(
                f"dimension changed mid-export: {dimension} then {matrix.shape[1]}"
            )
        chunks.append((ids, matrix))

    out_path = Path(job.output_path)
    tmp_path = out_path.with_name(out_path.name + ".partial")
    try:
        with open(tmp_path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(_header_comment(job, model, dimension) + "\n")
            for ids, matrix in chunks:
                for rid, row in zip(ids, matrix):
                    handle.write(_format_line(rid, job.feature_tag, row) + "\n")
        os.replace(tmp_path, out_path)
    except BaseException:
        tmp_path.unlink(missing_ok=True)
        raise
    return ExportResult(path=out_path, records=len(records), dimension=dimension)
