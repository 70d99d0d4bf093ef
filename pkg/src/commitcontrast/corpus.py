"""Corpus ingestion, deterministic splits, and N-way K-shot episode sampling.

Three CSV schemas are supported (UTF-8, header row, RFC 4180 quoting):

* ``three_way``  -- columns Commit_ID, Project, Comment, 3_labels with label
  tokens p/c/a.  Any extra columns that parse as numbers on every row are
  collected, in header order, into a pre-vectorized code-change feature.
* ``two_way``    -- columns Github, Message, Diff, Label with tokens 0/1; the
  Diff column is kept as raw code-change text.
* ``generic``    -- columns id, message, optional code_change (raw text),
  optional label, plus optional all-numeric extra columns forming a
  pre-vectorized code-change (raw text and numeric extras are exclusive).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadFractions,
    DuplicateId,
    InsufficientClassSupport,
    MalformedLine,
    MissingColumn,
    NonFiniteInput,
    UnknownLabelToken,
)

SCHEMAS = ("three_way", "two_way", "generic")

_THREE_WAY_COLUMNS = ("Commit_ID", "Project", "Comment", "3_labels")
_THREE_WAY_TOKENS = {"p": "Perfective", "c": "Corrective", "a": "Adaptive"}
_TWO_WAY_COLUMNS = ("Github", "Message", "Diff", "Label")
_TWO_WAY_TOKENS = {"1": "Positive", "0": "Negative"}


@dataclass(frozen=True)
class CommitRecord:
    """One commit: identifier, message text, optional code-change feature,
    optional class label.  ``code_change`` is either raw diff text (str) or a
    pre-vectorized float vector (numpy array)."""

    id: str
    message: str
    code_change: str | np.ndarray | None = None
    label: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("record id must be nonempty")
        if isinstance(self.code_change, np.ndarray):
            if not np.all(np.isfinite(self.code_change)):
                raise NonFiniteInput(
                    f"record {self.id!r}: code-change vector has non-finite entries"
                )

    @property
    def has_vector_cc(self) -> bool:
        return isinstance(self.code_change, np.ndarray)

    @property
    def has_text_cc(self) -> bool:
        return isinstance(self.code_change, str)


@dataclass(frozen=True)
class LabelSet:
    """Ordered distinct class identifiers; the order is canonical for
    confusion-matrix axes and tie-breaking."""

    classes: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("duplicate class identifiers")

    def __len__(self) -> int:
        return len(self.classes)

    def __iter__(self):
        return iter(self.classes)

    def index(self, label: str) -> int:
        return self.classes.index(label)


@dataclass
class Corpus:
    records: list[CommitRecord]
    label_set: LabelSet

    def __len__(self) -> int:
        return len(self.records)

    def by_id(self) -> dict[str, CommitRecord]:
        return {r.id: r for r in self.records}

    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def class_counts(self) -> dict[str, int]:
        counts = {c: 0 for c in self.label_set}
        for r in self.records:
            if r.label is not None:
                counts[r.label] += 1
        return counts

    def cc_dimension(self) -> int | None:
        """Common length of pre-vectorized code-change features, or None."""
        dims = {len(r.code_change) for r in self.records if r.has_vector_cc}
        if not dims:
            return None
        if len(dims) > 1:
            raise MalformedLine(f"mixed code-change vector lengths: {sorted(dims)}")
        return dims.pop()


@dataclass(frozen=True)
class CorpusSplit:
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]
    fractions: tuple[float, float, float]
    seed: int

    def part(self, name: str) -> tuple[str, ...]:
        if name not in ("train", "validation", "test"):
            raise ValueError(f"unknown split part {name!r}")
        return getattr(self, name)


@dataclass(frozen=True)
class Episode:
    way: int
    shots: int
    support: tuple[str, ...]
    query: tuple[str, ...]
    seed: int


def _is_number(text: str) -> bool:
    try:
        value = float(text)
    except ValueError:
        return False
    return math.isfinite(value)


def _reader(path: str | Path):
    handle = open(path, "r", encoding="utf-8", newline="")
    return handle, csv.reader(handle)


def _require_columns(header: list[str], wanted: tuple[str, ...], schema: str) -> None:
    missing = [c for c in wanted if c not in header]
    if missing:
        raise MissingColumn(f"schema {schema!r}: missing column(s) {', '.join(missing)}")


def _numeric_extras(header: list[str], named: set[str], rows: list[list[str]]) -> list[int]:
    """Indices of extra columns whose cells parse as a number on every row.

    Empty cells are tolerated (a record may lack the code-change feature);
    a column counts only if at least one cell is non-empty.
    """
    extras = [i for i, name in enumerate(header) if name not in named]
    picked = []
    for i in extras:
        cells = [row[i] if len(row) > i else "" for row in rows]
        filled = [c for c in cells if c.strip()]
        if filled and all(_is_number(c) for c in filled):
            picked.append(i)
    return picked


def _row_cc_vector(row: list[str], cc_cols: list[int], row_number: int) -> np.ndarray | None:
    """Vector from the numeric extra columns; all-empty means no feature."""
    cells = [row[i] if len(row) > i else "" for i in cc_cols]
    filled = [c for c in cells if c.strip()]
    if not filled:
        return None
    if len(filled) != len(cells):
        raise MalformedLine(
            f"row {row_number}: partially filled code-change feature columns"
        )
    return np.array([float(c) for c in cells], dtype=np.float64)


def _build_label_set(records: list[CommitRecord]) -> LabelSet:
    seen: list[str] = []
    for r in records:
        if r.label is not None and r.label not in seen:
            seen.append(r.label)
    return LabelSet(tuple(seen))


def _check_unique_ids(records: list[CommitRecord]) -> None:
    seen: set[str] = set()
    for r in records:
        if r.id in seen:
            raise DuplicateId(f"duplicate record id {r.id!r}")
        seen.add(r.id)


def load_dataset(path: str | Path, schema: str) -> Corpus:
    """Read a CSV corpus file into records plus a label set.

    Label tokens are mapped to canonical names (p/c/a -> Perfective /
    Corrective / Adaptive; 1/0 -> Positive/Negative); the label set order is
    first-occurrence order in the file.
    """
    if schema not in SCHEMAS:
        raise MissingColumn(f"unknown schema {schema!r}; expected one of {SCHEMAS}")
    handle, reader = _reader(path)
    with handle:
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumn(f"{path}: empty file, no header row") from None
        rows = [row for row in reader if row and any(cell.strip() for cell in row)]

    if schema == "three_way":
        records = _parse_three_way(header, rows)
    elif schema == "two_way":
        records = _parse_two_way(header, rows)
    else:
        records = _parse_generic(header, rows)

    _check_unique_ids(records)
    return Corpus(records=records, label_set=_build_label_set(records))


def _parse_three_way(header: list[str], rows: list[list[str]]) -> list[CommitRecord]:
    _require_columns(header, _THREE_WAY_COLUMNS, "three_way")
    idx = {name: header.index(name) for name in _THREE_WAY_COLUMNS}
    cc_cols = _numeric_extras(header, set(_THREE_WAY_COLUMNS), rows)
    records = []
    for n, row in enumerate(rows, start=2):
        token = row[idx["3_labels"]].strip()
        if token not in _THREE_WAY_TOKENS:
            raise UnknownLabelToken(f"row {n}: unknown label token {token!r}")
        cc = _row_cc_vector(row, cc_cols, n) if cc_cols else None
        records.append(
            CommitRecord(
                id=row[idx["Commit_ID"]],
                message=row[idx["Comment"]],
                code_change=cc,
                label=_THREE_WAY_TOKENS[token],
            )
        )
    return records


def _parse_two_way(header: list[str], rows: list[list[str]]) -> list[CommitRecord]:
    _require_columns(header, _TWO_WAY_COLUMNS, "two_way")
    idx = {name: header.index(name) for name in _TWO_WAY_COLUMNS}
    records = []
    for n, row in enumerate(rows, start=2):
        token = row[idx["Label"]].strip()
        if token not in _TWO_WAY_TOKENS:
            raise UnknownLabelToken(f"row {n}: unknown label token {token!r}")
        diff = row[idx["Diff"]]
        records.append(
            CommitRecord(
                id=row[idx["Github"]],
                message=row[idx["Message"]],
                code_change=diff if diff else None,
                label=_TWO_WAY_TOKENS[token],
            )
        )
    return records


def _parse_generic(header: list[str], rows: list[list[str]]) -> list[CommitRecord]:
    _require_columns(header, ("id", "message"), "generic")
    id_i = header.index("id")
    msg_i = header.index("message")
    cc_i = header.index("code_change") if "code_change" in header else None
    label_i = header.index("label") if "label" in header else None
    named = {"id", "message", "code_change", "label"}
    cc_cols = _numeric_extras(header, named, rows)
    records = []
    for n, row in enumerate(rows, start=2):
        text_cc = row[cc_i] if cc_i is not None and row[cc_i] else None
        vec_cc = _row_cc_vector(row, cc_cols, n) if cc_cols else None
        if text_cc is not None and vec_cc is not None:
            raise MalformedLine(
                f"row {n}: both raw code_change text and numeric feature columns present"
            )
        cc: str | np.ndarray | None = text_cc if text_cc is not None else vec_cc
        label = row[label_i] if label_i is not None and row[label_i] else None
        records.append(
            CommitRecord(id=row[id_i], message=row[msg_i], code_change=cc, label=label)
        )
    return records


def save_dataset(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus in the generic schema; re-loadable via load_dataset.

    Pre-vectorized code-change features are written as extra numeric columns
    cc_0..cc_{d-1}; raw diffs go into the code_change column.
    """
    cc_dim = corpus.cc_dimension()
    header = ["id", "message", "code_change", "label"]
    if cc_dim is not None:
        header += [f"cc_{i}" for i in range(cc_dim)]
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for r in corpus.records:
            row = [r.id, r.message, r.code_change if r.has_text_cc else "", r.label or ""]
            if cc_dim is not None:
                vec = r.code_change if r.has_vector_cc else np.zeros(0)
                row += [repr(float(x)) for x in vec] + [""] * (cc_dim - len(vec))
            writer.writerow(row)


def split_corpus(
    corpus: Corpus, fractions: tuple[float, float, float], seed: int
) -> CorpusSplit:
    """Deterministic train/validation/test partition.

    Validation and test sizes are floor-allocated; the remainder goes to
    train.  The shuffle is a seeded permutation, so identical inputs yield
    identical partitions.
    """
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise BadFractions(f"fractions must be three non-negative reals: {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise BadFractions(f"fractions must sum to 1: {fractions}")

    ids = corpus.ids()
    n = len(ids)
    n_val = math.floor(n * fractions[1])
    n_test = math.floor(n * fractions[2])
    n_train = n - n_val - n_test

    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    shuffled = [ids[i] for i in order]
    return CorpusSplit(
        train=tuple(shuffled[:n_train]),
        validation=tuple(shuffled[n_train : n_train + n_val]),
        test=tuple(shuffled[n_train + n_val :]),
        fractions=(float(fractions[0]), float(fractions[1]), float(fractions[2])),
        seed=seed,
    )


def sample_episode(
    corpus: Corpus,
    train_ids: list[str] | tuple[str, ...],
    way: int,
    shots: int,
    seed: int,
    eval_pool: list[str] | tuple[str, ...] | None = None,
) -> Episode:
    """Sample a stratified N-way K-shot episode from the training ids.

    The support set holds exactly ``shots`` ids per selected class, drawn
    without replacement; the query set is ``eval_pool`` minus the support
    (default pool: every corpus id outside the support).
    """
    by_id = corpus.by_id()
    per_class: dict[str, list[str]] = {c: [] for c in corpus.label_set}
    for rid in train_ids:
        label = by_id[rid].label
        if label is not None:
            per_class[label].append(rid)

    classes = list(corpus.label_set)
    if way > len(classes):
        raise InsufficientClassSupport(
            f"way={way} exceeds the {len(classes)} available classes"
        )
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x45505300]))
    if way < len(classes):
        picked = sorted(rng.choice(len(classes), size=way, replace=False).tolist())
        classes = [classes[i] for i in picked]

    support: list[str] = []
    for c in classes:
        pool = per_class[c]
        if len(pool) < shots:
            raise InsufficientClassSupport(
                f"class {c!r} has {len(pool)} train instances, needs {shots}"
            )
        chosen = rng.choice(len(pool), size=shots, replace=False)
        support.extend(pool[i] for i in sorted(chosen.tolist()))

    support_set = set(support)
    if eval_pool is None:
        eval_pool = corpus.ids()
    query = tuple(rid for rid in eval_pool if rid not in support_set)
    return Episode(way=way, shots=shots, support=tuple(support), query=query, seed=seed)
