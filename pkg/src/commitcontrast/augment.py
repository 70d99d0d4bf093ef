"""Template-anchor generation and contrastive pair construction.

For each class c the builder samples ``r_pairs`` positive pairs from within
the class pool and ``r_pairs`` negative pairs crossing into other classes,
for a balanced total of ``2 * r_pairs * |C|`` triplets.  Per-class sampling
uses independent sub-seeds, so the construction can fan out by class without
changing results.
"""

from __future__ import annotations

import csv
import string
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import CommitRecord, LabelSet
from .errors import ConfigError, EmptyClassPool, TooFewClasses

DEFAULT_TEMPLATE = "This sentence is {label}"


@dataclass(frozen=True)
class AugmentConfig:
    r_pairs: int = 20
    anchors_per_class: int = 20
    template: str = DEFAULT_TEMPLATE
    seed: int = 0

    def __post_init__(self) -> None:
        if self.r_pairs < 1:
            raise ConfigError(f"r_pairs must be >= 1, got {self.r_pairs}")
        if self.anchors_per_class < 0:
            raise ConfigError(
                f"anchors_per_class must be >= 0, got {self.anchors_per_class}"
            )
        fields = [
            name
            for _, name, _, _ in string.Formatter().parse(self.template)
            if name is not None
        ]
        if len(fields) != 1:
            raise ConfigError(
                f"template must contain exactly one placeholder, got {len(fields)}"
            )


@dataclass(frozen=True)
class TripletSide:
    text: str
    source: str


@dataclass(frozen=True)
class ContrastiveTriplet:
    left: TripletSide
    right: TripletSide
    similar: int

    def __post_init__(self) -> None:
        if self.left.source == self.right.source:
            raise ValueError("self-pair: left and right share a source id")
        if self.similar not in (0, 1):
            raise ValueError(f"similar flag must be 0 or 1, got {self.similar}")


@dataclass
class ContrastiveDataset:
    """Per-class positive and negative pair sets plus the flattened list."""

    positives: dict[str, list[ContrastiveTriplet]]
    negatives: dict[str, list[ContrastiveTriplet]]

    @property
    def triplets(self) -> list[ContrastiveTriplet]:
        flat: list[ContrastiveTriplet] = []
        for c in self.positives:
            flat.extend(self.positives[c])
            flat.extend(self.negatives[c])
        return flat

    @property
    def positive_list(self) -> list[ContrastiveTriplet]:
        flat: list[ContrastiveTriplet] = []
        for c in self.positives:
            flat.extend(self.positives[c])
        return flat

    def __len__(self) -> int:
        return sum(len(v) for v in self.positives.values()) + sum(
            len(v) for v in self.negatives.values()
        )


def anchor_text(config: AugmentConfig, label: str) -> str:
    field_name = next(
        name
        for _, name, _, _ in string.Formatter().parse(config.template)
        if name is not None
    )
    if field_name == "" or field_name.isdigit():
        return config.template.format(label)
    return config.template.format(**{field_name: label})


def generate_anchors(labels: LabelSet, config: AugmentConfig) -> list[CommitRecord]:
    """Pseudo-labeled records rendered from the template, per class."""
    anchors = []
    for c in labels:
        text = anchor_text(config, c)
        for k in range(config.anchors_per_class):
            anchors.append(
                CommitRecord(id=f"anchor:{c}:{k}", message=text, label=c)
            )
    return anchors


def build_triplets(
    pool: list[CommitRecord], config: AugmentConfig
) -> ContrastiveDataset:
    """Balanced positive/negative triplets over a labeled pool.

    Positives pair two distinct same-class members; negatives pair a class
    member with a uniform draw from the other classes.  Pairs are sampled
    with replacement across pairs, never within one.
    """
    per_class: dict[str, list[CommitRecord]] = {}
    order: list[str] = []
    for r in pool:
        if r.label is None:
            continue
        if r.label not in per_class:
            per_class[r.label] = []
            order.append(r.label)
        per_class[r.label].append(r)

    if len(order) < 2:
        raise TooFewClasses(f"need >= 2 labeled classes, got {len(order)}")
    for c in order:
        if len(per_class[c]) < 2:
            raise EmptyClassPool(
                f"class {c!r} has {len(per_class[c])} members, needs >= 2"
            )

    positives: dict[str, list[ContrastiveTriplet]] = {}
    negatives: dict[str, list[ContrastiveTriplet]] = {}
    for ci, c in enumerate(order):
        members = per_class[c]
        others = [r for oc in order if oc != c for r in per_class[oc]]
        pos_rng = np.random.default_rng(np.random.SeedSequence([config.seed, ci, 0]))
        neg_rng = np.random.default_rng(np.random.SeedSequence([config.seed, ci, 1]))

        pos: list[ContrastiveTriplet] = []
        for _ in range(config.r_pairs):
            i, j = pos_rng.choice(len(members), size=2, replace=False)
            pos.append(
                ContrastiveTriplet(
                    left=TripletSide(members[i].message, members[i].id),
                    right=TripletSide(members[j].message, members[j].id),
                    similar=1,
                )
            )
        neg: list[ContrastiveTriplet] = []
        for _ in range(config.r_pairs):
            i = int(neg_rng.integers(len(members)))
            j = int(neg_rng.integers(len(others)))
            neg.append(
                ContrastiveTriplet(
                    left=TripletSide(members[i].message, members[i].id),
                    right=TripletSide(others[j].message, others[j].id),
                    similar=0,
                )
            )
        positives[c] = pos
        negatives[c] = neg

    return ContrastiveDataset(positives=positives, negatives=negatives)


def regroup(dataset: ContrastiveDataset, n_regroups: int, seed: int) -> list[list[int]]:
    """Seeded permutations of the positive-triplet indices, one per regroup.

    The trainer chunks each ordering into pair batches; orderings differ
    across regroup indices via derived sub-seeds.
    """
    if n_regroups < 1:
        raise ConfigError(f"n_regroups must be >= 1, got {n_regroups}")
    n = len(dataset.positive_list)
    orderings = []
    for g in range(n_regroups):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x52454752, g]))
        orderings.append(rng.permutation(n).tolist())
    return orderings


def dump_triplets(dataset: ContrastiveDataset, path: str | Path) -> None:
    """Audit dump: one line per triplet with left id, right id, similar flag."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        for t in dataset.triplets:
            writer.writerow([t.left.source, t.right.source, t.similar])
