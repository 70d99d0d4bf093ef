"""The optimization loop.

Decoupled-weight-decay adaptive updates over hand-computed gradients, epochs
of regrouped pair batches, validation-accuracy early stopping, and a
self-contained checkpoint document.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .augment import AugmentConfig, build_triplets, generate_anchors, regroup
from .contrastive import loss_gradient
from .corpus import CommitRecord, LabelSet
from .encoder import CommitVectorizer
from .errors import (
    ConfigError,
    CorruptCheckpoint,
    EmptyValidation,
    ShapeMismatch,
    TooFewClasses,
    VersionMismatch,
)
from .projection import ProjectionModel, init_model

CHECKPOINT_VERSION = "1"

INFERENCE_SPACES = ("projection", "encoder")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters.

    learning_rate defaults to 1e-2, sized for a small affine head over
    frozen encoders; 1e-5 (the reference rate for full encoder fine-tuning)
    stalls at this scale.
    """

    batch_rows: int = 64
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps_opt: float = 1e-8
    weight_decay: float = 0.01
    max_epochs: int = 200
    patience: int = 10
    tau: float = 0.1
    n_regroups: int = 1
    seed: int = 0
    inference_space: str = "projection"

    def __post_init__(self) -> None:
        if self.batch_rows < 4 or self.batch_rows % 2 != 0:
            raise ConfigError(f"batch_rows must be even and >= 4, got {self.batch_rows}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigError(
                f"betas must lie in (0, 1), got {self.beta1}, {self.beta2}"
            )
        if self.eps_opt <= 0:
            raise ConfigError(f"eps_opt must be > 0, got {self.eps_opt}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.tau <= 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")
        if self.n_regroups < 1:
            raise ConfigError(f"n_regroups must be >= 1, got {self.n_regroups}")
        if self.inference_space not in INFERENCE_SPACES:
            raise ConfigError(
                f"inference_space must be one of {INFERENCE_SPACES}, "
                f"got {self.inference_space!r}"
            )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class OptimizerState:
    first_moment: dict[str, np.ndarray]
    second_moment: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "OptimizerState":
        return cls(
            first_moment={k: np.zeros_like(v) for k, v in params.items()},
            second_moment={k: np.zeros_like(v) for k, v in params.items()},
        )


def adamw_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    config: TrainConfig,
) -> tuple[dict[str, np.ndarray], OptimizerState]:
    """One decoupled-weight-decay adaptive update, in place.

    m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2;  bias-corrected by the
    incremented step count;  theta <- theta - lr (m^ / (sqrt(v^) + eps) + wd theta).
    """
    if set(params) != set(grads):
        raise ShapeMismatch(
            f"parameter/gradient key mismatch: {sorted(params)} vs {sorted(grads)}"
        )
    for key, p in params.items():
        if p.shape != grads[key].shape:
            raise ShapeMismatch(
                f"{key}: parameter shape {p.shape} != gradient shape {grads[key].shape}"
            )
    state.step += 1
    t = state.step
    b1, b2 = config.beta1, config.beta2
    for key, p in params.items():
        g = grads[key]
        m = state.first_moment[key]
        v = state.second_moment[key]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        p -= config.learning_rate * (
            m_hat / (np.sqrt(v_hat) + config.eps_opt) + config.weight_decay * p
        )
    return params, state


class EarlyStopTracker:
    """Strict-improvement accuracy tracking with a patience budget.

    The first epoch reaching the running best is kept; `update` returns True
    once `patience` consecutive epochs fail to improve on it.
    """

    def __init__(self, patience: int):
        if patience < 1:
            raise ConfigError(f"patience must be >= 1, got {patience}")
        self.patience = patience
        self.epoch = 0
        self.best_accuracy: float | None = None
        self.best_epoch: int | None = None
        self.stale = 0
        self.improved = False

    def update(self, accuracy: float) -> bool:
        self.epoch += 1
        if self.best_accuracy is None or accuracy > self.best_accuracy:
            self.best_accuracy = accuracy
            self.best_epoch = self.epoch
            self.stale = 0
            self.improved = True
        else:
            self.stale += 1
            self.improved = False
        return self.stale >= self.patience


@dataclass
class Checkpoint:
    """Everything inference needs: head parameters, encoder provenance,
    label order, effective configs, prototypes, and best-epoch bookkeeping."""

    model: ProjectionModel
    encoder_identifier: str
    encoder_digest: str
    encoder_spec: dict
    label_set: LabelSet
    train_config: TrainConfig
    augment_config: AugmentConfig
    best_val_accuracy: float
    best_epoch: int
    prototypes: dict[str, np.ndarray]
    format_version: str = CHECKPOINT_VERSION

    def digest(self) -> str:
        """Content hash of the canonical payload, cached — checkpoints are
        treated as immutable once built."""
        if getattr(self, "_digest", None) is None:
            canonical = json.dumps(
                self.payload(), sort_keys=True, separators=(",", ":")
            )
            self._digest = hashlib.sha256(canonical.encode("utf-8")).hexdigest()
        return self._digest

    def payload(self) -> dict:
        return {
            "format_version": self.format_version,
            "model": self.model.to_dict(),
            "encoder_identifier": self.encoder_identifier,
            "encoder_digest": self.encoder_digest,
            "encoder_spec": _encode_floats(self.encoder_spec),
            "label_set": list(self.label_set),
            "train_config": _encode_floats(self.train_config.to_dict()),
            "augment_config": _encode_floats(asdict(self.augment_config)),
            "best_val_accuracy": _float_repr(self.best_val_accuracy),
            "best_epoch": self.best_epoch,
            "prototypes": {
                c: [_float_repr(x) for x in vec] for c, vec in self.prototypes.items()
            },
        }


def _float_repr(x: float) -> str:
    return f"{float(x):.17g}"


def _encode_floats(obj):
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        return _float_repr(obj)
    if isinstance(obj, dict):
        return {k: _encode_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode_floats(v) for v in obj]
    return obj


def _decode_config_floats(payload: dict, float_keys: set[str]) -> dict:
    out = {}
    for k, v in payload.items():
        out[k] = float(v) if k in float_keys and v is not None else v
    return out


_TRAIN_FLOAT_KEYS = {
    "learning_rate", "beta1", "beta2", "eps_opt", "weight_decay", "tau",
}
_ENCODER_SPEC_FLOAT_KEYS = {"p", "eps"}


def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> None:
    text = json.dumps(checkpoint.payload(), sort_keys=True, indent=2) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CorruptCheckpoint(f"{path}: {e}") from None
    if not isinstance(payload, dict):
        raise CorruptCheckpoint(f"{path}: top level is not an object")
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise VersionMismatch(
            f"{path}: format version {version!r}, expected {CHECKPOINT_VERSION!r}"
        )
    try:
        spec = dict(payload["encoder_spec"])
        for k in _ENCODER_SPEC_FLOAT_KEYS:
            if spec.get(k) is not None:
                spec[k] = float(spec[k])
        return Checkpoint(
            model=ProjectionModel.from_dict(payload["model"]),
            encoder_identifier=payload["encoder_identifier"],
            encoder_digest=payload["encoder_digest"],
            encoder_spec=spec,
            label_set=LabelSet(tuple(payload["label_set"])),
            train_config=TrainConfig(
                **_decode_config_floats(payload["train_config"], _TRAIN_FLOAT_KEYS)
            ),
            augment_config=AugmentConfig(**payload["augment_config"]),
            best_val_accuracy=float(payload["best_val_accuracy"]),
            best_epoch=int(payload["best_epoch"]),
            prototypes={
                c: np.array([float(x) for x in vec], dtype=np.float64)
                for c, vec in payload["prototypes"].items()
            },
            format_version=version,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptCheckpoint(f"{path}: {e}") from None


def chunk_pairs(n_pairs: int, pairs_per_batch: int) -> list[list[int]]:
    """Slice pair indices 0..n-1 into batches.

    A trailing remainder of one lone pair cannot anchor against enough
    negatives, so it merges into the preceding batch; remainders of two or
    more pairs stand alone.
    """
    if pairs_per_batch < 2:
        raise ConfigError(f"need >= 2 pairs per batch, got {pairs_per_batch}")
    indices = list(range(n_pairs))
    chunks = [
        indices[i : i + pairs_per_batch]
        for i in range(0, n_pairs, pairs_per_batch)
    ]
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-2].extend(chunks.pop())
    return chunks


def _epoch_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence([seed, 0x45504F43, epoch]).generate_state(1)[0])


def train(
    train_records: list[CommitRecord],
    val_records: list[CommitRecord],
    vectorizer: CommitVectorizer,
    augment_config: AugmentConfig,
    train_config: TrainConfig,
    *,
    out_dim: int = 128,
    with_bias: bool = True,
    on_epoch=None,
) -> Checkpoint:
    """Fit the projection head on contrastive pairs built from the training
    records plus template anchors.

    Per epoch: regroup the positive pairs into fresh batches (n_regroups
    orderings per epoch), take one optimizer step per batch, then score
    validation accuracy through the same prototype path used at test time.
    Stops at max_epochs or after `patience` epochs without a new best; the
    returned checkpoint carries the parameters and prototypes of the first
    best epoch.  `on_epoch(epoch, mean_loss, val_accuracy)` observes progress.
    """
    from . import evaluate  # local import; evaluate also serves inference

    label_set = _label_set_of(train_records)
    if len(label_set) < 2:
        raise TooFewClasses(f"training needs >= 2 classes, got {len(label_set)}")
    if not val_records:
        raise EmptyValidation("validation set is empty")
    unlabeled = [r.id for r in val_records if r.label is None]
    if unlabeled:
        raise EmptyValidation(f"validation records lack labels: {unlabeled[:5]}")

    anchors = generate_anchors(label_set, augment_config)
    pool = list(train_records) + anchors
    dataset = build_triplets(pool, augment_config)
    positives = dataset.positive_list

    rows = vectorizer.matrix(pool)
    row_of = {r.id: rows[i] for i, r in enumerate(pool)}
    width = rows.shape[1]
    val_rows = vectorizer.matrix(val_records)

    model = init_model(
        in_dim=width, out_dim=out_dim, seed=train_config.seed, with_bias=with_bias
    )
    params = {"weight": model.weight}
    if model.bias is not None:
        params["bias"] = model.bias
    state = OptimizerState.for_params(params)

    support_rows = {
        c: np.stack([row_of[r.id] for r in pool if r.label == c]) for c in label_set
    }

    tracker = EarlyStopTracker(train_config.patience)
    best: dict | None = None
    pairs_per_batch = train_config.batch_rows // 2

    for epoch in range(1, train_config.max_epochs + 1):
        orderings = regroup(
            dataset, train_config.n_regroups, _epoch_seed(train_config.seed, epoch)
        )
        loss_total = 0.0
        row_total = 0
        for ordering in orderings:
            for chunk in chunk_pairs(len(positives), pairs_per_batch):
                batch_rows = []
                for k in chunk:
                    triplet = positives[ordering[k]]
                    batch_rows.append(row_of[triplet.left.source])
                    batch_rows.append(row_of[triplet.right.source])
                grad, loss = loss_gradient(
                    model, np.stack(batch_rows), train_config.tau
                )
                grads = {"weight": grad.weight}
                if model.bias is not None:
                    grads["bias"] = grad.bias
                adamw_step(params, grads, state, train_config)
                loss_total += loss * len(batch_rows)
                row_total += len(batch_rows)

        prototypes = evaluate.prototypes_from_rows(
            model, support_rows, train_config.inference_space
        )
        correct = 0
        for i, record in enumerate(val_records):
            label, _ = evaluate.nearest_class(
                evaluate.to_inference_space(
                    model, val_rows[i], train_config.inference_space
                ),
                prototypes,
                label_set,
            )
            correct += int(label == record.label)
        val_accuracy = correct / len(val_records)

        stop = tracker.update(val_accuracy)
        if tracker.improved:
            best = {
                "model": model.copy(),
                "epoch": epoch,
                "accuracy": val_accuracy,
                "prototypes": {c: v.copy() for c, v in prototypes.items()},
            }
        if on_epoch is not None:
            on_epoch(epoch, loss_total / max(row_total, 1), val_accuracy)
        if stop:
            break

    assert best is not None  # max_epochs >= 1 guarantees one update
    return Checkpoint(
        model=best["model"],
        encoder_identifier=vectorizer.identifier,
        encoder_digest=vectorizer.config_digest(),
        encoder_spec=vectorizer.spec(),
        label_set=label_set,
        train_config=train_config,
        augment_config=augment_config,
        best_val_accuracy=best["accuracy"],
        best_epoch=best["epoch"],
        prototypes=best["prototypes"],
    )


def _label_set_of(records: list[CommitRecord]) -> LabelSet:
    seen: list[str] = []
    for r in records:
        if r.label is not None and r.label not in seen:
            seen.append(r.label)
    return LabelSet(tuple(seen))
