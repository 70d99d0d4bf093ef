"""Temperature-scaled contrastive loss over batches of positive pairs.

A batch holds 2N projected vectors laid out as adjacent pairs; every other
row in the batch acts as a negative for a given anchor.  The per-anchor loss
is the normalized temperature-scaled cross entropy: the anchor's similarity
to its partner against the log-sum-exp of its similarities to every other
row (the partner included in the denominator, the anchor itself excluded).

The analytic gradient through the cosine normalization and the affine head
is implemented by hand so training needs no autodiff dependency.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import CommitEmbedding
from .errors import (
    ConfigError,
    DimensionMismatch,
    IndexOutOfRange,
    NonFiniteInput,
    ZeroProjection,
    ZeroVector,
)
from .projection import ProjectionModel, project

ZERO_NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class LossConfig:
    """Loss hyperparameters; tau is the softmax temperature."""

    tau: float = 0.1

    def __post_init__(self) -> None:
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ConfigError(f"tau must be finite and > 0, got {self.tau}")


class BatchLayout:
    """2N projected rows, row 2k paired with row 2k+1 (0-based)."""

    def __init__(self, rows: np.ndarray):
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2:
            raise DimensionMismatch(f"batch must be 2-D, got shape {rows.shape}")
        if rows.shape[0] < 2 or rows.shape[0] % 2 != 0:
            raise DimensionMismatch(
                f"batch needs an even row count >= 2, got {rows.shape[0]}"
            )
        if not np.all(np.isfinite(rows)):
            raise NonFiniteInput("batch rows have non-finite entries")
        self.rows = rows

    @classmethod
    def from_pairs(cls, pairs) -> "BatchLayout":
        flat = []
        for left, right in pairs:
            flat.append(np.asarray(left, dtype=np.float64))
            flat.append(np.asarray(right, dtype=np.float64))
        return cls(np.stack(flat))

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def n_pairs(self) -> int:
        return self.rows.shape[0] // 2

    @staticmethod
    def partner(i: int) -> int:
        return i ^ 1


def pairwise_similarity(z_i, z_j, tau: float = 0.1) -> float:
    """Cosine similarity divided by the temperature."""
    if tau <= 0:
        raise ConfigError(f"temperature must be > 0, got {tau}")
    a = np.asarray(z_i, dtype=np.float64)
    b = np.asarray(z_j, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("similarity undefined for a zero vector")
    return float(a @ b) / (tau * na * nb)


def _unit_rows(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(rows, axis=1)
    if np.any(norms == 0.0):
        raise ZeroVector("batch contains a zero row")
    return rows / norms[:, None], norms


def nt_xent_pair(batch: BatchLayout, i: int, j: int, tau: float = 0.1) -> float:
    """Directed loss for anchor i against target j.

    -log of the softmax weight of row j among all rows except i itself;
    evaluated max-shifted so large logits cannot overflow.
    """
    if tau <= 0:
        raise ConfigError(f"temperature must be > 0, got {tau}")
    n = batch.n_rows
    if not (0 <= i < n and 0 <= j < n):
        raise IndexOutOfRange(f"indices ({i}, {j}) out of range for {n} rows")
    if i == j:
        raise ValueError("anchor and target must differ")
    unit, _ = _unit_rows(batch.rows)
    sims = (unit @ unit[i]) / tau
    others = np.delete(sims, i)
    m = float(np.max(others))
    denom = float(np.sum(np.exp(others - m)))
    return float(-(sims[j] - m) + np.log(denom))


def _directed_losses(unit: np.ndarray, tau: float) -> np.ndarray:
    """l(i, partner(i)) for every row i, vectorized and max-shifted."""
    n = unit.shape[0]
    sims = (unit @ unit.T) / tau
    np.fill_diagonal(sims, -np.inf)  # exclude the anchor itself
    m = np.max(sims, axis=1)
    denom = np.sum(np.exp(sims - m[:, None]), axis=1)
    partners = np.arange(n) ^ 1
    target = sims[np.arange(n), partners]
    return -(target - m) + np.log(denom)


def batch_loss(batch: BatchLayout, tau: float = 0.1) -> float:
    """Mean of the 2N directed pair losses (both directions of every pair)."""
    if tau <= 0:
        raise ConfigError(f"temperature must be > 0, got {tau}")
    unit, _ = _unit_rows(batch.rows)
    return float(np.mean(_directed_losses(unit, tau)))


@dataclass
class LossGradient:
    """Gradient of the batch loss with respect to the head parameters."""

    weight: np.ndarray
    bias: np.ndarray | None


def _as_rows(inputs) -> np.ndarray:
    rows = []
    for item in inputs:
        vec = item.vector if isinstance(item, CommitEmbedding) else item
        rows.append(np.asarray(vec, dtype=np.float64))
    return np.stack(rows)


def loss_gradient(
    model: ProjectionModel, inputs, tau: float = 0.1
) -> tuple[LossGradient, float]:
    """Analytic gradient of the batch loss through the affine head.

    inputs: 2N encoder-space representations in adjacent-pair layout.
    Returns (gradient, loss) from a single forward pass.

    Derivation sketch: with projected rows z, unit rows u = z/||z||, cosines
    C = u uᵀ and logits C/tau, the loss couples to the cosines through
    G[i,k] = (softmax weight of k for anchor i  -  1 if k is i's partner)/2N
    for k != i.  Symmetrizing B = G + Gᵀ and pushing through the cosine
    normalization gives, per row r,

        dL/dz_r = (B u  -  rowsum(B * C) u)_r / (tau ||z_r||),

    and the affine head maps that back as dW = (dL/dz)ᵀ h, db = colsum(dL/dz).
    """
    if tau <= 0:
        raise ConfigError(f"temperature must be > 0, got {tau}")
    h = _as_rows(inputs)
    if h.shape[0] < 2 or h.shape[0] % 2 != 0:
        raise DimensionMismatch(
            f"inputs must form adjacent pairs (even count >= 2), got {h.shape[0]}"
        )
    z = project(model, h)
    n = z.shape[0]
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms < ZERO_NORM_FLOOR):
        raise ZeroProjection(
            f"projected row norm below {ZERO_NORM_FLOOR}; head parameters are degenerate"
        )
    unit = z / norms[:, None]
    cos = unit @ unit.T
    logits = cos / tau
    np.fill_diagonal(logits, -np.inf)
    m = np.max(logits, axis=1)
    shifted = np.exp(logits - m[:, None])
    denom = np.sum(shifted, axis=1)

    partners = np.arange(n) ^ 1
    target = logits[np.arange(n), partners]
    losses = -(target - m) + np.log(denom)
    loss = float(np.mean(losses))

    softmax = shifted / denom[:, None]  # rows sum to 1, diagonal 0
    grad_cos = softmax.copy()
    grad_cos[np.arange(n), partners] -= 1.0
    grad_cos /= n  # G: dL/d(logits), anchor-direction only
    sym = grad_cos + grad_cos.T  # couple both directions of each cosine

    coeff = np.sum(sym * cos, axis=1)
    dz = (sym @ unit - coeff[:, None] * unit) / (tau * norms[:, None])

    d_weight = dz.T @ h
    d_bias = np.sum(dz, axis=0) if model.bias is not None else None
    return LossGradient(weight=d_weight, bias=d_bias), loss


def cosine_embedding_loss(z_i, z_j, similar: bool, margin: float = 0.2) -> float:
    """Audit-side pairwise loss over explicit triplets: pull similar pairs
    toward cosine 1, push dissimilar pairs below the margin."""
    a = np.asarray(z_i, dtype=np.float64)
    b = np.asarray(z_j, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine undefined for a zero vector")
    cos = float(a @ b) / (na * nb)
    if similar:
        return 1.0 - cos
    return max(0.0, cos - margin)
