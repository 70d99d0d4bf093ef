"""Projections between representation spaces.

Two kinds live here: the classical scalar/vector projection of one commit
representation onto another (similarity diagnostics on raw representations),
and the trainable affine head that maps encoder representations into the
space the contrastive loss operates on.
"""

from __future__ import annotations

import numpy as np

from .encoder import CommitEmbedding
from .errors import ConfigError, DimensionMismatch, NonFiniteInput, ZeroTarget


def _as_vector(x, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteInput(f"{name} has non-finite entries")
    return v


def scalar_projection(hi, hj, eps: float = 1e-12) -> float:
    """Signed length of hi along the direction of hj: (hi . hj) / ||hj||."""
    a = _as_vector(hi, "hi")
    b = _as_vector(hj, "hj")
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    norm = float(np.linalg.norm(b))
    if norm < eps:
        raise ZeroTarget("cannot project onto a zero vector")
    return float(a @ b) / norm


def vector_projection(hi, hj, eps: float = 1e-12) -> np.ndarray:
    """Component of hi lying along hj: ((hi . hj) / (hj . hj)) * hj.

    The residual hi - vector_projection(hi, hj) is orthogonal to hj.
    """
    a = _as_vector(hi, "hi")
    b = _as_vector(hj, "hj")
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    norm = float(np.linalg.norm(b))
    if norm < eps:
        raise ZeroTarget("cannot project onto a zero vector")
    return (float(a @ b) / (norm * norm)) * b


class ProjectionModel:
    """Affine map z = W h + b from encoder space into contrastive space.

    This is the only trainable part of the pipeline; encoders stay frozen.
    The bias is optional — dropping it makes the head strictly linear.
    """

    def __init__(
        self,
        weight: np.ndarray,
        bias: np.ndarray | None,
        init_seed: int | None = None,
    ):
        weight = np.asarray(weight, dtype=np.float64)
        if weight.ndim != 2:
            raise DimensionMismatch(f"weight must be 2-D, got shape {weight.shape}")
        if weight.shape[0] < 2:
            raise ConfigError(f"output width must be >= 2, got {weight.shape[0]}")
        if not np.all(np.isfinite(weight)):
            raise NonFiniteInput("weight has non-finite entries")
        if bias is not None:
            bias = np.asarray(bias, dtype=np.float64)
            if bias.ndim != 1 or bias.shape[0] != weight.shape[0]:
                raise DimensionMismatch(
                    f"bias shape {bias.shape} does not match weight rows {weight.shape[0]}"
                )
            if not np.all(np.isfinite(bias)):
                raise NonFiniteInput("bias has non-finite entries")
        self.weight = weight
        self.bias = bias
        self.init_seed = init_seed

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def has_bias(self) -> bool:
        return self.bias is not None

    def copy(self) -> "ProjectionModel":
        return ProjectionModel(
            self.weight.copy(),
            None if self.bias is None else self.bias.copy(),
            self.init_seed,
        )

    def to_dict(self) -> dict:
        return {
            "weight": [[f"{float(x):.17g}" for x in row] for row in self.weight],
            "bias": None
            if self.bias is None
            else [f"{float(x):.17g}" for x in self.bias],
            "init_seed": self.init_seed,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ProjectionModel":
        weight = np.array(
            [[float(x) for x in row] for row in payload["weight"]], dtype=np.float64
        )
        bias = payload.get("bias")
        if bias is not None:
            bias = np.array([float(x) for x in bias], dtype=np.float64)
        return cls(weight=weight, bias=bias, init_seed=payload.get("init_seed"))


def init_model(
    in_dim: int, out_dim: int = 128, seed: int = 0, with_bias: bool = True
) -> ProjectionModel:
    """Fresh head: weights uniform on (-a, a) with a = sqrt(6/(in+out)),
    bias at zero.  Deterministic under the seed."""
    if in_dim < 1:
        raise ConfigError(f"input width must be >= 1, got {in_dim}")
    if out_dim < 2:
        raise ConfigError(f"output width must be >= 2, got {out_dim}")
    rng = np.random.default_rng(seed)
    a = np.sqrt(6.0 / (in_dim + out_dim))
    weight = rng.uniform(-a, a, size=(out_dim, in_dim))
    bias = np.zeros(out_dim) if with_bias else None
    return ProjectionModel(weight=weight, bias=bias, init_seed=seed)


def project(model: ProjectionModel, h) -> np.ndarray:
    """Apply the head to one representation (1-D) or a stack of them (2-D)."""
    if isinstance(h, CommitEmbedding):
        h = h.vector
    x = np.asarray(h, dtype=np.float64)
    if x.ndim == 1:
        if x.shape[0] != model.in_dim:
            raise DimensionMismatch(
                f"input width {x.shape[0]} != head input width {model.in_dim}"
            )
        z = model.weight @ x
        return z + model.bias if model.bias is not None else z
    if x.ndim == 2:
        if x.shape[1] != model.in_dim:
            raise DimensionMismatch(
                f"input width {x.shape[1]} != head input width {model.in_dim}"
            )
        z = x @ model.weight.T
        return z + model.bias if model.bias is not None else z
    raise DimensionMismatch(f"input must be 1-D or 2-D, got shape {x.shape}")
