"""Fixed-length commit feature vectors.

Two encoder families share one interface: a deterministic signed feature
hashing encoder over character n-grams (the built-in, dependency-free path)
and a store of precomputed vectors loaded from the embedding interchange
format (the bridge to external pretrained sentence encoders).

Feature blocks are L_p normalized independently and concatenated in fixed
(msg, cc) order into the commit representation.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import CommitRecord
from .errors import (
    ConfigError,
    DimensionMismatch,
    DuplicateKey,
    MalformedLine,
    NonFiniteInput,
    RaggedDimensions,
    ShapeMismatch,
    UnsupportedEncoder,
)

FNV64_OFFSET = 14695981039346656037
FNV64_PRIME = 1099511628211
_U64_MASK = (1 << 64) - 1

FEATURE_TAGS = ("msg", "cc")

INTERCHANGE_VERSION = "1"


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash."""
    h = FNV64_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV64_PRIME) & _U64_MASK
    return h


@dataclass(frozen=True)
class FeatureEmbedding:
    vector: np.ndarray
    feature_tag: str
    normalized: bool = False

    def __post_init__(self) -> None:
        if self.feature_tag not in FEATURE_TAGS:
            raise ValueError(f"feature_tag must be one of {FEATURE_TAGS}")


@dataclass(frozen=True)
class CommitEmbedding:
    """Concatenated normalized feature blocks with an explicit layout."""

    vector: np.ndarray
    layout: tuple[tuple[str, int, int], ...]  # (feature_tag, offset, length)


@dataclass(frozen=True)
class HashingEncoderConfig:
    dimension: int = 256
    ngram_min: int = 3
    ngram_max: int = 5
    signed: bool = True

    def __post_init__(self) -> None:
        if self.dimension < 2:
            raise ConfigError(f"dimension must be >= 2, got {self.dimension}")
        if not (1 <= self.ngram_min <= self.ngram_max):
            raise ConfigError(
                f"need 1 <= ngram_min <= ngram_max, got {self.ngram_min}..{self.ngram_max}"
            )


def normalize_lp(
    h: FeatureEmbedding, p: float = 2.0, eps: float = 1e-12
) -> FeatureEmbedding:
    """Scale a feature vector to unit p-norm with an epsilon clamp.

    Returns h / max(||h||_p, eps); the zero vector maps to itself and
    already-unit vectors are fixed points.
    """
    if p < 1:
        raise ConfigError(f"p must be >= 1, got {p}")
    if eps <= 0:
        raise ConfigError(f"eps must be > 0, got {eps}")
    v = np.asarray(h.vector, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise NonFiniteInput(f"{h.feature_tag} vector has non-finite entries")
    norm = float(np.linalg.norm(v, ord=p))
    out = v / max(norm, eps)
    return FeatureEmbedding(vector=out, feature_tag=h.feature_tag, normalized=True)


def _normalize_text(text: str) -> str:
    # lowercase, collapse whitespace runs, trim ends
    return " ".join(text.lower().split())


def hash_encode(
    text: str, config: HashingEncoderConfig, feature_tag: str = "msg"
) -> FeatureEmbedding:
    """Signed feature-hashing count vector over character n-grams.

    Each n-gram g with ngram_min <= |g| <= ngram_max lands at index
    fnv1a64(g) mod dimension; when signing is on, the hash's top bit flips
    the contribution to -1, which keeps the estimator unbiased under
    collisions.  The result is the raw accumulation; normalization is a
    separate step.
    """
    vec = np.zeros(config.dimension, dtype=np.float64)
    s = _normalize_text(text)
    for n in range(config.ngram_min, config.ngram_max + 1):
        for i in range(len(s) - n + 1):
            h = fnv1a64(s[i : i + n].encode("utf-8"))
            sign = -1.0 if (config.signed and h >> 63) else 1.0
            vec[h % config.dimension] += sign
    return FeatureEmbedding(vector=vec, feature_tag=feature_tag, normalized=False)


class HashingEncoder:
    """Deterministic text encoder; the desk-scale stand-in for a pretrained
    sentence encoder behind the same interface."""

    def __init__(self, config: HashingEncoderConfig | None = None):
        self.config = config or HashingEncoderConfig()

    @property
    def identifier(self) -> str:
        c = self.config
        return f"hashing:fnv1a64:d{c.dimension}:n{c.ngram_min}-{c.ngram_max}:{'s' if c.signed else 'u'}"

    @property
    def dimension(self) -> int:
        return self.config.dimension

    def encode(self, text: str, feature_tag: str = "msg") -> FeatureEmbedding:
        return hash_encode(text, self.config, feature_tag)

    def config_digest(self) -> str:
        payload = json.dumps(
            {
                "kind": "hashing",
                "dimension": self.config.dimension,
                "ngram_min": self.config.ngram_min,
                "ngram_max": self.config.ngram_max,
                "signed": self.config.signed,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def spec(self) -> dict:
        return {
            "kind": "hashing",
            "dimension": self.config.dimension,
            "ngram_min": self.config.ngram_min,
            "ngram_max": self.config.ngram_max,
            "signed": self.config.signed,
        }


class PrecomputedStore:
    """Read-only map (record id, feature tag) -> vector, one dimension per
    feature tag, loaded from the interchange format."""

    def __init__(self, vectors: dict[tuple[str, str], np.ndarray], digest: str):
        self._vectors = vectors
        self.digest = digest
        self._dims: dict[str, int] = {}
        for (_, tag), vec in vectors.items():
            self._dims.setdefault(tag, len(vec))

    def dimension(self, feature_tag: str) -> int | None:
        return self._dims.get(feature_tag)

    def lookup(self, record_id: str, feature_tag: str) -> np.ndarray | None:
        return self._vectors.get((record_id, feature_tag))

    def __len__(self) -> int:
        return len(self._vectors)

    def keys(self) -> list[tuple[str, str]]:
        return list(self._vectors)


def load_precomputed(path: str | Path) -> PrecomputedStore:
    """Load an interchange file: one flat JSON object per line with fields
    id, feature, vector.  Lines starting with '#' are comments."""
    vectors: dict[tuple[str, str], np.ndarray] = {}
    dims: dict[str, int] = {}
    raw = Path(path).read_bytes()
    for n, line in enumerate(raw.decode("utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            obj = json.loads(
                stripped, parse_constant=lambda c: (_ for _ in ()).throw(ValueError(c))
            )
        except ValueError as e:
            raise MalformedLine(f"line {n}: not a JSON object ({e})") from None
        if not isinstance(obj, dict) or not {"id", "feature", "vector"} <= set(obj):
            raise MalformedLine(f"line {n}: need fields id, feature, vector")
        tag = obj["feature"]
        if tag not in FEATURE_TAGS:
            raise MalformedLine(f"line {n}: unknown feature tag {tag!r}")
        try:
            vec = np.array([float(x) for x in obj["vector"]], dtype=np.float64)
        except (TypeError, ValueError):
            raise MalformedLine(f"line {n}: vector entries must be numbers") from None
        if not np.all(np.isfinite(vec)):
            raise MalformedLine(f"line {n}: vector has non-finite entries")
        key = (str(obj["id"]), tag)
        if key in vectors:
            raise DuplicateKey(f"line {n}: duplicate key {key}")
        if tag in dims and dims[tag] != len(vec):
            raise RaggedDimensions(
                f"line {n}: feature {tag!r} has dimensions {dims[tag]} and {len(vec)}"
            )
        dims.setdefault(tag, len(vec))
        vectors[key] = vec
    return PrecomputedStore(vectors, digest=hashlib.sha256(raw).hexdigest())


def save_precomputed(
    vectors: dict[tuple[str, str], np.ndarray], path: str | Path
) -> None:
    """Write vectors in the interchange format (exact decimal round-trip)."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for (rid, tag), vec in vectors.items():
            obj = {"id": rid, "feature": tag, "vector": [float(x) for x in vec]}
            handle.write(json.dumps(obj) + "\n")


class PrecomputedEncoder:
    """Encoder backed by a PrecomputedStore; looks vectors up by record id."""

    def __init__(self, store: PrecomputedStore, feature_tag: str = "msg"):
        self.store = store
        self.feature_tag = feature_tag
        dim = store.dimension(feature_tag)
        if dim is None:
            raise UnsupportedEncoder(
                f"store holds no vectors for feature {feature_tag!r}"
            )
        self._dim = dim

    @property
    def identifier(self) -> str:
        return f"precomputed:{self.feature_tag}:d{self._dim}"

    @property
    def dimension(self) -> int:
        return self._dim

    def encode(self, text: str, feature_tag: str = "msg") -> FeatureEmbedding:
        raise UnsupportedEncoder(
            "precomputed store cannot encode new text; vectors are keyed by record id"
        )

    def encode_record(self, record: CommitRecord) -> FeatureEmbedding:
        vec = self.store.lookup(record.id, self.feature_tag)
        if vec is None:
            raise UnsupportedEncoder(
                f"no {self.feature_tag!r} vector for record {record.id!r}"
            )
        return FeatureEmbedding(vector=vec, feature_tag=self.feature_tag)

    def config_digest(self) -> str:
        payload = json.dumps(
            {"kind": "precomputed", "feature": self.feature_tag, "store": self.store.digest},
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def spec(self) -> dict:
        return {"kind": "precomputed", "feature": self.feature_tag, "dimension": self._dim}


class CommitVectorizer:
    """Bundles encoders into a record -> fixed-width row mapping.

    Training needs every row to share one width, but template anchors carry
    no code change; with fill_missing_cc set, records lacking a code-change
    feature get a zero block in the cc slot instead of a narrower row.
    """

    def __init__(
        self,
        msg_encoder,
        cc_encoder=None,
        *,
        p: float = 2.0,
        eps: float = 1e-12,
        cc_dim: int | None = None,
        fill_missing_cc: bool = False,
    ):
        self.msg_encoder = msg_encoder
        self.cc_encoder = cc_encoder
        self.p = p
        self.eps = eps
        self.cc_dim = cc_dim
        self.fill_missing_cc = fill_missing_cc

    @property
    def identifier(self) -> str:
        cc = self.cc_encoder.identifier if self.cc_encoder is not None else "none"
        return f"msg={self.msg_encoder.identifier};cc={cc}"

    def cc_width(self) -> int | None:
        if self.cc_dim is not None:
            return self.cc_dim
        if self.cc_encoder is not None:
            return self.cc_encoder.dimension
        return None

    @property
    def dimension(self) -> int:
        width = self.cc_width()
        return self.msg_encoder.dimension + (width or 0)

    def vectorize(self, record: CommitRecord) -> np.ndarray:
        emb = encode_commit(
            record,
            self.msg_encoder,
            self.cc_encoder,
            p=self.p,
            eps=self.eps,
            cc_dim=self.cc_dim,
        )
        tags = [tag for tag, _, _ in emb.layout]
        width = self.cc_width()
        if "cc" not in tags and self.fill_missing_cc and width is not None:
            return np.concatenate([emb.vector, np.zeros(width)])
        return emb.vector

    def matrix(self, records) -> np.ndarray:
        rows = [self.vectorize(r) for r in records]
        if not rows:
            return np.zeros((0, self.dimension))
        widths = {len(row) for row in rows}
        if len(widths) > 1:
            raise ShapeMismatch(
                f"records map to mixed row widths {sorted(widths)}; "
                "set fill_missing_cc or drop the code-change feature"
            )
        return np.stack(rows)

    def spec(self) -> dict:
        return {
            "msg": self.msg_encoder.spec(),
            "cc": self.cc_encoder.spec() if self.cc_encoder is not None else None,
            "p": self.p,
            "eps": self.eps,
            "cc_dim": self.cc_dim,
            "fill_missing_cc": self.fill_missing_cc,
        }

    def config_digest(self) -> str:
        parts = {
            "msg": self.msg_encoder.config_digest(),
            "cc": self.cc_encoder.config_digest() if self.cc_encoder is not None else None,
            "p": self.p,
            "eps": self.eps,
            "cc_dim": self.cc_dim,
            "fill_missing_cc": self.fill_missing_cc,
        }
        payload = json.dumps(parts, sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _encoder_from_spec(spec: dict, store: PrecomputedStore | None):
    kind = spec.get("kind")
    if kind == "hashing":
        return HashingEncoder(
            HashingEncoderConfig(
                dimension=spec["dimension"],
                ngram_min=spec["ngram_min"],
                ngram_max=spec["ngram_max"],
                signed=spec["signed"],
            )
        )
    if kind == "precomputed":
        if store is None:
            raise UnsupportedEncoder(
                "rebuilding a precomputed encoder needs its interchange store"
            )
        return PrecomputedEncoder(store, feature_tag=spec["feature"])
    raise UnsupportedEncoder(f"unknown encoder kind {kind!r}")


def vectorizer_from_spec(
    spec: dict, store: PrecomputedStore | None = None
) -> CommitVectorizer:
    """Rebuild a vectorizer from its serialized spec (checkpoint payload).

    Hashing encoders reconstruct exactly; precomputed encoders additionally
    need the interchange store they were built from.
    """
    msg_encoder = _encoder_from_spec(spec["msg"], store)
    cc_encoder = _encoder_from_spec(spec["cc"], store) if spec.get("cc") else None
    return CommitVectorizer(
        msg_encoder,
        cc_encoder,
        p=spec.get("p", 2.0),
        eps=spec.get("eps", 1e-12),
        cc_dim=spec.get("cc_dim"),
        fill_missing_cc=spec.get("fill_missing_cc", False),
    )


def _msg_block(record: CommitRecord, msg_encoder) -> FeatureEmbedding:
    if hasattr(msg_encoder, "encode_record"):
        return msg_encoder.encode_record(record)
    return msg_encoder.encode(record.message, "msg")


def encode_commit(
    record: CommitRecord,
    msg_encoder,
    cc_encoder=None,
    p: float = 2.0,
    eps: float = 1e-12,
    cc_dim: int | None = None,
) -> CommitEmbedding:
    """Normalized, concatenated commit representation.

    The message block always comes first.  The code-change block is the
    record's pre-vectorized feature when present, the cc encoder's output on
    raw diff text when one is configured, and absent otherwise (the
    representation degrades to the message block alone).
    """
    msg = normalize_lp(_msg_block(record, msg_encoder), p=p, eps=eps)
    blocks = [msg.vector]
    layout = [("msg", 0, len(msg.vector))]

    cc_vec: np.ndarray | None = None
    if record.has_vector_cc:
        if cc_dim is not None and len(record.code_change) != cc_dim:
            raise DimensionMismatch(
                f"record {record.id!r}: code-change vector length "
                f"{len(record.code_change)} != declared {cc_dim}"
            )
        cc_vec = np.asarray(record.code_change, dtype=np.float64)
    elif record.has_text_cc and cc_encoder is not None:
        if hasattr(cc_encoder, "encode_record"):
            cc_vec = cc_encoder.encode_record(record).vector
        else:
            cc_vec = cc_encoder.encode(record.code_change, "cc").vector

    if cc_vec is not None:
        cc = normalize_lp(FeatureEmbedding(cc_vec, "cc"), p=p, eps=eps)
        layout.append(("cc", len(msg.vector), len(cc.vector)))
        blocks.append(cc.vector)

    return CommitEmbedding(vector=np.concatenate(blocks), layout=tuple(layout))
