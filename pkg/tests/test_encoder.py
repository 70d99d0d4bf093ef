from __future__ import annotations

import numpy as np
import pytest

from commitcontrast import (
    CommitRecord,
    CommitVectorizer,
    FeatureEmbedding,
    HashingEncoder,
    HashingEncoderConfig,
    PrecomputedEncoder,
    encode_commit,
    fnv1a64,
    hash_encode,
    load_precomputed,
    normalize_lp,
    save_precomputed,
    vectorizer_from_spec,
)
from commitcontrast.errors import (
    ConfigError,
    DimensionMismatch,
    DuplicateKey,
    MalformedLine,
    NonFiniteInput,
    RaggedDimensions,
    ShapeMismatch,
    UnsupportedEncoder,
)


# --- FNV-1a 64 -------------------------------------------------------------

def test_fnv1a64_reference_values():
    # offset basis itself for empty input; single/short inputs checked against
    # the published FNV-1a table (0xaf63dc4c8601ec8c for "a")
    assert fnv1a64(b"") == 14695981039346656037
    assert fnv1a64(b"a") == 12638187200555641996
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"abc") == 16654208175385433931
    assert fnv1a64(b"fix") == 15897282380483345336


def test_hash_encode_matches_independent_count():
    # tiny reference implementation: slide every 3..5-char window over the
    # cleaned text, bucket by fnv1a64 mod dim, sign by the hash's top bit
    cfg = HashingEncoderConfig(dimension=8, ngram_min=3, ngram_max=5)
    text = "Fix  the FIX"
    cleaned = "fix the fix"
    expected = np.zeros(8)
    for size in (3, 4, 5):
        for start in range(len(cleaned) - size + 1):
            h = fnv1a64(cleaned[start : start + size].encode("utf-8"))
            sign = -1.0 if h >> 63 else 1.0
            expected[h % 8] += sign
    got = hash_encode(text, cfg)
    assert isinstance(got, FeatureEmbedding)
    assert got.feature_tag == "msg"
    np.testing.assert_array_equal(got.vector, expected)


def test_hash_encode_unsigned_variant():
    cfg = HashingEncoderConfig(dimension=16, signed=False)
    vec = hash_encode("delete delete delete", cfg).vector
    assert (vec >= 0).all()
    assert vec.sum() > 0


def test_hash_encode_case_and_whitespace_insensitive():
    cfg = HashingEncoderConfig(dimension=64)
    a = hash_encode("Fix Buffer   Overflow", cfg).vector
    b = hash_encode("fix buffer overflow", cfg).vector
    np.testing.assert_array_equal(a, b)


def test_hash_encode_short_text_and_empty():
    cfg = HashingEncoderConfig(dimension=32, ngram_min=3, ngram_max=5)
    assert hash_encode("ab", cfg).vector.sum() == 0  # shorter than any n-gram
    assert hash_encode("", cfg).vector.sum() == 0


def test_config_validation():
    with pytest.raises(ConfigError):
        HashingEncoderConfig(dimension=1)
    with pytest.raises(ConfigError):
        HashingEncoderConfig(ngram_min=0)
    with pytest.raises(ConfigError):
        HashingEncoderConfig(ngram_min=4, ngram_max=3)


# --- normalization ---------------------------------------------------------

def test_normalize_lp_unit_norm_and_idempotence():
    rng = np.random.default_rng(0)
    for _ in range(50):
        v = rng.normal(size=rng.integers(2, 40))
        fe = FeatureEmbedding(vector=v, feature_tag="msg")
        once = normalize_lp(fe)
        assert abs(np.linalg.norm(once.vector) - 1.0) < 1e-12
        twice = normalize_lp(once)
        np.testing.assert_allclose(twice.vector, once.vector, rtol=0, atol=1e-12)
        assert once.normalized and twice.normalized


def test_normalize_lp_p1():
    fe = FeatureEmbedding(vector=np.array([3.0, -1.0]), feature_tag="cc")
    out = normalize_lp(fe, p=1.0)
    np.testing.assert_allclose(out.vector, [0.75, -0.25])


def test_normalize_lp_zero_vector_clamped():
    fe = FeatureEmbedding(vector=np.zeros(5), feature_tag="msg")
    out = normalize_lp(fe)
    np.testing.assert_array_equal(out.vector, np.zeros(5))


def test_normalize_lp_rejects_nonfinite_and_bad_params():
    fe = FeatureEmbedding(vector=np.array([1.0, np.nan]), feature_tag="msg")
    with pytest.raises(NonFiniteInput):
        normalize_lp(fe)
    good = FeatureEmbedding(vector=np.ones(3), feature_tag="msg")
    with pytest.raises(ConfigError):
        normalize_lp(good, p=0.5)
    with pytest.raises(ConfigError):
        normalize_lp(good, eps=0.0)


# --- encoders and the vectorizer -------------------------------------------

def test_hashing_encoder_identifier_and_digest_stability():
    enc = HashingEncoder(HashingEncoderConfig(dimension=128, ngram_min=2, ngram_max=4))
    assert enc.identifier == "hashing:fnv1a64:d128:n2-4:s"
    assert enc.dimension == 128
    assert enc.config_digest() == HashingEncoder(
        HashingEncoderConfig(dimension=128, ngram_min=2, ngram_max=4)
    ).config_digest()
    assert enc.config_digest() != HashingEncoder().config_digest()


def test_vectorizer_msg_only():
    vec = CommitVectorizer(HashingEncoder(HashingEncoderConfig(dimension=64)))
    rec = CommitRecord(id="r", message="refactor the parser")
    h = vec.vectorize(rec)
    assert h.shape == (64,)
    assert abs(np.linalg.norm(h) - 1.0) < 1e-9


def test_vectorizer_concatenates_vector_cc():
    vec = CommitVectorizer(
        HashingEncoder(HashingEncoderConfig(dimension=32)), cc_dim=3
    )
    rec = CommitRecord(
        id="r", message="msg", label=None, code_change=np.array([3.0, 0.0, 4.0])
    )
    h = vec.vectorize(rec)
    assert h.shape == (35,)
    # each block is unit-normalized independently
    np.testing.assert_allclose(np.linalg.norm(h[:32]), 1.0, atol=1e-9)
    np.testing.assert_allclose(h[32:], [0.6, 0.0, 0.8], atol=1e-12)


def test_vectorizer_zero_fills_missing_cc():
    vec = CommitVectorizer(
        HashingEncoder(HashingEncoderConfig(dimension=16)),
        cc_dim=4,
        fill_missing_cc=True,
    )
    with_cc = CommitRecord(
        id="a", message="x y z", code_change=np.array([1.0, 2.0, 2.0, 0.0])
    )
    without = CommitRecord(id="b", message="x y z")
    m = vec.matrix([with_cc, without])
    assert m.shape == (2, 20)
    np.testing.assert_array_equal(m[1, 16:], np.zeros(4))


def test_vectorizer_matrix_rejects_ragged_cc():
    vec = CommitVectorizer(HashingEncoder(HashingEncoderConfig(dimension=16)))
    rows = [
        CommitRecord(id="a", message="m", code_change=np.array([1.0, 2.0])),
        CommitRecord(id="b", message="m", code_change=np.array([1.0, 2.0, 3.0])),
    ]
    with pytest.raises(ShapeMismatch):
        vec.matrix(rows)


def test_encode_commit_degrades_to_msg_only():
    enc = HashingEncoder(HashingEncoderConfig(dimension=16))
    emb = encode_commit(CommitRecord(id="r", message="hello world"), enc)
    assert [tag for tag, _, _ in emb.layout] == ["msg"]
    assert emb.vector.shape == (16,)


def test_encode_commit_rejects_conflicting_cc_dim():
    enc = HashingEncoder(HashingEncoderConfig(dimension=16))
    rec = CommitRecord(id="r", message="m", code_change=np.array([1.0, 2.0]))
    with pytest.raises(DimensionMismatch):
        encode_commit(rec, enc, cc_dim=5)


# --- interchange files -----------------------------------------------------

def _store_lines():
    return (
        "# comment line, ignored by the loader\n"
        '{"id": "c1", "feature": "msg", "vector": [1.0, 0.0]}\n'
        "\n"
        '{"id": "c2", "feature": "msg", "vector": [0.0, 1.0]}\n'
        '{"id": "c1", "feature": "cc", "vector": [0.5, 0.5, 0.5]}\n'
    )


def test_load_precomputed_parses_and_digests(tmp_path):
    p = tmp_path / "emb.jsonl"
    p.write_text(_store_lines(), encoding="utf-8")
    store = load_precomputed(p)
    assert len(store) == 3
    np.testing.assert_array_equal(store.lookup("c1", "msg"), [1.0, 0.0])
    assert store.dimension("msg") == 2
    assert store.dimension("cc") == 3
    assert store.lookup("zzz", "msg") is None
    # digest covers the raw bytes, so identical files agree
    p2 = tmp_path / "emb2.jsonl"
    p2.write_text(_store_lines(), encoding="utf-8")
    assert load_precomputed(p2).digest == store.digest


def test_save_precomputed_round_trip(tmp_path):
    vectors = {
        ("c1", "msg"): np.array([0.123456789, -1.0]),
        ("c2", "msg"): np.array([2.0, 3.0]),
    }
    p = tmp_path / "out.jsonl"
    save_precomputed(vectors, p)
    store = load_precomputed(p)
    assert sorted(store.keys()) == [("c1", "msg"), ("c2", "msg")]
    np.testing.assert_allclose(
        store.lookup("c1", "msg"), [0.123456789, -1.0], atol=1e-9
    )


def test_load_precomputed_error_positions(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"id": "a", "feature": "msg", "vector": [1]}\nnot json\n')
    with pytest.raises(MalformedLine, match="line 2"):
        load_precomputed(p)

    p.write_text(
        '{"id": "a", "feature": "msg", "vector": [1, 2]}\n'
        '{"id": "a", "feature": "msg", "vector": [3, 4]}\n'
    )
    with pytest.raises(DuplicateKey):
        load_precomputed(p)

    p.write_text(
        '{"id": "a", "feature": "msg", "vector": [1, 2]}\n'
        '{"id": "b", "feature": "msg", "vector": [1, 2, 3]}\n'
    )
    with pytest.raises(RaggedDimensions):
        load_precomputed(p)

    p.write_text('{"id": "a", "feature": "msg", "vector": [NaN, 1]}\n')
    with pytest.raises(MalformedLine):
        load_precomputed(p)


def test_precomputed_encoder_contract(tmp_path):
    p = tmp_path / "emb.jsonl"
    p.write_text(_store_lines(), encoding="utf-8")
    store = load_precomputed(p)
    enc = PrecomputedEncoder(store)
    rec = CommitRecord(id="c1", message="ignored text")
    np.testing.assert_array_equal(enc.encode_record(rec).vector, [1.0, 0.0])
    with pytest.raises(UnsupportedEncoder):
        enc.encode("free text has no stored vector")
    with pytest.raises(UnsupportedEncoder):
        enc.encode_record(CommitRecord(id="unknown", message="m"))


def test_vectorizer_spec_round_trip():
    vec = CommitVectorizer(
        HashingEncoder(HashingEncoderConfig(dimension=32, ngram_min=2, ngram_max=3))
    )
    rebuilt = vectorizer_from_spec(vec.spec())
    assert rebuilt.identifier == vec.identifier
    assert rebuilt.config_digest() == vec.config_digest()
    rec = CommitRecord(id="r", message="same text in, same vector out")
    np.testing.assert_array_equal(rebuilt.vectorize(rec), vec.vectorize(rec))
