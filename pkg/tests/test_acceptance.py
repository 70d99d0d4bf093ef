"""Acceptance gate: one test per shipping criterion, A1 through A9.

Each test name carries its criterion id so a verbose run prints exactly one
pass/fail line per criterion.  Tolerances and time budgets are pinned in the
asserts; reference values come from independent hand or naive-loop
computations, never from the code under test.
"""

from __future__ import annotations

import math
import time
from dataclasses import replace

import numpy as np

from commitcontrast import (
    AugmentConfig,
    BatchLayout,
    CommitRecord,
    CommitVectorizer,
    ConfusionMatrix,
    EarlyStopTracker,
    HashingEncoder,
    HashingEncoderConfig,
    FeatureEmbedding,
    TrainConfig,
    batch_loss,
    bench_inference,
    build_triplets,
    evaluate_records,
    init_model,
    load_checkpoint,
    loss_gradient,
    metrics,
    normalize_lp,
    project,
    run_fewshot_benchmark,
    save_checkpoint,
    scalar_projection,
    train,
    vector_projection,
)
from commitcontrast.evaluate import carve_validation_ids

from synthetic import make_corpus


# ---------------------------------------------------------------------------
# A1 - pair construction
# ---------------------------------------------------------------------------

def test_A1_pair_construction_oracle():
    start = time.perf_counter()
    records = []
    for c in ("Corrective", "Adaptive", "Perfective"):
        for k in range(8):
            records.append(
                CommitRecord(id=f"{c[:4].lower()}{k}",
                             message=f"{c.lower()} change number {k}",
                             label=c)
            )
    cfg = AugmentConfig(r_pairs=20, anchors_per_class=0, seed=0)
    ds = build_triplets(records, cfg)

    # |T| = 2 * R * num_classes, split evenly between flags and classes
    assert len(ds) == 2 * 20 * 3 == 120
    assert len(ds.positive_list) == 60
    negatives = [t for t in ds.triplets if t.similar == 0]
    assert len(negatives) == 60
    for c in ("Corrective", "Adaptive", "Perfective"):
        assert len(ds.positives[c]) == 20
        assert len(ds.negatives[c]) == 20

    # brute-force flag audit against the label table
    label_of = {r.id: r.label for r in records}
    for t in ds.triplets:
        same = label_of[t.left.source] == label_of[t.right.source]
        if t.similar == 1:
            assert same, (t.left.source, t.right.source)
        else:
            assert not same, (t.left.source, t.right.source)
    assert time.perf_counter() - start < 1.0


# ---------------------------------------------------------------------------
# A2 - loss value oracle
# ---------------------------------------------------------------------------

def _naive_cos(a, b):
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(x * x for x in b))
    return sum(x * y for x, y in zip(a, b)) / (na * nb)


def _naive_batch_loss(rows, tau):
    """Plain-loop reference: adjacent rows are partners; each directed term
    is -log of the partner similarity over all non-self similarities."""
    n = len(rows)
    total = 0.0
    for i in range(n):
        j = i + 1 if i % 2 == 0 else i - 1
        num = math.exp(_naive_cos(rows[i], rows[j]) / tau)
        den = sum(
            math.exp(_naive_cos(rows[i], rows[k]) / tau)
            for k in range(n)
            if k != i
        )
        total += -math.log(num / den)
    return total / n


def test_A2_nt_xent_matches_naive_reference():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    taus = (0.05, 0.1, 0.5, 1.0)
    sizes = (2, 4, 6, 8)
    for trial in range(20):
        rows = rng.normal(size=(sizes[trial % 4], 7))
        tau = taus[(trial // 4) % 4]
        mine = batch_loss(BatchLayout(rows), tau)
        ref = _naive_batch_loss(rows, tau)
        assert abs(mine - ref) <= 1e-9 * max(1.0, abs(ref)), (trial, mine, ref)

    # one positive pair and no other rows: the ratio is exactly 1
    single = rng.normal(size=(2, 5))
    assert batch_loss(BatchLayout(single), 0.1) == 0.0

    # identical rows: every similarity ties, loss = log(2N - 1)
    for n_rows in (2, 4, 6, 8):
        rows = np.tile(rng.normal(size=4), (n_rows, 1))
        got = batch_loss(BatchLayout(rows), 0.5)
        assert abs(got - math.log(n_rows - 1)) < 1e-12
    assert time.perf_counter() - start < 5.0


# ---------------------------------------------------------------------------
# A3 - analytic gradient vs central differences
# ---------------------------------------------------------------------------

def test_A3_gradient_matches_finite_differences():
    start = time.perf_counter()
    step = 1e-6
    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        H = rng.normal(size=(6, 9))
        model = init_model(9, 4, seed=seed)
        tau = 0.1
        grad, _ = loss_gradient(model, H, tau)

        def loss_at(m):
            return batch_loss(BatchLayout(project(m, H)), tau)

        for arr, g in ((model.weight, grad.weight), (model.bias, grad.bias)):
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                keep = arr[idx]
                arr[idx] = keep + step
                up = loss_at(model)
                arr[idx] = keep - step
                down = loss_at(model)
                arr[idx] = keep
                fd = (up - down) / (2 * step)
                denom = max(abs(fd), abs(g[idx]), 1e-8)
                worst = max(worst, abs(g[idx] - fd) / denom)
    assert worst < 1e-4, f"max relative gradient error {worst:.3e}"
    assert time.perf_counter() - start < 30.0


# ---------------------------------------------------------------------------
# A4 - synthetic separability
# ---------------------------------------------------------------------------

def test_A4_synthetic_corpus_is_learnable():
    corpus = make_corpus(200, 0)
    vec = CommitVectorizer(HashingEncoder(), fill_missing_cc=True)
    for seed in (0, 1, 2):
        t0 = time.perf_counter()
        report = run_fewshot_benchmark(
            corpus,
            shots=[10],
            seeds=[seed],
            vectorizer=vec,
            augment_config=AugmentConfig(seed=seed),
            train_config=TrainConfig(seed=seed),
        )
        accuracy = report.cells[10].per_seed[seed].accuracy
        elapsed = time.perf_counter() - t0
        assert accuracy >= 0.95, f"seed {seed}: query accuracy {accuracy:.4f}"
        assert elapsed < 60.0, f"seed {seed}: took {elapsed:.1f}s"


# ---------------------------------------------------------------------------
# A5 - more support does not hurt
# ---------------------------------------------------------------------------

def test_A5_fewshot_trend_5_to_50():
    start = time.perf_counter()
    corpus = make_corpus(200, 0)
    vec = CommitVectorizer(HashingEncoder(), fill_missing_cc=True)
    report = run_fewshot_benchmark(
        corpus,
        shots=[5, 50],
        seeds=[0, 1, 2],
        vectorizer=vec,
        augment_config=AugmentConfig(),
        train_config=TrainConfig(),
    )
    mean_5 = report.cells[5].mean_accuracy
    mean_50 = report.cells[50].mean_accuracy
    assert mean_50 >= mean_5, f"5-shot {mean_5:.4f} vs 50-shot {mean_50:.4f}"
    assert time.perf_counter() - start < 600.0


# ---------------------------------------------------------------------------
# A6 - metric arithmetic
# ---------------------------------------------------------------------------

def test_A6_metric_formula_oracles():
    # binary: TP=2 FP=1 FN=1 TN=6
    binary = metrics(
        ConfusionMatrix(("pos", "neg"), np.array([[2, 1], [1, 6]], dtype=np.int64))
    )
    pos = binary.per_class["pos"]
    assert pos.precision == 2 / 3
    assert pos.recall == 2 / 3
    assert abs(pos.f1 - 2 / 3) < 1e-15
    assert binary.accuracy == 0.8

    # any diagonal matrix scores perfectly
    diag = metrics(ConfusionMatrix(("x", "y", "z"), np.diag([3, 1, 7]).astype(np.int64)))
    assert diag.accuracy == diag.macro_precision == diag.macro_recall == diag.macro_f1 == 1.0

    # three-class case against frozen hand arithmetic
    r = metrics(
        ConfusionMatrix(
            ("A", "B", "C"),
            np.array([[5, 1, 0], [2, 6, 1], [0, 0, 5]], dtype=np.int64),
        )
    )
    tol = 1e-12
    for got, want in (
        (r.per_class["A"].precision, 5 / 7),
        (r.per_class["B"].precision, 6 / 7),
        (r.per_class["C"].precision, 5 / 6),
        (r.per_class["A"].recall, 5 / 6),
        (r.per_class["B"].recall, 2 / 3),
        (r.per_class["C"].recall, 1.0),
        (r.per_class["A"].f1, 10 / 13),
        (r.per_class["B"].f1, 3 / 4),
        (r.per_class["C"].f1, 10 / 11),
        (r.macro_precision, 101 / 126),
        (r.macro_recall, 5 / 6),
        (r.macro_f1, 463 / 572),
        (r.accuracy, 0.8),
    ):
        assert abs(got - want) < tol, (got, want)


# ---------------------------------------------------------------------------
# A7 - determinism and early stopping
# ---------------------------------------------------------------------------

def test_A7_determinism_and_early_stop(tmp_path):
    corpus = make_corpus(60, 0)
    by_id = corpus.by_id()
    val_ids = carve_validation_ids(corpus, 0, 0.15)
    pool = [by_id[r] for r in corpus.ids() if r not in set(val_ids)]
    val = [by_id[r] for r in val_ids]
    vec = CommitVectorizer(
        HashingEncoder(HashingEncoderConfig(dimension=128)), fill_missing_cc=True
    )
    aug = AugmentConfig(r_pairs=10, anchors_per_class=4, seed=0)
    cfg = TrainConfig(seed=0, max_epochs=10, patience=3, batch_rows=16)

    ckpt_a = train(pool, val, vec, aug, cfg, out_dim=32)
    ckpt_b = train(pool, val, vec, aug, cfg, out_dim=32)
    path_a, path_b = tmp_path / "a.json", tmp_path / "b.json"
    save_checkpoint(ckpt_a, path_a)
    save_checkpoint(ckpt_b, path_b)
    assert path_a.read_bytes() == path_b.read_bytes(), "checkpoints differ"
    assert load_checkpoint(path_a).digest() == ckpt_a.digest()

    query = pool[:20]
    report_a = evaluate_records(ckpt_a, query, vec)
    report_b = evaluate_records(ckpt_b, query, vec)
    assert report_a.to_dict() == report_b.to_dict(), "eval reports differ"

    # scripted history: best at epoch 2, ten stale epochs, stop at epoch 12
    tracker = EarlyStopTracker(patience=10)
    history = [0.5, 0.6, 0.59, 0.6, 0.58, 0.6, 0.55, 0.6, 0.57, 0.52, 0.6, 0.6]
    stops = [tracker.update(a) for a in history]
    assert stops == [False] * 11 + [True]
    assert tracker.best_epoch == 2
    assert tracker.best_accuracy == 0.6


# ---------------------------------------------------------------------------
# A8 - normalization and projection identities
# ---------------------------------------------------------------------------

def test_A8_normalization_and_projection_identities():
    rng = np.random.default_rng(88)
    for trial in range(1000):
        v = rng.normal(size=rng.integers(2, 33)) * 10.0 ** rng.integers(-3, 4)
        fe = FeatureEmbedding(vector=v, feature_tag="msg")
        once = normalize_lp(fe)
        twice = normalize_lp(once)
        # idempotence
        assert np.abs(twice.vector - once.vector).max() < 1e-9
        # scale invariance
        scaled = normalize_lp(FeatureEmbedding(vector=3.7 * v, feature_tag="msg"))
        assert np.abs(scaled.vector - once.vector).max() < 1e-9

    for trial in range(1000):
        hi = rng.normal(size=10)
        hj = rng.normal(size=10)
        zs = scalar_projection(hi, hj)
        zv = vector_projection(hi, hj)
        # the vector form is the scalar length along the unit target
        assert np.abs(zv - zs * hj / np.linalg.norm(hj)).max() < 1e-9
        # what remains after removing the projection is orthogonal
        residual = hi - zv
        cosine = residual @ hj / (np.linalg.norm(hi) * np.linalg.norm(hj))
        assert abs(cosine) < 1e-9


# ---------------------------------------------------------------------------
# A9 - latency grows with message length
# ---------------------------------------------------------------------------

def test_A9_latency_trend(tmp_path):
    start = time.perf_counter()
    corpus = make_corpus(40, 0)
    by_id = corpus.by_id()
    ids = corpus.ids()
    vec = CommitVectorizer(
        HashingEncoder(HashingEncoderConfig(dimension=128)), fill_missing_cc=True
    )
    ckpt = train(
        [by_id[r] for r in ids[6:]],
        [by_id[r] for r in ids[:6]],
        vec,
        AugmentConfig(r_pairs=6, anchors_per_class=2, seed=0),
        TrainConfig(seed=0, max_epochs=3, patience=2, batch_rows=16),
        out_dim=32,
    )
    report = bench_inference(ckpt, vec, lengths=(8, 32, 128, 512), reps=100)
    lats = [report.latencies[n] for n in (8, 32, 128, 512)]
    assert lats[0] < lats[1] < lats[2] < lats[3], f"latencies not increasing: {lats}"
    assert time.perf_counter() - start < 60.0
