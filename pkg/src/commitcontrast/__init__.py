"""Few-shot commit classification with contrastively trained projection heads.

Pipeline: ingest labeled commits, augment them into positive/negative pairs
(plus per-class template anchors), encode messages and code changes into
normalized feature blocks, train a small affine head with a temperature-
scaled contrastive loss over frozen encoders, and classify by nearest class
prototype.
"""

__version__ = "0.1.0"

from .augment import (
    AugmentConfig,
    ContrastiveDataset,
    ContrastiveTriplet,
    TripletSide,
    anchor_text,
    build_triplets,
    dump_triplets,
    generate_anchors,
    regroup,
)
from .contrastive import (
    BatchLayout,
    LossConfig,
    batch_loss,
    cosine_embedding_loss,
    loss_gradient,
    nt_xent_pair,
    pairwise_similarity,
)
from .corpus import (
    CommitRecord,
    Corpus,
    CorpusSplit,
    Episode,
    LabelSet,
    load_dataset,
    sample_episode,
    save_dataset,
    split_corpus,
)
from .encoder import (
    CommitEmbedding,
    CommitVectorizer,
    FeatureEmbedding,
    HashingEncoder,
    HashingEncoderConfig,
    PrecomputedEncoder,
    PrecomputedStore,
    encode_commit,
    fnv1a64,
    hash_encode,
    load_precomputed,
    normalize_lp,
    save_precomputed,
    vectorizer_from_spec,
)
from .evaluate import (
    BenchReport,
    ConfusionMatrix,
    EvalReport,
    FewshotReport,
    Prediction,
    Prototypes,
    bench_inference,
    carve_validation_ids,
    class_prototypes,
    confusion,
    evaluate_records,
    metrics,
    nearest_class,
    predict,
    prototypes_from_rows,
    to_inference_space,
    run_fewshot_benchmark,
    stored_prototypes,
)
from .projection import (
    ProjectionModel,
    init_model,
    project,
    scalar_projection,
    vector_projection,
)
from .trainer import (
    Checkpoint,
    EarlyStopTracker,
    OptimizerState,
    TrainConfig,
    adamw_step,
    chunk_pairs,
    load_checkpoint,
    save_checkpoint,
    train,
)

__all__ = [
    "anchor_text",
    "carve_validation_ids",
    "chunk_pairs",
    "dump_triplets",
    "nearest_class",
    "prototypes_from_rows",
    "to_inference_space",
    "AugmentConfig",
    "BatchLayout",
    "BenchReport",
    "Checkpoint",
    "CommitEmbedding",
    "CommitRecord",
    "CommitVectorizer",
    "ConfusionMatrix",
    "ContrastiveDataset",
    "ContrastiveTriplet",
    "Corpus",
    "CorpusSplit",
    "EarlyStopTracker",
    "Episode",
    "EvalReport",
    "FeatureEmbedding",
    "FewshotReport",
    "HashingEncoder",
    "HashingEncoderConfig",
    "LabelSet",
    "LossConfig",
    "OptimizerState",
    "PrecomputedEncoder",
    "PrecomputedStore",
    "Prediction",
    "ProjectionModel",
    "Prototypes",
    "TrainConfig",
    "TripletSide",
    "adamw_step",
    "batch_loss",
    "bench_inference",
    "build_triplets",
    "class_prototypes",
    "confusion",
    "cosine_embedding_loss",
    "encode_commit",
    "evaluate_records",
    "fnv1a64",
    "generate_anchors",
    "hash_encode",
    "init_model",
    "load_checkpoint",
    "load_dataset",
    "load_precomputed",
    "loss_gradient",
    "metrics",
    "normalize_lp",
    "nt_xent_pair",
    "pairwise_similarity",
    "predict",
    "project",
    "regroup",
    "run_fewshot_benchmark",
    "sample_episode",
    "save_checkpoint",
    "save_dataset",
    "save_precomputed",
    "scalar_projection",
    "split_corpus",
    "stored_prototypes",
    "train",
    "vector_projection",
    "vectorizer_from_spec",
]
