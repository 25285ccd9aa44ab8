"""Few-shot text classification via distribution estimation and generation.

Pipeline: load embeddings, split classes, sample episodes, estimate a
Gaussian per class (calibrated by each support's nearest unlabeled
queries), draw synthetic samples, and classify with a prototypical head
trained under a combined basic + generation loss.
"""

from .embedstore import (
    EmbeddingRecord,
    EmbeddingStore,
    load_embeddings,
    make_store,
    save_embeddings,
)
from .episodic import ClassSplit, Episode, derive_rng, sample_episode, split_classes
from .errors import (
    DimensionMismatch,
    EmbeddingFileError,
    FewgenError,
    NotEnoughClasses,
    NotEnoughSamples,
    NumericError,
)
from .estimator import ClassDistribution, Gaussian, estimate_class, top_r_neighbors
from .harness import (
    EvalConfig,
    EvalReport,
    SynthSpec,
    estimator_error,
    evaluate,
    make_synthetic,
    predict_episode,
    write_report,
)
from .protocore import (
    ProjectionHead,
    basic_loss,
    classify,
    compute_prototypes,
    load_head,
    project,
    save_head,
)
from .sampler import GeneratedSet, augment_support, generate_set, sample_gaussian
from .trainer import (
    GradCheckReport,
    TrainConfig,
    TraceRow,
    episode_step,
    gradient_check,
    train,
    write_trace,
)

__version__ = "0.1.0"

__all__ = [
    "ClassDistribution",
    "ClassSplit",
    "DimensionMismatch",
    "EmbeddingFileError",
    "EmbeddingRecord",
    "EmbeddingStore",
    "Episode",
    "EvalConfig",
    "EvalReport",
    "FewgenError",
    "Gaussian",
    "GeneratedSet",
    "GradCheckReport",
    "NotEnoughClasses",
    "NotEnoughSamples",
    "NumericError",
    "ProjectionHead",
    "SynthSpec",
    "TraceRow",
    "TrainConfig",
    "augment_support",
    "basic_loss",
    "classify",
    "compute_prototypes",
    "derive_rng",
    "estimate_class",
    "estimator_error",
    "evaluate",
    "episode_step",
    "generate_set",
    "gradient_check",
    "load_embeddings",
    "load_head",
    "make_store",
    "make_synthetic",
    "predict_episode",
    "project",
    "sample_episode",
    "sample_gaussian",
    "save_embeddings",
    "save_head",
    "split_classes",
    "top_r_neighbors",
    "train",
    "write_report",
    "write_trace",
]
