"""Difficulty analysis for visual questions.

Clusters questions by the entropies of answer distributions from three
model variants (image-only, question-only, question+image), orders the
clusters by question+image entropy, tags each with a difficulty level,
and reports per-cluster accuracy, agreement, and disagreement statistics.
"""

from .clustering import (
    ClusterAssignment,
    ClusterModel,
    KMeansConfig,
    assign,
    assign_all,
    assign_levels,
    fit_difficulty_model,
    kmeans_fit,
    load_model,
    order_clusters,
    save_model,
)
from .core import (
    AnnotationRecord,
    AnswerDistribution,
    AnswerVocabulary,
    DistributionPayload,
    EntropyFeature,
    PredictionRecord,
    SummaryPayload,
    entropy,
    gt_distribution,
    gt_entropy,
    normalize_answer,
    prediction_entropy,
)
from .ingest import (
    Dataset,
    IngestWarnings,
    RunConfig,
    build_features,
    join_for_evaluation,
    load_annotations,
    load_predictions,
    load_vocabulary,
)
from .metrics import (
    AgreementStats,
    OverlapPartition,
    agreement_stats,
    consensus_accuracy,
    consensus_accuracy_averaged,
    max_overlap,
    overlap_histogram,
    partition_entropy_enumeration,
    unique_answer_count,
)
from .report import (
    AssignmentRow,
    ClusterTable,
    ModelSummary,
    build_cluster_table,
    build_model_summary,
    build_overlap_tables,
)
from .synth import ClusterBlueprint, SynthSpec, generate, realize_agreement

__version__ = "0.1.0"
