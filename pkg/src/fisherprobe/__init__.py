"""fisherprobe: quantify classifier fragility via the largest eigenvalue
of the input-space Fisher information metric, with an Integrated-
Gradients perturbation harness and a what-if scoring service."""

from .autograd import Graph, Node, forward, grad_input, grad_params
from .data import (
    Example,
    GaussianMixtureSpec,
    PairedExample,
    load_dataset,
    load_embeddings,
    load_pairs,
    sample_mixture,
    tokenize,
)
from .fim import (
    FimResult,
    LogProbJacobian,
    fim_spectrum,
    jacobian,
    kl_quadratic_check,
    lambda_max,
    score_dataset,
)
from .models import (
    EmbeddingTable,
    Model,
    ModelSpec,
    build_model,
    embed,
    load_checkpoint,
    save_checkpoint,
)
from .probe import (
    AttributionResult,
    DeltaStats,
    OverlapReport,
    PairedRecord,
    apply_substitutions,
    boundary_distance,
    histogram_overlap,
    delta_stats,
    important_tokens,
    integrated_gradients,
    path_attributions,
    score_pairs,
)
from .training import TrainConfig, TrainReport, cross_entropy, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "Graph", "Node", "forward", "grad_input", "grad_params",
    "Example", "GaussianMixtureSpec", "PairedExample",
    "load_dataset", "load_embeddings", "load_pairs", "sample_mixture", "tokenize",
    "FimResult", "LogProbJacobian", "fim_spectrum", "jacobian",
    "kl_quadratic_check", "lambda_max", "score_dataset",
    "EmbeddingTable", "Model", "ModelSpec", "build_model", "embed",
    "load_checkpoint", "save_checkpoint",
    "AttributionResult", "DeltaStats", "OverlapReport", "PairedRecord",
    "apply_substitutions", "boundary_distance", "delta_stats",
    "histogram_overlap", "important_tokens", "integrated_gradients",
    "path_attributions", "score_pairs",
    "TrainConfig", "TrainReport", "cross_entropy", "evaluate", "train",
]
