"""Python bindings for the cga adaptation core."""

from ._cga import (
    CheckpointError,
    InvalidInput,
    adapt,
    build_confusion_graph,
    build_feature_bank,
    config_template,
    entropy,
    estimate_confusion_matrix,
    evaluate,
    fuse_batch,
    fuse_predictions,
    graph_from_confusion_matrix,
    kl_to_reference,
    pair_score,
    prompt_texts,
    spearman,
    synth_data,
)

__all__ = [
    "CheckpointError",
    "InvalidInput",
    "adapt",
    "build_confusion_graph",
    "build_feature_bank",
    "config_template",
    "entropy",
    "estimate_confusion_matrix",
    "evaluate",
    "fuse_batch",
    "fuse_predictions",
    "graph_from_confusion_matrix",
    "kl_to_reference",
    "pair_score",
    "prompt_texts",
    "spearman",
    "synth_data",
]
