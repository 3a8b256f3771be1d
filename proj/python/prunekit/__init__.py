"""Structured pruning toolkit: tensor ops, small CNNs, and the pruning pipeline."""

from ._core import (  # noqa: F401
    Dataset,
    MaskSet,
    Network,
    all_ones_masks,
    apply_mask,
    build_network,
    compress,
    conv2d,
    count_flops,
    count_params,
    evaluate_accuracy,
    forward,
    gemm,
    im2col,
    load_checkpoint,
    magnitude_prune,
    save_checkpoint,
    synth_dataset,
    train,
)

__all__ = [
    "Dataset",
    "MaskSet",
    "Network",
    "all_ones_masks",
    "apply_mask",
    "build_network",
    "compress",
    "conv2d",
    "count_flops",
    "count_params",
    "evaluate_accuracy",
    "forward",
    "gemm",
    "im2col",
    "load_checkpoint",
    "magnitude_prune",
    "save_checkpoint",
    "synth_dataset",
    "train",
]
