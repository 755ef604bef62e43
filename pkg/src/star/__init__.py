"""Skeleton action recognition with sparse spatial attention and
segmented linear temporal attention over ragged clip batches."""

from .data import (ClipRecord, RaggedBatch, collate, parse_ntu_skeleton,
                   segmented_positional_encoding, synth_dataset)
from .graph import (AttentionSupport, SkeletonGraph, build_support, dense_mask,
                    load_skeleton, ntu25_graph)
from .model import (PRESETS, StarConfig, StarModel, context_attention, forward,
                    init_model, load_checkpoint, param_count, preset,
                    save_checkpoint)
from .profiler import OpProfile, Profiler
from .spatial import MhsaConfig, count_spatial_macs, dense_masked_mhsa, sparse_mhsa
from .temporal import KernelSpec, kernel_map, quadratic_segment_oracle, segmented_linear_mhsa
from .tensor import Tape, Tensor
from .train import TrainConfig, evaluate, lr_schedule, run_training, train_step

__version__ = "0.1.0"

__all__ = [
    "AttentionSupport", "ClipRecord", "KernelSpec", "MhsaConfig", "OpProfile",
    "PRESETS", "Profiler", "RaggedBatch", "SkeletonGraph", "StarConfig",
    "StarModel", "Tape", "Tensor", "TrainConfig", "build_support", "collate",
    "context_attention", "count_spatial_macs", "dense_mask", "dense_masked_mhsa",
    "evaluate", "forward", "init_model", "kernel_map", "load_checkpoint",
    "load_skeleton", "lr_schedule", "ntu25_graph", "param_count",
    "parse_ntu_skeleton", "preset", "quadratic_segment_oracle", "run_training",
    "save_checkpoint", "segmented_linear_mhsa", "segmented_positional_encoding",
    "sparse_mhsa", "synth_dataset", "train_step",
]
