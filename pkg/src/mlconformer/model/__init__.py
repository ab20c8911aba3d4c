"""Conformer encoder with phoneme, syllable and wordpiece embedding branches."""

from .check import ModelGradReport, end_to_end_gradcheck, model_loss, tiny_problem
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, read_tensors, save_checkpoint, write_tensors
from .config import BRANCHES, PROFILES, ModelConfig, ModelConfigError, count_parameters, profile
from .encoder import (
    EncoderOutput,
    conv_length,
    conv_subsample,
    early_encoder,
    embedding_branch,
    forward,
    fuse,
    late_encoder,
    output_lengths,
    plain_forward,
    zero_branch_outputs,
)
from .layers import Context, conformer_block, frame_mask, sinusoidal_positions
from .params import ModelParams, param_shapes

__all__ = [
    "BRANCHES",
    "PROFILES",
    "Checkpoint",
    "CheckpointError",
    "Context",
    "EncoderOutput",
    "ModelConfig",
    "ModelConfigError",
    "ModelGradReport",
    "ModelParams",
    "conformer_block",
    "conv_length",
    "conv_subsample",
    "count_parameters",
    "early_encoder",
    "embedding_branch",
    "end_to_end_gradcheck",
    "forward",
    "frame_mask",
    "fuse",
    "late_encoder",
    "load_checkpoint",
    "model_loss",
    "output_lengths",
    "param_shapes",
    "plain_forward",
    "profile",
    "read_tensors",
    "save_checkpoint",
    "sinusoidal_positions",
    "tiny_problem",
    "write_tensors",
    "zero_branch_outputs",
]
