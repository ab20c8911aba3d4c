"""Forward pass of the multi-level-embedding Conformer encoder.

    features -> conv_subsample -> +PE -> early Conformer stack = H_E
    H_E -> {phoneme, syllable, wordpiece} branches -> E_ph, E_syl, E_wp
    H_F = H_E + E_ph + E_syl + E_wp
    H_F -> late Conformer stack -> linear -> log-softmax
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .. import numerics as nx
from ..numerics import NonFiniteError, ShapeError, Tensor
from .config import BRANCHES, ModelConfig
from .layers import (
    Context,
    attention_bias,
    conformer_block,
    frame_mask,
    linear,
    norm,
    sinusoidal_positions,
    transformer_layer,
)
from .params import ModelParams


@dataclass
class EncoderOutput:
    log_posteriors: Tensor  # [B, T', V]
    lengths: List[int]
    intermediates: Dict[str, Tensor] = field(default_factory=dict)
    aux_log_posteriors: Dict[str, Tensor] = field(default_factory=dict)


@contextlib.contextmanager
def _stage(name: str):
    try:
        yield
    except NonFiniteError as err:
        raise NonFiniteError(f"non-finite activation in {name}: {err}") from err


def conv_length(n: int) -> int:
    """Output length of a kernel-3, stride-2, padding-1 convolution."""
    return (n + 2 - 3) // 2 + 1


def output_lengths(lengths: Sequence[int]) -> List[int]:
    return [conv_length(conv_length(int(n))) for n in lengths]


def _as_batch(features) -> Tensor:
    x = features if isinstance(features, Tensor) else Tensor(np.asarray(features, dtype=np.float64))
    if x.ndim == 2:
        x = x.reshape(1, *x.shape)
    if x.ndim != 3:
        raise ShapeError(f"features must be [B, T, D], got {x.shape}")
    return x


def conv_subsample(features, lengths: Sequence[int], p: ModelParams, ctx: Context):
    """Two stride-2 convolutions with swish, then a projection to d_model.

    Returns the subsampled tensor and the per-utterance output lengths.
    """
    x = _as_batch(features)
    B, T, D = x.shape
    if T < 4:
        raise ShapeError(f"need at least 4 input frames for 4x subsampling, got {T}")
    if D != p.config.input_dim:
        raise ShapeError(f"feature dim {D} != model input_dim {p.config.input_dim}")
    lengths = [int(n) for n in lengths]
    if len(lengths) != B or any(not 1 <= n <= T for n in lengths):
        raise ShapeError(f"lengths {lengths} invalid for batch of shape {x.shape}")
    x = x * Tensor(frame_mask(lengths, T)[:, :, None])
    mid = [conv_length(n) for n in lengths]
    x = nx.swish(nx.conv1d(x, p["sub.conv1.w"], p["sub.conv1.b"], stride=2, padding=1))
    x = x * Tensor(frame_mask(mid, x.shape[1])[:, :, None])
    out = [conv_length(n) for n in mid]
    x = nx.swish(nx.conv1d(x, p["sub.conv2.w"], p["sub.conv2.b"], stride=2, padding=1))
    x = x * Tensor(frame_mask(out, x.shape[1])[:, :, None])
    return linear(x, p, "sub.proj"), out


def add_positions(x: Tensor, max_positions: int) -> Tensor:
    T, d = x.shape[1], x.shape[2]
    if T > max_positions:
        raise ShapeError(f"sequence length {T} exceeds max_positions {max_positions}")
    return x + Tensor(sinusoidal_positions(T, d))


def _stack(x: Tensor, p: ModelParams, kind: str, n: int, mask: Tensor, bias: Tensor, ctx: Context) -> Tensor:
    for i in range(n):
        with _stage(f"{kind}.{i}"):
            x = conformer_block(x, p, f"{kind}.{i}", p.config.n_heads, mask, bias, ctx)
    return x


def early_encoder(x: Tensor, p: ModelParams, mask: Tensor, bias: Tensor, ctx: Context) -> Tensor:
    """Position encoding followed by the early Conformer blocks."""
    x = ctx.drop(add_positions(x, p.config.max_positions))
    return _stack(x, p, "early", p.config.n_early, mask, bias, ctx)


def late_encoder(x: Tensor, p: ModelParams, mask: Tensor, bias: Tensor, ctx: Context) -> Tensor:
    return _stack(x, p, "late", p.config.n_late, mask, bias, ctx)


def embedding_branch(h: Tensor, p: ModelParams, name: str, bias: Tensor, ctx: Context) -> Tensor:
    """Dense projection to d_embed, +PE, transformer layers, norm, projection back to d_model."""
    if name not in BRANCHES:
        raise ValueError(f"unknown branch {name!r}")
    c = p.config
    prefix = f"branch.{name}"
    with _stage(prefix):
        e = add_positions(linear(h, p, f"{prefix}.proj_in"), c.max_positions)
        e = ctx.drop(e)
        for j in range(c.branch_layers):
            e = transformer_layer(e, p, f"{prefix}.layer{j}", c.branch_heads, bias, ctx)
        e = norm(e, p, f"{prefix}.norm", ctx)
        return linear(e, p, f"{prefix}.proj_out")


def fuse(h: Tensor, e_ph: Tensor, e_syl: Tensor, e_wp: Tensor) -> Tensor:
    """Element-wise sum of the acoustic encoding and the three branch outputs."""
    for t in (e_ph, e_syl, e_wp):
        if t.shape != h.shape:
            raise ShapeError(f"fuse operands differ in shape: {h.shape} vs {t.shape}")
    return h + e_ph + e_syl + e_wp


def _context(config: ModelConfig, training: bool, rng: Optional[np.random.Generator]) -> Context:
    if training and config.dropout > 0 and rng is None:
        raise ValueError("training-mode forward with dropout needs a generator")
    return Context(training=training, dropout=config.dropout, rng=rng, ln_eps=config.ln_eps)


def _masks(lengths: Sequence[int], T: int):
    m = frame_mask(lengths, T)
    return Tensor(m[:, :, None]), attention_bias(m)


def forward(
    p: ModelParams,
    features,
    lengths: Sequence[int],
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> EncoderOutput:
    c = p.config
    ctx = _context(c, training, rng)
    with _stage("subsample"):
        x, out_lengths = conv_subsample(features, lengths, p, ctx)
    mask, bias = _masks(out_lengths, x.shape[1])
    h_e = early_encoder(x, p, mask, bias, ctx)
    branches = {name: embedding_branch(h_e, p, name, bias, ctx) for name in BRANCHES}
    with _stage("fuse"):
        h_f = fuse(h_e, branches["phoneme"], branches["syllable"], branches["wordpiece"])
    h_l = late_encoder(h_f, p, mask, bias, ctx)
    with _stage("head"):
        log_post = nx.log_softmax(linear(h_l, p, "head"), axis=-1)
    aux = {}
    for name, v in zip(BRANCHES, c.aux_vocab_sizes):
        if v:
            with _stage(f"aux.{name}"):
                aux[name] = nx.log_softmax(linear(branches[name], p, f"aux.{name}"), axis=-1)
    inter = {"H_E": h_e, "H_F": h_f, "H_L": h_l}
    inter.update({f"E_{name}": t for name, t in branches.items()})
    return EncoderOutput(log_post, out_lengths, inter, aux)


def plain_forward(
    p: ModelParams,
    features,
    lengths: Sequence[int],
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> EncoderOutput:
    """Conformer-CTC with the branches removed: early stack feeds the late stack directly."""
    ctx = _context(p.config, training, rng)
    x, out_lengths = conv_subsample(features, lengths, p, ctx)
    mask, bias = _masks(out_lengths, x.shape[1])
    h = late_encoder(early_encoder(x, p, mask, bias, ctx), p, mask, bias, ctx)
    return EncoderOutput(nx.log_softmax(linear(h, p, "head"), axis=-1), out_lengths, {"H_L": h})


def zero_branch_outputs(p: ModelParams) -> None:
    """Zero every branch's output projection in place."""
    for name in BRANCHES:
        p[f"branch.{name}.proj_out.w"].data[...] = 0.0
        p[f"branch.{name}.proj_out.b"].data[...] = 0.0
