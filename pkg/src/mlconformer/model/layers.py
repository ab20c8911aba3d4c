"""Building blocks shared by the Conformer stacks and the embedding branches.

All layers are functions of ``(x, params, prefix, ...)`` where ``prefix``
selects the parameter names, so a model is just a naming scheme over one
flat parameter store.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import numerics as nx
from ..numerics import Tensor
from .params import ModelParams

NEG_INF = -1e9  # additive attention bias for padded keys; exp underflows to exactly 0


@dataclass
class Context:
    """Per-forward state: train/eval mode and the dropout generator."""

    training: bool = False
    dropout: float = 0.0
    rng: Optional[np.random.Generator] = None
    ln_eps: float = 1e-5

    def drop(self, x: Tensor) -> Tensor:
        return nx.dropout(x, self.dropout, self.rng, self.training)


def linear(x: Tensor, p: ModelParams, prefix: str) -> Tensor:
    return x @ p[f"{prefix}.w"] + p[f"{prefix}.b"]


def norm(x: Tensor, p: ModelParams, prefix: str, ctx: Context) -> Tensor:
    return nx.layer_norm(x, p[f"{prefix}.gain"], p[f"{prefix}.bias"], ctx.ln_eps)


@functools.lru_cache(maxsize=64)
def sinusoidal_positions(n: int, d: int) -> np.ndarray:
    """Read-only ``[n, d]`` table of sin/cos position codes (cached)."""
    pos = np.arange(n)[:, None]
    rates = np.exp(-math.log(10000.0) * (np.arange(0, d, 2) / d))
    pe = np.zeros((n, d))
    pe[:, 0::2] = np.sin(pos * rates)
    pe[:, 1::2] = np.cos(pos * rates[: d // 2])
    pe.flags.writeable = False
    return pe


def frame_mask(lengths, T: int) -> np.ndarray:
    """``[B, T]`` with 1.0 on valid frames and 0.0 on padding."""
    return (np.arange(T)[None, :] < np.asarray(lengths)[:, None]).astype(np.float64)


def attention_bias(mask: np.ndarray) -> Tensor:
    """``[B, 1, 1, T]`` additive bias that hides padded keys."""
    return Tensor(np.where(mask > 0, 0.0, NEG_INF)[:, None, None, :])


def feed_forward(x: Tensor, p: ModelParams, prefix: str, ctx: Context, activation=nx.swish) -> Tensor:
    h = norm(x, p, f"{prefix}.norm", ctx)
    h = ctx.drop(activation(linear(h, p, f"{prefix}.fc1")))
    return ctx.drop(linear(h, p, f"{prefix}.fc2"))


def self_attention(x: Tensor, p: ModelParams, prefix: str, n_heads: int, bias: Tensor, ctx: Context) -> Tensor:
    """Pre-norm multi-head self-attention over ``[B, T, d]``."""
    B, T, d = x.shape
    dk = d // n_heads
    h = norm(x, p, f"{prefix}.norm", ctx)

    def heads(name):
        return linear(h, p, f"{prefix}.{name}").reshape(B, T, n_heads, dk).transpose(0, 2, 1, 3)

    q, k, v = heads("q"), heads("k"), heads("v")
    scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(dk)) + bias
    weights = ctx.drop(nx.softmax(scores, axis=-1))
    out = (weights @ v).transpose(0, 2, 1, 3).reshape(B, T, d)
    return ctx.drop(linear(out, p, f"{prefix}.o"))


def conv_module(x: Tensor, p: ModelParams, prefix: str, mask: Tensor, ctx: Context) -> Tensor:
    """Pointwise-GLU, depthwise conv, norm, swish, pointwise.

    Padded frames are zeroed before the depthwise convolution so they cannot
    leak into valid neighbours.
    """
    h = norm(x, p, f"{prefix}.norm", ctx)
    h = nx.glu(linear(h, p, f"{prefix}.pw1"), axis=-1) * mask
    w = p[f"{prefix}.dw.w"]
    K, d = w.shape[0], w.shape[2]
    h = nx.conv1d(h, w, p[f"{prefix}.dw.b"], stride=1, padding=K // 2, groups=d)
    h = nx.swish(norm(h, p, f"{prefix}.norm2", ctx))
    return ctx.drop(linear(h, p, f"{prefix}.pw2"))


def conformer_block(x: Tensor, p: ModelParams, prefix: str, n_heads: int, mask: Tensor, bias: Tensor, ctx: Context) -> Tensor:
    """Macaron block: half FFN, self-attention, convolution, half FFN, final norm."""
    x = x + 0.5 * feed_forward(x, p, f"{prefix}.ff1", ctx)
    x = x + self_attention(x, p, f"{prefix}.mhsa", n_heads, bias, ctx)
    x = x + conv_module(x, p, f"{prefix}.conv", mask, ctx)
    x = x + 0.5 * feed_forward(x, p, f"{prefix}.ff2", ctx)
    return norm(x, p, f"{prefix}.norm", ctx)


def transformer_layer(x: Tensor, p: ModelParams, prefix: str, n_heads: int, bias: Tensor, ctx: Context) -> Tensor:
    """Pre-norm encoder layer: attention then ReLU feed-forward, each residual."""
    x = x + self_attention(x, p, f"{prefix}.attn", n_heads, bias, ctx)
    return x + feed_forward(x, p, f"{prefix}.ff", ctx, activation=nx.relu)
