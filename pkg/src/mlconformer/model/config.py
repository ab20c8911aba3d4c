"""Model hyperparameters, named profiles and the closed-form parameter count."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Dict, Tuple

BRANCHES = ("phoneme", "syllable", "wordpiece")


class ModelConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int = 80
    d_model: int = 64
    n_heads: int = 4
    conv_kernel: int = 15
    ff_expansion: int = 4
    n_early: int = 2
    n_late: int = 2
    d_embed: int = 64
    branch_layers: int = 2
    branch_heads: int = 4
    dropout: float = 0.1
    vocab_size: int = 32
    subsample_factor: int = 4
    max_positions: int = 5000
    ln_eps: float = 1e-5
    # auxiliary CTC heads on the branch outputs; 0 disables a head
    aux_vocab_sizes: Tuple[int, int, int] = (0, 0, 0)
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.d_model < 1 or self.d_model % self.n_heads:
            raise ModelConfigError(f"d_model={self.d_model} must be a positive multiple of n_heads={self.n_heads}")
        if self.d_embed < 1 or self.d_embed % self.branch_heads:
            raise ModelConfigError(f"d_embed={self.d_embed} must be a positive multiple of branch_heads={self.branch_heads}")
        if self.conv_kernel < 1 or self.conv_kernel % 2 == 0:
            raise ModelConfigError("conv_kernel must be odd")
        if self.n_early < 1 or self.n_late < 1 or self.branch_layers < 1:
            raise ModelConfigError("n_early, n_late and branch_layers must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ModelConfigError("dropout must lie in [0, 1)")
        if self.subsample_factor != 4:
            raise ModelConfigError("only subsample_factor=4 (two stride-2 convolutions) is implemented")
        if self.vocab_size < 2 or self.input_dim < 1 or self.ff_expansion < 1:
            raise ModelConfigError("vocab_size >= 2, input_dim >= 1 and ff_expansion >= 1 required")
        if len(self.aux_vocab_sizes) != 3 or any(v < 0 or v == 1 for v in self.aux_vocab_sizes):
            raise ModelConfigError("aux_vocab_sizes needs three entries, each 0 (off) or >= 2")

    def replace(self, **changes) -> "ModelConfig":
        if "aux_vocab_sizes" in changes:
            changes["aux_vocab_sizes"] = tuple(changes["aux_vocab_sizes"])
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, object]:
        d = dataclasses.asdict(self)
        d["aux_vocab_sizes"] = list(self.aux_vocab_sizes)
        return d

    @classmethod
    def from_dict(cls, d: Dict[str, object]) -> "ModelConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ModelConfigError(f"unknown model config keys: {sorted(unknown)}")
        d = dict(d)
        if "aux_vocab_sizes" in d:
            d["aux_vocab_sizes"] = tuple(d["aux_vocab_sizes"])
        return cls(**d)


PROFILES: Dict[str, Dict[str, object]] = {
    # finite-difference checks: every parameter is perturbed, so keep it small
    "tiny": dict(
        input_dim=8, d_model=16, n_heads=2, conv_kernel=3, ff_expansion=2, n_early=1, n_late=1,
        d_embed=8, branch_layers=1, branch_heads=2, dropout=0.0, vocab_size=5,
    ),
    "desk": dict(
        input_dim=80, d_model=64, n_heads=4, conv_kernel=15, ff_expansion=4, n_early=2, n_late=2,
        d_embed=64, branch_layers=2, branch_heads=4, dropout=0.1,
    ),
    # 12 early + 24 late blocks over 80-dim log-Mel input
    "full": dict(
        input_dim=80, d_model=256, n_heads=4, conv_kernel=31, ff_expansion=4, n_early=12, n_late=24,
        d_embed=256, branch_layers=2, branch_heads=4, dropout=0.1,
    ),
}


def profile(name: str, **overrides) -> ModelConfig:
    if name not in PROFILES:
        raise ModelConfigError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    return ModelConfig(**{**PROFILES[name], **overrides})


def _linear(n_in: int, n_out: int) -> int:
    return n_in * n_out + n_out


def _norm(d: int) -> int:
    return 2 * d


def conformer_block_size(c: ModelConfig) -> int:
    d, f = c.d_model, c.d_model * c.ff_expansion
    ffn = _norm(d) + _linear(d, f) + _linear(f, d)
    mhsa = _norm(d) + 4 * _linear(d, d)
    conv = _norm(d) + _linear(d, 2 * d) + (c.conv_kernel * d + d) + _norm(d) + _linear(d, d)
    return 2 * ffn + mhsa + conv + _norm(d)


def branch_size(c: ModelConfig) -> int:
    e, f = c.d_embed, c.d_embed * c.ff_expansion
    layer = _norm(e) + 4 * _linear(e, e) + _norm(e) + _linear(e, f) + _linear(f, e)
    return _linear(c.d_model, e) + c.branch_layers * layer + _norm(e) + _linear(e, c.d_model)


def count_parameters(c: ModelConfig) -> int:
    """Closed-form parameter count.

    subsampler   3*D*d + d  +  3*d*d + d  +  d*d + d
    block        2 * FFN(LN, d->f->d) + MHSA(LN, 4 d*d projections) + conv module + LN
    conv module  LN + pointwise d->2d + depthwise K*d + d + LN + pointwise d->d
    branch       d->e, L * transformer layer(e), LN, e->d
    head         d*V + V, plus one head per enabled auxiliary vocabulary
    """
    d = c.d_model
    sub = (3 * c.input_dim * d + d) + (3 * d * d + d) + _linear(d, d)
    blocks = (c.n_early + c.n_late) * conformer_block_size(c)
    branches = len(BRANCHES) * branch_size(c)
    heads = _linear(d, c.vocab_size) + sum(_linear(d, v) for v in c.aux_vocab_sizes if v)
    return sub + blocks + branches + heads
