"""Named parameter store and deterministic initialization."""

from __future__ import annotations

from collections import OrderedDict
from typing import Dict, Iterator, List, Tuple

import numpy as np

from ..numerics import Tensor, make_rng
from .config import BRANCHES, ModelConfig

Shape = Tuple[int, ...]


def _linear_shapes(prefix: str, n_in: int, n_out: int) -> List[Tuple[str, Shape]]:
    return [(f"{prefix}.w", (n_in, n_out)), (f"{prefix}.b", (n_out,))]


def _norm_shapes(prefix: str, d: int) -> List[Tuple[str, Shape]]:
    return [(f"{prefix}.gain", (d,)), (f"{prefix}.bias", (d,))]


def _ffn_shapes(prefix: str, d: int, f: int) -> List[Tuple[str, Shape]]:
    return _norm_shapes(f"{prefix}.norm", d) + _linear_shapes(f"{prefix}.fc1", d, f) + _linear_shapes(f"{prefix}.fc2", f, d)


def _attention_shapes(prefix: str, d: int) -> List[Tuple[str, Shape]]:
    out = _norm_shapes(f"{prefix}.norm", d)
    for p in ("q", "k", "v", "o"):
        out += _linear_shapes(f"{prefix}.{p}", d, d)
    return out


def param_shapes(c: ModelConfig) -> "OrderedDict[str, Shape]":
    """Every parameter name and shape, in a fixed order derived from the config."""
    d, f = c.d_model, c.d_model * c.ff_expansion
    s: List[Tuple[str, Shape]] = [
        ("sub.conv1.w", (3, c.input_dim, d)),
        ("sub.conv1.b", (d,)),
        ("sub.conv2.w", (3, d, d)),
        ("sub.conv2.b", (d,)),
    ] + _linear_shapes("sub.proj", d, d)

    def block(prefix):
        out = _ffn_shapes(f"{prefix}.ff1", d, f)
        out += _attention_shapes(f"{prefix}.mhsa", d)
        out += _norm_shapes(f"{prefix}.conv.norm", d)
        out += _linear_shapes(f"{prefix}.conv.pw1", d, 2 * d)
        out += [(f"{prefix}.conv.dw.w", (c.conv_kernel, 1, d)), (f"{prefix}.conv.dw.b", (d,))]
        out += _norm_shapes(f"{prefix}.conv.norm2", d)
        out += _linear_shapes(f"{prefix}.conv.pw2", d, d)
        out += _ffn_shapes(f"{prefix}.ff2", d, f)
        out += _norm_shapes(f"{prefix}.norm", d)
        return out

    for i in range(c.n_early):
        s += block(f"early.{i}")
    e, fe = c.d_embed, c.d_embed * c.ff_expansion
    for name in BRANCHES:
        p = f"branch.{name}"
        s += _linear_shapes(f"{p}.proj_in", d, e)
        for j in range(c.branch_layers):
            s += _attention_shapes(f"{p}.layer{j}.attn", e)
            s += _ffn_shapes(f"{p}.layer{j}.ff", e, fe)
        s += _norm_shapes(f"{p}.norm", e)
        s += _linear_shapes(f"{p}.proj_out", e, d)
    for i in range(c.n_late):
        s += block(f"late.{i}")
    s += _linear_shapes("head", d, c.vocab_size)
    for name, v in zip(BRANCHES, c.aux_vocab_sizes):
        if v:
            s += _linear_shapes(f"aux.{name}", d, v)
    return OrderedDict(s)


def _fan_in(name: str, shape: Shape) -> int:
    if len(shape) == 3:  # conv kernel [K, C_in/groups, C_out]
        return shape[0] * shape[1]
    return shape[0]


def init_value(name: str, shape: Shape, seed: int) -> np.ndarray:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases, unit norm gains.

    Each tensor has its own generator keyed by name, so adding a parameter
    never shifts the values of the others.
    """
    leaf = name.rsplit(".", 1)[-1]
    if leaf == "gain":
        return np.ones(shape)
    if leaf in ("b", "bias"):
        return np.zeros(shape)
    bound = 1.0 / np.sqrt(_fan_in(name, shape))
    return make_rng(seed, "init", name).uniform(-bound, bound, size=shape)


class ModelParams:
    """Ordered mapping from parameter name to trainable :class:`Tensor`."""

    def __init__(self, config: ModelConfig, tensors: "OrderedDict[str, Tensor]"):
        self.config = config
        self._tensors = tensors

    @classmethod
    def init(cls, config: ModelConfig, seed: int = None) -> "ModelParams":
        seed = config.seed if seed is None else seed
        tensors = OrderedDict(
            (name, Tensor(init_value(name, shape, seed), requires_grad=True))
            for name, shape in param_shapes(config).items()
        )
        return cls(config, tensors)

    @classmethod
    def from_arrays(cls, config: ModelConfig, arrays: Dict[str, np.ndarray]) -> "ModelParams":
        expected = param_shapes(config)
        missing = set(expected) - set(arrays)
        extra = set(arrays) - set(expected)
        if missing or extra:
            raise ValueError(f"parameter names differ from config: missing={sorted(missing)} extra={sorted(extra)}")
        tensors = OrderedDict()
        for name, shape in expected.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name}: shape {arr.shape} does not match config shape {shape}")
            tensors[name] = Tensor(arr, requires_grad=True)
        return cls(config, tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> List[str]:
        return list(self._tensors)

    def named_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self._tensors.items())

    def num_parameters(self) -> int:
        return sum(t.size for t in self._tensors.values())

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.zero_grad()

    def arrays(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, t.data.copy()) for k, t in self._tensors.items())

    def copy(self) -> "ModelParams":
        return ModelParams.from_arrays(self.config, self.arrays())

    def equal(self, other: "ModelParams") -> bool:
        return self.names() == other.names() and all(
            np.array_equal(self[n].data, other[n].data) for n in self.names()
        )
