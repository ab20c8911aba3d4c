"""Run configuration: one ``key = value`` file covering every pipeline stage.

Keys are namespaced ``dsp.*``, ``text.*``, ``data.*``, ``model.*`` and
``train.*``; each maps onto a field of the corresponding config dataclass,
so the list of keys and their defaults has a single source.  Unknown keys
are an error.  Lines starting with ``#`` are comments.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .dsp import DspConfig
from .model import ModelConfig
from .train import TrainConfig


class ConfigKeyError(ValueError):
    """Unknown key or unparseable value in a run configuration."""


@dataclass
class TextConfig:
    granularity: str = "char"
    bpe_vocab_size: int = 1000
    min_count: int = 1


@dataclass
class DataConfig:
    split_seed: int = 0
    ratios: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    speaker_disjoint: bool = False
    max_fail_percent: float = 5.0


# derived from the data rather than configured
MODEL_DERIVED = ("input_dim", "vocab_size", "aux_vocab_sizes")

SECTIONS = {"dsp": DspConfig, "text": TextConfig, "data": DataConfig, "model": ModelConfig, "train": TrainConfig}

DESCRIPTIONS = {
    "dsp.sample_rate": "audio is resampled to this rate (Hz)",
    "dsp.n_fft": "STFT window length in samples",
    "dsp.hop": "STFT hop in samples",
    "dsp.window": "analysis window (hann or hamming)",
    "dsp.n_mels": "Mel filters; also the model input dimension",
    "dsp.f_min": "lowest filter edge (Hz)",
    "dsp.f_max": "highest filter edge (Hz); none means Nyquist",
    "dsp.floor_eps": "energy floor before the log",
    "dsp.trim_db": "silence threshold below the loudest frame (dB)",
    "dsp.resample_beta": "Kaiser window shape of the resampling filter",
    "text.granularity": "output units: char, syllable, phoneme or wordpiece",
    "text.bpe_vocab_size": "target symbol count when training BPE",
    "text.min_count": "drop tokens seen fewer times than this",
    "data.split_seed": "seed of the train/validation/test shuffle",
    "data.ratios": "train,validation,test fractions",
    "data.speaker_disjoint": "keep each speaker in one split part",
    "data.max_fail_percent": "prepare fails when more utterances than this are excluded",
    "model.d_model": "encoder width",
    "model.n_heads": "attention heads in the Conformer blocks",
    "model.conv_kernel": "depthwise convolution kernel (odd)",
    "model.ff_expansion": "feed-forward width multiplier",
    "model.n_early": "Conformer blocks before fusion",
    "model.n_late": "Conformer blocks after fusion",
    "model.d_embed": "width of each embedding branch",
    "model.branch_layers": "transformer layers per branch",
    "model.branch_heads": "attention heads in each branch",
    "model.dropout": "dropout rate in training mode",
    "model.subsample_factor": "time reduction of the convolutional front (4)",
    "model.max_positions": "longest subsampled sequence",
    "model.ln_eps": "layer-norm epsilon",
    "model.seed": "parameter initialization seed",
    "train.epochs": "training epochs",
    "train.batch_size": "utterances per batch",
    "train.learning_rate": "Adam step size",
    "train.beta1": "Adam first-moment decay",
    "train.beta2": "Adam second-moment decay",
    "train.eps": "Adam denominator epsilon",
    "train.weight_decay": "L2 coefficient added to the gradient",
    "train.grad_clip_norm": "global gradient-norm ceiling",
    "train.warmup_steps": "linear learning-rate warm-up steps (0 = off)",
    "train.seed": "seed for batch order, dropout and augmentation",
    "train.validate_every": "epochs between validation runs and numbered checkpoints",
    "train.spec_augment": "apply time/frequency masking to training batches",
    "train.aux_weight": "weight of the per-branch auxiliary CTC losses (0 = off)",
    "train.beam_width": "validation decoding beam (1 = greedy)",
}


def _fields(section: str):
    return [f for f in dataclasses.fields(SECTIONS[section]) if not (section == "model" and f.name in MODEL_DERIVED)]


def _defaults() -> Dict[str, object]:
    out = {}
    for section, cls in SECTIONS.items():
        inst = cls()
        for f in _fields(section):
            out[f"{section}.{f.name}"] = getattr(inst, f.name)
    return out


def all_keys() -> List[str]:
    return list(_defaults())


def format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(format_value(v) for v in value)
    return str(value)


def _field_type(section: str, name: str):
    hints = typing.get_type_hints(SECTIONS[section])
    return hints[name]


def parse_value(key: str, text: str):
    section, name = key.split(".", 1)
    tp = _field_type(section, name)
    text = text.strip()
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    try:
        if origin is Union and type(None) in args:
            if text.lower() == "none":
                return None
            tp = next(a for a in args if a is not type(None))
            origin = typing.get_origin(tp)
            args = typing.get_args(tp)
        if origin in (tuple, Tuple):
            return tuple(args[0](p) for p in text.split(","))
        if tp is bool:
            if text.lower() in ("true", "1", "yes"):
                return True
            if text.lower() in ("false", "0", "no"):
                return False
            raise ValueError(text)
        return tp(text)
    except (ValueError, StopIteration) as err:
        raise ConfigKeyError(f"{key}: cannot parse {text!r} as {tp}") from err


@dataclass
class RunConfig:
    values: Dict[str, object] = field(default_factory=_defaults)

    def set(self, key: str, raw: str) -> None:
        if key not in self.values:
            raise ConfigKeyError(f"unknown config key {key!r}")
        self.values[key] = parse_value(key, raw)

    def update(self, assignments: Sequence[str]) -> "RunConfig":
        for a in assignments:
            key, sep, raw = a.partition("=")
            if not sep:
                raise ConfigKeyError(f"expected key=value, got {a!r}")
            self.set(key.strip(), raw)
        return self

    @classmethod
    def parse(cls, text: str, source: str = "<config>") -> "RunConfig":
        cfg = cls()
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, raw = line.partition("=")
            if not sep:
                raise ConfigKeyError(f"{source}:{lineno}: expected key = value")
            try:
                cfg.set(key.strip(), raw)
            except ConfigKeyError as err:
                raise ConfigKeyError(f"{source}:{lineno}: {err}") from err
        return cfg

    @classmethod
    def load(cls, path: Optional[Union[str, Path]] = None, overrides: Sequence[str] = ()) -> "RunConfig":
        cfg = cls.parse(Path(path).read_text(encoding="utf-8"), str(path)) if path else cls()
        return cfg.update(overrides)

    def dumps(self) -> str:
        return "".join(f"{k} = {format_value(v)}\n" for k, v in self.values.items())

    def section(self, name: str) -> Dict[str, object]:
        prefix = name + "."
        return {k[len(prefix) :]: v for k, v in self.values.items() if k.startswith(prefix)}

    def dsp(self) -> DspConfig:
        cfg = DspConfig(**self.section("dsp"))
        cfg.validate()
        return cfg

    def text(self) -> TextConfig:
        return TextConfig(**self.section("text"))

    def data(self) -> DataConfig:
        return DataConfig(**self.section("data"))

    def model(self, **derived) -> ModelConfig:
        return ModelConfig(**self.section("model"), **derived)

    def train(self) -> TrainConfig:
        return TrainConfig(**self.section("train"))


def help_text() -> str:
    lines = ["configuration keys (key = default):"]
    for key, value in _defaults().items():
        lines.append(f"  {key} = {format_value(value)}    {DESCRIPTIONS.get(key, '')}".rstrip())
    return "\n".join(lines)
