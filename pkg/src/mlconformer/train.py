"""Adam training loop with gradient clipping, validation, checkpoints and a loss curve.

Every random draw is keyed by ``(seed, purpose, epoch, batch)``, so training is
a pure function of (seed, config, data) and can resume from any saved epoch
with the same continuation as an uninterrupted run.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import ctc
from . import numerics as nx
from .data import Batch, Utterance, make_batches
from .dsp import SpecAugmentPolicy, spec_augment
from .metrics import corpus_score
from .model import BRANCHES, ModelParams, forward, load_checkpoint, read_tensors, save_checkpoint, write_tensors
from .numerics import NonFiniteError, derive_seed, make_rng
from .textproc import Tokenizer

log = logging.getLogger(__name__)

PathLike = Union[str, Path]

LOSS_CSV_HEADER = ["epoch", "train_loss", "val_loss", "val_wer", "val_cer", "seconds"]


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-5
    grad_clip_norm: float = 5.0
    warmup_steps: int = 0  # linear warm-up; 0 disables
    seed: int = 0
    validate_every: int = 1
    spec_augment: bool = False
    aux_weight: float = 0.0
    beam_width: int = 1  # validation decoding; 1 is greedy

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.epochs < 0 or self.batch_size < 1 or self.validate_every < 1:
            raise ValueError("epochs >= 0, batch_size >= 1 and validate_every >= 1 required")
        if self.learning_rate < 0 or self.weight_decay < 0 or self.aux_weight < 0:
            raise ValueError("learning_rate, weight_decay and aux_weight must be nonnegative")
        if self.grad_clip_norm <= 0 or self.eps <= 0:
            raise ValueError("grad_clip_norm and eps must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.warmup_steps < 0 or self.beam_width < 1:
            raise ValueError("warmup_steps >= 0 and beam_width >= 1 required")


# -- optimizer ---------------------------------------------------------------------


@dataclass
class OptimizerState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros(cls, params: ModelParams) -> "OptimizerState":
        return cls(
            {n: np.zeros_like(t.data) for n, t in params.named_parameters()},
            {n: np.zeros_like(t.data) for n, t in params.named_parameters()},
        )

    def save(self, path: PathLike) -> None:
        tensors = {f"m/{k}": a for k, a in self.m.items()}
        tensors.update({f"v/{k}": a for k, a in self.v.items()})
        write_tensors(path, {"optimizer": "adam", "step": self.step}, tensors)

    @classmethod
    def load(cls, path: PathLike, params: ModelParams) -> "OptimizerState":
        header, tensors = read_tensors(path)
        m = {k[2:]: a for k, a in tensors.items() if k.startswith("m/")}
        v = {k[2:]: a for k, a in tensors.items() if k.startswith("v/")}
        for n, t in params.named_parameters():
            if n not in m or n not in v or m[n].shape != t.shape or v[n].shape != t.shape:
                raise TrainingError(f"{path}: optimizer state does not match parameter {n}")
        return cls(m, v, int(header["step"]))


def global_grad_norm(params: ModelParams) -> float:
    total = 0.0
    for name, t in params.named_parameters():
        if not np.isfinite(t.grad).all():
            raise NonFiniteError(f"non-finite gradient in parameter {name}")
        total += float(np.vdot(t.grad, t.grad))
    return math.sqrt(total)


def clip_gradients(params: ModelParams, max_norm: float) -> float:
    """Rescale all gradients so their global L2 norm is at most ``max_norm``; returns the scale."""
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    norm = global_grad_norm(params)
    if norm <= max_norm:
        return 1.0
    scale = max_norm / norm
    for _, t in params.named_parameters():
        t.grad *= scale
    return scale


def adam_step(
    params: ModelParams,
    state: OptimizerState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> None:
    """Bias-corrected Adam; weight decay enters as an L2 term on the gradient."""
    state.step += 1
    c1 = 1.0 - beta1**state.step
    c2 = 1.0 - beta2**state.step
    for name, t in params.named_parameters():
        g = t.grad + weight_decay * t.data if weight_decay else t.grad
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        t.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def learning_rate_at(cfg: TrainConfig, step: int) -> float:
    if cfg.warmup_steps:
        return cfg.learning_rate * min(1.0, step / cfg.warmup_steps)
    return cfg.learning_rate


# -- epochs ------------------------------------------------------------------------


def augment_batch(batch: Batch, seed: int, epoch: int) -> np.ndarray:
    policy = SpecAugmentPolicy(seed=derive_seed(seed, "specaug", epoch))
    feats = batch.features.copy()
    for i, (uid, n) in enumerate(zip(batch.utterance_ids, batch.feature_lengths)):
        feats[i, :n] = spec_augment(feats[i, :n], policy, utterance_id=uid)
    return feats


def batch_loss(params: ModelParams, batch: Batch, training: bool, rng, aux_weight: float = 0.0, features=None):
    """Mean per-utterance CTC loss of one batch, plus weighted auxiliary-head losses."""
    out = forward(params, batch.features if features is None else features, batch.feature_lengths, training, rng)
    main = ctc.ctc_loss_batch(out.log_posteriors, out.lengths, batch.target_lists())
    loss = main.loss
    if aux_weight > 0:
        for name in BRANCHES:
            if name in out.aux_log_posteriors and name in batch.aux_targets:
                aux = ctc.ctc_loss_batch(out.aux_log_posteriors[name], out.lengths, batch.aux_targets[name])
                if math.isfinite(aux.loss.item()):
                    loss = loss + aux_weight * aux.loss
    return loss, main, out


@dataclass
class EpochResult:
    loss: float
    n_batches: int
    skipped: List[str] = field(default_factory=list)


def train_epoch(
    params: ModelParams,
    state: OptimizerState,
    batches: Sequence[Batch],
    cfg: TrainConfig,
    epoch: int,
) -> EpochResult:
    losses = []
    skipped: List[str] = []
    for b, batch in enumerate(batches):
        rng = make_rng(cfg.seed, "dropout", epoch, b)
        feats = augment_batch(batch, cfg.seed, epoch) if cfg.spec_augment else None
        loss, main, _ = batch_loss(params, batch, True, rng, cfg.aux_weight, feats)
        skipped += [batch.utterance_ids[i] for i in main.infeasible]
        value = loss.item()
        if value == math.inf and len(main.infeasible) == len(batch):
            log.warning("epoch %d batch %d: every utterance infeasible, skipped", epoch, b)
            continue
        if not math.isfinite(value):
            raise TrainingError(f"non-finite loss {value} at epoch {epoch} batch {b}: {batch.utterance_ids}")
        params.zero_grad()
        loss.backward()
        clip_gradients(params, cfg.grad_clip_norm)
        adam_step(
            params, state, learning_rate_at(cfg, state.step + 1), cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay
        )
        losses.append(value)
    for uid in skipped:
        log.warning("epoch %d: %s has an infeasible target, skipped", epoch, uid)
    mean = math.fsum(losses) / len(losses) if losses else math.nan
    return EpochResult(mean, len(losses), skipped)


@dataclass
class ValidationResult:
    loss: float
    wer: float
    cer: float
    hypotheses: List[str]
    references: List[str]
    utterance_ids: List[str]


def decode(log_posteriors: np.ndarray, beam_width: int = 1) -> List[int]:
    if beam_width == 1:
        return ctc.greedy_decode(log_posteriors)
    return ctc.beam_decode(log_posteriors, beam_width)


def transcribe_batch(params: ModelParams, batch: Batch, tokenizer: Tokenizer, beam_width: int = 1):
    with nx.no_grad():
        out = forward(params, batch.features, batch.feature_lengths, training=False)
    lp = out.log_posteriors.data
    hyps = [tokenizer.decode(decode(lp[i, :n], beam_width)) for i, n in enumerate(out.lengths)]
    return hyps, out


def validate(
    params: ModelParams,
    batches: Sequence[Batch],
    tokenizer: Tokenizer,
    beam_width: int = 1,
) -> ValidationResult:
    """Mean per-utterance CTC loss and pooled WER/CER, in eval mode."""
    losses, hyps, refs, ids = [], [], [], []
    for batch in batches:
        h, out = transcribe_batch(params, batch, tokenizer, beam_width)
        lp = out.log_posteriors.data
        for i, n in enumerate(out.lengths):
            value = ctc.ctc_loss(lp[i, :n], batch.target_lists()[i])
            if math.isfinite(value):
                losses.append(value)
        hyps += h
        refs += batch.texts
        ids += batch.utterance_ids
    if not refs:
        return ValidationResult(math.nan, math.nan, math.nan, [], [], [])
    score = corpus_score(zip(refs, hyps), ids)
    loss = math.fsum(losses) / len(losses) if losses else math.nan
    return ValidationResult(loss, score.wer, score.cer, hyps, refs, ids)


# -- fit ---------------------------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_wer: float
    val_cer: float
    seconds: float

    def row(self) -> List[str]:
        return [str(self.epoch)] + [repr(float(x)) for x in (self.train_loss, self.val_loss, self.val_wer, self.val_cer)] + [
            f"{self.seconds:.3f}"
        ]


@dataclass
class TrainLog:
    records: List[EpochRecord] = field(default_factory=list)

    def append(self, rec: EpochRecord) -> None:
        if self.records and rec.epoch <= self.records[-1].epoch:
            raise TrainingError("epochs must increase")
        self.records.append(rec)

    def write_csv(self, path: PathLike) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOSS_CSV_HEADER)
            for r in self.records:
                w.writerow(r.row())

    @classmethod
    def read_csv(cls, path: PathLike) -> "TrainLog":
        with open(path, encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != LOSS_CSV_HEADER:
            raise TrainingError(f"{path}: unexpected loss CSV header")
        return cls([EpochRecord(int(r[0]), *(float(x) for x in r[1:])) for r in rows[1:]])


@dataclass
class FitResult:
    params: ModelParams
    log: TrainLog
    best_epoch: int
    out_dir: Path


def _best_key(rec: EpochRecord) -> float:
    return rec.val_loss if math.isfinite(rec.val_loss) else rec.train_loss


def checkpoint_name(epoch: int) -> str:
    return f"epoch{epoch:04d}.mlec"


def fit(
    params: ModelParams,
    train_utts: Sequence[Utterance],
    val_utts: Sequence[Utterance],
    tokenizer: Tokenizer,
    cfg: TrainConfig,
    out_dir: PathLike,
    meta: Optional[Dict[str, object]] = None,
    resume: bool = False,
    on_epoch: Optional[Callable[[EpochRecord], None]] = None,
    stop_when: Optional[Callable[[EpochRecord], bool]] = None,
) -> FitResult:
    """Train for ``cfg.epochs`` epochs, writing into ``out_dir``:

    ``loss.csv``, ``last.mlec`` + ``last.opt`` (every epoch), ``epochNNNN.mlec``
    every ``validate_every`` epochs, ``best.mlec`` (lowest validation loss, the
    earlier epoch on ties) and the initial ``epoch0000.mlec``.

    With ``resume`` the run continues from ``last.mlec`` and its optimizer
    sidecar; the result matches an uninterrupted run.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = dict(meta or {})
    meta["train"] = dataclasses.asdict(cfg)
    log_path = out / "loss.csv"
    start = 1
    train_log = TrainLog()
    best_epoch, best_value = 0, math.inf
    if resume:
        ckpt = load_checkpoint(out / "last.mlec")
        if ckpt.config != params.config:
            raise TrainingError("resume checkpoint config differs from the model config")
        params = ckpt.params
        state = OptimizerState.load(out / "last.opt", params)
        start = int(ckpt.meta["epoch"]) + 1
        best_epoch = int(ckpt.meta.get("best_epoch", 0))
        stored = ckpt.meta.get("best_value")
        best_value = math.inf if stored is None else float(stored)
        if log_path.exists():
            train_log = TrainLog([r for r in TrainLog.read_csv(log_path).records if r.epoch < start])
    else:
        state = OptimizerState.zeros(params)
        _save(out / checkpoint_name(0), params, state, meta, 0, best_epoch, best_value, with_opt=False)
        _save(out / "last.mlec", params, state, meta, 0, best_epoch, best_value)
        train_log.write_csv(log_path)

    for epoch in range(start, cfg.epochs + 1):
        t0 = time.perf_counter()
        batches = make_batches(train_utts, cfg.batch_size, cfg.seed, epoch)
        result = train_epoch(params, state, batches, cfg, epoch)
        val = None
        if val_utts and epoch % cfg.validate_every == 0:
            val = validate(params, make_batches(val_utts, cfg.batch_size, shuffle=False), tokenizer, cfg.beam_width)
        rec = EpochRecord(
            epoch,
            result.loss,
            val.loss if val else math.nan,
            val.wer if val else math.nan,
            val.cer if val else math.nan,
            time.perf_counter() - t0,
        )
        train_log.append(rec)
        key = _best_key(rec)
        if key < best_value:
            best_epoch, best_value = epoch, key
            _save(out / "best.mlec", params, state, meta, epoch, best_epoch, best_value, with_opt=False)
        if epoch % cfg.validate_every == 0:
            _save(out / checkpoint_name(epoch), params, state, meta, epoch, best_epoch, best_value, with_opt=False)
        _save(out / "last.mlec", params, state, meta, epoch, best_epoch, best_value)
        train_log.write_csv(log_path)
        log.info(
            "epoch %d train %.4f val %.4f wer %.2f cer %.2f (%.1fs)",
            epoch, rec.train_loss, rec.val_loss, rec.val_wer, rec.val_cer, rec.seconds,
        )
        if on_epoch:
            on_epoch(rec)
        if stop_when and stop_when(rec):
            break
    return FitResult(params, train_log, best_epoch, out)


def _save(path: Path, params, state, meta, epoch, best_epoch, best_value, with_opt: bool = True) -> None:
    info = dict(meta, epoch=epoch, best_epoch=best_epoch, best_value=best_value if math.isfinite(best_value) else None)
    try:
        save_checkpoint(path, params, info)
        if with_opt:
            state.save(path.with_suffix(".opt"))
    except OSError as err:
        raise TrainingError(f"checkpoint write failed for {path}: {err}") from err


def compare_loss_csvs(a: PathLike, b: PathLike) -> Tuple[bool, str]:
    """Equality of two loss curves ignoring the wall-clock column."""
    ra = TrainLog.read_csv(a).records
    rb = TrainLog.read_csv(b).records
    if len(ra) != len(rb):
        return False, f"{len(ra)} vs {len(rb)} epochs"
    for x, y in zip(ra, rb):
        fx = dataclasses.replace(x, seconds=0.0)
        fy = dataclasses.replace(y, seconds=0.0)
        if repr(fx) != repr(fy):
            return False, f"epoch {x.epoch}: {fx} vs {fy}"
    return True, "identical"
