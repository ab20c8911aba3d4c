"""End-to-end finite-difference check of the CTC loss through the whole model."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from .. import numerics as nx
from ..ctc import ctc_loss_batch
from ..numerics import Tensor, make_rng
from .config import BRANCHES, ModelConfig, profile
from .encoder import _context, _masks, conv_subsample, early_encoder, embedding_branch, forward, fuse, late_encoder
from .layers import linear
from .params import ModelParams


@dataclass
class ModelGradReport:
    max_rel_error: float
    worst_parameter: str
    per_parameter: Dict[str, float]
    n_checked: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def tiny_problem(config: ModelConfig, seed: int = 0, T: int = 12):
    """Two utterances (T and T-3 frames) with short targets over the tiny vocabulary."""
    rng = make_rng(seed, "gradcheck-data")
    feats = rng.standard_normal((2, T, config.input_dim))
    lengths = [T, T - 3]
    V = config.vocab_size
    targets = [[1 + int(v) for v in rng.integers(0, V - 1, size=2)], [1 + int(rng.integers(0, V - 1))]]
    return feats, lengths, targets


def _wrong_gradient(x: Tensor) -> Tensor:
    # identity forward, backward scaled by 1.1; used as a negative control
    return nx.ops.custom(x.data.copy(), (x,), lambda g: (1.1 * g,), "injected_bug")


def model_loss(params: ModelParams, feats, lengths, targets, inject_bug: bool = False) -> Tensor:
    out = forward(params, feats, lengths, training=False)
    lp = out.log_posteriors
    if inject_bug:
        lp = _wrong_gradient(lp)
    return ctc_loss_batch(lp, out.lengths, targets).loss


class StagedLoss:
    """Eval-mode CTC loss that recomputes only the stages downstream of a parameter.

    Perturbing a late-block weight cannot change the subsampler, early blocks
    or branches, so their outputs are cached from the unperturbed pass.  The
    forward pass is deterministic, so every value equals ``model_loss``
    bit for bit.
    """

    def __init__(self, params: ModelParams, feats, lengths, targets):
        self.p, self.feats, self.lengths, self.targets = params, feats, lengths, targets
        self.ctx = _context(params.config, False, None)
        with nx.no_grad():
            x, self.out_lengths = conv_subsample(feats, lengths, params, self.ctx)
            self.mask, self.bias = _masks(self.out_lengths, x.shape[1])
            self.x = x
            self.h_e = self._early()
            self.branches = {name: self._branch(self.h_e, name) for name in BRANCHES}

    def _early(self) -> Tensor:
        return early_encoder(self.x, self.p, self.mask, self.bias, self.ctx)

    def _branch(self, h_e: Tensor, name: str) -> Tensor:
        return embedding_branch(h_e, self.p, name, self.bias, self.ctx)

    def _tail(self, h_e: Tensor, branches) -> Tensor:
        h_f = fuse(h_e, branches["phoneme"], branches["syllable"], branches["wordpiece"])
        h_l = late_encoder(h_f, self.p, self.mask, self.bias, self.ctx)
        lp = nx.log_softmax(linear(h_l, self.p, "head"), axis=-1)
        return ctc_loss_batch(lp, self.out_lengths, self.targets).loss

    def _from_early(self) -> Tensor:
        h_e = self._early()
        return self._tail(h_e, {n: self._branch(h_e, n) for n in BRANCHES})

    def loss_fn(self, name: str):
        """Zero-argument loss for finite differences w.r.t. parameter ``name``."""
        stage = name.split(".")[0]
        if stage == "sub":
            return lambda: model_loss(self.p, self.feats, self.lengths, self.targets)
        if stage == "early":
            return self._from_early
        if stage == "branch":
            branch = name.split(".")[1]
            return lambda: self._tail(self.h_e, {**self.branches, branch: self._branch(self.h_e, branch)})
        if stage in ("late", "head"):
            return lambda: self._tail(self.h_e, self.branches)
        raise ValueError(f"no stage for parameter {name!r}")


def end_to_end_gradcheck(
    config: ModelConfig = None,
    seed: int = 0,
    step: float = 1e-5,
    tol: float = 1e-4,
    floor: float = 1e-6,
    inject_bug: bool = False,
    T: int = 12,
) -> ModelGradReport:
    """Central differences for every scalar parameter against the tape gradient.

    Each perturbed loss is evaluated by :class:`StagedLoss`, which reuses the
    unperturbed outputs of upstream stages.
    """
    config = config or profile("tiny")
    if any(config.aux_vocab_sizes):
        raise ValueError("the end-to-end check covers the main CTC head only; disable aux heads")
    params = ModelParams.init(config, seed=seed)
    feats, lengths, targets = tiny_problem(config, seed, T)
    loss = model_loss(params, feats, lengths, targets, inject_bug)
    params.zero_grad()
    loss.backward()

    staged = StagedLoss(params, feats, lengths, targets)
    per: Dict[str, float] = {}
    n = 0
    # the analytic pass above ran with the per-op guard; a non-finite value
    # in a perturbed pass still reaches the loss and fails the comparison
    with nx.no_grad(), nx.finite_checks(False):
        for name, t in params.named_parameters():
            analytic = t.grad.copy()
            numeric = nx.numerical_gradient(staged.loss_fn(name), t, step)
            per[name] = float(nx.relative_error(analytic, numeric, floor).max())
            n += t.size
    worst = max(per, key=per.get)
    return ModelGradReport(per[worst], worst, per, n, tol)


def failing_parameters(report: ModelGradReport) -> List[str]:
    return [k for k, v in report.per_parameter.items() if v >= report.tol]
