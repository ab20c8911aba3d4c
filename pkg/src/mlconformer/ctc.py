"""Connectionist temporal classification: loss, gradient and decoding.

Everything runs in the log domain.  The only probability-domain code is
:func:`brute_force_ctc`, which enumerates every frame path and exists as an
independent check of the dynamic program.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .numerics import Tensor
from .numerics import ops as _ops

BLANK = 0
NEG_INF = -np.inf


@dataclass(frozen=True)
class CtcProblem:
    """One utterance's log-posteriors ``[T, V]`` and its blank-free target."""

    log_probs: np.ndarray
    target: Tuple[int, ...]
    blank_id: int = BLANK

    def __post_init__(self):
        lp = np.asarray(self.log_probs, dtype=np.float64)
        if lp.ndim != 2 or lp.shape[0] < 1:
            raise ValueError(f"log_probs must be [T>=1, V], got {lp.shape}")
        if self.blank_id in self.target:
            raise ValueError("target must not contain the blank id")
        if any(not 0 <= y < lp.shape[1] for y in self.target):
            raise ValueError("target id outside the vocabulary")
        object.__setattr__(self, "log_probs", lp)
        object.__setattr__(self, "target", tuple(int(y) for y in self.target))


def collapse(path: Sequence[int], blank_id: int = BLANK) -> List[int]:
    """Merge consecutive repeats, then drop blanks."""
    out = []
    prev = None
    for p in path:
        p = int(p)
        if p != prev and p != blank_id:
            out.append(p)
        prev = p
    return out


def min_frames(target: Sequence[int]) -> int:
    """Fewest frames that can emit ``target``: one per label plus a blank between repeats."""
    repeats = sum(1 for a, b in zip(target, target[1:]) if a == b)
    return len(target) + repeats


def is_feasible(n_frames: int, target: Sequence[int]) -> bool:
    return n_frames >= min_frames(target)


def _extended(target: Sequence[int], blank_id: int) -> Tuple[np.ndarray, np.ndarray]:
    ext = np.full(2 * len(target) + 1, blank_id, dtype=np.int64)
    ext[1::2] = target
    skip = np.zeros(ext.size, dtype=bool)
    if ext.size > 2:
        skip[2:] = (ext[2:] != blank_id) & (ext[2:] != ext[:-2])
    return ext, skip


def _forward_backward(lp: np.ndarray, target: Sequence[int], blank_id: int, need_grad: bool):
    T = lp.shape[0]
    ext, skip = _extended(target, blank_id)
    S = ext.size
    emit = lp[:, ext]  # [T, S]

    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if S > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        acc = prev.copy()
        acc[1:] = np.logaddexp(acc[1:], prev[:-1])
        acc[2:] = np.where(skip[2:], np.logaddexp(acc[2:], prev[:-2]), acc[2:])
        alpha[t] = acc + emit[t]
    log_like = alpha[-1, -1] if S == 1 else np.logaddexp(alpha[-1, -1], alpha[-1, -2])
    if not need_grad:
        return -log_like, None

    beta = np.full((T, S), NEG_INF)
    beta[-1, -1] = emit[-1, -1]
    if S > 1:
        beta[-1, -2] = emit[-1, -2]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1]
        acc = nxt.copy()
        acc[:-1] = np.logaddexp(acc[:-1], nxt[1:])
        acc[:-2] = np.where(skip[2:], np.logaddexp(acc[:-2], nxt[2:]), acc[:-2])
        beta[t] = acc + emit[t]

    occupancy = np.exp(alpha + beta - emit - log_like)  # P(state s at t | target)
    grad = np.zeros_like(lp)
    for s in range(S):
        grad[:, ext[s]] -= occupancy[:, s]
    return -log_like, grad


def ctc_loss(log_probs, target: Sequence[int], blank_id: int = BLANK) -> float:
    """``-log`` of the total probability of all paths that collapse to ``target``.

    Returns ``inf`` when the target cannot fit in the available frames.
    """
    p = log_probs if isinstance(log_probs, CtcProblem) else CtcProblem(np.asarray(log_probs), tuple(target), blank_id)
    if not is_feasible(p.log_probs.shape[0], p.target):
        return math.inf
    loss, _ = _forward_backward(p.log_probs, p.target, p.blank_id, need_grad=False)
    return float(loss)


def ctc_grad(log_probs, target: Sequence[int], blank_id: int = BLANK) -> np.ndarray:
    """Gradient of :func:`ctc_loss` with respect to each log-probability entry."""
    p = CtcProblem(np.asarray(log_probs), tuple(target), blank_id)
    if not is_feasible(p.log_probs.shape[0], p.target):
        raise ValueError("gradient undefined: target infeasible for the frame count")
    _, grad = _forward_backward(p.log_probs, p.target, p.blank_id, need_grad=True)
    return grad


def brute_force_ctc(log_probs, target: Sequence[int], blank_id: int = BLANK, guard: int = 10**7) -> float:
    """Literal path-sum: enumerate all ``V**T`` alignments in the probability domain."""
    lp = np.asarray(log_probs, dtype=np.float64)
    T, V = lp.shape
    if V**T > guard:
        raise ValueError(f"{V}**{T} paths exceed the enumeration guard {guard}")
    probs = np.exp(lp)
    want = [int(y) for y in target]
    total = 0.0
    for path in itertools.product(range(V), repeat=T):
        if collapse(path, blank_id) == want:
            total += float(np.prod(probs[np.arange(T), path]))
    return math.inf if total == 0.0 else -math.log(total)


@dataclass
class BatchCtcResult:
    loss: Tensor  # mean over feasible utterances
    per_utterance: List[float]
    infeasible: List[int]


def ctc_loss_batch(
    log_probs: Tensor,
    lengths: Sequence[int],
    targets: Sequence[Sequence[int]],
    blank_id: int = BLANK,
) -> BatchCtcResult:
    """Mean per-utterance CTC loss over a padded ``[B, T, V]`` batch, on the tape.

    Infeasible utterances get ``inf`` in ``per_utterance`` and are left out of
    the mean; if none are feasible the loss is a constant ``inf``.
    """
    lp = log_probs.data.astype(np.float64, copy=False)
    B = lp.shape[0]
    grad = np.zeros_like(lp)
    losses: List[float] = []
    infeasible: List[int] = []
    for b in range(B):
        T_b = int(lengths[b])
        tgt = [int(y) for y in targets[b]]
        if not is_feasible(T_b, tgt):
            losses.append(math.inf)
            infeasible.append(b)
            continue
        loss_b, g_b = _forward_backward(lp[b, :T_b], tgt, blank_id, need_grad=True)
        losses.append(float(loss_b))
        grad[b, :T_b] = g_b
    n = B - len(infeasible)
    if n == 0:
        return BatchCtcResult(Tensor(math.inf), losses, infeasible)
    finite = [l for l in losses if math.isfinite(l)]
    mean = math.fsum(finite) / n
    grad /= n
    grad = grad.astype(log_probs.data.dtype, copy=False)

    out = _ops.custom(np.asarray(mean, dtype=log_probs.data.dtype), (log_probs,), lambda g: (g * grad,), "ctc_loss")
    return BatchCtcResult(out, losses, infeasible)


# -- decoding -------------------------------------------------------------------------


def greedy_decode(log_probs, blank_id: int = BLANK) -> List[int]:
    """Best-path decoding: per-frame argmax (lowest id on ties), then collapse."""
    lp = np.asarray(log_probs)
    if lp.shape[0] == 0:
        return []
    return collapse(np.argmax(lp, axis=1), blank_id)


def beam_decode(
    log_probs,
    beam_width: int = 8,
    prune_log_p: float = -20.0,
    blank_id: int = BLANK,
) -> List[int]:
    """CTC prefix beam search.

    Each hypothesis is a collapsed prefix carrying separate log-probabilities
    for paths ending in blank and in its last label.  Labels whose frame
    log-probability is below ``prune_log_p`` are not used to extend prefixes.
    A width of 1 is defined as best-path decoding (same as :func:`greedy_decode`).
    """
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    lp = np.asarray(log_probs, dtype=np.float64)
    if beam_width == 1:
        return greedy_decode(lp, blank_id)
    beams = _prefix_beam_search(lp, beam_width, prune_log_p, blank_id)
    return list(beams[0][0]) if beams else []


def _prefix_beam_search(lp: np.ndarray, width: int, prune: float, blank_id: int):
    beams: Dict[Tuple[int, ...], Tuple[float, float]] = {(): (0.0, NEG_INF)}
    V = lp.shape[1]
    for t in range(lp.shape[0]):
        row = lp[t]
        labels = [c for c in range(V) if c != blank_id and row[c] >= prune]
        nxt: Dict[Tuple[int, ...], List[float]] = {}

        def bump(prefix, which, value):
            entry = nxt.setdefault(prefix, [NEG_INF, NEG_INF])
            entry[which] = np.logaddexp(entry[which], value)

        for prefix, (lb, lnb) in beams.items():
            total = np.logaddexp(lb, lnb)
            bump(prefix, 0, total + row[blank_id])
            last = prefix[-1] if prefix else None
            if last is not None:
                # repeated label without a blank merges into the same prefix
                bump(prefix, 1, lnb + row[last])
            for c in labels:
                if c == last:
                    bump(prefix + (c,), 1, lb + row[c])
                else:
                    bump(prefix + (c,), 1, total + row[c])
        ranked = sorted(nxt.items(), key=lambda kv: (-np.logaddexp(*kv[1]), kv[0]))
        beams = {k: (v[0], v[1]) for k, v in ranked[:width]}
    return sorted(((k, float(np.logaddexp(*v))) for k, v in beams.items()), key=lambda kv: (-kv[1], kv[0]))


def sequence_log_prob(log_probs, target: Sequence[int], blank_id: int = BLANK) -> float:
    """Exact log marginal probability of a collapsed label sequence."""
    return -ctc_loss(np.asarray(log_probs), target, blank_id)


def exact_best_labeling(log_probs, blank_id: int = BLANK, guard: int = 10**6) -> Optional[List[int]]:
    """Maximum-marginal labeling by brute-force enumeration (tiny instances only)."""
    lp = np.asarray(log_probs, dtype=np.float64)
    T, V = lp.shape
    if V**T > guard:
        raise ValueError("instance too large to enumerate")
    probs = np.exp(lp)
    mass: Dict[Tuple[int, ...], float] = {}
    for path in itertools.product(range(V), repeat=T):
        key = tuple(collapse(path, blank_id))
        mass[key] = mass.get(key, 0.0) + float(np.prod(probs[np.arange(T), path]))
    best = max(mass.items(), key=lambda kv: (kv[1], tuple(-x for x in kv[0])))
    return list(best[0])
