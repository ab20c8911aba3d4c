"""Edit-distance alignment with word and character error rates.

Rates are percentages: ``(S + I + D) / N * 100`` where ``N`` is the reference
length.  Words are single-space separated tokens; characters are Unicode code
points, spaces included.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Iterable, List, Optional, Sequence, Tuple, Union


class UndefinedMetricError(ValueError):
    """The reference is empty, so an error rate would divide by zero."""


@dataclass(frozen=True)
class EditCounts:
    S: int
    I: int  # noqa: E741
    D: int
    N: int

    @property
    def errors(self) -> int:
        return self.S + self.I + self.D

    def __add__(self, other: "EditCounts") -> "EditCounts":
        return EditCounts(self.S + other.S, self.I + other.I, self.D + other.D, self.N + other.N)

    def rate(self) -> float:
        if self.N == 0:
            raise UndefinedMetricError("reference length is zero")
        return self.errors / self.N * 100.0


# backtrace preference on equal cost: substitution/match, then insertion, then deletion
_SUB, _INS, _DEL = 0, 1, 2


def align(ref: Sequence[Hashable], hyp: Sequence[Hashable]) -> EditCounts:
    """Unit-cost Levenshtein alignment of ``hyp`` against ``ref``."""
    n, m = len(ref), len(hyp)
    cost = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        cost[i][0] = i
    for j in range(1, m + 1):
        cost[0][j] = j
    for i in range(1, n + 1):
        row, prev = cost[i], cost[i - 1]
        r = ref[i - 1]
        for j in range(1, m + 1):
            row[j] = min(prev[j - 1] + (r != hyp[j - 1]), row[j - 1] + 1, prev[j] + 1)

    S = I = D = 0
    i, j = n, m
    while i > 0 or j > 0:
        here = cost[i][j]
        if i > 0 and j > 0 and here == cost[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            S += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif j > 0 and here == cost[i][j - 1] + 1:
            I += 1
            j -= 1
        else:
            D += 1
            i -= 1
    return EditCounts(S, I, D, n)


def words(text: str) -> List[str]:
    return text.split()


def chars(text: str) -> List[str]:
    return list(" ".join(text.split()))


def word_counts(ref_text: str, hyp_text: str) -> EditCounts:
    return align(words(ref_text), words(hyp_text))


def char_counts(ref_text: str, hyp_text: str) -> EditCounts:
    return align(chars(ref_text), chars(hyp_text))


def wer(ref_text: str, hyp_text: str) -> float:
    ref = words(ref_text)
    if not ref:
        raise UndefinedMetricError("WER undefined for an empty reference")
    return align(ref, words(hyp_text)).rate()


def cer(ref_text: str, hyp_text: str) -> float:
    ref = chars(ref_text)
    if not ref:
        raise UndefinedMetricError("CER undefined for an empty reference")
    return align(ref, chars(hyp_text)).rate()


CSV_HEADER = ["utt_id", "ref_len_words", "ref_len_chars", "S_w", "I_w", "D_w", "S_c", "I_c", "D_c", "wer", "cer"]


@dataclass
class CorpusScore:
    wer: float
    cer: float
    word: EditCounts
    char: EditCounts
    rows: List[dict]

    def write_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_HEADER)
            writer.writeheader()
            writer.writerows(self.rows)


def corpus_score(
    pairs: Iterable[Tuple[str, str]],
    utt_ids: Optional[Sequence[str]] = None,
) -> CorpusScore:
    """Pooled WER/CER: total errors over total reference length.

    Pairs with an empty reference contribute nothing to the pool; at least one
    non-empty reference is required.
    """
    pairs = list(pairs)
    if utt_ids is None:
        utt_ids = [str(i) for i in range(len(pairs))]
    word_total = EditCounts(0, 0, 0, 0)
    char_total = EditCounts(0, 0, 0, 0)
    rows = []
    for uid, (ref, hyp) in zip(utt_ids, pairs):
        w = word_counts(ref, hyp)
        c = char_counts(ref, hyp)
        word_total += w
        char_total += c
        rows.append(
            {
                "utt_id": uid,
                "ref_len_words": w.N,
                "ref_len_chars": c.N,
                "S_w": w.S,
                "I_w": w.I,
                "D_w": w.D,
                "S_c": c.S,
                "I_c": c.I,
                "D_c": c.D,
                "wer": f"{w.rate():.4f}" if w.N else "nan",
                "cer": f"{c.rate():.4f}" if c.N else "nan",
            }
        )
    if word_total.N == 0 or char_total.N == 0:
        raise UndefinedMetricError("every reference is empty")
    return CorpusScore(word_total.rate(), char_total.rate(), word_total, char_total, rows)


def mean_of_rates(pairs: Iterable[Tuple[str, str]]) -> float:
    """Per-utterance WER averaged over utterances (for comparison only)."""
    rates = [wer(r, h) for r, h in pairs]
    return math.fsum(rates) / len(rates)
