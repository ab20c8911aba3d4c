import csv
import functools
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mlconformer import metrics
from mlconformer.metrics import EditCounts


def brute_distance(a, b):
    @functools.lru_cache(maxsize=None)
    def d(i, j):
        if i == len(a):
            return len(b) - j
        if j == len(b):
            return len(a) - i
        return min(d(i + 1, j + 1) + (a[i] != b[j]), d(i + 1, j) + 1, d(i, j + 1) + 1)

    return d(0, 0)


def test_identity():
    assert metrics.align(list("abcde"), list("abcde")) == EditCounts(0, 0, 0, 5)


def test_single_substitution():
    assert metrics.align(["a", "b", "c"], ["a", "x", "c"]) == EditCounts(1, 0, 0, 3)


def test_all_deletions():
    assert metrics.align(["a", "b"], []) == EditCounts(0, 0, 2, 2)


def test_all_insertions():
    assert metrics.align([], ["a"]) == EditCounts(0, 1, 0, 0)


def test_tie_break_prefers_substitution():
    # "ab" -> "ba" costs 2 either as two subs or as ins+del; subs win
    assert metrics.align("ab", "ba") == EditCounts(2, 0, 0, 2)


def test_align_matches_brute_force_1000_pairs():
    rng = random.Random(99)
    for _ in range(1000):
        k = rng.randint(1, 4)
        a = [rng.randrange(k) for _ in range(rng.randint(0, 8))]
        b = [rng.randrange(k) for _ in range(rng.randint(0, 8))]
        c = metrics.align(a, b)
        assert c.errors == brute_distance(tuple(a), tuple(b))
        assert c.S + c.D <= c.N == len(a)


@given(st.lists(st.integers(0, 3), max_size=8), st.lists(st.integers(0, 3), max_size=8), st.lists(st.integers(0, 3), max_size=8))
def test_triangle_inequality(a, b, c):
    d = lambda x, y: metrics.align(x, y).errors  # noqa: E731
    assert d(a, c) <= d(a, b) + d(b, c)


def test_wer_examples():
    assert metrics.wer("আমি ভাত খাই আজ রাতে", "আমি ভাত খাই আজ রাতে") == 0.0
    assert metrics.wer("a b c", "a x c") == pytest.approx(100 / 3)
    assert metrics.wer("a", "x y z") == 300.0


def test_cer_examples():
    assert metrics.cer("আম", "আম") == 0.0
    assert metrics.cer("আম", "আন") == 50.0
    assert metrics.cer("আম", "") == 100.0


def test_cer_counts_spaces():
    assert metrics.cer("a b", "ab") == pytest.approx(100 / 3)


def test_empty_reference_is_undefined():
    with pytest.raises(metrics.UndefinedMetricError):
        metrics.wer("", "x")
    with pytest.raises(metrics.UndefinedMetricError):
        metrics.cer("   ", "x")
    with pytest.raises(metrics.UndefinedMetricError):
        metrics.corpus_score([("", "a")])


@given(st.text(alphabet="abc ", min_size=1).filter(str.strip))
def test_self_score_is_zero(text):
    assert metrics.wer(text, text) == 0.0 and metrics.cer(text, text) == 0.0


def test_corpus_single_pair_matches_sentence_level():
    s = metrics.corpus_score([("a b c", "a x")])
    assert s.wer == metrics.wer("a b c", "a x")
    assert s.cer == metrics.cer("a b c", "a x")


def test_corpus_pooled_not_mean():
    pairs = [("a", "b"), ("a b c d e f g h i", "a b c d e f g h i")]
    assert metrics.corpus_score(pairs).wer == pytest.approx(10.0)
    assert metrics.mean_of_rates(pairs) == pytest.approx(50.0)


def test_corpus_duplication_and_reordering_invariant():
    pairs = [("a b c", "a c"), ("x y", "x y z"), ("p", "q")]
    base = metrics.corpus_score(pairs)
    assert metrics.corpus_score(pairs * 2).wer == pytest.approx(base.wer)
    assert metrics.corpus_score(pairs[::-1]).wer == pytest.approx(base.wer)


def test_corpus_csv(tmp_path):
    s = metrics.corpus_score([("a b", "a b"), ("c", "")], utt_ids=["u1", "u2"])
    path = tmp_path / "per_utt.csv"
    s.write_csv(path)
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == metrics.CSV_HEADER
    assert rows[2][0] == "u2" and rows[2][5] == "1"
