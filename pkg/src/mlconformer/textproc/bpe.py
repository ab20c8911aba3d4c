"""Byte-pair-encoding subword model over code points.

Each whitespace word is split into characters plus an end-of-word marker
``</w>``; training repeatedly merges the most frequent adjacent pair.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

EOW = "</w>"
UNK = "<unk>"
REPLACEMENT = "�"
HEADER = "bpe v1"

Pair = Tuple[str, str]


class BpeConfigError(ValueError):
    pass


@dataclass
class BpeModel:
    merges: List[Pair]
    alphabet: Optional[FrozenSet[str]] = None  # base symbols; unknown after loading from file
    _ranks: Dict[Pair, int] = field(init=False, repr=False)
    _cache: Dict[str, Tuple[str, ...]] = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        self.merges = [tuple(m) for m in self.merges]
        self._ranks = {pair: i for i, pair in enumerate(self.merges)}

    @property
    def symbols(self) -> List[str]:
        """Every symbol the model can emit, sorted."""
        out = set(self.alphabet or ())
        for a, b in self.merges:
            out.update((a, b, a + b))
        return sorted(out)

    # -- encoding ----------------------------------------------------------------------

    def encode_word(self, word: str) -> Tuple[str, ...]:
        cached = self._cache.get(word)
        if cached is not None:
            return cached
        syms = [ch if self.alphabet is None or ch in self.alphabet else UNK for ch in word] + [EOW]
        while len(syms) > 1:
            ranked = [(self._ranks.get((a, b)), i) for i, (a, b) in enumerate(zip(syms, syms[1:]))]
            ranked = [(r, i) for r, i in ranked if r is not None]
            if not ranked:
                break
            best = min(ranked)[0]
            pair = self.merges[best]
            merged, i = [], 0
            while i < len(syms):
                if i + 1 < len(syms) and (syms[i], syms[i + 1]) == pair:
                    merged.append(pair[0] + pair[1])
                    i += 2
                else:
                    merged.append(syms[i])
                    i += 1
            syms = merged
        out = tuple(syms)
        self._cache[word] = out
        return out

    def encode(self, s: str) -> List[str]:
        out: List[str] = []
        for word in s.split():
            out.extend(self.encode_word(word))
        return out

    @staticmethod
    def decode(tokens: Sequence[str]) -> str:
        text = "".join(REPLACEMENT if t == UNK else t for t in tokens)
        return text.replace(EOW, " ").rstrip(" ")

    # -- persistence -------------------------------------------------------------------

    def dumps(self) -> str:
        return "\n".join([HEADER] + [f"{a}\t{b}" for a, b in self.merges]) + "\n"

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str, alphabet: Optional[Iterable[str]] = None) -> "BpeModel":
        lines = text.split("\n")
        if not lines or lines[0] != HEADER:
            raise BpeConfigError(f"BPE model must start with '{HEADER}'")
        merges = []
        for lineno, line in enumerate(lines[1:], 2):
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not all(parts):
                raise BpeConfigError(f"line {lineno}: expected 'left<TAB>right'")
            merges.append((parts[0], parts[1]))
        return cls(merges, frozenset(alphabet) if alphabet is not None else None)

    @classmethod
    def load(cls, path: Union[str, Path], alphabet: Optional[Iterable[str]] = None) -> "BpeModel":
        return cls.loads(Path(path).read_text(encoding="utf-8"), alphabet)


def bpe_train(corpus: Sequence[str], vocab_size: int = 1000) -> BpeModel:
    """Learn merges until ``vocab_size`` symbols exist or no pair occurs twice.

    Ties in pair frequency go to the lexicographically smallest pair.  A pair
    whose concatenation is already a symbol is never merged, so every merge
    adds exactly one new symbol.
    """
    word_freq = Counter(word for line in corpus for word in line.split())
    if not word_freq:
        raise BpeConfigError("BPE corpus is empty")
    words = [list(w) + [EOW] for w in word_freq]
    freqs = list(word_freq.values())
    alphabet = frozenset(ch for w in word_freq for ch in w)
    symbols = set(alphabet) | {EOW}
    if vocab_size < len(symbols):
        raise BpeConfigError(f"vocab_size {vocab_size} is below the {len(symbols)} base symbols")

    pair_counts: Counter = Counter()
    where: Dict[Pair, set] = defaultdict(set)
    for idx, (syms, f) in enumerate(zip(words, freqs)):
        for pair in zip(syms, syms[1:]):
            pair_counts[pair] += f
            where[pair].add(idx)

    merges: List[Pair] = []
    while len(symbols) < vocab_size:
        candidates = [(c, p) for p, c in pair_counts.items() if c >= 2 and p[0] + p[1] not in symbols]
        if not candidates:
            break
        best_count = max(c for c, _ in candidates)
        pair = min(p for c, p in candidates if c == best_count)
        merges.append(pair)
        new_sym = pair[0] + pair[1]
        symbols.add(new_sym)
        for idx in sorted(where.pop(pair, ())):
            syms, f = words[idx], freqs[idx]
            for old in zip(syms, syms[1:]):
                pair_counts[old] -= f
                if pair_counts[old] <= 0:
                    del pair_counts[old]
            merged, i = [], 0
            while i < len(syms):
                if i + 1 < len(syms) and (syms[i], syms[i + 1]) == pair:
                    merged.append(new_sym)
                    i += 2
                else:
                    merged.append(syms[i])
                    i += 1
            words[idx] = merged
            for new in zip(merged, merged[1:]):
                pair_counts[new] += f
                where[new].add(idx)
    return BpeModel(merges, alphabet | {EOW})


def bpe_encode(s: str, model: BpeModel) -> List[str]:
    return model.encode(s)


def bpe_decode(tokens: Sequence[str]) -> str:
    return BpeModel.decode(tokens)
