"""Token/id tables and the tokenizer facade used for CTC targets."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .bpe import BpeModel, bpe_train
from .g2p import G2PTable, g2p
from .segment import char_tokenize, syllabify

BLANK = "<blank>"
UNK = "<unk>"
GRANULARITIES = ("char", "phoneme", "syllable", "wordpiece")


class VocabError(ValueError):
    pass


@dataclass(frozen=True)
class TokenSequence:
    ids: Tuple[int, ...]
    granularity: str

    def __len__(self) -> int:
        return len(self.ids)


class Vocab:
    """Dense token ids with ``<blank>`` at 0 and ``<unk>`` at 1."""

    blank_id = 0
    unk_id = 1

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tokens[:2] != [BLANK, UNK]:
            raise VocabError("vocab must start with <blank>, <unk>")
        if len(set(tokens)) != len(tokens):
            raise VocabError("vocab tokens must be unique")
        self.tokens = tokens
        self.id_of: Dict[str, int] = {t: i for i, t in enumerate(tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.tokens == other.tokens

    def __repr__(self) -> str:
        return f"Vocab(size={len(self)})"

    def encode(self, tokens: Iterable[str], granularity: str = "char") -> TokenSequence:
        return TokenSequence(tuple(self.id_of.get(t, self.unk_id) for t in tokens), granularity)

    def decode(self, ids: Iterable[int]) -> List[str]:
        return [self.tokens[i] for i in ids if i != self.blank_id]

    def dumps(self) -> str:
        return "\n".join(self.tokens) + "\n"

    def save(self, path: Union[str, Path]) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "Vocab":
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(lines)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Vocab":
        with open(path, encoding="utf-8", newline="") as fh:
            return cls.loads(fh.read())


@dataclass
class VocabStats:
    granularity: str
    unique_tokens: int
    total_tokens: int
    covered_tokens: int

    @property
    def coverage(self) -> float:
        return self.covered_tokens / self.total_tokens if self.total_tokens else 1.0


@dataclass
class TokenizerOptions:
    g2p_table: Optional[G2PTable] = None
    bpe_model: Optional[BpeModel] = None
    bpe_vocab_size: int = 1000
    min_count: int = 1


def split_tokens(text: str, granularity: str, options: Optional[TokenizerOptions] = None) -> List[str]:
    options = options or TokenizerOptions()
    if granularity == "char":
        return char_tokenize(text)
    if granularity == "syllable":
        return syllabify(text)
    if granularity == "phoneme":
        return g2p(text, options.g2p_table or G2PTable.default())
    if granularity == "wordpiece":
        if options.bpe_model is None:
            raise VocabError("wordpiece granularity needs a BPE model")
        return options.bpe_model.encode(text)
    raise VocabError(f"unknown granularity '{granularity}'")


def build_vocab(
    corpus: Sequence[str], granularity: str = "char", options: Optional[TokenizerOptions] = None
) -> Tuple[Vocab, VocabStats]:
    """``<blank>, <unk>`` followed by the sorted unique tokens of ``corpus``.

    For wordpiece granularity a BPE model is trained first when ``options``
    carries none; the model's full symbol set becomes the vocabulary.
    """
    if not corpus:
        raise VocabError("cannot build a vocabulary from an empty corpus")
    options = options or TokenizerOptions()
    if granularity == "wordpiece" and options.bpe_model is None:
        options.bpe_model = bpe_train(corpus, options.bpe_vocab_size)
    counts: Counter = Counter()
    for line in corpus:
        counts.update(split_tokens(line, granularity, options))
    counts.pop(UNK, None)
    kept = {t for t, c in counts.items() if c >= options.min_count}
    if granularity == "wordpiece":
        kept |= set(options.bpe_model.symbols)
    vocab = Vocab([BLANK, UNK] + sorted(kept))
    total = sum(counts.values())
    covered = sum(c for t, c in counts.items() if t in kept)
    return vocab, VocabStats(granularity, len(kept), total, covered)


@dataclass
class Tokenizer:
    """Maps normalized transcripts to target ids and back."""

    vocab: Vocab
    granularity: str = "char"
    options: TokenizerOptions = field(default_factory=TokenizerOptions)

    def encode(self, text: str) -> TokenSequence:
        return self.vocab.encode(split_tokens(text, self.granularity, self.options), self.granularity)

    def decode(self, ids: Iterable[int]) -> str:
        tokens = self.vocab.decode(ids)
        if self.granularity == "wordpiece":
            return BpeModel.decode(tokens)
        text = "".join("�" if t == UNK else t for t in tokens)
        return " ".join(text.split())
