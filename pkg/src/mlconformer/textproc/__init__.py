"""Bengali text normalization and multi-granular tokenization."""

from .bpe import BpeConfigError, BpeModel, bpe_decode, bpe_encode, bpe_train
from .g2p import G2PConfigError, G2PTable, g2p
from .normalize import EmptyTranscriptError, normalize_text
from .segment import char_tokenize, detokenize, syllabify
from .vocab import (
    BLANK,
    GRANULARITIES,
    UNK,
    Tokenizer,
    TokenizerOptions,
    TokenSequence,
    Vocab,
    VocabError,
    VocabStats,
    build_vocab,
    split_tokens,
)

__all__ = [
    "BLANK",
    "BpeConfigError",
    "BpeModel",
    "EmptyTranscriptError",
    "G2PConfigError",
    "G2PTable",
    "GRANULARITIES",
    "TokenSequence",
    "Tokenizer",
    "TokenizerOptions",
    "UNK",
    "Vocab",
    "VocabError",
    "VocabStats",
    "bpe_decode",
    "bpe_encode",
    "bpe_train",
    "build_vocab",
    "char_tokenize",
    "detokenize",
    "g2p",
    "normalize_text",
    "split_tokens",
    "syllabify",
]
