"""Bengali code-point classes used by normalization, syllabification and G2P."""

from __future__ import annotations


def _span(a: int, b: int) -> frozenset:
    return frozenset(chr(c) for c in range(a, b + 1))


BENGALI_BLOCK = _span(0x0980, 0x09FF)

INDEPENDENT_VOWELS = _span(0x0985, 0x098C) | _span(0x098F, 0x0990) | _span(0x0993, 0x0994) | {"\u09e0", "\u09e1"}
CONSONANTS = (
    _span(0x0995, 0x09A8)
    | _span(0x09AA, 0x09B0)
    | {"\u09b2"}
    | _span(0x09B6, 0x09B9)
    | {"\u09ce", "\u09dc", "\u09dd", "\u09df", "\u09f0", "\u09f1"}
)
VOWEL_SIGNS = _span(0x09BE, 0x09C4) | {"\u09c7", "\u09c8", "\u09cb", "\u09cc", "\u09d7", "\u09e2", "\u09e3"}
MODIFIERS = frozenset({"\u0981", "\u0982", "\u0983"})  # candrabindu, anusvara, visarga
NUKTA = "\u09bc"
VIRAMA = "\u09cd"


def is_consonant(ch: str) -> bool:
    return ch in CONSONANTS


def is_bengali(ch: str) -> bool:
    return ch in BENGALI_BLOCK
