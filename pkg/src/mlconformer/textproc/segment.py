"""Character and orthographic-syllable tokenizers.

Both are lossless: joining the tokens gives back the input string.
"""

from __future__ import annotations

from typing import List

from .script import CONSONANTS, INDEPENDENT_VOWELS, MODIFIERS, NUKTA, VIRAMA, VOWEL_SIGNS


def char_tokenize(s: str) -> List[str]:
    """One token per code point; combining signs stay separate."""
    return list(s)


def detokenize(tokens: List[str]) -> str:
    return "".join(tokens)


def _consonant_end(s: str, i: int) -> int:
    """Index just past a consonant and its optional nukta starting at ``i``."""
    i += 1
    if i < len(s) and s[i] == NUKTA:
        i += 1
    return i


def syllabify(s: str) -> List[str]:
    """Split into orthographic syllables.

    A syllable is an independent vowel, or a consonant cluster (consonants
    joined by virama) with an optional vowel sign; either may end in one
    candrabindu/anusvara/visarga.  Spaces and anything else become singleton
    tokens, so word boundaries always break syllables.
    """
    out: List[str] = []
    i, n = 0, len(s)
    while i < n:
        ch = s[i]
        start = i
        if ch in INDEPENDENT_VOWELS:
            i += 1
        elif ch in CONSONANTS:
            i = _consonant_end(s, i)
            dangling = False
            while i < n and s[i] == VIRAMA:
                if i + 1 < n and s[i + 1] in CONSONANTS:
                    i = _consonant_end(s, i + 1)
                else:
                    i += 1  # word-final hasanta stays on its cluster
                    dangling = True
                    break
            if not dangling and i < n and s[i] in VOWEL_SIGNS:
                i += 1
        else:
            out.append(ch)
            i += 1
            continue
        if i < n and s[i] in MODIFIERS:
            i += 1
        out.append(s[start:i])
    return out
