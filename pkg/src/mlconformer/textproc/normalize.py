from __future__ import annotations

import re
import unicodedata

from .script import BENGALI_BLOCK

_SPACES = re.compile(r"\s+")


class EmptyTranscriptError(ValueError):
    """Nothing is left of a transcript after normalization."""


def normalize_text(s: str, punctuation: str = "") -> str:
    """NFC-compose, keep Bengali-block characters, spaces and ``punctuation``, collapse whitespace.

    Raises:
        EmptyTranscriptError: if the cleaned string is empty.
    """
    s = unicodedata.normalize("NFC", s)
    s = _SPACES.sub(" ", s)
    allowed = set(punctuation)
    s = "".join(ch for ch in s if ch == " " or ch in BENGALI_BLOCK or ch in allowed)
    s = unicodedata.normalize("NFC", _SPACES.sub(" ", s).strip())
    if not s:
        raise EmptyTranscriptError("transcript is empty after normalization")
    return s
