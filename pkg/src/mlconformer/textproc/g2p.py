"""Rule-table grapheme-to-phoneme conversion by greedy longest match."""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .script import CONSONANTS, NUKTA

UNK_PHONEME = "<unk>"
INHERENT_KEY = "<inherent>"


class G2PConfigError(ValueError):
    pass


@dataclass(frozen=True)
class G2PTable:
    """Grapheme rules sorted longest key first.

    ``inherent`` is the optional vowel inserted after a consonant that is
    directly followed by another consonant inside a word.
    """

    rules: Tuple[Tuple[str, Tuple[str, ...]], ...]
    inherent: Optional[str] = None

    def __post_init__(self):
        if any(not key for key, _ in self.rules):
            raise G2PConfigError("G2P rule keys must be non-empty")
        ordered = tuple(sorted(self.rules, key=lambda r: (-len(r[0]), r[0])))
        object.__setattr__(self, "rules", ordered)

    @property
    def lookup(self) -> Dict[str, Tuple[str, ...]]:
        return dict(self.rules)

    @property
    def max_key_len(self) -> int:
        return max((len(k) for k, _ in self.rules), default=0)

    @classmethod
    def from_mapping(cls, mapping: Dict[str, Sequence[str]], inherent: Optional[str] = None) -> "G2PTable":
        return cls(tuple((k, tuple(v)) for k, v in mapping.items()), inherent)

    @classmethod
    def parse(cls, text: str) -> "G2PTable":
        rules, inherent = [], None
        for lineno, line in enumerate(text.split("\n"), 1):
            if not line or line.startswith("#"):
                continue
            if "\t" not in line:
                raise G2PConfigError(f"line {lineno}: expected 'grapheme<TAB>phonemes'")
            key, value = line.split("\t", 1)
            phones = tuple(value.split())
            if key == INHERENT_KEY:
                inherent = phones[0] if phones else None
            else:
                rules.append((key, phones))
        return cls(tuple(rules), inherent)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "G2PTable":
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def default(cls) -> "G2PTable":
        text = resources.files(__package__).joinpath("resources/g2p_bn.tsv").read_text(encoding="utf-8")
        return cls.parse(text)

    def dumps(self) -> str:
        lines = [f"{k}\t{' '.join(v)}" for k, v in self.rules]
        if self.inherent:
            lines.append(f"{INHERENT_KEY}\t{self.inherent}")
        return "\n".join(lines) + "\n"


def g2p(s: str, table: G2PTable) -> List[str]:
    """Phoneme tokens for ``s``; unmatched code points become ``<unk>``."""
    if not table.rules:
        raise G2PConfigError("G2P table is empty")
    lookup = table.lookup
    longest = table.max_key_len
    out: List[str] = []
    i, n = 0, len(s)
    while i < n:
        for size in range(min(longest, n - i), 0, -1):
            key = s[i : i + size]
            if key in lookup:
                out.extend(lookup[key])
                i += size
                if table.inherent and _ends_in_consonant(key) and i < n and s[i] in CONSONANTS:
                    out.append(table.inherent)
                break
        else:
            out.append(UNK_PHONEME)
            i += 1
    return out


def _ends_in_consonant(key: str) -> bool:
    last = key[-2] if key.endswith(NUKTA) and len(key) > 1 else key[-1]
    return last in CONSONANTS
