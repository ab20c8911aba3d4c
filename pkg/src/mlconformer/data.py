"""Corpus ingestion, seeded splitting, padded batching and a synthetic toy corpus.

Manifests are UTF-8 TSV files without a header: ``file_id<TAB>user_id<TAB>transcription``.
Exclusions (bad manifest lines, missing features, CTC-infeasible targets) are
never dropped silently; they are collected as ``(file_id, reason)`` records
that can be written as a tab-separated log.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .dsp import AudioSignal, read_lmel, write_wav
from .model.encoder import conv_length
from .numerics import make_rng
from .textproc import EmptyTranscriptError, Tokenizer, normalize_text

log = logging.getLogger(__name__)

PathLike = Union[str, Path]


class DataError(ValueError):
    """The corpus cannot be used as requested."""


@dataclass(frozen=True)
class ManifestEntry:
    file_id: str
    user_id: str
    transcription: str  # raw, as read from the manifest

    @property
    def text(self) -> str:
        return normalize_text(self.transcription)


@dataclass(frozen=True)
class Exclusion:
    file_id: str
    reason: str


@dataclass
class Manifest:
    entries: List[ManifestEntry]
    issues: List[Exclusion] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def write_exclusions(path: PathLike, records: Sequence[Exclusion]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(f"{r.file_id}\t{r.reason}\n")


def read_exclusions(path: PathLike) -> List[Exclusion]:
    with open(path, encoding="utf-8") as fh:
        return [Exclusion(*line.rstrip("\n").split("\t", 1)) for line in fh if line.strip()]


def parse_manifest(lines: Sequence[str], punctuation: str = "") -> Manifest:
    entries: List[ManifestEntry] = []
    issues: List[Exclusion] = []
    seen = set()
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3 or not fields[0]:
            issues.append(Exclusion(fields[0] or f"line{lineno}", f"malformed: line {lineno} has {len(fields)} fields"))
            continue
        file_id, user_id, raw = fields
        if file_id in seen:
            issues.append(Exclusion(file_id, f"duplicate: line {lineno}"))
            continue
        try:
            normalize_text(raw, punctuation)
        except EmptyTranscriptError:
            issues.append(Exclusion(file_id, "empty transcript after normalization"))
            continue
        seen.add(file_id)
        entries.append(ManifestEntry(file_id, user_id, raw))
    if not entries:
        raise DataError("manifest has no valid lines")
    for issue in issues:
        log.warning("manifest: %s %s", issue.file_id, issue.reason)
    return Manifest(entries, issues)


def load_manifest(path: PathLike, punctuation: str = "") -> Manifest:
    with open(path, encoding="utf-8") as fh:
        return parse_manifest(fh.readlines(), punctuation)


def write_manifest(path: PathLike, entries: Sequence[ManifestEntry]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in entries:
            fh.write(f"{e.file_id}\t{e.user_id}\t{e.transcription}\n")


def corpus_stats(entries: Sequence[ManifestEntry]) -> Dict[str, float]:
    texts = [e.text for e in entries]
    return {
        "utterances": len(texts),
        "speakers": len({e.user_id for e in entries}),
        "max_words": max(len(t.split()) for t in texts),
        "max_chars": max(len(t) for t in texts),
        "mean_words": sum(len(t.split()) for t in texts) / len(texts),
    }


# -- splitting ---------------------------------------------------------------------


@dataclass
class DatasetSplit:
    train: List[ManifestEntry]
    validation: List[ManifestEntry]
    test: List[ManifestEntry]
    seed: int

    def part(self, name: str) -> List[ManifestEntry]:
        aliases = {"train": self.train, "validation": self.validation, "val": self.validation, "test": self.test}
        if name not in aliases:
            raise KeyError(f"unknown split part {name!r}")
        return aliases[name]

    @property
    def sizes(self) -> Tuple[int, int, int]:
        return len(self.train), len(self.validation), len(self.test)


def split_sizes(n: int, ratios: Sequence[float]) -> List[int]:
    """Largest-remainder apportionment: sizes sum to ``n`` and each is within 1 of ``n*r``."""
    exact = [n * r for r in ratios]
    sizes = [math.floor(x) for x in exact]
    order = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def split_dataset(
    entries: Sequence[ManifestEntry],
    ratios: Sequence[float] = (0.8, 0.1, 0.1),
    seed: int = 0,
    speaker_disjoint: bool = False,
) -> DatasetSplit:
    """Seeded random partition into train/validation/test.

    With ``speaker_disjoint`` whole speakers are assigned to parts, so sizes
    only approximate the ratios.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"ratios must be three nonnegative numbers summing to 1, got {ratios}")
    entries = list(entries)
    if len(entries) < 3:
        raise DataError("need at least 3 entries to split")
    rng = make_rng(seed, "split")
    if not speaker_disjoint:
        order = rng.permutation(len(entries))
        shuffled = [entries[i] for i in order]
        a, b, _ = split_sizes(len(entries), ratios)
        return DatasetSplit(shuffled[:a], shuffled[a : a + b], shuffled[a + b :], seed)

    speakers = sorted({e.user_id for e in entries})
    if len(speakers) < 3:
        raise DataError("speaker-disjoint split needs at least 3 speakers")
    speakers = [speakers[i] for i in rng.permutation(len(speakers))]
    by_speaker: Dict[str, List[ManifestEntry]] = {s: [] for s in speakers}
    for e in entries:
        by_speaker[e.user_id].append(e)
    targets = split_sizes(len(entries), ratios)
    parts: List[List[ManifestEntry]] = [[], [], []]
    # every part gets one speaker first, then each speaker goes to the part furthest below target
    for k, spk in enumerate(speakers):
        if k < 3:
            j = k
        else:
            j = max(range(3), key=lambda i: (targets[i] - len(parts[i]), -i))
        parts[j].extend(by_speaker[spk])
    return DatasetSplit(parts[0], parts[1], parts[2], seed)


# -- batching ----------------------------------------------------------------------


def subsampled_length(n_frames: int, factor: int = 4) -> int:
    """Frames left after ``log2(factor)`` convolutions of kernel 3, stride 2, padding 1."""
    for _ in range(int(round(math.log2(factor)))):
        n_frames = conv_length(n_frames)
    return n_frames


def ctc_length_ok(n_subsampled: int, target_len: int) -> bool:
    """Conservative feasibility rule ``T' >= 2L + 1`` (room for a blank between every label)."""
    return n_subsampled >= 2 * target_len + 1


@dataclass
class Utterance:
    utt_id: str
    features: np.ndarray  # [T, D]
    target: List[int]
    text: str
    aux_targets: Dict[str, List[int]] = field(default_factory=dict)

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]


@dataclass
class UtteranceSet:
    utterances: List[Utterance]
    excluded: List[Exclusion]


def feature_path(features_dir: PathLike, file_id: str) -> Path:
    return Path(features_dir) / f"{file_id}.lmel"


def collect_utterances(
    entries: Sequence[ManifestEntry],
    features_dir: PathLike,
    tokenizer: Tokenizer,
    subsample_factor: int = 4,
    loader: Optional[Callable[[Path], np.ndarray]] = None,
    aux_tokenizers: Optional[Dict[str, Tokenizer]] = None,
    require_feasible: bool = True,
) -> UtteranceSet:
    """Load features and targets, excluding anything that cannot be trained on.

    ``aux_tokenizers`` adds per-granularity targets for auxiliary heads; those
    never cause exclusion (an infeasible auxiliary target is skipped by the loss).
    With ``require_feasible`` false (evaluation) only missing features exclude.
    """
    loader = loader or (lambda p: read_lmel(p).frames)
    keep: List[Utterance] = []
    excluded: List[Exclusion] = []
    for e in entries:
        path = feature_path(features_dir, e.file_id)
        if not path.exists():
            excluded.append(Exclusion(e.file_id, "missing features"))
            continue
        feats = loader(path)
        text = e.text
        target = tokenizer.encode(text).ids
        t_sub = subsampled_length(feats.shape[0], subsample_factor)
        reason = None
        if not target:
            reason = "empty target"
        elif not ctc_length_ok(t_sub, len(target)):
            reason = f"ctc infeasible: T'={t_sub} < 2*{len(target)}+1"
        if reason and require_feasible:
            excluded.append(Exclusion(e.file_id, reason))
            continue
        aux = {k: list(tok.encode(text).ids) for k, tok in (aux_tokenizers or {}).items()}
        keep.append(Utterance(e.file_id, feats, list(target), text, aux))
    for x in excluded:
        log.warning("excluded %s: %s", x.file_id, x.reason)
    return UtteranceSet(keep, excluded)


@dataclass
class Batch:
    features: np.ndarray  # [B, T_max, D], zero padded
    feature_lengths: List[int]
    targets: np.ndarray  # [B, L_max], padded with -1
    target_lengths: List[int]
    utterance_ids: List[str]
    texts: List[str]
    aux_targets: Dict[str, List[List[int]]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.utterance_ids)

    def target_lists(self) -> List[List[int]]:
        return [self.targets[i, :n].tolist() for i, n in enumerate(self.target_lengths)]

    @property
    def padding_cells(self) -> int:
        return sum(self.features.shape[1] - n for n in self.feature_lengths)


PAD_ID = -1


def collate(utts: Sequence[Utterance]) -> Batch:
    if not utts:
        raise DataError("cannot collate an empty batch")
    D = utts[0].features.shape[1]
    T_max = max(u.num_frames for u in utts)
    L_max = max(len(u.target) for u in utts)
    feats = np.zeros((len(utts), T_max, D))
    targets = np.full((len(utts), L_max), PAD_ID, dtype=np.int64)
    for i, u in enumerate(utts):
        if u.features.shape[1] != D:
            raise DataError(f"{u.utt_id}: feature dim {u.features.shape[1]} != {D}")
        feats[i, : u.num_frames] = u.features
        targets[i, : len(u.target)] = u.target
    return Batch(
        feats,
        [u.num_frames for u in utts],
        targets,
        [len(u.target) for u in utts],
        [u.utt_id for u in utts],
        [u.text for u in utts],
        {k: [u.aux_targets[k] for u in utts] for k in utts[0].aux_targets},
    )


def make_batches(
    utterances: Sequence[Utterance],
    batch_size: int,
    seed: int = 0,
    epoch: int = 0,
    sort_by_length: bool = True,
    shuffle: bool = True,
) -> List[Batch]:
    """Group utterances into padded batches; each utterance appears exactly once.

    Length sorting buckets similar lengths together, then the batch order is
    shuffled with a generator keyed by ``(seed, epoch)``.
    """
    if batch_size < 1:
        raise DataError("batch_size must be >= 1")
    utts = list(utterances)
    rng = make_rng(seed, "batches", epoch)
    if sort_by_length:
        utts.sort(key=lambda u: (u.num_frames, u.utt_id))
    elif shuffle:
        utts = [utts[i] for i in rng.permutation(len(utts))]
    groups = [utts[i : i + batch_size] for i in range(0, len(utts), batch_size)]
    if shuffle and sort_by_length:
        groups = [groups[i] for i in rng.permutation(len(groups))]
    return [collate(g) for g in groups]


# -- synthetic corpus --------------------------------------------------------------

# fixed pseudo-Bengali lexicon of short everyday words
LEXICON = ("আম", "কলম", "বই", "জল", "মা", "বাবা", "ঘর", "নদী", "পাখি", "ফুল", "চাঁদ", "দিন")

SYNTH_RATE = 16000
SEGMENT_SECONDS = 0.12
MARGIN_SECONDS = 0.1
NOISE_LEVEL = 1e-3


def synth_alphabet() -> List[str]:
    """Every code point the lexicon uses, plus the word separator."""
    return sorted({ch for w in LEXICON for ch in w} | {" "})


def _tone_table(alphabet: Sequence[str]) -> Dict[str, Tuple[float, float]]:
    # each character gets a chirp between two mel-spaced frequencies; the space is a rest
    letters = [c for c in alphabet if c != " "]
    mels = np.linspace(2595 * np.log10(1 + 250 / 700), 2595 * np.log10(1 + 6000 / 700), 2 * len(letters))
    hz = 700 * (10 ** (mels / 2595) - 1)
    return {c: (float(hz[2 * k]), float(hz[2 * k + 1])) for k, c in enumerate(letters)}


def render_text(text: str, seed: int = 0, utt_key: str = "") -> np.ndarray:
    """Deterministic waveform: a margin, one segment per code point, a margin."""
    seg = int(round(SEGMENT_SECONDS * SYNTH_RATE))
    margin = int(round(MARGIN_SECONDS * SYNTH_RATE))
    tones = _tone_table(synth_alphabet())
    t = np.arange(seg) / SYNTH_RATE
    ramp = int(0.01 * SYNTH_RATE)
    env = np.ones(seg)
    env[:ramp] = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
    env[-ramp:] = env[:ramp][::-1]
    pieces = [np.zeros(margin)]
    for ch in text:
        if ch == " ":
            pieces.append(np.zeros(seg))
            continue
        if ch not in tones:
            raise DataError(f"no acoustic pattern for {ch!r}")
        f0, f1 = tones[ch]
        # linear chirp f0 -> f1 over the segment
        phase = 2 * np.pi * (f0 * t + 0.5 * (f1 - f0) / SEGMENT_SECONDS * t**2)
        pieces.append(0.3 * env * np.sin(phase))
    pieces.append(np.zeros(margin))
    audio = np.concatenate(pieces)
    audio += NOISE_LEVEL * make_rng(seed, "noise", utt_key).standard_normal(audio.size)
    return audio


def synth_duration(text: str) -> float:
    return SEGMENT_SECONDS * len(text) + 2 * MARGIN_SECONDS


def synth_transcripts(n_utts: int, seed: int) -> List[str]:
    rng = make_rng(seed, "transcripts")
    out = []
    for _ in range(n_utts):
        n_words = int(rng.integers(1, 5))
        out.append(" ".join(LEXICON[int(i)] for i in rng.integers(0, len(LEXICON), size=n_words)))
    return out


def synth_corpus(n_utts: int, seed: int, out_dir: PathLike, n_speakers: int = 4) -> Path:
    """Write ``n_utts`` WAV files under ``out_dir/wav`` and return the manifest path."""
    if n_utts < 1:
        raise DataError("n_utts must be >= 1")
    out = Path(out_dir)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    entries = []
    for i, text in enumerate(synth_transcripts(n_utts, seed)):
        utt_id = f"utt{i:05d}"
        write_wav(out / "wav" / f"{utt_id}.wav", AudioSignal(render_text(text, seed, utt_id), SYNTH_RATE))
        entries.append(ManifestEntry(utt_id, f"spk{i % n_speakers}", text))
    manifest = out / "manifest.tsv"
    write_manifest(manifest, entries)
    return manifest


# -- feature preparation -----------------------------------------------------------


@dataclass
class PrepareReport:
    computed: List[str] = field(default_factory=list)
    up_to_date: List[str] = field(default_factory=list)
    excluded: List[Exclusion] = field(default_factory=list)

    @property
    def failure_rate(self) -> float:
        total = len(self.computed) + len(self.up_to_date) + len(self.excluded)
        return len(self.excluded) / total if total else 0.0


INDEX_NAME = "index.tsv"


def _read_index(path: Path) -> Dict[str, str]:
    if not path.exists():
        return {}
    with open(path, encoding="utf-8") as fh:
        return dict(line.rstrip("\n").split("\t", 1) for line in fh if line.strip())


def prepare_features(
    entries: Sequence[ManifestEntry],
    audio_dir: PathLike,
    out_dir: PathLike,
    config=None,
) -> PrepareReport:
    """Compute one LMEL file per utterance; skip outputs whose input hash is unchanged.

    The hash covers the WAV bytes and the front-end configuration, and is kept
    in ``out_dir/index.tsv``.
    """
    import hashlib

    from .dsp import DspConfig, extract_features, read_wav, write_lmel
    from .dsp.io import FormatError

    config = config or DspConfig()
    config.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    index_path = out / INDEX_NAME
    index = _read_index(index_path)
    report = PrepareReport()
    for e in entries:
        wav = Path(audio_dir) / f"{e.file_id}.wav"
        if not wav.exists():
            report.excluded.append(Exclusion(e.file_id, "missing audio"))
            continue
        digest = hashlib.sha256(wav.read_bytes() + repr(config).encode()).hexdigest()
        target = feature_path(out, e.file_id)
        if index.get(e.file_id) == digest and target.exists():
            report.up_to_date.append(e.file_id)
            continue
        try:
            feats = extract_features(read_wav(wav), config)
        except (FormatError, ValueError) as err:
            report.excluded.append(Exclusion(e.file_id, f"unreadable: {err}"))
            continue
        if feats is None:
            report.excluded.append(Exclusion(e.file_id, "silent"))
            index.pop(e.file_id, None)
            if target.exists():
                target.unlink()
            continue
        write_lmel(target, feats)
        index[e.file_id] = digest
        report.computed.append(e.file_id)
    with open(index_path, "w", encoding="utf-8", newline="\n") as fh:
        for k in sorted(index):
            fh.write(f"{k}\t{index[k]}\n")
    return report
