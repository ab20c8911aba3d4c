import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlconformer import ctc, data, dsp
from mlconformer.data import ManifestEntry
from mlconformer.textproc import Tokenizer, Vocab, build_vocab, normalize_text


def entries(n, speakers=4):
    return [ManifestEntry(f"u{i}", f"s{i % speakers}", "আম") for i in range(n)]


# -- manifest ---------------------------------------------------------------------


def test_manifest_line():
    m = data.parse_manifest(["utt1\tspkA\tআম খাই\n"])
    assert m.entries == [ManifestEntry("utt1", "spkA", "আম খাই")]
    assert m.issues == []


def test_manifest_malformed_and_duplicate_reported():
    m = data.parse_manifest(["a\ts\tআম", "b\tজল", "a\ts\tবই", "", "c\ts\thello"])
    assert [e.file_id for e in m.entries] == ["a"]
    assert m.entries[0].transcription == "আম"
    reasons = {i.file_id: i.reason for i in m.issues}
    assert reasons["b"].startswith("malformed")
    assert reasons["a"].startswith("duplicate")
    assert reasons["c"].startswith("empty transcript")


def test_manifest_without_valid_lines():
    with pytest.raises(data.DataError):
        data.parse_manifest(["x\ty", ""])


def test_manifest_file_round_trip(tmp_path):
    es = [ManifestEntry("u1", "s1", "আম খাই"), ManifestEntry("u2", "s2", "জল")]
    data.write_manifest(tmp_path / "m.tsv", es)
    assert data.load_manifest(tmp_path / "m.tsv").entries == es


def test_exclusion_log_format(tmp_path):
    recs = [data.Exclusion("u1", "silent"), data.Exclusion("u2", "missing features")]
    data.write_exclusions(tmp_path / "x.tsv", recs)
    assert (tmp_path / "x.tsv").read_text(encoding="utf-8") == "u1\tsilent\nu2\tmissing features\n"
    assert data.read_exclusions(tmp_path / "x.tsv") == recs


# -- split -------------------------------------------------------------------------


@pytest.mark.parametrize("n,sizes", [(10, (8, 1, 1)), (196000, (156800, 19600, 19600)), (3, (3, 0, 0)), (7, (5, 1, 1))])
def test_split_sizes(n, sizes):
    assert tuple(data.split_sizes(n, (0.8, 0.1, 0.1))) == sizes


def test_split_ten_entries():
    split = data.split_dataset(entries(10), seed=3)
    assert split.sizes == (8, 1, 1)


def test_split_deterministic_and_seed_dependent():
    a = data.split_dataset(entries(50), seed=1)
    b = data.split_dataset(entries(50), seed=1)
    c = data.split_dataset(entries(50), seed=2)
    assert a == b
    assert a.train != c.train


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 400), st.integers(0, 2**31))
def test_split_is_size_exact_partition(n, seed):
    es = entries(n)
    split = data.split_dataset(es, seed=seed)
    ids = [e.file_id for part in (split.train, split.validation, split.test) for e in part]
    assert sorted(ids) == sorted(e.file_id for e in es)
    assert len(set(ids)) == n
    for size, r in zip(split.sizes, (0.8, 0.1, 0.1)):
        assert abs(size - n * r) <= 1


def test_split_errors():
    with pytest.raises(data.DataError):
        data.split_dataset(entries(2))
    with pytest.raises(data.DataError):
        data.split_dataset(entries(10), ratios=(0.5, 0.3, 0.3))


def test_speaker_disjoint_split():
    split = data.split_dataset(entries(60, speakers=10), seed=0, speaker_disjoint=True)
    spk = [{e.user_id for e in part} for part in (split.train, split.validation, split.test)]
    assert not (spk[0] & spk[1]) and not (spk[0] & spk[2]) and not (spk[1] & spk[2])
    assert sum(split.sizes) == 60 and all(split.sizes)


# -- feasibility ----------------------------------------------------------------------


def test_subsampled_length():
    assert [data.subsampled_length(t) for t in (4, 5, 8, 16, 17)] == [1, 2, 2, 4, 5]


def test_feasibility_example_excluded():
    assert not data.ctc_length_ok(5, 3)
    assert data.ctc_length_ok(7, 3)


def _path_exists(T, target):
    V = max(target, default=0) + 1
    return any(ctc.collapse(p) == list(target) for p in itertools.product(range(V), repeat=T))


def test_feasibility_rule_never_admits_an_impossible_target():
    # brute-force path existence over every target up to length 3 on 3 labels
    for L in range(4):
        for target in itertools.product((1, 2, 3), repeat=L):
            for T in range(1, 8):
                if data.ctc_length_ok(T, L):
                    assert _path_exists(T, target)
                assert _path_exists(T, target) == ctc.is_feasible(T, target)


def test_feasibility_rule_is_conservative():
    # a path exists for T'=5, L=3, but the rule still excludes it
    assert _path_exists(5, (1, 1, 1)) and not data.ctc_length_ok(5, 3)


# -- batching -------------------------------------------------------------------------


def utt(uid, T, L=1, D=3):
    return data.Utterance(uid, np.full((T, D), float(T)), [1] * L, "আ")


def test_batch_count():
    utts = [utt(f"u{i}", 20 + i % 7) for i in range(64)]
    assert len(data.make_batches(utts, 32)) == 2


def test_equal_lengths_zero_padding():
    batches = data.make_batches([utt(f"u{i}", 12) for i in range(10)], 4)
    assert all(b.padding_cells == 0 for b in batches)


def test_padding_zeroed_and_lengths():
    b = data.collate([utt("a", 5, L=2), utt("b", 3, L=1)])
    assert b.features.shape == (2, 5, 3)
    assert np.all(b.features[1, 3:] == 0)
    assert b.feature_lengths == [5, 3]
    assert b.targets.tolist() == [[1, 1], [1, data.PAD_ID]]
    assert b.target_lists() == [[1, 1], [1]]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(4, 40), min_size=1, max_size=30), st.integers(1, 8), st.integers(0, 5))
def test_every_utterance_once_per_epoch(lengths, bs, epoch):
    utts = [utt(f"u{i}", T) for i, T in enumerate(lengths)]
    batches = data.make_batches(utts, bs, seed=1, epoch=epoch)
    ids = [u for b in batches for u in b.utterance_ids]
    assert sorted(ids) == sorted(u.utt_id for u in utts)
    assert all(len(b) <= bs for b in batches)


def test_batching_reproducible_and_epoch_dependent():
    utts = [utt(f"u{i}", 5 + i) for i in range(40)]
    a = [b.utterance_ids for b in data.make_batches(utts, 4, seed=3, epoch=1)]
    b = [b.utterance_ids for b in data.make_batches(utts, 4, seed=3, epoch=1)]
    c = [b.utterance_ids for b in data.make_batches(utts, 4, seed=3, epoch=2)]
    assert a == b and a != c


def test_sorted_buckets_limit_padding():
    rng = np.random.default_rng(0)
    utts = [utt(f"u{i}", int(t)) for i, t in enumerate(rng.integers(5, 80, size=64))]
    sorted_pad = sum(b.padding_cells for b in data.make_batches(utts, 8, sort_by_length=True))
    random_pad = sum(b.padding_cells for b in data.make_batches(utts, 8, sort_by_length=False))
    assert sorted_pad < random_pad


def test_collect_utterances_excludes_with_reasons(tmp_path):
    vocab = Vocab(["<blank>", "<unk>", "আ", "ম", " "])
    tok = Tokenizer(vocab, "char")
    feats = {"ok": np.zeros((40, 4)), "short": np.zeros((16, 4))}
    for k, v in feats.items():
        dsp.write_lmel(data.feature_path(tmp_path, k), dsp.LogMelFeatures(v, 0.01, 0.025))
    es = [ManifestEntry("ok", "s", "আম"), ManifestEntry("short", "s", "আম"), ManifestEntry("gone", "s", "আম")]
    res = data.collect_utterances(es, tmp_path, tok)
    assert [u.utt_id for u in res.utterances] == ["ok"]
    reasons = {x.file_id: x.reason for x in res.excluded}
    assert reasons["gone"] == "missing features"
    assert reasons["short"].startswith("ctc infeasible")
    # evaluation keeps every utterance that has features
    res = data.collect_utterances(es, tmp_path, tok, require_feasible=False)
    assert [u.utt_id for u in res.utterances] == ["ok", "short"]


# -- synthetic corpus ---------------------------------------------------------------


def test_synth_bit_identical(tmp_path):
    a = data.synth_corpus(5, 11, tmp_path / "a")
    b = data.synth_corpus(5, 11, tmp_path / "b")
    assert a.read_bytes() == b.read_bytes()
    for i in range(5):
        name = f"wav/utt{i:05d}.wav"
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_synth_transcripts_normalize_to_themselves():
    for text in data.synth_transcripts(200, 3):
        assert normalize_text(text) == text
        assert 1 <= len(text.split()) <= 4
    for w in data.LEXICON:
        assert normalize_text(w) == w


def test_synth_duration_exact(tmp_path):
    manifest = data.synth_corpus(6, 2, tmp_path)
    for e in data.load_manifest(manifest):
        sig = dsp.read_wav(tmp_path / "wav" / f"{e.file_id}.wav")
        assert sig.duration == pytest.approx(data.synth_duration(e.transcription), abs=1e-12)
        assert len(sig) == 1920 * len(e.transcription) + 3200


def test_synth_characters_have_distinct_patterns():
    letters = [c for c in data.synth_alphabet() if c != " "]
    spectra = []
    for c in letters:
        x = data.render_text(c)[1600:-1600]
        spectra.append(np.abs(np.fft.rfft(x)))
    best = [int(np.argmax(s)) for s in spectra]
    assert len(set(best)) == len(letters)


def test_synth_corpus_is_feasible(tmp_path):
    manifest = data.synth_corpus(20, 7, tmp_path)
    man = data.load_manifest(manifest)
    rep = data.prepare_features(man.entries, tmp_path / "wav", tmp_path / "feats")
    assert len(rep.computed) == 20 and not rep.excluded
    vocab, _ = build_vocab([e.text for e in man], "char")
    res = data.collect_utterances(man.entries, tmp_path / "feats", Tokenizer(vocab, "char"))
    assert len(res.utterances) == 20


def test_prepare_idempotent_and_silent(tmp_path):
    manifest = data.synth_corpus(3, 1, tmp_path)
    man = data.load_manifest(manifest)
    dsp.write_wav(tmp_path / "wav" / "utt00001.wav", dsp.AudioSignal(np.zeros(8000), 16000))
    first = data.prepare_features(man.entries, tmp_path / "wav", tmp_path / "f")
    assert sorted(first.computed) == ["utt00000", "utt00002"]
    assert first.excluded == [data.Exclusion("utt00001", "silent")]
    second = data.prepare_features(man.entries, tmp_path / "wav", tmp_path / "f")
    assert second.computed == [] and sorted(second.up_to_date) == ["utt00000", "utt00002"]
    # a config change invalidates the cache
    third = data.prepare_features(man.entries, tmp_path / "wav", tmp_path / "f", dsp.DspConfig(n_mels=40))
    assert sorted(third.computed) == ["utt00000", "utt00002"]
    assert dsp.read_lmel(data.feature_path(tmp_path / "f", "utt00000")).mel_bins == 40


def test_corpus_stats():
    stats = data.corpus_stats([ManifestEntry("a", "s1", "আম জল"), ManifestEntry("b", "s2", "মা")])
    assert stats["max_words"] == 2 and stats["max_chars"] == 5 and stats["speakers"] == 2
