"""``mlconformer`` command line.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import data
from .config import ConfigKeyError, RunConfig, help_text
from .dsp import ConfigError, DspConfig, FormatError, extract_features, read_wav
from .metrics import corpus_score
from .model import BRANCHES, CheckpointError, ModelConfigError, ModelParams, end_to_end_gradcheck, load_checkpoint, profile
from .numerics import NonFiniteError
from .textproc import (
    BpeConfigError,
    BpeModel,
    EmptyTranscriptError,
    G2PConfigError,
    Tokenizer,
    TokenizerOptions,
    Vocab,
    VocabError,
    build_vocab,
)
from .train import TrainingError, fit, transcribe_batch, validate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("mlconformer")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def merges_path(vocab_path) -> Path:
    return Path(str(vocab_path) + ".merges")


# -- synth -----------------------------------------------------------------------


def cmd_synth(args) -> int:
    manifest = data.synth_corpus(args.n, args.seed, args.out)
    print(manifest)
    return EXIT_OK


# -- prepare ---------------------------------------------------------------------


def cmd_prepare(args) -> int:
    rc = RunConfig.load(args.config, args.set)
    manifest = data.load_manifest(args.manifest)
    report = data.prepare_features(manifest.entries, args.audio_dir, args.out, rc.dsp())
    excluded = manifest.issues + report.excluded
    data.write_exclusions(Path(args.out) / "exclusions.tsv", excluded)
    print(f"computed {len(report.computed)}  up-to-date {len(report.up_to_date)}  excluded {len(excluded)}")
    total = len(manifest.entries) + len(manifest.issues)
    percent = 100.0 * len(excluded) / total
    limit = rc.data().max_fail_percent
    if percent > limit:
        print(f"error: {percent:.1f}% of utterances failed (limit {limit}%)", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


# -- vocab -----------------------------------------------------------------------


def cmd_vocab(args) -> int:
    rc = RunConfig.load(args.config, args.set)
    text_cfg = rc.text()
    granularity = args.granularity or text_cfg.granularity
    manifest = data.load_manifest(args.manifest)
    corpus = [e.text for e in manifest.entries]
    opts = TokenizerOptions(bpe_vocab_size=args.bpe_size or text_cfg.bpe_vocab_size, min_count=text_cfg.min_count)
    vocab, stats = build_vocab(corpus, granularity, opts)
    vocab.save(args.out)
    print(f"granularity {granularity}  unique tokens {stats.unique_tokens}  vocab size {len(vocab)}  coverage {stats.coverage:.4f}")
    if granularity == "wordpiece":
        opts.bpe_model.save(merges_path(args.out))
        print(f"merges {len(opts.bpe_model.merges)} -> {merges_path(args.out)}")
    return EXIT_OK


# -- train -----------------------------------------------------------------------


def load_tokenizer(vocab_path, granularity: str) -> Tokenizer:
    vocab = Vocab.load(vocab_path)
    opts = TokenizerOptions()
    if granularity == "wordpiece":
        mp = merges_path(vocab_path)
        if not mp.exists():
            raise data.DataError(f"wordpiece vocabulary needs its merges file {mp}")
        opts.bpe_model = BpeModel.load(mp)
    return Tokenizer(vocab, granularity, opts)


def tokenizer_from_meta(meta: Dict[str, object]) -> Tokenizer:
    opts = TokenizerOptions()
    if meta.get("merges") is not None:
        opts.bpe_model = BpeModel([tuple(m) for m in meta["merges"]])
    return Tokenizer(Vocab(meta["vocab"]), meta["granularity"], opts)


def aux_tokenizers(texts: Sequence[str], bpe_size: int) -> Dict[str, Tokenizer]:
    out = {}
    for name in BRANCHES:
        opts = TokenizerOptions(bpe_vocab_size=bpe_size)
        vocab, _ = build_vocab(texts, name, opts)
        out[name] = Tokenizer(vocab, name, opts)
    return out


def _split(manifest_entries, data_cfg) -> data.DatasetSplit:
    return data.split_dataset(manifest_entries, data_cfg.ratios, data_cfg.split_seed, data_cfg.speaker_disjoint)


def cmd_train(args) -> int:
    rc = RunConfig.load(args.config, args.set)
    text_cfg, data_cfg, train_cfg = rc.text(), rc.data(), rc.train()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run.conf").write_text(rc.dumps(), encoding="utf-8")

    manifest = data.load_manifest(args.manifest)
    tok = load_tokenizer(args.vocab, text_cfg.granularity)
    split = _split(manifest.entries, data_cfg)
    for name in ("train", "validation", "test"):
        data.write_manifest(out / f"split_{name}.tsv", split.part(name))

    aux = None
    if train_cfg.aux_weight > 0:
        aux = aux_tokenizers([e.text for e in split.train], text_cfg.bpe_vocab_size)
    train_set = data.collect_utterances(split.train, args.features, tok, aux_tokenizers=aux)
    val_set = data.collect_utterances(split.validation, args.features, tok, aux_tokenizers=aux)
    data.write_exclusions(out / "exclusions.tsv", manifest.issues + train_set.excluded + val_set.excluded)
    if not train_set.utterances:
        raise data.DataError("no trainable utterances in the training split")

    input_dim = train_set.utterances[0].features.shape[1]
    aux_sizes = tuple(len(aux[n].vocab) if aux else 0 for n in BRANCHES)
    mcfg = rc.model(input_dim=input_dim, vocab_size=len(tok.vocab), aux_vocab_sizes=aux_sizes)
    params = ModelParams.init(mcfg)
    meta = {
        "vocab": tok.vocab.tokens,
        "granularity": tok.granularity,
        "merges": [list(m) for m in tok.options.bpe_model.merges] if tok.options.bpe_model else None,
        "dsp": rc.section("dsp"),
        "data": {"split_seed": data_cfg.split_seed, "ratios": list(data_cfg.ratios), "speaker_disjoint": data_cfg.speaker_disjoint},
    }
    print(f"train {len(train_set.utterances)}  validation {len(val_set.utterances)}  parameters {params.num_parameters()}")
    result = fit(params, train_set.utterances, val_set.utterances, tok, train_cfg, out, meta=meta, resume=args.resume)
    if result.log.records:
        last = result.log.records[-1]
        print(f"epoch {last.epoch}  train_loss {last.train_loss:.4f}  val_loss {last.val_loss:.4f}  best epoch {result.best_epoch}")
    print(f"loss curve {out / 'loss.csv'}")
    return EXIT_OK


# -- eval ------------------------------------------------------------------------


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    tok = tokenizer_from_meta(ckpt.meta)
    manifest = data.load_manifest(args.manifest)
    if args.split == "all":
        entries = manifest.entries
    else:
        d = ckpt.meta["data"]
        entries = data.split_dataset(manifest.entries, tuple(d["ratios"]), d["split_seed"], d["speaker_disjoint"]).part(args.split)
    uset = data.collect_utterances(entries, args.features, tok, require_feasible=False)
    if not uset.utterances:
        raise data.DataError(f"no utterances with features in split {args.split!r}")
    batches = data.make_batches(uset.utterances, 16, shuffle=False)
    res = validate(ckpt.params, batches, tok, args.beam)
    score = corpus_score(zip(res.references, res.hypotheses), res.utterance_ids)
    out_csv = Path(args.out) if args.out else Path(args.checkpoint).with_name(f"eval_{args.split}.csv")
    score.write_csv(out_csv)
    print(f"utterances {len(res.references)}  WER {score.wer:.2f}  CER {score.cer:.2f}")
    print(f"per-utterance scores {out_csv}")
    return EXIT_OK


# -- transcribe ------------------------------------------------------------------


def transcribe_file(ckpt, wav_path, beam: int = 1) -> str:
    tok = tokenizer_from_meta(ckpt.meta)
    dsp_cfg = DspConfig(**ckpt.meta.get("dsp", {}))
    feats = extract_features(read_wav(wav_path), dsp_cfg)
    if feats is None:
        return ""
    frames = feats.frames
    T = frames.shape[0]
    padded = np.zeros((max(T, 4), frames.shape[1]))
    padded[:T] = frames
    batch = data.Batch(padded[None], [T], np.full((1, 1), data.PAD_ID), [0], ["input"], [""])
    hyps, _ = transcribe_batch(ckpt.params, batch, tok, beam)
    return hyps[0]


def cmd_transcribe(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    print(transcribe_file(ckpt, args.wav, args.beam))
    return EXIT_OK


# -- gradcheck -------------------------------------------------------------------


def cmd_gradcheck(args) -> int:
    rc = RunConfig.load(args.config, args.set) if (args.config or args.set) else None
    overrides = {}
    if rc is not None:
        defaults = RunConfig().section("model")
        overrides = {k: v for k, v in rc.section("model").items() if v != defaults[k]}
    cfg = profile("tiny", **overrides)
    report = end_to_end_gradcheck(cfg, seed=args.seed, inject_bug=args.inject_bug)
    print(f"parameters {report.n_checked}  max relative error {report.max_rel_error:.3e}  worst {report.worst_parameter}")
    ok = report.passed
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_NUMERIC


# -- entry -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    keys = help_text()
    parser = _Parser(prog="mlconformer", description=__doc__, epilog=keys, formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_config(p):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")

    p = sub.add_parser("synth", help="write a synthetic toy corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="extract log-Mel features", epilog=keys, formatter_class=fmt)
    p.add_argument("--manifest", required=True)
    p.add_argument("--audio-dir", required=True)
    p.add_argument("--out", required=True)
    with_config(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("vocab", help="build a token vocabulary", epilog=keys, formatter_class=fmt)
    p.add_argument("--manifest", required=True)
    p.add_argument("--granularity", choices=["char", "syllable", "phoneme", "wordpiece"])
    p.add_argument("--out", required=True)
    p.add_argument("--bpe-size", type=int)
    with_config(p)
    p.set_defaults(func=cmd_vocab)

    p = sub.add_parser("train", help="train a model", epilog=keys, formatter_class=fmt)
    p.add_argument("--manifest", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", action="store_true", help="continue from OUT/last.mlec")
    with_config(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--split", default="test", choices=["train", "validation", "test", "all"])
    p.add_argument("--beam", type=int, default=1)
    p.add_argument("--out", help="per-utterance CSV (default: next to the checkpoint)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("transcribe", help="transcribe one WAV file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--wav", required=True)
    p.add_argument("--beam", type=int, default=1)
    p.set_defaults(func=cmd_transcribe)

    p = sub.add_parser("gradcheck", help="finite-difference check of the tiny model", epilog=keys, formatter_class=fmt)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-bug", action="store_true", help="negative control: corrupt one backward rule")
    with_config(p)
    p.set_defaults(func=cmd_gradcheck)
    return parser


USAGE_ERRORS = (ConfigKeyError, ModelConfigError, ConfigError, BpeConfigError, G2PConfigError, UsageError)
DATA_ERRORS = (
    data.DataError, FileNotFoundError, FormatError, CheckpointError, VocabError, EmptyTranscriptError,
)
NUMERIC_ERRORS = (NonFiniteError, TrainingError, FloatingPointError)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except USAGE_ERRORS as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except NUMERIC_ERRORS as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
