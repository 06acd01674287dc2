"""Command-line front door.

Subcommands compose the library into whole workflows: eval (score
hypotheses), ensemble (word + sentence level), sample / fuse / windows
(feature pipeline), train / decode (toy captioner), synth (bundled
synthetic corpus).

Conventions: machine-readable output on stdout (JSON reports, or the
bare index/boundary lines of sample and windows); one-line human
summaries on stderr; per-video output always sorted by video id. Every
stochastic command requires an explicit --seed. Exit codes: 0 success,
2 I/O or parse failure, 3 video-id mismatch, 4 bad arguments, 5 missing
prerequisite.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import corpus_io, errors, synthetic
from .ensemble import VideoContext, full_ensemble
from .feature_pipeline import (DEFAULT_SEGMENTS, DEFAULT_STRIDE_S, DEFAULT_WINDOW_S,
                               align_and_fuse, sliding_windows, tsn_test_indices,
                               tsn_train_indices, TSNConfig)
from .text_metrics import build_idf, corpus_eval, tokenize
from .toy_captioner import (SCSTConfig, ToyParams, ToyStepModel, TrainConfig,
                            TrainExample, greedy_decode, make_context, sample_decode,
                            scst_train, xe_train)
from .rng import Splitmix64
from .vocab import Vocab

EXIT_OK = 0
EXIT_IO = 2
EXIT_ID_MISMATCH = 3
EXIT_BAD_ARGS = 4
EXIT_MISSING_PREREQ = 5

_IO_ERRORS = (OSError, errors.ParseError, errors.BadMagic, errors.TruncatedFile,
              errors.NonFiniteValue, errors.DuplicateVideoId,
              errors.DistributionNotNormalized, errors.TraceExhausted,
              errors.EmptyCorpus, errors.MissingInput, errors.VocabMismatch,
              errors.InvalidDistribution)
_ID_ERRORS = (errors.MissingReference, errors.VideoIdMismatch)
_ARG_ERRORS = (ValueError, errors.NonPositiveDuration, errors.EmptyFeatureList,
               errors.ShapeMismatch, errors.EmptyDataset, errors.EmptyBatch,
               errors.EmptyCandidateSet, errors.EmptyPool)


class _Parser(argparse.ArgumentParser):
    # bad flags must exit 4, not argparse's default 2
    def error(self, message):
        self.exit(EXIT_BAD_ARGS, f"{self.prog}: error: {message}\n")


def _note(msg: str) -> None:
    print(msg, file=sys.stderr)


def _report(obj: dict, started: float) -> None:
    obj["wall_time_s"] = round(time.perf_counter() - started, 6)
    print(json.dumps(obj, sort_keys=True))


def _require_seed(args) -> int:
    if args.seed is None:
        raise ValueError("this command draws random samples: --seed is required")
    return args.seed


# --- eval ---

def _cmd_eval(args, started: float) -> int:
    hyp_records = corpus_io.read_captions(args.hyp)
    ref_records = corpus_io.read_captions(args.refs)
    hyps = {vid: tokenize(cap) for vid, cap in corpus_io.hypothesis_map(hyp_records).items()}
    refs = {vid: [tokenize(c) for c in caps]
            for vid, caps in corpus_io.reference_map(ref_records).items()}
    report = corpus_eval(hyps, refs)
    selected = [m.strip() for m in args.metrics.split(",") if m.strip()]
    known = {"bleu4": report.bleu4, "rouge_l": report.rouge_l, "cider_d": report.cider_d}
    bad = [m for m in selected if m not in known]
    if bad:
        raise ValueError(f"unknown metrics: {', '.join(bad)} (choose from {sorted(known)})")
    out = {
        "command": "eval",
        "hyp": str(args.hyp),
        "refs": str(args.refs),
        "metrics": {m: known[m] for m in selected},
        "per_video_cider_d": dict(sorted(report.per_video.items())),
    }
    _report(out, started)
    _note(f"eval: {len(report.per_video)} videos, "
          + ", ".join(f"{m}={known[m]:.4f}" for m in selected))
    return EXIT_OK


# --- ensemble ---

def _load_context_models(args, video_ids):
    """Step models (trace replays + checkpoints) and per-video contexts."""
    models = []
    contexts = {}
    for path in args.trace or []:
        models.append(corpus_io.read_trace_model(path))
    ckpt_models = []
    for path in args.checkpoint or []:
        params, vocab = corpus_io.read_checkpoint(path)
        ckpt_models.append(ToyStepModel(params, vocab))
    models.extend(ckpt_models)
    if not models:
        return [], None
    if ckpt_models:
        if not args.features_dir:
            raise ValueError("--features-dir is required when checkpoints decode")
        vocab = ckpt_models[0].vocab
        subtitles = {}
        if args.subtitles:
            subtitles = corpus_io.hypothesis_map(corpus_io.read_captions(args.subtitles))
        for vid in video_ids:
            feat_path = Path(args.features_dir) / f"{vid}.cff"
            if not feat_path.exists():
                raise errors.VideoIdMismatch(f"no feature file for video {vid!r}")
            feat = corpus_io.read_features(feat_path)
            fused = align_and_fuse([feat], k=args.k, mode="test")
            ctx = make_context(fused, subtitles.get(vid, ""), vocab, video_id=vid)
            contexts[vid] = ctx
    else:
        contexts = {vid: VideoContext(video_id=vid) for vid in video_ids}
    return models, contexts


def _cmd_ensemble(args, started: float) -> int:
    single_outputs = []
    for path in args.inputs:
        single_outputs.append(corpus_io.hypothesis_map(corpus_io.read_captions(path)))
    ids = sorted(single_outputs[0])
    models, contexts = _load_context_models(args, ids)
    winners = full_ensemble(models, single_outputs, contexts, max_len=args.max_len)
    records = [corpus_io.CaptionRecord(video_id=vid, caption=winners[vid])
               for vid in sorted(winners)]
    corpus_io.write_captions(args.out, records)
    _report({
        "command": "ensemble",
        "inputs": [str(p) for p in args.inputs],
        "models": len(models),
        "out": str(args.out),
        "videos": len(records),
    }, started)
    _note(f"ensemble: {len(args.inputs)} caption files, {len(models)} step models "
          f"-> {args.out}")
    return EXIT_OK


# --- feature pipeline commands ---

def _cmd_sample(args, started: float) -> int:
    if args.mode == "train":
        seed = _require_seed(args)
        idx = tsn_train_indices(args.n_frames, TSNConfig(k=args.k, seed=seed))
    else:
        idx = tsn_test_indices(args.n_frames, args.k)
    print(" ".join(str(i) for i in idx))
    _note(f"sample: mode={args.mode} n={args.n_frames} k={args.k}")
    return EXIT_OK


def _cmd_fuse(args, started: float) -> int:
    feats = [corpus_io.read_features(p) for p in args.features]
    seed = _require_seed(args) if args.mode == "train" else (args.seed or 0)
    fused = align_and_fuse(feats, k=args.k, mode=args.mode, seed=seed,
                           shared_seed=args.shared_seed)
    corpus_io.write_features(args.out, fused)
    _report({
        "command": "fuse",
        "inputs": [str(p) for p in args.features],
        "mode": args.mode,
        "k": args.k,
        "out": str(args.out),
        "rows": int(fused.shape[0]),
        "dim": int(fused.shape[1]),
    }, started)
    _note(f"fuse: {len(feats)} features -> {fused.shape[0]}x{fused.shape[1]} {args.out}")
    return EXIT_OK


def _cmd_windows(args, started: float) -> int:
    schedule = sliding_windows(args.duration, args.window, args.stride)
    for start, end in schedule.clips:
        print(f"{start:.6f} {end:.6f}")
    _note(f"windows: {len(schedule.clips)} clips for duration {args.duration}")
    return EXIT_OK


# --- training and decoding ---

def _load_data_dir(data_dir, k: int):
    """Data dir layout: refs.jsonl, optional subtitles.jsonl, features/*.cff."""
    data_dir = Path(data_dir)
    refs_path = data_dir / "refs.jsonl"
    if not refs_path.exists():
        raise errors.ParseError(f"{data_dir}: missing refs.jsonl")
    refs = corpus_io.reference_map(corpus_io.read_captions(refs_path))
    subtitles = {}
    subs_path = data_dir / "subtitles.jsonl"
    if subs_path.exists():
        subtitles = corpus_io.hypothesis_map(corpus_io.read_captions(subs_path))
    items = []
    for vid in sorted(refs):
        feat_path = data_dir / "features" / f"{vid}.cff"
        if not feat_path.exists():
            raise errors.VideoIdMismatch(f"no feature file for video {vid!r}")
        feat = corpus_io.read_features(feat_path)
        fused = align_and_fuse([feat], k=k, mode="test")
        items.append((vid, fused, subtitles.get(vid, ""), refs[vid]))
    return items


def _build_examples(items, vocab: Vocab):
    out = []
    for vid, fused, subtitle, refs in items:
        ctx = make_context(fused, subtitle, vocab, video_id=vid)
        out.append(TrainExample(
            video_id=vid, context=ctx,
            references=tuple(tuple(tokenize(r)) for r in refs)))
    return out


def _cmd_train(args, started: float) -> int:
    seed = _require_seed(args)
    items = _load_data_dir(args.data, args.k)
    curve_path = Path(args.curve) if args.curve else Path(str(args.out) + ".curve.txt")

    if args.stage == "xe":
        words = []
        for _vid, _fused, subtitle, refs in items:
            words.extend(tokenize(subtitle))
            for r in refs:
                words.extend(tokenize(r))
        vocab = Vocab.from_content(words)
        examples = _build_examples(items, vocab)
        params = ToyParams.zeros(len(vocab), examples[0].context.v_mean.shape[0])
        cfg = TrainConfig(learning_rate=args.lr, epochs=args.epochs, seed=seed,
                          max_len=args.max_len)
        params, losses = xe_train(params, vocab, examples, cfg)
        curve_lines = [f"{x!r}" for x in losses]
        final = losses[-1]
        extra = {"epochs": args.epochs, "final_loss": final}
    else:
        if not args.init:
            _note("train: --stage scst requires --init with a stage-one checkpoint")
            return EXIT_MISSING_PREREQ
        params, vocab = corpus_io.read_checkpoint(args.init)
        examples = _build_examples(items, vocab)
        idf = build_idf([(ex.video_id, [list(r) for r in ex.references])
                         for ex in examples])
        cfg = SCSTConfig(steps=args.steps, learning_rate=args.lr, seed=seed,
                         samples_per_video=args.samples_per_video, max_len=args.max_len)
        params, curve = scst_train(params, vocab, examples, idf, cfg)
        curve_lines = [f"{d.reward!r} {d.baseline!r} {d.advantage!r}" for d in curve]
        final = curve[-1].baseline
        extra = {"steps": args.steps, "final_baseline_reward": final}

    corpus_io.write_checkpoint(args.out, params, vocab)
    curve_path.write_text("".join(line + "\n" for line in curve_lines), encoding="utf-8")
    out = {"command": "train", "stage": args.stage, "data": str(args.data),
           "seed": seed, "lr": args.lr, "out": str(args.out), "curve": str(curve_path)}
    out.update(extra)
    _report(out, started)
    _note(f"train {args.stage}: {len(items)} videos -> {args.out}")
    return EXIT_OK


def _cmd_decode(args, started: float) -> int:
    params, vocab = corpus_io.read_checkpoint(args.checkpoint)
    features_dir = Path(args.features_dir)
    feat_paths = sorted(features_dir.glob("*.cff"))
    if not feat_paths:
        raise errors.ParseError(f"{features_dir}: no .cff feature files")
    subtitles = {}
    if args.subtitles:
        subtitles = corpus_io.hypothesis_map(corpus_io.read_captions(args.subtitles))
    rng = None
    if args.mode == "sample":
        rng = Splitmix64(_require_seed(args))
    records = []
    for path in feat_paths:
        vid = path.stem
        feat = corpus_io.read_features(path)
        fused = align_and_fuse([feat], k=args.k, mode="test")
        ctx = make_context(fused, subtitles.get(vid, ""), vocab, video_id=vid)
        if args.mode == "greedy":
            ids = greedy_decode(params, ctx, args.max_len)
        else:
            ids = list(sample_decode(params, ctx, args.max_len, rng).token_ids)
        records.append(corpus_io.CaptionRecord(
            video_id=vid, caption=" ".join(vocab.decode(ids))))
    corpus_io.write_captions(args.out, records)
    _report({"command": "decode", "checkpoint": str(args.checkpoint),
             "mode": args.mode, "out": str(args.out), "videos": len(records)}, started)
    _note(f"decode: {len(records)} videos -> {args.out}")
    return EXIT_OK


def _cmd_synth(args, started: float) -> int:
    videos = synthetic.synthetic_corpus(n_videos=args.videos, vocab_words=args.vocab_words,
                                        seed=args.seed, noise=args.noise)
    synthetic.write_corpus_dir(videos, args.out)
    _report({"command": "synth", "out": str(args.out), "videos": args.videos,
             "vocab_words": args.vocab_words, "seed": args.seed}, started)
    _note(f"synth: wrote {args.videos} videos under {args.out}")
    return EXIT_OK


# --- wiring ---

def build_parser() -> _Parser:
    parser = _Parser(prog="capkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="score hypothesis captions against references")
    p.add_argument("--hyp", required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--metrics", default="bleu4,rouge_l,cider_d")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ensemble", help="word- and sentence-level caption ensembling")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", action="append", default=[])
    p.add_argument("--checkpoint", action="append", default=[])
    p.add_argument("--features-dir")
    p.add_argument("--subtitles")
    p.add_argument("--max-len", type=int, default=20)
    p.add_argument("--k", type=int, default=DEFAULT_SEGMENTS)
    p.set_defaults(func=_cmd_ensemble)

    p = sub.add_parser("sample", help="print sampled frame indices")
    p.add_argument("--n-frames", type=int, required=True)
    p.add_argument("--k", type=int, default=DEFAULT_SEGMENTS)
    p.add_argument("--mode", choices=["train", "test"], required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("fuse", help="sample and concatenate feature files")
    p.add_argument("--features", nargs="+", required=True)
    p.add_argument("--k", type=int, default=DEFAULT_SEGMENTS)
    p.add_argument("--mode", choices=["train", "test"], required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--shared-seed", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser("windows", help="print the sliding clip schedule")
    p.add_argument("--duration", type=float, required=True)
    p.add_argument("--window", type=float, default=DEFAULT_WINDOW_S)
    p.add_argument("--stride", type=float, default=DEFAULT_STRIDE_S)
    p.set_defaults(func=_cmd_windows)

    p = sub.add_parser("train", help="train the toy captioner (xe or scst stage)")
    p.add_argument("--stage", choices=["xe", "scst"], required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--curve")
    p.add_argument("--init")
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--samples-per-video", type=int, default=1)
    p.add_argument("--max-len", type=int, default=16)
    p.add_argument("--k", type=int, default=8)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("decode", help="decode captions from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features-dir", required=True)
    p.add_argument("--subtitles")
    p.add_argument("--mode", choices=["greedy", "sample"], default="greedy")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-len", type=int, default=16)
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("synth", help="materialize the bundled synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--videos", type=int, default=synthetic.DEFAULT_VIDEOS)
    p.add_argument("--vocab-words", type=int, default=synthetic.DEFAULT_VOCAB_WORDS)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--noise", type=float, default=0.05)
    p.set_defaults(func=_cmd_synth)

    return parser


def main(argv=None) -> int:
    started = time.perf_counter()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args, started)
    except _ID_ERRORS as e:
        _note(f"capkit {args.command}: id mismatch: {e}")
        return EXIT_ID_MISMATCH
    except _IO_ERRORS as e:
        _note(f"capkit {args.command}: {e}")
        return EXIT_IO
    except _ARG_ERRORS as e:
        _note(f"capkit {args.command}: invalid arguments: {e}")
        return EXIT_BAD_ARGS


if __name__ == "__main__":
    sys.exit(main())
