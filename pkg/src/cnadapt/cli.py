"""Command-line frontend for the adaptation pipeline.

Subcommands: ``topics-train``, ``channel``, ``adapt``, ``ppl``, ``synth``.
Every run is deterministic given its inputs and flags, and emits a JSON
manifest (parameters, inputs, tool version, wall time) alongside its
primary output.  Exit codes: 0 success, 1 computation failure, 2 bad
usage or input.
"""

from __future__ import annotations

import argparse
import glob as globmod
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__, adapt, metrics, synth, topics
from .channel import estimate_channel, load_channel, save_channel
from .corpus import Vocabulary, load_conversation, save_conversation
from .errors import ComputeError, InputError

DEFAULT_REL_FLOOR = 0.05
DEFAULT_MAX_WORDS = 10
DEFAULT_THRESHOLDS = (1, 2, 3, 4, 5)


def _write_manifest(path, subcommand, inputs, params, seed, wall_time):
    doc = {
        "subcommand": subcommand,
        "inputs": inputs,
        "params": params,
        "seed": seed,
        "version": __version__,
        "wall_time_s": round(wall_time, 6),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _format_weight(x: float) -> str:
    return f"{x:.12g}"


def write_lambda_file(path, cid, labels, lam) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"LAMBDA {cid} {len(labels)}\n")
        for label, w in zip(labels, lam):
            fh.write(f"{label} {_format_weight(w)}\n")


def write_unigram_file(path, vocab, probs) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"UNIGRAM {len(vocab)}\n")
        for wid, word in enumerate(vocab.words):
            fh.write(f"{word} {probs[wid]:.12g}\n")


def load_unigram_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("UNIGRAM "):
        raise InputError(f"{path}: expected 'UNIGRAM <V>' header")
    try:
        count = int(lines[0].split()[1])
    except (IndexError, ValueError):
        raise InputError(f"{path}: bad header {lines[0]!r}") from None
    if len(lines) - 1 != count:
        raise InputError(f"{path}: header declares {count} words, found {len(lines) - 1}")
    vocab = Vocabulary()
    probs = np.empty(count)
    for i, line in enumerate(lines[1:]):
        parts = line.split()
        if len(parts) != 2:
            raise InputError(f"{path}: bad line {line!r}")
        if vocab.add(parts[0]) != i:
            raise InputError(f"{path}: duplicate word {parts[0]!r}")
        try:
            probs[i] = float(parts[1])
        except ValueError:
            raise InputError(f"{path}: bad probability {parts[1]!r}") from None
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-6:
        raise InputError(f"{path}: probabilities do not sum to 1")
    return vocab, probs


def cmd_topics_train(args):
    root = args.corpus_dir
    if not os.path.isdir(root):
        raise InputError(f"corpus directory {root!r} does not exist")
    labels = sorted(d for d in os.listdir(root) if os.path.isdir(os.path.join(root, d)))
    if not labels:
        raise InputError(f"no topic subdirectories under {root!r}")
    corpus = []
    for label in labels:
        tokens = []
        folder = os.path.join(root, label)
        for name in sorted(os.listdir(folder)):
            fpath = os.path.join(folder, name)
            if os.path.isfile(fpath):
                with open(fpath, "r", encoding="utf-8") as fh:
                    tokens.extend(fh.read().split())
        if not tokens:
            raise InputError(f"topic folder {folder!r} has no tokens")
        corpus.append((label, tokens))
    vocab = Vocabulary()
    tm = topics.train_topic_model(corpus, vocab)
    topics.save_topic_model(tm, args.out_model)
    print(f"trained {tm.num_topics} topics over {len(vocab)} words -> {args.out_model}")
    return args.out_model + ".manifest.json", {
        "inputs": {"corpus_dir": root},
        "params": {"topics": tm.num_topics, "vocab": len(vocab)},
        "seed": None,
    }


def cmd_channel(args):
    paths = sorted(globmod.glob(args.cnet_glob))
    if not paths:
        raise InputError(f"no files match {args.cnet_glob!r}")
    vocab = Vocabulary()
    convs = [load_conversation(p, vocab) for p in paths]
    cm = estimate_channel(convs, args.rel_floor, args.max_words)
    save_channel(cm, vocab, args.out_channel)
    print(f"estimated channel rows for {len(cm.rows)} words -> {args.out_channel}")
    return args.out_channel + ".manifest.json", {
        "inputs": {"cnet_glob": args.cnet_glob, "files": paths},
        "params": {"rel_floor": args.rel_floor, "max_words": args.max_words},
        "seed": None,
    }


def _adapt_one(cnet_path, topic_model_path, channel_path, cfg_kwargs, out_lambda, out_unigram):
    tm = topics.load_topic_model(topic_model_path)
    cm = load_channel(channel_path, tm.vocab) if channel_path else None
    conv = load_conversation(cnet_path, tm.vocab)
    cfg = adapt.EstimatorConfig(**cfg_kwargs)
    result = adapt.fit(conv, tm, cfg, cm)
    write_lambda_file(out_lambda, conv.cid, tm.labels, result.weights.lam)
    diag = {
        "conversation": conv.cid,
        "variant": cfg.variant,
        "map_strength": cfg.map_strength,
        "iterations": result.iterations,
        "converged": result.converged,
        "loglik_trace": result.loglik_trace,
    }
    with open(out_lambda + ".diag.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(diag, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if out_unigram:
        write_unigram_file(out_unigram, tm.vocab, adapt.adapted_unigram(tm, result.weights))
    return conv.cid, result.iterations, result.converged


def cmd_adapt(args):
    if args.variant in ("conf-1best", "conf-tf") and not args.channel:
        raise InputError(f"variant {args.variant} requires --channel")
    if args.channel and not os.path.isfile(args.channel):
        raise InputError(f"channel file {args.channel!r} does not exist")
    if not os.path.exists(args.cnet):
        raise InputError(f"input {args.cnet!r} does not exist")
    cfg_kwargs = {
        "variant": args.variant,
        "map_strength": args.map_strength,
        "max_iters": args.max_iters,
        "rel_tol": args.tol,
    }

    if os.path.isdir(args.cnet):
        paths = sorted(globmod.glob(os.path.join(args.cnet, "*.cnet")))
        if not paths:
            raise InputError(f"no .cnet files under {args.cnet!r}")
        os.makedirs(args.out_lambda, exist_ok=True)
        jobs = []
        for p in paths:
            stem = os.path.splitext(os.path.basename(p))[0]
            out_l = os.path.join(args.out_lambda, stem + ".lambda")
            out_u = (
                os.path.join(args.out_lambda, stem + ".unigram")
                if args.out_unigram
                else None
            )
            jobs.append((p, args.topic_model, args.channel, cfg_kwargs, out_l, out_u))
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(_adapt_one_star, jobs))
        else:
            results = [_adapt_one(*j) for j in jobs]
        for cid, iters, converged in results:
            print(f"{cid}: {iters} iterations, converged={converged}")
        manifest = os.path.join(args.out_lambda, "manifest.json")
    else:
        if args.out_unigram is True:
            raise InputError("--out-unigram requires a path when adapting a single file")
        cid, iters, converged = _adapt_one(
            args.cnet, args.topic_model, args.channel, cfg_kwargs,
            args.out_lambda, args.out_unigram,
        )
        print(f"{cid}: {iters} iterations, converged={converged}")
        manifest = args.out_lambda + ".manifest.json"
    return manifest, {
        "inputs": {
            "cnet": args.cnet,
            "topic_model": args.topic_model,
            "channel": args.channel,
        },
        "params": cfg_kwargs,
        "seed": None,
    }


def _adapt_one_star(job):
    return _adapt_one(*job)


def cmd_ppl(args):
    vocab, probs = load_unigram_file(args.unigram)
    corpus = metrics.load_reference(args.ref, vocab)
    thresholds = args.thr if args.thr else list(DEFAULT_THRESHOLDS)
    rows = []
    for thr in sorted(set(thresholds)):
        value = metrics.constrained_perplexity(probs, corpus, thr, vocab)
        rows.append(f"ppl\t{thr}\t{value:.12g}")
    rows.append(f"ppl\tinf\t{metrics.perplexity(probs, corpus, vocab):.12g}")
    report = "\n".join(rows) + "\n"
    sys.stdout.write(report)
    manifest = None
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(report)
        manifest = args.out + ".manifest.json"
    return manifest, {
        "inputs": {"unigram": args.unigram, "ref": args.ref},
        "params": {"thr": sorted(set(thresholds))},
        "seed": None,
    }


def _load_synth_spec(path, seed_override):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"synth spec {path}: {exc}") from None
    required = ("topics", "vocab_size", "topic_sharpness", "channel_noise",
                "bins", "bin_width", "seed")
    missing = [k for k in required if k not in doc]
    if missing:
        raise InputError(f"synth spec missing keys: {missing}")
    lam = doc.get("lambda_true")
    spec = synth.SynthSpec(
        topics=int(doc["topics"]),
        vocab_size=int(doc["vocab_size"]),
        lambda_true=np.array(lam, dtype=np.float64) if lam is not None else None,
        topic_sharpness=float(doc["topic_sharpness"]),
        channel_noise=float(doc["channel_noise"]),
        bins=int(doc["bins"]),
        bin_width=int(doc["bin_width"]),
        seed=int(seed_override if seed_override is not None else doc["seed"]),
    )
    return spec, int(doc.get("conversations", 1))


def cmd_synth(args):
    spec, n_conversations = _load_synth_spec(args.spec, args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    truth = None
    for k in range(n_conversations):
        conv, truth = synth.sample_conversation(spec, k)
        save_conversation(conv, truth.vocab, os.path.join(args.out_dir, conv.cid + ".cnet"))
        synth.save_truth(truth, conv, os.path.join(args.out_dir, conv.cid + ".truth"))
        print(f"{conv.cid}: {conv.total_bins} bins")
    topics.save_topic_model(truth.topics, os.path.join(args.out_dir, "topics.model"))
    save_channel(truth.channel, truth.vocab, os.path.join(args.out_dir, "channel.model"))
    return os.path.join(args.out_dir, "manifest.json"), {
        "inputs": {"spec": args.spec},
        "params": {
            "topics": spec.topics, "vocab_size": spec.vocab_size,
            "bins": spec.bins, "bin_width": spec.bin_width,
            "topic_sharpness": spec.topic_sharpness,
            "channel_noise": spec.channel_noise,
            "conversations": n_conversations,
        },
        "seed": spec.seed,
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cnadapt",
        description="Topic-mixture language model adaptation from ASR confusion networks",
    )
    parser.add_argument("--version", action="version", version=f"cnadapt {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("topics-train", help="train smoothed topic unigrams from labeled transcripts")
    p.add_argument("corpus_dir", help="directory of <topic-label>/<file>.txt transcripts")
    p.add_argument("out_model", help="output topic model file")
    p.set_defaults(func=cmd_topics_train)

    p = sub.add_parser("channel", help="estimate the confusion channel from confusion networks")
    p.add_argument("cnet_glob", help="glob of CNET files")
    p.add_argument("out_channel", help="output channel file")
    p.add_argument("--rel-floor", type=float, default=DEFAULT_REL_FLOOR,
                   help="prune cells below this fraction of the bin max posterior")
    p.add_argument("--max-words", type=int, default=DEFAULT_MAX_WORDS,
                   help="keep at most this many cells per bin")
    p.set_defaults(func=cmd_channel)

    p = sub.add_parser("adapt", help="fit conversation topic mixture weights")
    p.add_argument("cnet", help="CNET file, or a directory of *.cnet files")
    p.add_argument("topic_model", help="topic model file")
    p.add_argument("out_lambda", help="output weights file (or directory in directory mode)")
    p.add_argument("--variant", choices=adapt.VARIANTS, default="self-1best")
    p.add_argument("--channel", help="channel file (required for conf-* variants)")
    p.add_argument("--map-strength", type=float, default=0.0,
                   help="Dirichlet prior strength; 0 gives maximum likelihood")
    p.add_argument("--tol", type=float, default=1e-6, help="relative objective tolerance")
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--out-unigram", nargs="?", const=True, default=None,
                   help="also write the adapted unigram (flag value is the path in file mode)")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers in directory mode")
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("ppl", help="perplexity of a unigram model against a reference transcript")
    p.add_argument("unigram", help="unigram model file")
    p.add_argument("ref", help="reference transcript (one utterance per line)")
    p.add_argument("--thr", type=int, action="append",
                   help="content-word count threshold (repeatable; default 1..5)")
    p.add_argument("--out", help="also write the report to this file")
    p.set_defaults(func=cmd_ppl)

    p = sub.add_parser("synth", help="generate synthetic conversations with known truth")
    p.add_argument("spec", help="JSON generator spec")
    p.add_argument("out_dir", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        manifest_path, info = args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ComputeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if manifest_path:
        _write_manifest(
            manifest_path, args.subcommand, info["inputs"], info["params"],
            info["seed"], time.perf_counter() - start,
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
