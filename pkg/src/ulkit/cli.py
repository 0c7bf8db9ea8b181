"""Command-line entrypoint wiring the modules into reproducible pipelines.

Subcommands: synth, train, generate, evaluate, dedup, scan, bench.  Every
run that writes artifacts also writes a ``<output>.manifest.json`` with
the resolved arguments, seed and toolkit version; re-running the same
subcommand with the recorded arguments reproduces the artifacts bitwise
(timing fields in training logs and the manifests themselves are the only
wall-clock-dependent bytes).

Exit codes: 0 on success, 1 on data/configuration errors, 2 on usage
errors (from argument parsing).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import __version__
from ._rng import substream
from .corpus import (CorpusError, SynthConfig, load_blocklist, load_corpus,
                     save_corpus, synth_corpus)
from .candidates import block_candidates, compile_blocklist, encode_blocklist, naive_block_scan
from .decoding import DecodeConfig
from .dedup import DedupConfig, dedup_text, load_embeddings, split_sentences
from .metrics import corpus_seq_rep, evaluate_model, generate_outputs, report_table
from .model import (ModelConfig, TrainPlan, TrainingDiverged, load_checkpoint,
                    save_checkpoint, train)
from .objectives import ObjectiveConfig
from .tokenizer import Vocab, build_vocab, decode, encode, load_vocab, save_vocab


def _write_manifest(args: argparse.Namespace, outputs: list[str], started: float) -> None:
    manifest = {
        "subcommand": args.command,
        "args": {k: v for k, v in vars(args).items() if k not in ("command", "func")},
        "seed": getattr(args, "seed", None),
        "outputs": outputs,
        "version": __version__,
        "wall_time_s": time.time() - started,
    }
    path = Path(outputs[0]).with_name(Path(outputs[0]).name + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n", encoding="utf-8")


def _load_or_build_vocab(path: str, corpus, max_vocab: int, casefold: bool) -> Vocab:
    """Reuse the vocabulary file if it exists; otherwise build and write it."""
    if Path(path).exists():
        return load_vocab(path)
    vocab = build_vocab(corpus, max_vocab, casefold=casefold)
    save_vocab(vocab, path)
    return vocab


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    started = time.time()
    blocklist = load_blocklist(args.blocklist) if args.blocklist else []
    config = SynthConfig(num_samples=args.num_samples, vocab_size=args.vocab_size,
                         target_len=args.target_len, repeat_rate=args.repeat_rate,
                         blocklist_plant_rate=args.plant_rate, seed=args.seed)
    samples = synth_corpus(config, blocklist)
    save_corpus(samples, args.out)
    _write_manifest(args, [args.out], started)
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def cmd_train(args) -> int:
    started = time.time()
    corpus = load_corpus(args.corpus, strict=args.strict)
    if not corpus:
        raise CorpusError(f"no usable samples in {args.corpus}")
    vocab = _load_or_build_vocab(args.vocab, corpus, args.max_vocab, args.casefold)
    init_from = load_checkpoint(args.init_from) if args.init_from else None
    config = None
    if init_from is None:
        config = ModelConfig(vocab_size=vocab.size, embed_dim=args.embed_dim,
                             context_len=args.context_len, num_blocks=args.num_blocks,
                             seed=args.seed)
    plan = TrainPlan(
        objective=args.objective,
        config=ObjectiveConfig(alpha=args.alpha, beta=args.beta,
                               seq_ngram=args.seq_ngram, mix_prob=args.mix_prob,
                               block_n_min=args.n_min, block_n_max=args.n_max),
        epochs=args.epochs, batch_size=args.batch_size, learning_rate=args.lr,
        init_from=init_from, token_step_objective=args.token_step,
        decode_len=args.decode_len,
    )
    blocklist = load_blocklist(args.blocklist) if args.blocklist else None
    params, log = train(corpus, vocab, plan, blocklist=blocklist, config=config,
                        seed=args.seed, casefold=args.casefold)
    save_checkpoint(params, args.out)
    log_path = args.log or args.out + ".log.jsonl"
    log.to_jsonl(log_path)
    _write_manifest(args, [args.out, log_path], started)
    timing = ", ".join(f"{k}: {v:.2f}s/100 steps"
                       for k, v in log.seconds_per_100_steps().items())
    print(f"trained {log.step_count()} steps "
          f"(final mean loss {log.mean_loss(last=50):.4f}); {timing}")
    return 0


def _decode_config(args) -> DecodeConfig:
    strategy = "greedy" if args.beam == 1 else "beam"
    return DecodeConfig(strategy=strategy, beam_size=args.beam, max_len=args.max_len)


def cmd_generate(args) -> int:
    started = time.time()
    params = load_checkpoint(args.model)
    vocab = load_vocab(args.vocab)
    corpus = load_corpus(args.corpus, strict=args.strict)
    outputs = generate_outputs(params, corpus, vocab, _decode_config(args),
                               casefold=args.casefold)
    with open(args.out, "w", encoding="utf-8") as fh:
        for sample, out in zip(corpus, outputs):
            record = {"bullet_points": sample.bullet_points,
                      "paragraph": decode(out, vocab)}
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    _write_manifest(args, [args.out], started)
    for sample, out in list(zip(corpus, outputs))[:args.preview]:
        print(f"outline:   {sample.bullet_points}")
        print(f"generated: {decode(out, vocab)}")
        print()
    print(f"wrote {len(outputs)} generations to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    started = time.time()
    corpus = load_corpus(args.corpus, strict=args.strict)
    if not corpus:
        raise CorpusError(f"no usable samples in {args.corpus}")
    vocab = load_vocab(args.vocab)
    automaton = None
    if args.blocklist:
        automaton = encode_blocklist(load_blocklist(args.blocklist), vocab,
                                     casefold=args.casefold,
                                     n_min=args.n_min, n_max=args.n_max)
    reports = {}
    for model_path in args.model:
        params = load_checkpoint(model_path)
        label = Path(model_path).stem
        reports[label] = evaluate_model(params, corpus, vocab,
                                        decode=_decode_config(args),
                                        window=args.window, automaton=automaton,
                                        casefold=args.casefold)
    table = report_table(reports, window=args.window)
    print(table)
    payload = {label: r.as_dict() for label, r in reports.items()}
    Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    _write_manifest(args, [args.out], started)
    return 0


def _dedup_out_path(out: str, threshold: float, many: bool) -> Path:
    path = Path(out)
    if not many:
        return path
    return path.with_name(f"{path.stem}.t{threshold:g}{path.suffix}")


def cmd_dedup(args) -> int:
    started = time.time()
    corpus = load_corpus(args.corpus, strict=args.strict)
    if not corpus:
        raise CorpusError(f"no usable samples in {args.corpus}")
    thresholds = args.threshold or [0.91]
    vocab = build_vocab([s.paragraph for s in corpus], args.max_vocab,
                        casefold=args.casefold)
    file_embeddings = load_embeddings(args.embeddings) if args.embeddings else None

    rows = [("none", *_dedup_stats(corpus, [s.paragraph for s in corpus], vocab), 0)]
    outputs = []
    for threshold in thresholds:
        config = DedupConfig(threshold=threshold, keep=args.keep)
        deduped_texts = []
        drop_lines = []
        cursor = 0
        for i, sample in enumerate(corpus):
            sentences = split_sentences(sample.paragraph)
            emb = None
            if file_embeddings is not None:
                emb = file_embeddings[cursor:cursor + len(sentences)]
                if len(emb) != len(sentences):
                    raise ValueError(f"embedding file ran out at paragraph {i}")
                cursor += len(sentences)
            text, drops = dedup_text(sample.paragraph, vocab, config, embeddings=emb,
                                     casefold=args.casefold)
            deduped_texts.append(text)
            drop_lines += [f"{i}\t{d.dropped}\t{d.similarity:.6f}\t{d.kept}"
                           for d in drops]
        out_path = _dedup_out_path(args.out, threshold, len(thresholds) > 1)
        with open(out_path, "w", encoding="utf-8") as fh:
            for sample, text in zip(corpus, deduped_texts):
                fh.write(json.dumps({"bullet_points": sample.bullet_points,
                                     "paragraph": text}, ensure_ascii=False) + "\n")
        report_path = Path(str(out_path) + ".drops.tsv")
        report_path.write_text("".join(line + "\n" for line in drop_lines),
                               encoding="utf-8")
        outputs += [str(out_path), str(report_path)]
        rows.append((f"{threshold:g}", *_dedup_stats(corpus, deduped_texts, vocab),
                     len(drop_lines)))

    header = ("threshold", "seq-rep-1", "seq-rep-4", "dropped")
    widths = [max(len(str(r[i])) for r in [header, *rows]) for i in range(4)]
    print("  ".join(h.ljust(widths[i]) for i, h in enumerate(header)))
    for row in rows:
        print("  ".join(str(c).ljust(widths[i]) for i, c in enumerate(row)))
    _write_manifest(args, outputs, started)
    return 0


def _dedup_stats(corpus, texts, vocab) -> tuple[str, str]:
    encoded = [encode(t, vocab) for t in texts]
    return (f"{corpus_seq_rep(encoded, 1):.4f}", f"{corpus_seq_rep(encoded, 4):.4f}")


def cmd_scan(args) -> int:
    started = time.time()
    corpus = load_corpus(args.corpus, strict=args.strict)
    phrases = load_blocklist(args.blocklist)
    if args.vocab and Path(args.vocab).exists():
        vocab = load_vocab(args.vocab)
    else:
        vocab = build_vocab([s.paragraph for s in corpus] + phrases, args.max_vocab,
                            casefold=args.casefold)
    automaton = encode_blocklist(phrases, vocab, casefold=args.casefold,
                                 n_min=args.n_min, n_max=args.n_max)
    lines = []
    for i, sample in enumerate(corpus):
        ids = encode(sample.paragraph, vocab, casefold=args.casefold)
        for start, length in sorted(automaton.finditer(ids)):
            phrase = decode(ids[start:start + length], vocab)
            lines.append(f"{i}\t{start}\t{length}\t{phrase}")
    body = "".join(line + "\n" for line in lines)
    if args.out:
        Path(args.out).write_text(body, encoding="utf-8")
        _write_manifest(args, [args.out], started)
        print(f"wrote {len(lines)} matches to {args.out}")
    else:
        sys.stdout.write(body)
    return 0


def cmd_bench(args) -> int:
    started = time.time()
    rng = substream(args.seed, "bench")
    stream = tuple(int(t) for t in rng.integers(0, args.vocab_size, size=args.stream_len))
    phrases = set()
    while len(phrases) < args.num_phrases:
        length = int(rng.integers(args.n_min, args.n_max + 1))
        phrases.add(tuple(int(t) for t in rng.integers(0, args.vocab_size, size=length)))
    phrases = sorted(phrases)

    t0 = time.perf_counter()
    naive_sched = naive_block_scan(stream, phrases, n_min=args.n_min, n_max=args.n_max)
    naive_s = time.perf_counter() - t0

    t0 = time.perf_counter()
    automaton = compile_blocklist(phrases, n_min=args.n_min, n_max=args.n_max)
    compile_s = time.perf_counter() - t0

    runs = []
    for _ in range(args.repeats):
        t0 = time.perf_counter()
        fast_sched = block_candidates(stream, automaton)
        runs.append(time.perf_counter() - t0)
    fast_s = min(runs)

    equal = naive_sched.sets == fast_sched.sets
    speedup = naive_s / fast_s if fast_s > 0 else float("inf")
    print(f"stream {args.stream_len} tokens, {len(phrases)} phrases, "
          f"vocab {args.vocab_size}, lengths [{args.n_min}, {args.n_max}]")
    print(f"naive scan:            {naive_s:.4f} s")
    print(f"automaton compile:     {compile_s:.4f} s")
    print(f"automaton extraction:  {fast_s:.4f} s")
    print(f"speedup (naive/automaton): {speedup:.1f}x")
    print(f"schedules equal: {'yes' if equal else 'NO'}")
    if args.out:
        payload = {"stream_len": args.stream_len, "num_phrases": len(phrases),
                   "vocab_size": args.vocab_size, "n_min": args.n_min,
                   "n_max": args.n_max, "naive_seconds": naive_s,
                   "compile_seconds": compile_s, "automaton_seconds": fast_s,
                   "speedup": speedup, "schedules_equal": equal}
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        _write_manifest(args, [args.out], started)
    if not equal:
        raise ValueError("automaton and naive scan disagree")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_common(p, *, seed=True, strict=True, casefold=True):
    if seed:
        p.add_argument("--seed", type=int, default=0, help="master random seed")
    if strict:
        p.add_argument("--strict", action="store_true",
                       help="abort on malformed corpus lines instead of skipping")
    if casefold:
        p.add_argument("--casefold", action="store_true",
                       help="case-fold text end-to-end")


def _add_decode(p):
    p.add_argument("--beam", type=int, default=5, help="beam size (1 = greedy)")
    p.add_argument("--max-len", type=int, default=64, help="maximum generated tokens")


def _add_block_bounds(p):
    p.add_argument("--n-min", type=int, default=2, help="minimum blocklist phrase length")
    p.add_argument("--n-max", type=int, default=10, help="maximum blocklist phrase length")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ulkit",
        description="unlikelihood-training toolkit: repetition suppression and "
                    "blocklist content moderation for small language models")
    parser.add_argument("--version", action="version", version=f"ulkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("synth", formatter_class=fmt,
                       help="generate a synthetic outline-to-paragraph corpus")
    p.add_argument("--num-samples", type=int, required=True)
    p.add_argument("--vocab-size", type=int, default=120)
    p.add_argument("--target-len", type=int, default=48)
    p.add_argument("--repeat-rate", type=float, default=0.25,
                   help="chance a paragraph contains a duplicated sentence")
    p.add_argument("--plant-rate", type=float, default=0.0,
                   help="chance a paragraph contains a planted blocklist phrase")
    p.add_argument("--blocklist", help="phrase file for planting")
    p.add_argument("--out", required=True)
    _add_common(p, strict=False, casefold=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", formatter_class=fmt, help="train a model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True,
                   help="vocabulary file (loaded if present, else built and written)")
    p.add_argument("--objective", choices=("mle", "token_ul", "seq_ul", "seq_ul_block"),
                   default="mle")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=10.0)
    p.add_argument("--seq-ngram", type=int, default=4)
    p.add_argument("--mix-prob", type=float, default=0.5)
    p.add_argument("--token-step", choices=("mle", "token_ul"), default=None,
                   help="objective of non-sequence-level steps in mixed training")
    p.add_argument("--decode-len", type=int, default=32)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--embed-dim", type=int, default=64)
    p.add_argument("--context-len", type=int, default=128)
    p.add_argument("--num-blocks", type=int, default=1)
    p.add_argument("--max-vocab", type=int, default=2000)
    p.add_argument("--init-from", help="checkpoint to stage from")
    p.add_argument("--blocklist", help="phrase file (required for seq_ul_block)")
    p.add_argument("--log", help="training log path (default: <out>.log.jsonl)")
    p.add_argument("--out", required=True)
    _add_block_bounds(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", formatter_class=fmt,
                       help="decode paragraphs for a corpus of outlines")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--preview", type=int, default=0,
                   help="print the first N generations")
    p.add_argument("--out", required=True)
    _add_decode(p)
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", formatter_class=fmt,
                       help="run the metric suite over one or more models")
    p.add_argument("--model", action="append", required=True,
                   help="checkpoint path (repeat for side-by-side rows)")
    p.add_argument("--vocab", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--window", type=int, default=128)
    p.add_argument("--blocklist", help="count outputs containing these phrases")
    p.add_argument("--out", required=True)
    _add_decode(p)
    _add_block_bounds(p)
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("dedup", formatter_class=fmt,
                       help="remove near-duplicate sentences from paragraphs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--threshold", type=float, action="append",
                   help="similarity threshold (repeat to sweep; default 0.91)")
    p.add_argument("--keep", choices=("first", "last"), default="first")
    p.add_argument("--embeddings", help="sentence embedding file (default: toy embedder)")
    p.add_argument("--max-vocab", type=int, default=10000)
    p.add_argument("--out", required=True)
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_dedup)

    p = sub.add_parser("scan", formatter_class=fmt,
                       help="report blocklist matches as (sample, start, length, phrase)")
    p.add_argument("--corpus", required=True)
    p.add_argument("--blocklist", required=True)
    p.add_argument("--vocab", help="vocabulary file (default: built from corpus+phrases)")
    p.add_argument("--max-vocab", type=int, default=10000)
    p.add_argument("--allow-unigram-blocks", action="store_true",
                   help="admit single-token phrases (sets minimum length to 1)")
    p.add_argument("--out")
    _add_block_bounds(p)
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("bench", formatter_class=fmt,
                       help="time naive scanning vs the automaton on a random stream")
    p.add_argument("--stream-len", type=int, default=10000)
    p.add_argument("--num-phrases", type=int, default=1000)
    p.add_argument("--vocab-size", type=int, default=50)
    p.add_argument("--repeats", type=int, default=3,
                   help="automaton timing repeats (best of)")
    p.add_argument("--out")
    _add_block_bounds(p)
    _add_common(p, strict=False, casefold=False)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "allow_unigram_blocks", False):
        args.n_min = 1
    try:
        return args.func(args)
    except (CorpusError, TrainingDiverged, ValueError, OSError) as exc:
        print(f"ulkit {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
