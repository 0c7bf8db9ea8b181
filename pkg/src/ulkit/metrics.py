"""Evaluation metrics, each paired with an independent brute-force twin.

The teacher-forced metrics (perplexity, next-token accuracy, rep/wrep,
unique predictions) run the model over gold paragraphs; the generation
metrics (duplicate n-gram fractions, unique output tokens, ROUGE,
blocklist hit counts) score free-running decodes.  Every non-trivial
metric has a ``naive_*`` counterpart written the dumb way on purpose:
equality between the pair on random inputs is part of the test contract.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._validation import check_positive, check_token_sequence
from .candidates import BlocklistAutomaton
from .corpus import CorpusSample
from .decoding import DecodeConfig, generate
from .model import ModelParams, forward_all, pack_example, pack_prompt
from .tokenizer import EOS_ID, Vocab, encode


# ---------------------------------------------------------------------------
# teacher-forced repetition statistics
# ---------------------------------------------------------------------------

def rep_stats(gold: Sequence[int], preds: Sequence[int], window: int) -> tuple[float, float]:
    """Fractions of predictions found in the previous ``window`` gold tokens.

    Returns ``(rep, wrep)``: ``rep`` counts predictions occurring anywhere in
    the ``window`` gold tokens before their position; ``wrep`` additionally
    requires the prediction to differ from the gold token at the position.
    The denominator is the full prediction count (position 0 can never hit:
    its window is empty).
    """
    gold = check_token_sequence(gold, name="gold")
    preds = check_token_sequence(preds, name="preds")
    if len(gold) != len(preds):
        raise ValueError(f"length mismatch: {len(gold)} gold vs {len(preds)} predictions")
    check_positive(window, "window")
    if not gold:
        return 0.0, 0.0
    rep = wrep = 0
    recent: Counter[int] = Counter()
    for t, (g, p) in enumerate(zip(gold, preds)):
        if recent[p] > 0:
            rep += 1
            if p != g:
                wrep += 1
        recent[g] += 1
        if t - window >= 0:
            old = gold[t - window]
            recent[old] -= 1
    return rep / len(gold), wrep / len(gold)


def naive_rep_stats(gold, preds, window) -> tuple[float, float]:
    """Twin of :func:`rep_stats` via explicit window slices."""
    gold, preds = tuple(gold), tuple(preds)
    rep = wrep = 0
    for t in range(len(gold)):
        win = gold[max(0, t - window):t]
        if preds[t] in win:
            rep += 1
            if preds[t] != gold[t]:
                wrep += 1
    n = len(gold)
    return (rep / n, wrep / n) if n else (0.0, 0.0)


# ---------------------------------------------------------------------------
# duplicate n-gram fractions and uniqueness
# ---------------------------------------------------------------------------

def seq_rep(seq: Sequence[int], n: int) -> float:
    """One minus the distinct/total n-gram ratio; 0 when no n-gram exists."""
    ids = check_token_sequence(seq, name="seq")
    check_positive(n, "n")
    total = len(ids) - n + 1
    if total < 1:
        return 0.0
    distinct = len({ids[s:s + n] for s in range(total)})
    return 1.0 - distinct / total


def naive_seq_rep(seq, n) -> float:
    """Twin of :func:`seq_rep`: counts positions whose n-gram occurred earlier."""
    ids = tuple(seq)
    total = len(ids) - n + 1
    if total < 1:
        return 0.0
    repeats = 0
    for s in range(total):
        for s2 in range(s):
            if ids[s2:s2 + n] == ids[s:s + n]:
                repeats += 1
                break
    return repeats / total


def corpus_seq_rep(outputs: Sequence[Sequence[int]], n: int) -> float:
    """Mean duplicate n-gram fraction over generated outputs."""
    if not outputs:
        return 0.0
    return float(np.mean([seq_rep(o, n) for o in outputs]))


def uniq_seq(outputs: Sequence[Sequence[int]]) -> int:
    """Number of distinct token ids across all outputs."""
    seen: set[int] = set()
    for out in outputs:
        seen.update(check_token_sequence(out, name="output"))
    return len(seen)


def naive_uniq_seq(outputs) -> int:
    flat = sorted(int(t) for out in outputs for t in out)
    count = 0
    for i, tok in enumerate(flat):
        if i == 0 or tok != flat[i - 1]:
            count += 1
    return count


# ---------------------------------------------------------------------------
# ROUGE
# ---------------------------------------------------------------------------

def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _lcs_len(a: tuple[int, ...], b: tuple[int, ...]) -> int:
    # single-row dynamic program
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge(candidate: Sequence[int], reference: Sequence[int], variant) -> float:
    """ROUGE F1 over token ids; ``variant`` is 1, 2 or "L".

    Variants 1 and 2 use clipped n-gram counts; "L" uses the longest common
    subsequence.  Returns 0 when either side has no n-grams to offer.
    """
    cand = check_token_sequence(candidate, name="candidate")
    ref = check_token_sequence(reference, name="reference")
    if not ref:
        raise ValueError("reference must be non-empty")
    if variant in (1, 2):
        n = variant
        cand_grams = Counter(cand[s:s + n] for s in range(len(cand) - n + 1))
        ref_grams = Counter(ref[s:s + n] for s in range(len(ref) - n + 1))
        if not cand_grams or not ref_grams:
            return 0.0
        overlap = sum((cand_grams & ref_grams).values())
        return _f1(overlap / sum(cand_grams.values()), overlap / sum(ref_grams.values()))
    if str(variant).upper() == "L":
        if not cand:
            return 0.0
        lcs = _lcs_len(cand, ref)
        return _f1(lcs / len(cand), lcs / len(ref))
    raise ValueError(f"unknown ROUGE variant {variant!r}")


def naive_rouge(candidate, reference, variant) -> float:
    """Twin of :func:`rouge` with loop-based clipping and recursive LCS."""
    cand, ref = tuple(candidate), tuple(reference)
    if not ref:
        raise ValueError("reference must be non-empty")
    if variant in (1, 2):
        n = variant
        cand_grams = [cand[s:s + n] for s in range(len(cand) - n + 1)]
        ref_grams = [ref[s:s + n] for s in range(len(ref) - n + 1)]
        if not cand_grams or not ref_grams:
            return 0.0
        overlap = 0
        remaining = list(ref_grams)
        for gram in cand_grams:
            if gram in remaining:
                remaining.remove(gram)
                overlap += 1
        return _f1(overlap / len(cand_grams), overlap / len(ref_grams))
    if not cand:
        return 0.0

    from functools import lru_cache

    @lru_cache(maxsize=None)
    def lcs(i: int, j: int) -> int:
        if i == len(cand) or j == len(ref):
            return 0
        if cand[i] == ref[j]:
            return 1 + lcs(i + 1, j + 1)
        return max(lcs(i + 1, j), lcs(i, j + 1))

    length = lcs(0, 0)
    return _f1(length / len(cand), length / len(ref))


# ---------------------------------------------------------------------------
# blocklist hits
# ---------------------------------------------------------------------------

def blocklist_output_count(outputs: Sequence[Sequence[int]],
                           automaton: BlocklistAutomaton) -> int:
    """Number of outputs containing at least one blocklist match."""
    return sum(1 for out in outputs if automaton.has_match(tuple(out)))


def naive_blocklist_output_count(outputs, phrases) -> int:
    phrases = [tuple(p) for p in phrases]
    count = 0
    for out in outputs:
        ids = tuple(out)
        hit = False
        for phrase in phrases:
            for s in range(len(ids) - len(phrase) + 1):
                if ids[s:s + len(phrase)] == phrase:
                    hit = True
                    break
            if hit:
                break
        count += hit
    return count


# ---------------------------------------------------------------------------
# model evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LmMetrics:
    """Teacher-forced metrics over an evaluation corpus."""

    ppl: float
    acc: float
    rep: float
    wrep: float
    uniq: int
    window: int
    token_count: int


def lm_metrics(params: ModelParams, samples: Sequence[CorpusSample], vocab: Vocab,
               window: int = 128, casefold: bool = False) -> LmMetrics:
    """Teacher-forced pass over gold paragraphs.

    Predictions are argmax next tokens given the outline and the gold
    paragraph prefix; rep/wrep windows look back over gold paragraph tokens
    only.  Perplexity is the exponential of the mean per-token negative
    log-likelihood over the same positions.
    """
    if not samples:
        raise ValueError("empty evaluation corpus")
    if window > params.config.context_len:
        raise ValueError("window exceeds the model context length")
    nll_sum = 0.0
    hits = rep_hits = wrep_hits = 0
    total = 0
    predicted: set[int] = set()
    for sample in samples:
        tokens, loss_start = pack_example(vocab, sample, params.config.context_len,
                                          casefold=casefold)
        gold = tokens[loss_start:]
        if gold and gold[-1] == EOS_ID:
            gold = gold[:-1]
        if not gold:
            continue
        dists, _ = forward_all(params, tokens)
        rows = dists[loss_start - 1:loss_start - 1 + len(gold)]
        p_gold = rows[np.arange(len(gold)), np.asarray(gold, dtype=np.intp)]
        nll_sum += -float(np.sum(np.log(p_gold)))
        preds = tuple(int(t) for t in np.argmax(rows, axis=1))
        predicted.update(preds)
        hits += sum(p == g for p, g in zip(preds, gold))
        rep, wrep = rep_stats(gold, preds, window)
        rep_hits += rep * len(gold)
        wrep_hits += wrep * len(gold)
        total += len(gold)
    if total == 0:
        raise ValueError("evaluation corpus has no scorable paragraph tokens")
    return LmMetrics(ppl=math.exp(nll_sum / total), acc=hits / total,
                     rep=rep_hits / total, wrep=wrep_hits / total,
                     uniq=len(predicted), window=window, token_count=total)


def generate_outputs(params: ModelParams, samples: Sequence[CorpusSample],
                     vocab: Vocab, decode: DecodeConfig,
                     casefold: bool = False) -> list[tuple[int, ...]]:
    """Decode one continuation per sample, conditioned on its outline."""
    outputs = []
    for sample in samples:
        prefix = pack_prompt(vocab, sample.bullet_points, casefold=casefold)
        outputs.append(generate(params, prefix, decode))
    return outputs


@dataclass(frozen=True)
class MetricsReport:
    """All in-scope metrics for one (model, corpus) evaluation run."""

    ppl: float
    acc: float
    rep: dict[int, float]
    wrep: dict[int, float]
    seq_rep: dict[int, float]
    uniq: int
    uniq_seq: int
    rouge1_f: float
    rouge2_f: float
    rougeL_f: float
    blocklist_output_count: int | None
    num_samples: int

    def __post_init__(self):
        if self.ppl < 1.0:
            raise ValueError(f"perplexity below 1: {self.ppl}")
        fractions = {"acc": self.acc, "rouge1_f": self.rouge1_f,
                     "rouge2_f": self.rouge2_f, "rougeL_f": self.rougeL_f,
                     **{f"rep-{l}": v for l, v in self.rep.items()},
                     **{f"wrep-{l}": v for l, v in self.wrep.items()},
                     **{f"seq-rep-{n}": v for n, v in self.seq_rep.items()}}
        for name, value in fractions.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} outside [0, 1]: {value}")
        for l, value in self.wrep.items():
            if value > self.rep[l] + 1e-12:
                raise ValueError(f"wrep-{l} exceeds rep-{l}")

    def as_dict(self) -> dict:
        return {
            "ppl": self.ppl, "acc": self.acc,
            "rep": {str(k): v for k, v in self.rep.items()},
            "wrep": {str(k): v for k, v in self.wrep.items()},
            "seq_rep": {str(k): v for k, v in self.seq_rep.items()},
            "uniq": self.uniq, "uniq_seq": self.uniq_seq,
            "rouge1_f": self.rouge1_f, "rouge2_f": self.rouge2_f,
            "rougeL_f": self.rougeL_f,
            "blocklist_output_count": self.blocklist_output_count,
            "num_samples": self.num_samples,
        }


def evaluate_model(params: ModelParams, samples: Sequence[CorpusSample], vocab: Vocab,
                   decode: DecodeConfig | None = None, window: int = 128,
                   seq_rep_ns: Sequence[int] = (1, 4),
                   automaton: BlocklistAutomaton | None = None,
                   casefold: bool = False,
                   outputs: Sequence[Sequence[int]] | None = None) -> MetricsReport:
    """Full metric sweep: teacher-forced pass plus free-running generation.

    Pass ``outputs`` to reuse pre-computed generations (they must align with
    ``samples``); otherwise each sample's outline is decoded with ``decode``.
    """
    lm = lm_metrics(params, samples, vocab, window=window, casefold=casefold)
    if outputs is None:
        outputs = generate_outputs(params, samples, vocab, decode or DecodeConfig(),
                                   casefold=casefold)
    elif len(outputs) != len(samples):
        raise ValueError("outputs do not align with samples")
    references = [encode(s.paragraph, vocab, casefold=casefold) for s in samples]
    rouge_scores = {v: float(np.mean([rouge(out, ref, v)
                                      for out, ref in zip(outputs, references)]))
                    for v in (1, 2, "L")}
    return MetricsReport(
        ppl=lm.ppl, acc=lm.acc,
        rep={window: lm.rep}, wrep={window: lm.wrep},
        seq_rep={n: corpus_seq_rep(outputs, n) for n in seq_rep_ns},
        uniq=lm.uniq, uniq_seq=uniq_seq(outputs),
        rouge1_f=rouge_scores[1], rouge2_f=rouge_scores[2], rougeL_f=rouge_scores["L"],
        blocklist_output_count=(blocklist_output_count(outputs, automaton)
                                if automaton is not None else None),
        num_samples=len(samples),
    )


def report_table(reports: dict[str, MetricsReport], window: int = 128,
                 seq_rep_ns: Sequence[int] = (1, 4)) -> str:
    """Aligned plain-text table, one row per labelled report."""
    headers = ["model", "ppl", "acc", f"rep-{window}", f"wrep-{window}"]
    headers += [f"seq-rep-{n}" for n in seq_rep_ns]
    headers += ["uniq", "uniq-seq", "rouge1-f", "rouge2-f", "rougeL-f", "block-outputs", "n"]
    rows = [headers]
    for label, r in reports.items():
        row = [label, f"{r.ppl:.3f}", f"{r.acc:.3f}",
               f"{r.rep[window]:.3f}", f"{r.wrep[window]:.3f}"]
        row += [f"{r.seq_rep[n]:.3f}" for n in seq_rep_ns]
        row += [str(r.uniq), str(r.uniq_seq), f"{r.rouge1_f:.3f}",
                f"{r.rouge2_f:.3f}", f"{r.rougeL_f:.3f}",
                "-" if r.blocklist_output_count is None else str(r.blocklist_output_count),
                str(r.num_samples)]
        rows.append(row)
    widths = [max(len(row[i]) for row in rows) for i in range(len(headers))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
             for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)
