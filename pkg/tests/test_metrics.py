"""Metrics vs their brute-force twins, plus the worked examples."""

import math

import numpy as np
import pytest

from ulkit.candidates import compile_blocklist
from ulkit.corpus import CorpusSample, SynthConfig, synth_corpus
from ulkit.metrics import (MetricsReport, blocklist_output_count, corpus_seq_rep,
                           evaluate_model, generate_outputs, lm_metrics,
                           naive_blocklist_output_count, naive_rep_stats,
                           naive_rouge, naive_seq_rep, naive_uniq_seq, rep_stats,
                           report_table, rouge, seq_rep, uniq_seq)
from ulkit.decoding import DecodeConfig
from ulkit.model import ModelConfig, ModelParams, init_model, param_count
from ulkit.objectives import likelihood_loss
from ulkit.tokenizer import build_vocab, encode

A, B, C, D = 4, 5, 6, 7


class TestRepStats:
    def test_worked_example(self):
        # gold [a,b,a,c], predictions [b,a,a,a], window 2
        rep, wrep = rep_stats((A, B, A, C), (B, A, A, A), window=2)
        assert rep == 0.75
        assert wrep == 0.5

    def test_perfect_predictor_on_distinct_gold(self):
        rep, wrep = rep_stats((A, B, C, D), (A, B, C, D), window=128)
        assert rep == 0.0 and wrep == 0.0

    def test_matches_naive_twin(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            n = int(rng.integers(1, 40))
            gold = tuple(int(t) for t in rng.integers(0, 6, size=n))
            preds = tuple(int(t) for t in rng.integers(0, 6, size=n))
            window = int(rng.integers(1, 12))
            assert rep_stats(gold, preds, window) == naive_rep_stats(gold, preds, window)

    def test_wrep_bounded_by_rep(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            n = int(rng.integers(1, 30))
            gold = tuple(int(t) for t in rng.integers(0, 4, size=n))
            preds = tuple(int(t) for t in rng.integers(0, 4, size=n))
            rep, wrep = rep_stats(gold, preds, window=8)
            assert 0.0 <= wrep <= rep <= 1.0


class TestSeqRep:
    def test_unigram_example(self):
        assert seq_rep((A, B, A), 1) == pytest.approx(1 - 2 / 3)

    def test_all_distinct_is_zero(self):
        assert seq_rep((A, B, C, D), 1) == 0.0
        assert seq_rep((A, B, C, D), 2) == 0.0

    def test_alternating_four_gram_example(self):
        assert seq_rep((A, B, A, B, A, B), 4) == pytest.approx(1 / 3)

    def test_too_short_sequence_is_zero(self):
        assert seq_rep((A, B), 4) == 0.0
        assert seq_rep((), 1) == 0.0

    def test_matches_naive_twin(self):
        rng = np.random.default_rng(2)
        for _ in range(300):
            seq = tuple(int(t) for t in rng.integers(0, 5, size=rng.integers(0, 40)))
            n = int(rng.integers(1, 6))
            assert seq_rep(seq, n) == pytest.approx(naive_seq_rep(seq, n), abs=1e-12)

    def test_invariant_under_relabeling(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            seq = tuple(int(t) for t in rng.integers(0, 8, size=30))
            perm = rng.permutation(8)
            relabeled = tuple(int(perm[t]) for t in seq)
            for n in (1, 2, 4):
                assert seq_rep(seq, n) == seq_rep(relabeled, n)

    def test_corpus_mean(self):
        outputs = [(A, B, A), (A, B, C)]
        assert corpus_seq_rep(outputs, 1) == pytest.approx((1 / 3 + 0.0) / 2)


class TestUniqSeq:
    def test_union(self):
        assert uniq_seq([(A, B), (B, C)]) == 3

    def test_empty(self):
        assert uniq_seq([]) == 0

    def test_single_repeated_token(self):
        assert uniq_seq([(A, A, A)]) == 1

    def test_matches_naive_twin(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            outputs = [tuple(int(t) for t in rng.integers(0, 10, size=rng.integers(0, 15)))
                       for _ in range(rng.integers(0, 6))]
            assert uniq_seq(outputs) == naive_uniq_seq(outputs)


class TestRouge:
    def test_worked_example_on_real_tokens(self):
        vocab = build_vocab(["the cat sat"], 10)
        cand = encode("the cat sat", vocab)
        ref = encode("the cat", vocab)
        assert rouge(cand, ref, 1) == pytest.approx(0.8, abs=1e-12)

    def test_identity_scores_one(self):
        seq = (A, B, C, D)
        for variant in (1, 2, "L"):
            assert rouge(seq, seq, variant) == 1.0

    def test_disjoint_scores_zero(self):
        for variant in (1, 2, "L"):
            assert rouge((A, B), (C, D), variant) == 0.0

    def test_empty_reference_rejected(self):
        with pytest.raises(ValueError):
            rouge((A,), (), 1)

    def test_empty_candidate_scores_zero(self):
        for variant in (1, 2, "L"):
            assert rouge((), (A, B), variant) == 0.0

    def test_too_short_for_bigrams_scores_zero(self):
        assert rouge((A,), (A, B), 2) == 0.0

    def test_swap_swaps_precision_and_recall(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            cand = tuple(int(t) for t in rng.integers(0, 5, size=rng.integers(1, 15)))
            ref = tuple(int(t) for t in rng.integers(0, 5, size=rng.integers(1, 15)))
            for variant in (1, 2, "L"):
                assert rouge(cand, ref, variant) == pytest.approx(
                    rouge(ref, cand, variant), abs=1e-12)

    def test_matches_naive_twin(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            cand = tuple(int(t) for t in rng.integers(0, 4, size=rng.integers(0, 12)))
            ref = tuple(int(t) for t in rng.integers(0, 4, size=rng.integers(1, 12)))
            for variant in (1, 2, "L"):
                assert rouge(cand, ref, variant) == pytest.approx(
                    naive_rouge(cand, ref, variant), abs=1e-12)

    def test_clipping_uses_counts_not_sets(self):
        # candidate repeats a unigram the reference holds once
        assert rouge((A, A, A), (A, B), 1) == pytest.approx(
            2 * (1 / 3) * (1 / 2) / (1 / 3 + 1 / 2), abs=1e-12)


class TestBlocklistOutputCount:
    def test_output_counted_once_despite_two_matches(self):
        auto = compile_blocklist([(A, B)])
        outputs = [(A, B, C, A, B), (C, C), (D,)]
        assert blocklist_output_count(outputs, auto) == 1

    def test_no_matches(self):
        auto = compile_blocklist([(A, B)])
        assert blocklist_output_count([(C, C), (D, C)], auto) == 0

    def test_matches_naive_twin(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            phrases = [tuple(int(t) for t in rng.integers(0, 5, size=2))
                       for _ in range(3)]
            outputs = [tuple(int(t) for t in rng.integers(0, 5, size=rng.integers(0, 20)))
                       for _ in range(8)]
            auto = compile_blocklist(phrases)
            assert blocklist_output_count(outputs, auto) == \
                naive_blocklist_output_count(outputs, phrases)

    def test_planted_corpus_count_matches_plant_count(self):
        blocklist = ["zorp quax"]
        cfg = SynthConfig(num_samples=60, vocab_size=60, seed=8,
                          blocklist_plant_rate=1.0)
        samples = synth_corpus(cfg, blocklist)
        vocab = build_vocab(samples, 200)
        auto = compile_blocklist([encode(p, vocab) for p in blocklist])
        outputs = [encode(s.paragraph, vocab) for s in samples]
        assert blocklist_output_count(outputs, auto) == 60


def uniform_model(vocab_size: int) -> ModelParams:
    """All-zero parameters produce the uniform distribution at every step."""
    cfg = ModelConfig(vocab_size=vocab_size, embed_dim=4, context_len=64, seed=0)
    return ModelParams(config=cfg, flat=np.zeros(param_count(cfg)))


class TestLmMetrics:
    def _corpus_and_vocab(self):
        corpus = synth_corpus(SynthConfig(num_samples=6, vocab_size=30,
                                          target_len=24, seed=9), [])
        return corpus, build_vocab(corpus, 100)

    def test_uniform_predictor_ppl_is_vocab_size(self):
        corpus, vocab = self._corpus_and_vocab()
        lm = lm_metrics(uniform_model(vocab.size), corpus, vocab, window=32)
        assert lm.ppl == pytest.approx(float(vocab.size), rel=1e-9)

    def test_ppl_equals_exp_of_likelihood_loss(self):
        corpus, vocab = self._corpus_and_vocab()
        params = init_model(ModelConfig(vocab_size=vocab.size, embed_dim=8,
                                        context_len=64, seed=3))
        lm = lm_metrics(params, corpus, vocab, window=32)
        from ulkit.model import forward_all, pack_example
        total_nll, total = 0.0, 0
        for sample in corpus:
            tokens, start = pack_example(vocab, sample, 64)
            gold = tokens[start:-1]  # paragraph tokens, <eos> excluded
            dists, _ = forward_all(params, tokens)
            rows = dists[start - 1:start - 1 + len(gold)]
            total_nll += likelihood_loss(rows, gold) * len(gold)
            total += len(gold)
        assert lm.ppl == pytest.approx(math.exp(total_nll / total), rel=1e-9)

    def test_empty_corpus_rejected(self):
        _, vocab = self._corpus_and_vocab()
        with pytest.raises(ValueError):
            lm_metrics(uniform_model(vocab.size), [], vocab)


class TestEvaluateModel:
    def test_report_fields_and_table(self):
        corpus = synth_corpus(SynthConfig(num_samples=4, vocab_size=30,
                                          target_len=20, seed=10), [])
        vocab = build_vocab(corpus, 100)
        params = init_model(ModelConfig(vocab_size=vocab.size, embed_dim=8,
                                        context_len=64, seed=1))
        report = evaluate_model(params, corpus, vocab,
                                decode=DecodeConfig(beam_size=2, max_len=12),
                                window=32)
        d = report.as_dict()
        for key in ("ppl", "acc", "rep", "wrep", "seq_rep", "uniq", "uniq_seq",
                    "rouge1_f", "rouge2_f", "rougeL_f", "blocklist_output_count",
                    "num_samples"):
            assert key in d
        assert report.seq_rep.keys() == {1, 4}
        table = report_table({"model": report}, window=32)
        for column in ("ppl", "acc", "rep-32", "wrep-32", "seq-rep-1", "seq-rep-4",
                       "uniq", "uniq-seq", "rouge1-f", "rouge2-f", "rougeL-f"):
            assert column in table

    def test_precomputed_outputs_roundtrip(self):
        corpus = synth_corpus(SynthConfig(num_samples=3, vocab_size=30,
                                          target_len=20, seed=11), [])
        vocab = build_vocab(corpus, 100)
        params = init_model(ModelConfig(vocab_size=vocab.size, embed_dim=8,
                                        context_len=64, seed=2))
        decode = DecodeConfig(beam_size=1, max_len=10)
        outputs = generate_outputs(params, corpus, vocab, decode)
        a = evaluate_model(params, corpus, vocab, decode=decode, window=16)
        b = evaluate_model(params, corpus, vocab, window=16, outputs=outputs)
        assert a == b


class TestReportValidation:
    def _kwargs(self, **over):
        base = dict(ppl=2.0, acc=0.5, rep={128: 0.4}, wrep={128: 0.2},
                    seq_rep={1: 0.1, 4: 0.0}, uniq=10, uniq_seq=12,
                    rouge1_f=0.5, rouge2_f=0.2, rougeL_f=0.3,
                    blocklist_output_count=None, num_samples=3)
        base.update(over)
        return base

    def test_valid_report_accepted(self):
        MetricsReport(**self._kwargs())

    def test_ppl_below_one_rejected(self):
        with pytest.raises(ValueError):
            MetricsReport(**self._kwargs(ppl=0.9))

    def test_wrep_above_rep_rejected(self):
        with pytest.raises(ValueError):
            MetricsReport(**self._kwargs(wrep={128: 0.5}))

    def test_fraction_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            MetricsReport(**self._kwargs(acc=1.5))
