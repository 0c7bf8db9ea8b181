"""Sentence splitting, toy embeddings and near-duplicate removal."""

import numpy as np
import pytest

from ulkit.dedup import (DedupConfig, cosine, dedup_paragraph, dedup_report,
                         dedup_text, load_embeddings, save_embeddings,
                         split_sentences, toy_embed)
from ulkit.tokenizer import build_vocab


class TestSplitSentences:
    def test_delimiter_rule(self):
        assert split_sentences("A. B! C?") == ["A.", "B!", "C?"]

    def test_no_terminator_is_single_sentence(self):
        assert split_sentences("no terminator here") == ["no terminator here"]

    def test_empty_text(self):
        assert split_sentences("") == []
        assert split_sentences("   ") == []

    def test_delimiters_retained_and_rejoinable(self):
        text = "one two . three four ! five ?"
        parts = split_sentences(text)
        assert parts == ["one two .", "three four !", "five ?"]
        assert " ".join(parts) == text

    def test_punctuation_without_space_does_not_split(self):
        assert split_sentences("v1.2 shipped. done") == ["v1.2 shipped.", "done"]


class TestCosine:
    def test_identical_vectors(self):
        assert cosine((1.0, 2.0), (1.0, 2.0)) == pytest.approx(1.0)

    def test_orthogonal_vectors(self):
        assert cosine((1.0, 0.0), (0.0, 1.0)) == 0.0

    def test_worked_example(self):
        assert cosine((1.0, 1.0), (1.0, 0.0)) == pytest.approx(2 ** -0.5, abs=1e-12)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            cosine((1.0,), (1.0, 2.0))

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError):
            cosine((0.0, 0.0), (1.0, 0.0))


class TestToyEmbed:
    def _vocab(self):
        return build_vocab(["a b c d"], 20)

    def test_identical_sentences_embed_identically(self):
        vocab = self._vocab()
        u = toy_embed("a b", vocab)
        v = toy_embed("a b", vocab)
        assert cosine(u, v) == pytest.approx(1.0)

    def test_token_disjoint_sentences_are_orthogonal(self):
        vocab = self._vocab()
        assert cosine(toy_embed("a b", vocab), toy_embed("c d", vocab)) == 0.0

    def test_worked_example(self):
        vocab = self._vocab()
        sim = cosine(toy_embed("a a b", vocab), toy_embed("a b", vocab))
        assert sim == pytest.approx(3 / 10 ** 0.5, abs=1e-12)

    def test_no_in_vocab_tokens_rejected(self):
        with pytest.raises(ValueError):
            toy_embed("zzz qqq", self._vocab())


def random_embeddings(rng, n, dim=6):
    vecs = rng.normal(size=(n, dim))
    return [v / np.linalg.norm(v) for v in vecs]


class TestDedup:
    def test_exact_duplicate_keeps_one_copy_at_091(self):
        sentences = ["a b c .", "d e f .", "a b c ."]
        vocab = build_vocab(sentences, 30)
        embeddings = [toy_embed(s, vocab) for s in sentences]
        kept = dedup_paragraph(sentences, embeddings, DedupConfig(threshold=0.91))
        assert kept == ["a b c .", "d e f ."]

    def test_orthogonal_embeddings_all_kept(self):
        sentences = ["s0", "s1", "s2"]
        embeddings = [np.eye(3)[i] for i in range(3)]
        kept = dedup_paragraph(sentences, embeddings, DedupConfig(threshold=0.5))
        assert kept == sentences

    def test_threshold_one_keeps_duplicates(self):
        # strict comparison: similarity 1.0 does not exceed threshold 1.0
        sentences = ["x .", "x ."]
        vocab = build_vocab(sentences, 30)
        embeddings = [toy_embed(s, vocab) for s in sentences]
        kept = dedup_paragraph(sentences, embeddings, DedupConfig(threshold=1.0))
        assert kept == sentences

    def test_keep_last_policy(self):
        sentences = ["a b .", "c d .", "a b ."]
        vocab = build_vocab(sentences, 30)
        embeddings = [toy_embed(s, vocab) for s in sentences]
        kept = dedup_paragraph(sentences, embeddings,
                               DedupConfig(threshold=0.9, keep="last"))
        assert kept == ["c d .", "a b ."]

    def test_drop_report_names_partner(self):
        sentences = ["a b .", "a b .", "c ."]
        vocab = build_vocab(sentences, 30)
        embeddings = [toy_embed(s, vocab) for s in sentences]
        kept, drops = dedup_report(sentences, embeddings, DedupConfig(threshold=0.9))
        assert kept == [0, 2]
        assert len(drops) == 1
        assert drops[0].dropped == 1 and drops[0].kept == 0
        assert drops[0].similarity == pytest.approx(1.0)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            dedup_paragraph(["a"], [], DedupConfig())

    def test_output_is_subsequence_and_no_kept_pair_exceeds_threshold(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(0, 10))
            sentences = [f"s{i}" for i in range(n)]
            embeddings = random_embeddings(rng, n)
            config = DedupConfig(threshold=float(rng.uniform(0, 1)))
            kept, _ = dedup_report(sentences, embeddings, config)
            assert kept == sorted(kept)
            for i in kept:
                for j in kept:
                    if i < j:
                        assert cosine(embeddings[i], embeddings[j]) <= config.threshold

    def test_lower_threshold_never_keeps_more(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            n = int(rng.integers(1, 10))
            sentences = [f"s{i}" for i in range(n)]
            embeddings = random_embeddings(rng, n)
            t_low, t_high = sorted(rng.uniform(0, 1, size=2))
            low_kept, _ = dedup_report(sentences, embeddings, DedupConfig(threshold=float(t_low)))
            high_kept, _ = dedup_report(sentences, embeddings, DedupConfig(threshold=float(t_high)))
            assert len(low_kept) <= len(high_kept)

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            n = int(rng.integers(0, 10))
            sentences = [f"s{i}" for i in range(n)]
            embeddings = random_embeddings(rng, n)
            config = DedupConfig(threshold=float(rng.uniform(0, 1)))
            kept, _ = dedup_report(sentences, embeddings, config)
            once = [sentences[i] for i in kept]
            again, _ = dedup_report(once, [embeddings[i] for i in kept], config)
            assert [once[i] for i in again] == once

    def test_dedup_text_end_to_end(self):
        text = "a b c . d e f . a b c ."
        vocab = build_vocab([text], 30)
        deduped, drops = dedup_text(text, vocab, DedupConfig(threshold=0.91))
        assert deduped == "a b c . d e f ."
        assert len(drops) == 1


class TestEmbeddingFile:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        embeddings = random_embeddings(rng, 5, dim=4)
        path = tmp_path / "emb.txt"
        save_embeddings(embeddings, path)
        loaded = load_embeddings(path)
        assert len(loaded) == 5
        for a, b in zip(embeddings, loaded):
            assert np.array_equal(a, b)

    def test_bad_index_rejected(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("1 2 0.0 1.0\n")
        with pytest.raises(ValueError, match="index"):
            load_embeddings(path)

    def test_dimension_mismatch_rejected(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("0 3 0.0 1.0\n")
        with pytest.raises(ValueError, match="dimension"):
            load_embeddings(path)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            DedupConfig(threshold=1.5)
        with pytest.raises(ValueError):
            DedupConfig(keep="middle")
