"""Corpus parsing, file round trips and the synthetic generator."""

import json
import logging

import pytest

from ulkit.candidates import naive_block_scan
from ulkit.corpus import (CorpusError, CorpusSample, SynthConfig, load_blocklist,
                          load_corpus, parse_sample, save_corpus, serialize_sample,
                          synth_corpus)
from ulkit.tokenizer import build_vocab, encode

REALISTIC_RECORD = {
    "bullet_points": "Rivera, head of product at Meridian Labs * 15 yrs in "
                     "embedded systems * led the sensor platform team "
                     "** doubled deployment cadence * industry awards",
    "paragraph": "Rivera has spent fifteen years building embedded systems, "
                 "most recently as head of product at Meridian Labs. There she "
                 "led the sensor platform team through a redesign that doubled "
                 "its deployment cadence, work that earned several industry awards.",
}


class TestParseSample:
    def test_realistic_record_parses_intact(self):
        sample = parse_sample(REALISTIC_RECORD)
        assert sample.bullet_points == REALISTIC_RECORD["bullet_points"]
        assert sample.paragraph == REALISTIC_RECORD["paragraph"]

    def test_json_line_input(self):
        sample = parse_sample(json.dumps(REALISTIC_RECORD))
        assert sample.paragraph == REALISTIC_RECORD["paragraph"]

    def test_empty_paragraph_rejected(self):
        with pytest.raises(CorpusError, match="empty field"):
            parse_sample({"bullet_points": "* a", "paragraph": ""})

    def test_missing_field_rejected(self):
        with pytest.raises(CorpusError, match="missing field"):
            parse_sample({"bullet_points": "* a"})

    def test_no_marker_rejected(self):
        with pytest.raises(CorpusError, match="marker"):
            parse_sample({"bullet_points": "plain text", "paragraph": "p"})

    def test_serialize_round_trip_is_identity(self):
        sample = parse_sample(REALISTIC_RECORD)
        again = parse_sample(serialize_sample(sample))
        assert again.bullet_points == sample.bullet_points
        assert again.paragraph == sample.paragraph


class TestLoadCorpus:
    def _write(self, tmp_path, lines):
        path = tmp_path / "corpus.jsonl"
        path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        return path

    def test_order_preserved(self, tmp_path):
        lines = [json.dumps({"bullet_points": f"* s{i}", "paragraph": f"p{i}"})
                 for i in range(3)]
        samples = load_corpus(self._write(tmp_path, lines))
        assert [s.paragraph for s in samples] == ["p0", "p1", "p2"]

    def test_lenient_skips_bad_line_with_warning(self, tmp_path, caplog):
        lines = [json.dumps({"bullet_points": "* a", "paragraph": "one"}),
                 "{broken",
                 json.dumps({"bullet_points": "* b", "paragraph": "two"})]
        with caplog.at_level(logging.WARNING):
            samples = load_corpus(self._write(tmp_path, lines))
        assert [s.paragraph for s in samples] == ["one", "two"]
        assert any("line 2" in rec.getMessage() for rec in caplog.records)

    def test_strict_aborts_with_line_number(self, tmp_path):
        lines = [json.dumps({"bullet_points": "* a", "paragraph": "one"}), "{broken"]
        with pytest.raises(CorpusError, match="line 2"):
            load_corpus(self._write(tmp_path, lines), strict=True)

    def test_empty_file(self, tmp_path):
        assert load_corpus(self._write(tmp_path, [])) == []

    def test_save_load_round_trip(self, tmp_path):
        samples = [CorpusSample("* a b", "alpha beta ."),
                   CorpusSample("** c", "gamma .")]
        path = tmp_path / "c.jsonl"
        save_corpus(samples, path)
        assert load_corpus(path) == samples


class TestBlocklistFile:
    def test_comments_and_duplicates(self, tmp_path):
        path = tmp_path / "block.txt"
        path.write_text("bad phrase\n# a comment\nbad phrase\nother one  # trailing\n\n")
        assert load_blocklist(path) == ["bad phrase", "other one"]


BLOCKLIST = ["zorp quax", "mirv bofu snee"]


def _paragraph_sentences(paragraph: str) -> list[tuple[str, ...]]:
    sentences, current = [], []
    for tok in paragraph.split():
        current.append(tok)
        if tok == ".":
            sentences.append(tuple(current))
            current = []
    return sentences


class TestSynthCorpus:
    def test_deterministic(self):
        cfg = SynthConfig(num_samples=20, vocab_size=60, seed=1,
                          repeat_rate=0.5, blocklist_plant_rate=0.5)
        assert synth_corpus(cfg, BLOCKLIST) == synth_corpus(cfg, BLOCKLIST)

    def test_zero_repeat_rate_means_no_duplicate_sentences(self):
        cfg = SynthConfig(num_samples=50, vocab_size=60, repeat_rate=0.0, seed=2)
        for sample in synth_corpus(cfg, []):
            sentences = _paragraph_sentences(sample.paragraph)
            assert len(sentences) == len(set(sentences))

    def test_repeat_rate_one_means_every_paragraph_duplicates(self):
        cfg = SynthConfig(num_samples=30, vocab_size=60, repeat_rate=1.0, seed=3)
        for sample in synth_corpus(cfg, []):
            sentences = _paragraph_sentences(sample.paragraph)
            assert len(sentences) != len(set(sentences))

    def test_plant_count_within_three_sigma(self):
        n, rate = 1000, 0.5
        cfg = SynthConfig(num_samples=n, vocab_size=80, seed=4,
                          blocklist_plant_rate=rate)
        samples = synth_corpus(cfg, BLOCKLIST)
        vocab = build_vocab(samples, max_size=400)
        phrases = [encode(p, vocab) for p in BLOCKLIST]
        planted = sum(
            1 for s in samples
            if naive_block_scan(encode(s.paragraph, vocab), phrases).total_candidates() > 0
        )
        sigma = (n * rate * (1 - rate)) ** 0.5
        assert abs(planted - n * rate) <= 3 * sigma

    def test_duplicate_count_within_three_sigma(self):
        n, rate = 1000, 0.3
        cfg = SynthConfig(num_samples=n, vocab_size=60, repeat_rate=rate, seed=5)
        dup = 0
        for sample in synth_corpus(cfg, []):
            sentences = _paragraph_sentences(sample.paragraph)
            dup += len(sentences) != len(set(sentences))
        sigma = (n * rate * (1 - rate)) ** 0.5
        assert abs(dup - n * rate) <= 3 * sigma

    def test_planted_phrases_found_by_naive_scanner(self):
        cfg = SynthConfig(num_samples=40, vocab_size=80, seed=6,
                          blocklist_plant_rate=1.0)
        samples = synth_corpus(cfg, BLOCKLIST)
        vocab = build_vocab(samples, max_size=400)
        phrases = [encode(p, vocab) for p in BLOCKLIST]
        for sample in samples:
            sched = naive_block_scan(encode(sample.paragraph, vocab), phrases)
            assert sched.total_candidates() > 0

    def test_bullets_carry_markers_and_validate(self):
        cfg = SynthConfig(num_samples=10, vocab_size=60, seed=7)
        for sample in synth_corpus(cfg, []):
            assert "*" in sample.bullet_points
            parse_sample({"bullet_points": sample.bullet_points,
                          "paragraph": sample.paragraph})

    def test_plant_rate_without_blocklist_rejected(self):
        cfg = SynthConfig(num_samples=5, vocab_size=60, blocklist_plant_rate=0.5)
        with pytest.raises(ValueError):
            synth_corpus(cfg, [])

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            SynthConfig(num_samples=0, vocab_size=60)
        with pytest.raises(ValueError):
            SynthConfig(num_samples=1, vocab_size=60, repeat_rate=1.5)
