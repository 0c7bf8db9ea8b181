"""Outline-to-paragraph corpus: parsing, file I/O and a synthetic generator.

A corpus file holds one JSON record per line with exactly two text fields,
``bullet_points`` (the outline; bullets marked ``*``, sub-bullets ``**``)
and ``paragraph`` (the ground-truth target).  The synthetic generator
produces corpora with controllable sentence-duplication and planted
blocklist phrases, so repetition and moderation effects are measurable by
construction.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from ._rng import substream
from ._validation import check_positive, check_probability
from .tokenizer import tokenize_text

logger = logging.getLogger(__name__)


class CorpusError(ValueError):
    """A record or corpus file violates the expected format."""


@dataclass(frozen=True)
class CorpusSample:
    """One (outline, paragraph) pair."""

    bullet_points: str
    paragraph: str

    def __post_init__(self):
        if not self.bullet_points.strip():
            raise CorpusError("empty field: bullet_points")
        if not self.paragraph.strip():
            raise CorpusError("empty field: paragraph")
        if "*" not in self.bullet_points:
            raise CorpusError("bullet_points contains no '*' marker")


def parse_sample(record: str | Mapping[str, object]) -> CorpusSample:
    """Parse one record (a JSON line or an already-decoded mapping).

    Field text is preserved verbatim; only surrounding whitespace is
    considered when checking for emptiness.
    """
    if isinstance(record, str):
        try:
            record = json.loads(record)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"invalid JSON record: {exc}") from None
    if not isinstance(record, Mapping):
        raise CorpusError(f"record must be a JSON object, got {type(record).__name__}")
    for name in ("bullet_points", "paragraph"):
        if name not in record:
            raise CorpusError(f"missing field: {name}")
        if not isinstance(record[name], str):
            raise CorpusError(f"field {name} must be a string")
    return CorpusSample(bullet_points=record["bullet_points"],
                        paragraph=record["paragraph"])


def serialize_sample(sample: CorpusSample) -> str:
    """Render a sample as a single JSON line (inverse of :func:`parse_sample`)."""
    return json.dumps(
        {"bullet_points": sample.bullet_points, "paragraph": sample.paragraph},
        ensure_ascii=False,
    )


def load_corpus(path: str | Path, strict: bool = False) -> list[CorpusSample]:
    """Load a newline-delimited corpus file, preserving record order.

    Malformed lines are skipped with a warning naming the line number; with
    ``strict=True`` the first bad line aborts the load instead.
    """
    samples: list[CorpusSample] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                samples.append(parse_sample(line))
            except CorpusError as exc:
                if strict:
                    raise CorpusError(f"{path}: line {lineno}: {exc}") from None
                logger.warning("%s: line %d rejected: %s", path, lineno, exc)
    return samples


def save_corpus(samples: Sequence[CorpusSample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(serialize_sample(sample) + "\n")


def load_blocklist(path: str | Path) -> list[str]:
    """Load one phrase per line; ``#`` comments and duplicates are ignored."""
    phrases: list[str] = []
    seen: set[str] = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        phrase = line.split("#", 1)[0].strip()
        if phrase and phrase not in seen:
            phrases.append(phrase)
            seen.add(phrase)
    return phrases


def save_blocklist(phrases: Sequence[str], path: str | Path) -> None:
    Path(path).write_text("".join(p + "\n" for p in phrases), encoding="utf-8")


@dataclass(frozen=True)
class SynthConfig:
    """Knobs of the synthetic corpus generator.

    ``repeat_rate`` is the chance a paragraph contains one duplicated
    sentence; ``blocklist_plant_rate`` the chance it contains one planted
    blocklist phrase.  ``target_len`` is the approximate paragraph length in
    tokens before duplication.
    """

    num_samples: int
    vocab_size: int = 120
    target_len: int = 48
    repeat_rate: float = 0.25
    blocklist_plant_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        check_positive(self.num_samples, "num_samples")
        check_positive(self.vocab_size, "vocab_size")
        check_positive(self.target_len, "target_len")
        check_probability(self.repeat_rate, "repeat_rate")
        check_probability(self.blocklist_plant_rate, "blocklist_plant_rate")


# Mean generated sentence length (4..11 content words plus the period).
_MEAN_SENT_LEN = 8.5
_MIN_FILLER_WORDS = 8


def _filler_words(config: SynthConfig, reserved: set[str]) -> list[str]:
    budget = config.vocab_size - 5 - len(reserved)  # specials + period
    if budget < _MIN_FILLER_WORDS:
        raise ValueError(
            f"vocab_size {config.vocab_size} leaves only {budget} filler words "
            f"after reserving {len(reserved)} blocklist words"
        )
    words, i = [], 0
    while len(words) < budget:
        word = f"w{i:03d}"
        if word not in reserved:
            words.append(word)
        i += 1
    return words


def _sentence_bank(rng, fillers: list[str], size: int) -> list[list[str]]:
    """Distinct period-terminated template sentences of 5..12 tokens."""
    bank: list[list[str]] = []
    seen: set[tuple[str, ...]] = set()
    while len(bank) < size:
        k = int(rng.integers(4, 12))
        words = tuple(fillers[int(j)] for j in rng.integers(0, len(fillers), size=k))
        if words in seen:
            continue
        seen.add(words)
        bank.append(list(words) + ["."])
    return bank


def synth_corpus(config: SynthConfig, blocklist: Sequence[str] = ()) -> list[CorpusSample]:
    """Generate a corpus as a pure function of ``(config, blocklist)``.

    Paragraphs draw their sentences, without replacement, from a closed bank
    of template sentences over a word list disjoint from the blocklist
    vocabulary.  The finite bank makes the language learnable by a small
    model while keeping the repetition statistics exact: a paragraph
    contains a duplicated sentence precisely when the duplication coin came
    up, and contains a blocklist phrase precisely when the planting coin
    did.  Planted phrases open the first sentence (and therefore its first
    bullet), making them strong, learnable continuations.
    """
    phrase_tokens = [tuple(tokenize_text(p)) for p in blocklist]
    if config.blocklist_plant_rate > 0 and not phrase_tokens:
        raise ValueError("blocklist_plant_rate > 0 requires a non-empty blocklist")
    for phrase, toks in zip(blocklist, phrase_tokens):
        if not toks:
            raise ValueError(f"blocklist phrase {phrase!r} has no tokens")
    reserved = {tok for toks in phrase_tokens for tok in toks}
    fillers = _filler_words(config, reserved)
    num_sentences = max(2, round(config.target_len / _MEAN_SENT_LEN))
    rng = substream(config.seed, "synth-corpus")
    bank = _sentence_bank(rng, fillers, max(num_sentences + 2, config.vocab_size // 3))

    samples: list[CorpusSample] = []
    for _ in range(config.num_samples):
        duplicate = rng.random() < config.repeat_rate
        plant = rng.random() < config.blocklist_plant_rate

        picks = rng.choice(len(bank), size=num_sentences, replace=False)
        sentences = [list(bank[int(i)]) for i in picks]

        if plant:
            chosen = phrase_tokens[int(rng.integers(len(phrase_tokens)))]
            sentences[0] = list(chosen) + sentences[0]

        bullets: list[str] = []
        for words in sentences:
            marker = "**" if rng.random() < 0.25 else "*"
            bullets.append(" ".join([marker] + words[: min(3, len(words) - 1)]))

        if duplicate:
            at = int(rng.integers(len(sentences)))
            sentences.insert(at + 1, list(sentences[at]))

        paragraph = " ".join(tok for sent in sentences for tok in sent)
        samples.append(CorpusSample(bullet_points=" ".join(bullets), paragraph=paragraph))
    return samples
