"""Post-hoc near-duplicate sentence removal over sentence embeddings.

This is the post-processing baseline the training objectives compete
against: split a paragraph into sentences, embed each one, and drop any
sentence whose cosine similarity with an already-kept sentence exceeds a
threshold.  Embeddings come either from a file (so real sentence-encoder
vectors can be plugged in) or from the deterministic bag-of-tokens toy
embedder.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ._validation import check_probability
from .tokenizer import Vocab, tokenize_text

_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")


@dataclass(frozen=True)
class DedupConfig:
    threshold: float = 0.91
    keep: str = "first"

    def __post_init__(self):
        check_probability(self.threshold, "threshold")
        if self.keep not in ("first", "last"):
            raise ValueError(f"keep policy must be 'first' or 'last', got {self.keep!r}")


@dataclass(frozen=True)
class DropRecord:
    """One removed sentence: its index, the kept partner, and their similarity."""

    dropped: int
    kept: int
    similarity: float


def split_sentences(paragraph: str) -> list[str]:
    """Split at ``. ! ?`` followed by whitespace or end; delimiters stay.

    Sentences come back stripped of the inter-sentence whitespace, so
    joining with single spaces reconstructs a whitespace-normalized
    paragraph.
    """
    if not paragraph.strip():
        return []
    return [part for part in _SENTENCE_SPLIT.split(paragraph.strip()) if part]


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    """Cosine similarity; zero vectors and dimension mismatches are errors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine of a zero vector is undefined")
    # rounding can push the ratio a few ulp outside the mathematical range,
    # which matters for strict threshold comparisons at the boundary
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def toy_embed(sentence: str, vocab: Vocab, casefold: bool = False) -> np.ndarray:
    """L2-normalized bag-of-tokens count vector over the vocabulary.

    Purely lexical and deterministic; identical sentences always embed
    identically.  Raises if no token of the sentence is in the vocabulary.
    """
    counts = np.zeros(vocab.size, dtype=np.float64)
    for tok in tokenize_text(sentence, casefold=casefold):
        idx = vocab.id_of.get(tok)
        if idx is not None:
            counts[idx] += 1.0
    norm = float(np.linalg.norm(counts))
    if norm == 0.0:
        raise ValueError(f"sentence has no in-vocabulary tokens: {sentence!r}")
    return counts / norm


def dedup_report(sentences: Sequence[str], embeddings: Sequence[np.ndarray],
                 config: DedupConfig) -> tuple[list[int], list[DropRecord]]:
    """Indices of kept sentences (in original order) plus drop records.

    Greedy scan in keep-policy order: a sentence is dropped iff its
    similarity with an already-kept sentence strictly exceeds the threshold.
    """
    if len(sentences) != len(embeddings):
        raise ValueError(f"{len(sentences)} sentences but {len(embeddings)} embeddings")
    order = range(len(sentences)) if config.keep == "first" else \
        range(len(sentences) - 1, -1, -1)
    kept: list[int] = []
    drops: list[DropRecord] = []
    for i in order:
        partner = None
        for j in kept:
            sim = cosine(embeddings[i], embeddings[j])
            if sim > config.threshold:
                partner = DropRecord(dropped=i, kept=j, similarity=sim)
                break
        if partner is None:
            kept.append(i)
        else:
            drops.append(partner)
    kept.sort()
    drops.sort(key=lambda d: d.dropped)
    return kept, drops


def dedup_paragraph(sentences: Sequence[str], embeddings: Sequence[np.ndarray],
                    config: DedupConfig) -> list[str]:
    """Kept sentences in original order; see :func:`dedup_report`."""
    kept, _ = dedup_report(sentences, embeddings, config)
    return [sentences[i] for i in kept]


def dedup_text(paragraph: str, vocab: Vocab, config: DedupConfig,
               embeddings: Sequence[np.ndarray] | None = None,
               casefold: bool = False) -> tuple[str, list[DropRecord]]:
    """Split, embed (toy embedder unless embeddings are supplied), dedup, rejoin."""
    sentences = split_sentences(paragraph)
    if embeddings is None:
        embeddings = [toy_embed(s, vocab, casefold=casefold) for s in sentences]
    kept, drops = dedup_report(sentences, embeddings, config)
    return " ".join(sentences[i] for i in kept), drops


# ---------------------------------------------------------------------------
# embedding file format: one line per sentence: index, dimension, values
# ---------------------------------------------------------------------------

def save_embeddings(embeddings: Sequence[np.ndarray], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, vec in enumerate(embeddings):
            values = " ".join(repr(float(x)) for x in vec)
            fh.write(f"{i} {len(vec)} {values}\n")


def load_embeddings(path: str | Path) -> list[np.ndarray]:
    """Load sentence embeddings; indices must be 0..N-1 in order."""
    out: list[np.ndarray] = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        fields = line.split()
        idx, dim = int(fields[0]), int(fields[1])
        if idx != len(out):
            raise ValueError(f"line {lineno + 1}: expected index {len(out)}, got {idx}")
        vec = np.asarray([float(x) for x in fields[2:]], dtype=np.float64)
        if vec.size != dim:
            raise ValueError(f"line {lineno + 1}: declared dimension {dim}, "
                             f"found {vec.size} values")
        if out and vec.size != out[0].size:
            raise ValueError(f"line {lineno + 1}: inconsistent embedding dimension")
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"line {lineno + 1}: non-finite embedding entries")
        out.append(vec)
    return out
