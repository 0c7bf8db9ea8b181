"""Whitespace/punctuation tokenizer with a closed, frequency-built vocabulary.

Tokens are whitespace-separated words with the sentence punctuation
``. , ! ?`` split off as standalone tokens, so sentence boundaries and
blocklist phrases are always token-aligned.  The vocabulary is immutable
after construction and maps token strings to dense integer ids, with four
reserved specials at ids 0..3.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from ._validation import check_token_sequence

PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>")

_TOKEN_RE = re.compile(r"[^\s.,!?]+|[.,!?]")

#: A token-id sequence; the common currency of candidates, losses and metrics.
TokenSequence = tuple[int, ...]


def tokenize_text(text: str, casefold: bool = False) -> list[str]:
    """Split text into word and punctuation tokens."""
    if casefold:
        text = text.casefold()
    return _TOKEN_RE.findall(text)


@dataclass(frozen=True)
class Vocab:
    """Immutable bijection between token strings and dense ids.

    ``token_of[i]`` is the string for id ``i``; specials occupy ids 0..3 and
    are never produced by :func:`encode` except for ``<unk>``.
    """

    token_of: tuple[str, ...]
    id_of: dict[str, int] = field(repr=False)

    def __post_init__(self):
        if len(self.token_of) < len(SPECIAL_TOKENS) + 1:
            raise ValueError("vocab must contain at least one non-special token")
        if self.token_of[: len(SPECIAL_TOKENS)] != SPECIAL_TOKENS:
            raise ValueError("special tokens must occupy ids 0..3")
        if len(self.id_of) != len(self.token_of):
            raise ValueError("id_of/token_of are not a bijection")
        for tok, idx in self.id_of.items():
            if self.token_of[idx] != tok:
                raise ValueError(f"inconsistent mapping for token {tok!r}")

    def __len__(self) -> int:
        return len(self.token_of)

    @property
    def size(self) -> int:
        return len(self.token_of)

    def __contains__(self, token: str) -> bool:
        return token in self.id_of


def _make_vocab(tokens_in_order: Sequence[str]) -> Vocab:
    token_of = SPECIAL_TOKENS + tuple(tokens_in_order)
    id_of = {tok: i for i, tok in enumerate(token_of)}
    if len(id_of) != len(token_of):
        raise ValueError("duplicate tokens in vocabulary")
    return Vocab(token_of=token_of, id_of=id_of)


def build_vocab(corpus: Iterable, max_size: int, casefold: bool = False) -> Vocab:
    """Build a vocabulary from the most frequent corpus tokens.

    ``corpus`` yields objects with ``bullet_points`` and ``paragraph`` text
    fields (or plain strings).  Ties in frequency break lexicographically,
    smaller string first.  ``max_size`` bounds the total size including the
    four specials.
    """
    if max_size < len(SPECIAL_TOKENS) + 1:
        raise ValueError(f"max_size must be at least {len(SPECIAL_TOKENS) + 1}")
    counts: Counter[str] = Counter()
    empty = True
    for sample in corpus:
        empty = False
        if isinstance(sample, str):
            texts = (sample,)
        else:
            texts = (sample.bullet_points, sample.paragraph)
        for text in texts:
            counts.update(tokenize_text(text, casefold=casefold))
    if empty:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    for special in SPECIAL_TOKENS:  # literal special spellings cannot be vocab words
        counts.pop(special, None)
    if not counts:
        raise ValueError("corpus contains no usable tokens")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [tok for tok, _ in ranked[: max_size - len(SPECIAL_TOKENS)]]
    return _make_vocab(kept)


def vocab_from_tokens(tokens: Sequence[str]) -> Vocab:
    """Build a vocabulary directly from an ordered token list (no specials)."""
    return _make_vocab(tuple(tokens))


def encode(text: str, vocab: Vocab, casefold: bool = False) -> TokenSequence:
    """Encode text to token ids; out-of-vocabulary tokens map to ``<unk>``."""
    ids = []
    for tok in tokenize_text(text, casefold=casefold):
        idx = vocab.id_of.get(tok, UNK_ID)
        ids.append(idx if idx >= len(SPECIAL_TOKENS) else UNK_ID)
    return tuple(ids)


def decode(seq: Sequence[int], vocab: Vocab) -> str:
    """Render token ids back to space-separated text."""
    ids = check_token_sequence(seq, vocab.size, name="decode input")
    return " ".join(vocab.token_of[i] for i in ids)


def save_vocab(vocab: Vocab, path: str | Path) -> None:
    """Persist one token per line; id = 4 + zero-based line index."""
    body = "".join(tok + "\n" for tok in vocab.token_of[len(SPECIAL_TOKENS):])
    Path(path).write_text(body, encoding="utf-8")


def load_vocab(path: str | Path) -> Vocab:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return _make_vocab(tuple(lines))
