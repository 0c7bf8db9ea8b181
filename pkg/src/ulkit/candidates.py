"""Per-timestep negative-candidate extraction.

Three candidate sources feed the unlikelihood losses: previous target
tokens (token level), tokens inside duplicated n-grams (sequence level),
and tokens covered by blocklist phrase matches (block).  The sequence-level
and block extractors each come in an optimized form and a deliberately
naive form; the naive scans are the oracles the fast paths are tested
against, and the cost model the benchmark command compares.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

from ._validation import check_token_sequence
from .tokenizer import SPECIAL_TOKENS, UNK_ID, Vocab, encode
from .tokenizer import TokenSequence

logger = logging.getLogger(__name__)

SOURCES = ("token_level", "seq_level", "block")


@dataclass(frozen=True)
class CandidateSchedule:
    """One token-id set per timestep, aligned to a sequence of length T."""

    sets: tuple[frozenset[int], ...]
    source: str

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown candidate source {self.source!r}")

    def __len__(self) -> int:
        return len(self.sets)

    def __getitem__(self, t: int) -> frozenset[int]:
        return self.sets[t]

    def total_candidates(self) -> int:
        return sum(len(s) for s in self.sets)


def token_level_candidates(target: Sequence[int]) -> CandidateSchedule:
    """Candidates at step t are the earlier target tokens, minus the target.

    ``sets[t] = {x_1, ..., x_{t-1}} \\ {x_t}``; the set at t=0 is empty.
    """
    ids = check_token_sequence(target, name="target")
    if not ids:
        raise ValueError("target must be non-empty")
    prefix: set[int] = set()
    sets = []
    for x in ids:
        sets.append(frozenset(prefix - {x}))
        prefix.add(x)
    return CandidateSchedule(sets=tuple(sets), source="token_level")


def seq_level_candidates(seq: Sequence[int], n: int) -> CandidateSchedule:
    """Mark each token inside an n-gram that already occurred earlier.

    Position t is a candidate (for itself) iff some window of length ``n``
    containing t occurs, as a contiguous block, entirely before the window's
    own start.  Uses a first-occurrence table, O(T·n) overall.
    """
    ids = check_token_sequence(seq, name="seq")
    if n < 1:
        raise ValueError(f"n-gram order must be >= 1, got {n}")
    T = len(ids)
    covered = [False] * T
    first_start: dict[tuple[int, ...], int] = {}
    for s in range(T - n + 1):
        gram = ids[s:s + n]
        earlier = first_start.get(gram)
        if earlier is None:
            first_start[gram] = s
        elif earlier + n <= s:
            for t in range(s, s + n):
                covered[t] = True
    sets = tuple(frozenset((ids[t],)) if covered[t] else frozenset() for t in range(T))
    return CandidateSchedule(sets=sets, source="seq_level")


def naive_seq_level_candidates(seq: Sequence[int], n: int) -> CandidateSchedule:
    """Brute-force twin of :func:`seq_level_candidates`.

    For every position and every window offset, slides the window over the
    whole earlier prefix looking for a contiguous repeat.
    """
    ids = check_token_sequence(seq, name="seq")
    if n < 1:
        raise ValueError(f"n-gram order must be >= 1, got {n}")
    T = len(ids)
    sets = []
    for t in range(T):
        hit = False
        for i in range(n):
            s, e = t - i, t - i + n
            if s < 0 or e > T:
                continue
            gram = ids[s:e]
            for s2 in range(0, s - n + 1):
                if ids[s2:s2 + n] == gram:
                    hit = True
                    break
            if hit:
                break
        sets.append(frozenset((ids[t],)) if hit else frozenset())
    return CandidateSchedule(sets=tuple(sets), source="seq_level")


class BlocklistAutomaton:
    """Aho-Corasick matcher over token-id sequences.

    Matching is exact on ids.  Construct via :func:`compile_blocklist`;
    instances are immutable after construction and safe to share across
    threads.
    """

    def __init__(self, phrases: Iterable[tuple[int, ...]], n_min: int, n_max: int,
                 dropped: tuple[tuple[int, ...], ...] = ()):
        retained = sorted(set(tuple(p) for p in phrases))
        if not retained:
            raise ValueError("no blocklist phrases retained")
        for p in retained:
            if not n_min <= len(p) <= n_max:
                raise ValueError(f"phrase of length {len(p)} outside [{n_min}, {n_max}]")
        self.phrases: tuple[tuple[int, ...], ...] = tuple(retained)
        self.n_min = n_min
        self.n_max = n_max
        self.dropped = dropped
        self._build()

    def _build(self) -> None:
        goto: list[dict[int, int]] = [{}]
        out: list[set[int]] = [set()]  # phrase lengths ending at each node
        for phrase in self.phrases:
            node = 0
            for tok in phrase:
                nxt = goto[node].get(tok)
                if nxt is None:
                    goto.append({})
                    out.append(set())
                    nxt = len(goto) - 1
                    goto[node][tok] = nxt
                node = nxt
            out[node].add(len(phrase))
        fail = [0] * len(goto)
        queue = deque(goto[0].values())  # depth-1 nodes keep fail = root
        while queue:
            node = queue.popleft()
            for tok, child in goto[node].items():
                queue.append(child)
                f = fail[node]
                while f and tok not in goto[f]:
                    f = fail[f]
                fail[child] = goto[f].get(tok, 0)
                out[child] |= out[fail[child]]
        self._goto = goto
        self._fail = fail
        self._out = [tuple(sorted(lengths)) for lengths in out]

    def _step(self, node: int, tok: int) -> int:
        goto, fail = self._goto, self._fail
        while node and tok not in goto[node]:
            node = fail[node]
        return goto[node].get(tok, 0)

    def finditer(self, seq: Sequence[int]):
        """Yield every match as ``(start, length)`` in end-position order."""
        node = 0
        for pos, tok in enumerate(seq):
            node = self._step(node, tok)
            for length in self._out[node]:
                yield pos - length + 1, length

    def has_match(self, seq: Sequence[int]) -> bool:
        node = 0
        for tok in seq:
            node = self._step(node, tok)
            if self._out[node]:
                return True
        return False

    def covered_positions(self, seq: Sequence[int]) -> list[bool]:
        """Flag each position lying inside at least one match window."""
        covered = [False] * len(seq)
        for start, length in self.finditer(seq):
            for t in range(start, start + length):
                covered[t] = True
        return covered


def compile_blocklist(phrases: Sequence[Sequence[int]], n_min: int = 2,
                      n_max: int = 10) -> BlocklistAutomaton:
    """Compile token-id phrases into a matcher, dropping out-of-bounds lengths.

    Phrases shorter than ``n_min`` or longer than ``n_max`` are reported and
    dropped; pass ``n_min=1`` to admit unigram phrases explicitly.  Raises if
    nothing is retained.
    """
    if not 1 <= n_min <= n_max:
        raise ValueError(f"need 1 <= n_min <= n_max, got [{n_min}, {n_max}]")
    kept: list[tuple[int, ...]] = []
    dropped: list[tuple[int, ...]] = []
    for phrase in phrases:
        p = check_token_sequence(phrase, name="phrase")
        if n_min <= len(p) <= n_max:
            kept.append(p)
        else:
            dropped.append(p)
    if dropped:
        logger.warning("dropped %d blocklist phrase(s) with length outside [%d, %d]",
                       len(dropped), n_min, n_max)
    if not kept:
        raise ValueError(f"no blocklist phrases with length in [{n_min}, {n_max}]")
    return BlocklistAutomaton(kept, n_min, n_max, dropped=tuple(dropped))


def encode_blocklist(phrases: Sequence[str], vocab: Vocab, casefold: bool = False,
                     n_min: int = 2, n_max: int = 10) -> BlocklistAutomaton:
    """Encode text phrases and compile them, skipping out-of-vocabulary ones.

    A phrase containing a token the vocabulary cannot represent would match
    on the unknown-token id rather than the phrase itself, so it is dropped
    with a warning instead.
    """
    encoded: list[tuple[int, ...]] = []
    skipped = 0
    for phrase in phrases:
        ids = encode(phrase, vocab, casefold=casefold)
        if UNK_ID in ids:
            skipped += 1
            continue
        encoded.append(ids)
    if skipped:
        logger.warning("skipped %d blocklist phrase(s) with out-of-vocabulary tokens", skipped)
    return compile_blocklist(encoded, n_min=n_min, n_max=n_max)


def block_candidates(seq: Sequence[int], automaton: BlocklistAutomaton) -> CandidateSchedule:
    """Candidates are the tokens covered by any blocklist match window."""
    ids = check_token_sequence(seq, name="seq")
    covered = automaton.covered_positions(ids)
    sets = tuple(frozenset((ids[t],)) if covered[t] else frozenset() for t in range(len(ids)))
    return CandidateSchedule(sets=sets, source="block")


def naive_block_scan(seq: Sequence[int], phrases: Sequence[Sequence[int]],
                     n_min: int = 2, n_max: int = 10) -> CandidateSchedule:
    """Brute-force twin of :func:`block_candidates`.

    Checks every window of every admissible length against every phrase of
    that length.  Quadratic in practice; kept as the correctness oracle and
    as the slow side of the benchmark command.
    """
    ids = check_token_sequence(seq, name="seq")
    by_length: dict[int, list[tuple[int, ...]]] = {}
    for phrase in phrases:
        p = check_token_sequence(phrase, name="phrase")
        if n_min <= len(p) <= n_max:
            by_length.setdefault(len(p), []).append(p)
    T = len(ids)
    covered = [False] * T
    for start in range(T):
        for length, plist in by_length.items():
            if start + length > T:
                continue
            window = ids[start:start + length]
            for phrase in plist:
                if window == phrase:
                    for t in range(start, start + length):
                        covered[t] = True
                    break
    sets = tuple(frozenset((ids[t],)) if covered[t] else frozenset() for t in range(T))
    return CandidateSchedule(sets=sets, source="block")


__all__ = [
    "CandidateSchedule", "BlocklistAutomaton", "token_level_candidates",
    "seq_level_candidates", "naive_seq_level_candidates", "compile_blocklist",
    "encode_blocklist", "block_candidates", "naive_block_scan", "TokenSequence",
]
