"""Greedy and beam-search generation.

Scores are mean per-token log-probabilities (cumulative log-probability
divided by the number of emitted tokens, the end-of-sequence emission
included when present).  Ties break deterministically: smallest token id
during expansion, lexicographically smallest token sequence at final
selection.  Beam search additionally tracks the pure greedy rollout as a
shadow hypothesis, so the returned sequence never scores below greedy.
No n-gram blocking or sampling happens at decode time; suppression is the
training objective's job.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._validation import check_positive
from .model import ModelParams, forward
from .tokenizer import EOS_ID


@dataclass(frozen=True)
class DecodeConfig:
    strategy: str = "beam"
    beam_size: int = 5
    max_len: int = 64

    def __post_init__(self):
        if self.strategy not in ("greedy", "beam"):
            raise ValueError(f"unknown decode strategy {self.strategy!r}")
        check_positive(self.beam_size, "beam_size")
        check_positive(self.max_len, "max_len")


def _score(logp: float, length: int) -> float:
    return logp / length if length else -math.inf


def greedy_decode(params: ModelParams, prefix: Sequence[int],
                  max_len: int) -> tuple[int, ...]:
    """Append the argmax token until end-of-sequence or ``max_len`` tokens.

    Returns the generated continuation, without the prefix and without the
    terminating end-of-sequence token.
    """
    check_positive(max_len, "max_len")
    current = list(prefix)
    out: list[int] = []
    for _ in range(max_len):
        dist = forward(params, current)
        tok = int(np.argmax(dist))  # first index wins ties
        if tok == EOS_ID:
            break
        out.append(tok)
        current.append(tok)
    return tuple(out)


def _greedy_scored(params, prefix, max_len):
    """Greedy rollout plus its (logp, emitted-token count) under beam scoring."""
    current = list(prefix)
    out: list[int] = []
    logp = 0.0
    emitted = 0
    for _ in range(max_len):
        dist = forward(params, current)
        tok = int(np.argmax(dist))
        logp += math.log(dist[tok]) if dist[tok] > 0 else -math.inf
        emitted += 1
        if tok == EOS_ID:
            break
        out.append(tok)
        current.append(tok)
    return tuple(out), logp, emitted


def beam_search(params: ModelParams, prefix: Sequence[int],
                config: DecodeConfig) -> tuple[int, ...]:
    """Length-normalized beam search; returns the best hypothesis found.

    A hypothesis finishes when it emits end-of-sequence; unfinished beams
    compete at ``max_len``.  With ``beam_size=1`` the result is exactly the
    greedy continuation.
    """
    prefix = tuple(prefix)
    # finished and final live hypotheses: (tokens, logp, emitted)
    pool: list[tuple[tuple[int, ...], float, int]] = []
    live: list[tuple[tuple[int, ...], float]] = [((), 0.0)]
    for _ in range(config.max_len):
        extensions: list[tuple[float, tuple[int, ...], bool]] = []
        for tokens, logp in live:
            dist = forward(params, prefix + tokens)
            with np.errstate(divide="ignore"):
                logdist = np.log(dist)
            for tok in np.argsort(-logdist, kind="stable")[:config.beam_size]:
                tok = int(tok)
                extensions.append((logp + float(logdist[tok]), tokens + (tok,),
                                   tok == EOS_ID))
        extensions.sort(key=lambda e: (-e[0], e[1]))
        live = []
        for logp, tokens, done in extensions[:config.beam_size]:
            if done:
                pool.append((tokens[:-1], logp, len(tokens)))
            else:
                live.append((tokens, logp))
        if not live:
            break
    pool.extend((tokens, logp, len(tokens)) for tokens, logp in live)

    shadow = _greedy_scored(params, prefix, config.max_len)
    pool.append(shadow)
    pool.sort(key=lambda h: (-_score(h[1], h[2]), h[0]))
    return pool[0][0]


def generate(params: ModelParams, prefix: Sequence[int],
             config: DecodeConfig) -> tuple[int, ...]:
    """Decode with the configured strategy."""
    if config.strategy == "greedy" or config.beam_size == 1:
        return greedy_decode(params, prefix, config.max_len)
    return beam_search(params, prefix, config)
