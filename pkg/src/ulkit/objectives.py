"""Likelihood and unlikelihood losses over per-step token distributions.

Every loss takes a (T, V) matrix of next-token distributions plus the
token sequence it scores, and returns the per-token mean.  The
unlikelihood term adds, for each negative candidate c at step t, a
penalty of ``-log(1 - p_t(c))`` scaled by a non-negative weight; with a
zero weight or empty candidate sets the computation short-circuits to the
plain likelihood code path, so the reduction is exact to the last bit.

``log(1 - p)`` is evaluated as ``log1p(-p)`` with p clamped to
``1 - CLAMP_EPS``; clamp events are counted rather than silently absorbed,
since a candidate at probability one would otherwise make the loss
infinite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import (check_non_negative, check_positive, check_prob_matrix,
                          check_probability, check_token_sequence)
from .candidates import CandidateSchedule, BlocklistAutomaton, block_candidates

#: Candidate probabilities are clamped to at most ``1 - CLAMP_EPS``.
CLAMP_EPS = 1e-7


@dataclass(frozen=True)
class ObjectiveConfig:
    """Scalar knobs of the training objectives.

    ``alpha`` weights the repetition unlikelihood term, ``beta`` the
    blocklist term; ``seq_ngram`` is the n-gram order for sequence-level
    candidates; ``mix_prob`` the chance a training step is sequence-level.
    """

    alpha: float = 1.0
    beta: float = 10.0
    seq_ngram: int = 4
    mix_prob: float = 0.5
    block_n_min: int = 2
    block_n_max: int = 10

    def __post_init__(self):
        check_non_negative(self.alpha, "alpha")
        check_non_negative(self.beta, "beta")
        check_positive(self.seq_ngram, "seq_ngram")
        check_probability(self.mix_prob, "mix_prob")
        if not 1 <= self.block_n_min <= self.block_n_max:
            raise ValueError("need 1 <= block_n_min <= block_n_max")


@dataclass
class LossStats:
    """Mutable counters a loss call can report numerical events into."""

    clamp_count: int = 0
    zero_target_count: int = 0

    def merge(self, other: "LossStats") -> None:
        self.clamp_count += other.clamp_count
        self.zero_target_count += other.zero_target_count


#: (schedule, weight) pairs; the weight multiplies the unlikelihood term only.
WeightedSchedule = tuple[CandidateSchedule, float]


def _check_aligned(dists: np.ndarray, target: tuple[int, ...],
                   schedules: tuple[WeightedSchedule, ...]) -> None:
    T, V = dists.shape
    if len(target) != T:
        raise ValueError(f"length mismatch: {T} distributions vs {len(target)} target tokens")
    if target and max(target) >= V:
        raise ValueError("target id out of range for the distribution width")
    for sched, _ in schedules:
        if len(sched) != T:
            raise ValueError(f"length mismatch: {T} distributions vs {len(sched)} candidate sets")


def _ul_loss(dists: np.ndarray, target: tuple[int, ...],
             schedules: tuple[WeightedSchedule, ...],
             stats: LossStats | None) -> float:
    """Shared likelihood + weighted-unlikelihood evaluation.

    Candidate ids are visited in sorted order so the floating-point path is
    identical no matter how the candidate sets were produced.
    """
    T = len(target)
    p_target = dists[np.arange(T), np.asarray(target, dtype=np.intp)]
    if np.any(p_target == 0.0):
        if stats is not None:
            stats.zero_target_count += int(np.sum(p_target == 0.0))
        return math.inf
    total = -float(np.sum(np.log(p_target)))
    active = [(sched, weight) for sched, weight in schedules
              if weight != 0.0 and sched.total_candidates() > 0]
    for sched, weight in active:
        for t, cand in enumerate(sched.sets):
            for c in sorted(cand):
                p = dists[t, c]
                if p > 1.0 - CLAMP_EPS:
                    p = 1.0 - CLAMP_EPS
                    if stats is not None:
                        stats.clamp_count += 1
                total -= weight * math.log1p(-p)
    return total / T


def likelihood_loss(dists, target, stats: LossStats | None = None) -> float:
    """Mean negative log-probability of the target tokens.

    Returns ``inf`` (and counts the event in ``stats``) if any target token
    has probability exactly zero.
    """
    dists = check_prob_matrix(dists)
    target = check_token_sequence(target, name="target")
    _check_aligned(dists, target, ())
    return _ul_loss(dists, target, (), stats)


def unlikelihood_loss(dists, target, cands: CandidateSchedule, alpha: float,
                      stats: LossStats | None = None) -> float:
    """Likelihood loss plus ``alpha``-weighted penalties on candidate tokens.

    Reduces exactly to :func:`likelihood_loss` when ``alpha`` is zero or all
    candidate sets are empty.
    """
    dists = check_prob_matrix(dists)
    target = check_token_sequence(target, name="target")
    check_non_negative(alpha, "alpha")
    _check_aligned(dists, target, ((cands, alpha),))
    return _ul_loss(dists, target, ((cands, alpha),), stats)


def block_loss(dists, seq, automaton: BlocklistAutomaton, beta: float,
               stats: LossStats | None = None) -> float:
    """Unlikelihood loss whose candidates are blocklist-covered tokens."""
    dists = check_prob_matrix(dists)
    seq = check_token_sequence(seq, name="seq")
    check_non_negative(beta, "beta")
    cands = block_candidates(seq, automaton)
    _check_aligned(dists, seq, ((cands, beta),))
    return _ul_loss(dists, seq, ((cands, beta),), stats)


def composite_loss(dists, target, schedules: tuple[WeightedSchedule, ...],
                   stats: LossStats | None = None) -> float:
    """Likelihood plus any number of independently weighted candidate terms."""
    dists = check_prob_matrix(dists)
    target = check_token_sequence(target, name="target")
    schedules = tuple(schedules)
    for _, weight in schedules:
        check_non_negative(weight, "schedule weight")
    _check_aligned(dists, target, schedules)
    return _ul_loss(dists, target, schedules, stats)


def loss_dp(dists, target, schedules: tuple[WeightedSchedule, ...] = (),
            stats: LossStats | None = None) -> tuple[float, np.ndarray]:
    """Loss value and its exact gradient with respect to the distributions.

    The gradient of the per-token mean: ``-1/(T p_t(x_t))`` on the target
    entry and ``+w/(T (1 - p_t(c)))`` on each candidate entry (zero where
    the clamp is active, matching the flat clamped loss surface).
    """
    dists = check_prob_matrix(dists)
    target = check_token_sequence(target, name="target")
    schedules = tuple(schedules)
    _check_aligned(dists, target, schedules)
    T = len(target)
    loss = _ul_loss(dists, target, schedules, stats)
    grad = np.zeros_like(dists)
    if not math.isfinite(loss):
        return loss, grad
    idx = np.arange(T)
    tgt = np.asarray(target, dtype=np.intp)
    grad[idx, tgt] = -1.0 / (T * dists[idx, tgt])
    for sched, weight in schedules:
        if weight == 0.0 or sched.total_candidates() == 0:
            continue
        for t, cand in enumerate(sched.sets):
            for c in sorted(cand):
                p = dists[t, c]
                if p > 1.0 - CLAMP_EPS:
                    continue
                grad[t, c] += weight / (T * (1.0 - p))
    return loss, grad


def loss_gradient(params, tokens, loss_start: int,
                  schedules: tuple[WeightedSchedule, ...] = (),
                  stats: LossStats | None = None):
    """Loss and exact reverse-mode parameter gradient for one packed sequence.

    ``tokens`` is the full model input; the loss covers predictions of
    ``tokens[loss_start:]`` (a schedule of length ``len(tokens) - loss_start``
    aligns with those positions).  Returns ``(loss, flat_gradient)``.
    """
    from . import model  # deferred: model depends on this module for losses

    if not 0 < loss_start < len(tokens):
        raise ValueError("loss_start must split the sequence into a non-empty "
                         "prefix and a non-empty scored span")
    dists, cache = model.forward_all(params, tokens)
    scored = dists[loss_start - 1:len(tokens) - 1]
    target = tuple(tokens[loss_start:])
    loss, dp_scored = loss_dp(scored, target, schedules, stats)
    dp = np.zeros_like(dists)
    dp[loss_start - 1:len(tokens) - 1] = dp_scored
    if not math.isfinite(loss):
        return loss, np.zeros(params.flat.shape)
    grad = model.backward_dists(cache, dp)
    if not np.all(np.isfinite(grad)):
        bad = np.flatnonzero(~np.isfinite(grad))[0]
        raise FloatingPointError(f"non-finite gradient at parameter index {bad}")
    return loss, grad


__all__ = [
    "ObjectiveConfig", "LossStats", "CLAMP_EPS", "likelihood_loss",
    "unlikelihood_loss", "block_loss", "composite_loss", "loss_dp",
    "loss_gradient",
]
