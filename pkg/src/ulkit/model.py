"""Desk-scale autoregressive language model with exact hand-written gradients.

The architecture is deliberately minimal: token + position embeddings, a
stack of causal single-head self-attention blocks each followed by a
two-layer tanh feed-forward (both with residual connections), and a tied
output projection.  Everything is float64 numpy with a reverse-mode
backward pass written out by hand, which keeps the model finite-difference
checkable to tight tolerances and bitwise reproducible.

Training packs each (outline, paragraph) sample as::

    <bos> outline-tokens <bos> paragraph-tokens <eos>

with the loss restricted to the paragraph span, so generation conditions
on the outline.  The trainer implements plain teacher-forced steps and the
mixed regime where a coin decides, per optimizer step, between a
token-level step on the ground truth and a sequence-level step whose
candidates are read off a greedy continuation decoded from the current
model.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ._rng import substream
from ._validation import check_positive, check_token_sequence
from .corpus import CorpusSample
from .candidates import (BlocklistAutomaton, CandidateSchedule, block_candidates,
                         encode_blocklist, seq_level_candidates,
                         token_level_candidates)
from .objectives import LossStats, ObjectiveConfig, loss_dp, loss_gradient
from .tokenizer import BOS_ID, EOS_ID, Vocab, encode

OBJECTIVES = ("mle", "token_ul", "seq_ul", "seq_ul_block")

CHECKPOINT_FORMAT = "ulkit-checkpoint"
CHECKPOINT_VERSION = 1

#: Gradients are clipped to this global L2 norm before each update.
GRAD_CLIP_NORM = 1.0

_INIT_SCALE = 0.1


class TrainingDiverged(RuntimeError):
    """Raised when a non-finite loss appears during training."""


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    embed_dim: int = 64
    context_len: int = 128
    num_blocks: int = 1
    seed: int = 0

    def __post_init__(self):
        check_positive(self.vocab_size, "vocab_size")
        check_positive(self.embed_dim, "embed_dim")
        check_positive(self.context_len, "context_len")
        check_positive(self.num_blocks, "num_blocks")

    @property
    def ffn_dim(self) -> int:
        return 2 * self.embed_dim


def _layout(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    V, d, L = config.vocab_size, config.embed_dim, config.context_len
    h = config.ffn_dim
    entries = [("embed", (V, d)), ("pos", (L, d))]
    for b in range(config.num_blocks):
        entries += [
            (f"b{b}.wq", (d, d)), (f"b{b}.wk", (d, d)),
            (f"b{b}.wv", (d, d)), (f"b{b}.wo", (d, d)),
            (f"b{b}.w1", (d, h)), (f"b{b}.b1", (h,)),
            (f"b{b}.w2", (h, d)), (f"b{b}.b2", (d,)),
        ]
    return entries


def param_count(config: ModelConfig) -> int:
    return sum(int(np.prod(shape)) for _, shape in _layout(config))


@dataclass
class ModelParams:
    """Flat float64 parameter vector plus named views and a step counter."""

    config: ModelConfig
    flat: np.ndarray
    step: int = 0
    _views: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def views(self) -> dict[str, np.ndarray]:
        if not self._views:
            offset = 0
            for name, shape in _layout(self.config):
                size = int(np.prod(shape))
                self._views[name] = self.flat[offset:offset + size].reshape(shape)
                offset += size
            if offset != self.flat.size:
                raise ValueError(f"parameter vector has {self.flat.size} entries, "
                                 f"layout requires {offset}")
        return self._views

    def view(self, name: str) -> np.ndarray:
        return self.views()[name]

    def copy(self) -> "ModelParams":
        return ModelParams(config=self.config, flat=self.flat.copy(), step=self.step)


def init_model(config: ModelConfig) -> ModelParams:
    """Deterministic small uniform initialization in (-0.1, 0.1)."""
    rng = substream(config.seed, "model-init")
    flat = rng.uniform(-_INIT_SCALE, _INIT_SCALE, size=param_count(config))
    return ModelParams(config=config, flat=flat)


def _softmax_rows(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward_all(params: ModelParams, tokens: Sequence[int]):
    """Next-token distributions at every position of ``tokens``.

    Returns ``(dists, cache)`` where ``dists[i]`` is p(next | tokens[..i])
    and ``cache`` holds the intermediates :func:`backward_dists` needs.
    """
    cfg = params.config
    ids = np.asarray(check_token_sequence(tokens, cfg.vocab_size, name="tokens"),
                     dtype=np.intp)
    S = ids.size
    if S == 0:
        raise ValueError("tokens must be non-empty")
    if S > cfg.context_len:
        raise ValueError(f"sequence length {S} exceeds context_len {cfg.context_len}")
    v = params.views()
    scale = 1.0 / math.sqrt(cfg.embed_dim)
    mask = np.triu(np.ones((S, S), dtype=bool), k=1)

    H = v["embed"][ids] + v["pos"][:S]
    blocks = []
    for b in range(cfg.num_blocks):
        wq, wk, wv, wo = (v[f"b{b}.wq"], v[f"b{b}.wk"], v[f"b{b}.wv"], v[f"b{b}.wo"])
        w1, b1, w2, b2 = (v[f"b{b}.w1"], v[f"b{b}.b1"], v[f"b{b}.w2"], v[f"b{b}.b2"])
        h_in = H
        q, k, vv = h_in @ wq, h_in @ wk, h_in @ wv
        scores = (q @ k.T) * scale
        scores[mask] = -np.inf
        attn = _softmax_rows(scores)
        ctx = attn @ vv
        h_mid = h_in + ctx @ wo
        u = np.tanh(h_mid @ w1 + b1)
        H = h_mid + u @ w2 + b2
        blocks.append({"h_in": h_in, "q": q, "k": k, "vv": vv, "attn": attn,
                       "ctx": ctx, "h_mid": h_mid, "u": u})
    logits = H @ v["embed"].T
    probs = _softmax_rows(logits)
    cache = {"ids": ids, "blocks": blocks, "h_final": H, "probs": probs,
             "params": params, "scale": scale}
    return probs, cache


def forward(params: ModelParams, prefix: Sequence[int]) -> np.ndarray:
    """Distribution of the next token after ``prefix``.

    Prefixes longer than the context window are truncated to their last
    ``context_len`` tokens.
    """
    prefix = tuple(prefix)[-params.config.context_len:]
    probs, _ = forward_all(params, prefix)
    return probs[-1]


def backward_dists(cache, dprobs: np.ndarray) -> np.ndarray:
    """Pull a gradient w.r.t. the output distributions back to the parameters."""
    params: ModelParams = cache["params"]
    cfg = params.config
    v = params.views()
    ids = cache["ids"]
    S = ids.size
    probs = cache["probs"]
    grad = np.zeros_like(params.flat)
    gp = ModelParams(config=cfg, flat=grad)
    gv = gp.views()

    # softmax output layer
    dlogits = probs * (dprobs - np.sum(dprobs * probs, axis=1, keepdims=True))
    dH = dlogits @ v["embed"]
    gv["embed"] += dlogits.T @ cache["h_final"]

    scale = cache["scale"]
    for b in reversed(range(cfg.num_blocks)):
        blk = cache["blocks"][b]
        wq, wk, wv, wo = (v[f"b{b}.wq"], v[f"b{b}.wk"], v[f"b{b}.wv"], v[f"b{b}.wo"])
        w1, w2 = v[f"b{b}.w1"], v[f"b{b}.w2"]
        h_in, q, k, vv = blk["h_in"], blk["q"], blk["k"], blk["vv"]
        attn, ctx, h_mid, u = blk["attn"], blk["ctx"], blk["h_mid"], blk["u"]

        # feed-forward (residual)
        du = dH @ w2.T
        gv[f"b{b}.w2"] += u.T @ dH
        gv[f"b{b}.b2"] += dH.sum(axis=0)
        dz1 = du * (1.0 - u * u)
        gv[f"b{b}.w1"] += h_mid.T @ dz1
        gv[f"b{b}.b1"] += dz1.sum(axis=0)
        dh_mid = dH + dz1 @ w1.T

        # attention (residual)
        gv[f"b{b}.wo"] += ctx.T @ dh_mid
        dctx = dh_mid @ wo.T
        dattn = dctx @ vv.T
        dvv = attn.T @ dctx
        dscores = attn * (dattn - np.sum(dattn * attn, axis=1, keepdims=True))
        dq = (dscores @ k) * scale
        dk = (dscores.T @ q) * scale
        gv[f"b{b}.wq"] += h_in.T @ dq
        gv[f"b{b}.wk"] += h_in.T @ dk
        gv[f"b{b}.wv"] += h_in.T @ dvv
        dH = dh_mid + dq @ wq.T + dk @ wk.T + dvv @ wv.T

    gv["pos"][:S] += dH
    np.add.at(gv["embed"], ids, dH)
    return grad


def sequence_loss(params: ModelParams, tokens: Sequence[int], loss_start: int,
                  schedules=(), stats: LossStats | None = None) -> float:
    """Loss of one packed sequence without computing gradients."""
    dists, _ = forward_all(params, tokens)
    scored = dists[loss_start - 1:len(tokens) - 1]
    target = tuple(tokens[loss_start:])
    loss, _ = loss_dp(scored, target, schedules, stats)
    return loss


# ---------------------------------------------------------------------------
# sample packing
# ---------------------------------------------------------------------------

def pack_prompt(vocab: Vocab, bullet_points: str, casefold: bool = False) -> tuple[int, ...]:
    """Model prefix for generation: ``<bos> outline <bos>``."""
    return (BOS_ID,) + encode(bullet_points, vocab, casefold=casefold) + (BOS_ID,)


def pack_example(vocab: Vocab, sample: CorpusSample, context_len: int,
                 casefold: bool = False) -> tuple[tuple[int, ...], int]:
    """Pack one sample for training; returns ``(tokens, loss_start)``.

    ``tokens[loss_start:]`` is the scored span (paragraph plus ``<eos>``),
    truncated on the right if the packed sequence overflows the context.
    """
    prompt = pack_prompt(vocab, sample.bullet_points, casefold=casefold)
    target = encode(sample.paragraph, vocab, casefold=casefold) + (EOS_ID,)
    if len(prompt) + 1 > context_len:
        raise ValueError(f"outline of {len(prompt)} tokens leaves no room for the "
                         f"paragraph in a context of {context_len}")
    tokens = (prompt + target)[:context_len]
    return tokens, len(prompt)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainPlan:
    """What to optimize and for how long.

    ``objective`` picks the loss family.  For the mixed families (``seq_ul``
    and ``seq_ul_block``), ``token_step_objective`` names the objective of
    the non-sequence-level steps; it defaults to ``token_ul``, matching a
    staging chain where the sequence-level stage starts from a token-level
    unlikelihood model.
    """

    objective: str = "mle"
    config: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    epochs: int = 1
    batch_size: int = 8
    learning_rate: float = 0.1
    init_from: ModelParams | None = None
    token_step_objective: str | None = None
    decode_len: int = 32

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        check_positive(self.batch_size, "batch_size")
        check_positive(self.learning_rate, "learning_rate")
        check_positive(self.decode_len, "decode_len")
        if self.token_step_objective is not None and \
                self.token_step_objective not in ("mle", "token_ul"):
            raise ValueError("token_step_objective must be 'mle' or 'token_ul'")

    def resolved_token_step(self) -> str:
        if self.objective in ("mle", "token_ul"):
            return self.objective
        return self.token_step_objective or "token_ul"


@dataclass
class TrainLogRecord:
    step: int
    kind: str
    loss: float
    clamp_count: int

    def to_json(self) -> str:
        return json.dumps(asdict(self))


@dataclass
class TrainLog:
    """Per-step records plus wall-time per 100 steps for each objective kind."""

    records: list[TrainLogRecord] = field(default_factory=list)
    _seconds: dict[str, float] = field(default_factory=dict)
    _counts: dict[str, int] = field(default_factory=dict)

    def record(self, step: int, kind: str, loss: float, clamp_count: int,
               seconds: float) -> None:
        self.records.append(TrainLogRecord(step, kind, loss, clamp_count))
        self._seconds[kind] = self._seconds.get(kind, 0.0) + seconds
        self._counts[kind] = self._counts.get(kind, 0) + 1

    def seconds_per_100_steps(self) -> dict[str, float]:
        return {kind: 100.0 * self._seconds[kind] / self._counts[kind]
                for kind in sorted(self._seconds)}

    def step_count(self, kind: str | None = None) -> int:
        if kind is None:
            return len(self.records)
        return self._counts.get(kind, 0)

    def mean_loss(self, kind: str | None = None, last: int | None = None) -> float:
        losses = [r.loss for r in self.records if kind is None or r.kind == kind]
        if last is not None:
            losses = losses[-last:]
        return float(np.mean(losses)) if losses else math.nan

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records:
                fh.write(rec.to_json() + "\n")
            fh.write(json.dumps({"seconds_per_100_steps": self.seconds_per_100_steps()}) + "\n")


def _slice_schedule(sched: CandidateSchedule, start: int) -> CandidateSchedule:
    return CandidateSchedule(sets=sched.sets[start:], source=sched.source)


def _resolve_automaton(blocklist, vocab: Vocab, cfg: ObjectiveConfig,
                       casefold: bool) -> BlocklistAutomaton:
    if isinstance(blocklist, BlocklistAutomaton):
        return blocklist
    return encode_blocklist(list(blocklist), vocab, casefold=casefold,
                            n_min=cfg.block_n_min, n_max=cfg.block_n_max)


def train(corpus: Sequence[CorpusSample], vocab: Vocab, plan: TrainPlan,
          blocklist=None, config: ModelConfig | None = None, seed: int = 0,
          casefold: bool = False) -> tuple[ModelParams, TrainLog]:
    """Teacher-forced SGD training of the packed corpus under ``plan``.

    The whole run is a pure function of (corpus, vocab, plan, seed): data
    order, the step-level mixing coin and the ground-truth prefix cuts each
    draw from their own named substream, so enabling one consumer never
    perturbs the others.

    Sequence-level steps greedily decode ``plan.decode_len`` tokens from a
    ground-truth prefix, build duplicate-n-gram (and, for ``seq_ul_block``,
    blocklist) candidates over the decoded span with full visibility of the
    gold prefix, and score only the decoded positions.
    """
    if not corpus:
        raise ValueError("empty corpus")
    ocfg = plan.config
    needs_block = plan.objective == "seq_ul_block"
    if needs_block and blocklist is None:
        raise ValueError("objective seq_ul_block requires a blocklist")
    if not needs_block and blocklist is not None:
        raise ValueError(f"objective {plan.objective!r} does not take a blocklist")
    automaton = _resolve_automaton(blocklist, vocab, ocfg, casefold) if needs_block else None

    if plan.init_from is not None:
        if config is not None and config != plan.init_from.config:
            raise ValueError("config conflicts with init_from checkpoint")
        params = plan.init_from.copy()
    else:
        params = init_model(config or ModelConfig(vocab_size=vocab.size, seed=seed))
    cfg = params.config
    if cfg.vocab_size != vocab.size:
        raise ValueError(f"model vocab_size {cfg.vocab_size} != vocabulary size {vocab.size}")
    if cfg.context_len < ocfg.seq_ngram:
        raise ValueError("context_len must be >= the sequence-level n-gram order")

    packed = [pack_example(vocab, s, cfg.context_len, casefold=casefold) for s in corpus]
    shuffle_rng = substream(seed, "train-shuffle")
    mix_rng = substream(seed, "train-mix")
    cut_rng = substream(seed, "train-cut")
    mixed = plan.objective in ("seq_ul", "seq_ul_block")
    token_kind = plan.resolved_token_step()

    log = TrainLog()
    step = 0
    for _epoch in range(plan.epochs):
        order = shuffle_rng.permutation(len(packed))
        for lo in range(0, len(order), plan.batch_size):
            batch = order[lo:lo + plan.batch_size]
            step += 1
            seq_step = mixed and float(mix_rng.random()) < ocfg.mix_prob
            kind = plan.objective if seq_step else token_kind
            stats = LossStats()
            t0 = time.perf_counter()
            grad = np.zeros_like(params.flat)
            loss_sum = 0.0
            for idx in batch:
                tokens, loss_start = packed[int(idx)]
                if seq_step:
                    loss, g = _seq_level_step(params, tokens, loss_start, plan,
                                              automaton, cut_rng, stats)
                else:
                    loss, g = _token_level_step(params, tokens, loss_start,
                                                token_kind, ocfg, stats)
                loss_sum += loss
                grad += g
            if not math.isfinite(loss_sum):
                raise TrainingDiverged(f"non-finite loss at step {step}")
            grad /= len(batch)
            norm = float(np.linalg.norm(grad))
            if norm > GRAD_CLIP_NORM:
                grad *= GRAD_CLIP_NORM / norm
            params.flat -= plan.learning_rate * grad
            params.step += 1
            log.record(step, kind, loss_sum / len(batch), stats.clamp_count,
                       time.perf_counter() - t0)
    return params, log


def _token_level_step(params, tokens, loss_start, kind, ocfg, stats):
    if kind == "token_ul" and ocfg.alpha != 0.0:
        target = tuple(tokens[loss_start:])
        schedules = ((token_level_candidates(target), ocfg.alpha),)
    else:
        schedules = ()
    return loss_gradient(params, tokens, loss_start, schedules, stats)


def _seq_level_step(params, tokens, loss_start, plan, automaton, cut_rng, stats):
    cfg = params.config
    ocfg = plan.config
    target = tokens[loss_start:]
    content_len = len(target) - (1 if target and target[-1] == EOS_ID else 0)
    # keep the gold prefix short relative to the continuation, so the scored
    # span reflects the model's own generation from near the start
    max_cut = max(0, min(content_len, plan.decode_len // 4,
                         cfg.context_len - plan.decode_len - loss_start))
    cut = int(cut_rng.integers(0, max_cut + 1))
    prefix = tokens[:loss_start + cut]
    budget = cfg.context_len - len(prefix)
    if budget < 1:
        # outline alone fills the context; no room to decode a continuation
        return _token_level_step(params, tokens, loss_start,
                                 plan.resolved_token_step(), ocfg, stats)

    decoded: list[int] = []
    current = list(prefix)
    for _ in range(min(plan.decode_len, budget)):
        dist = forward(params, current)
        tok = int(np.argmax(dist))  # np.argmax takes the smallest index on ties
        decoded.append(tok)
        current.append(tok)
        if tok == EOS_ID:
            break

    story = tuple(prefix[loss_start:]) + tuple(decoded)
    schedules = []
    seq_cands = seq_level_candidates(story, ocfg.seq_ngram)
    if ocfg.alpha != 0.0 and seq_cands.total_candidates() > 0:
        schedules.append((_slice_schedule(seq_cands, cut), ocfg.alpha))
    if automaton is not None and ocfg.beta != 0.0:
        blk_cands = block_candidates(story, automaton)
        if blk_cands.total_candidates() > 0:
            schedules.append((_slice_schedule(blk_cands, cut), ocfg.beta))
    full = tuple(prefix) + tuple(decoded)
    return loss_gradient(params, full, loss_start + cut, tuple(schedules), stats)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(params: ModelParams, path: str | Path) -> None:
    """Write a deterministic container: JSON header line + raw float64 bytes."""
    header = json.dumps({
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": asdict(params.config),
        "step": params.step,
    }, sort_keys=True)
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8") + b"\n")
        fh.write(np.ascontiguousarray(params.flat, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> ModelParams:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: not a model checkpoint")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
        config = ModelConfig(**header["config"])
        flat = np.frombuffer(fh.read(), dtype="<f8").astype(np.float64)
    if flat.size != param_count(config):
        raise ValueError(f"{path}: expected {param_count(config)} parameters, "
                         f"found {flat.size}")
    return ModelParams(config=config, flat=flat, step=int(header["step"]))


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def _grad_check_case(config: ModelConfig, variant: str, rng) -> tuple:
    """One random (params, tokens, loss_start, schedules) gradient-check case."""
    params = init_model(replace(config, seed=int(rng.integers(2**31))))
    params.flat += rng.uniform(-0.05, 0.05, size=params.flat.size)
    length = int(rng.integers(5, min(11, config.context_len + 1)))
    # small id range => duplicated tokens and n-grams are common
    hi = min(config.vocab_size, 6)
    tokens = [int(t) for t in rng.integers(0, hi, size=length)]
    if variant == "block":
        phrase = tuple(int(t) for t in rng.integers(0, hi, size=2))
        at = int(rng.integers(1, length - 1))
        tokens[at:at + 2] = list(phrase)
        tokens = tokens[:length]
    tokens = tuple(tokens)
    loss_start = 1
    target = tokens[loss_start:]
    if variant == "mle":
        schedules = ()
    elif variant == "token_ul":
        schedules = ((token_level_candidates(target), 1.0),)
    elif variant == "seq_ul":
        schedules = ((seq_level_candidates(target, 2), 1.0),)
    elif variant == "block":
        automaton = BlocklistAutomaton([phrase], n_min=2, n_max=10)
        schedules = ((block_candidates(target, automaton), 2.5),)
    else:
        raise ValueError(f"unknown gradient-check variant {variant!r}")
    return params, tokens, loss_start, schedules


def grad_check(config: ModelConfig, variant: str, trials: int,
               eps: float = 1e-5, seed: int = 0) -> float:
    """Worst relative error of analytic vs central-difference gradients.

    The relative error of a coordinate pair (a, b) is |a - b| / max(1, |a|,
    |b|); the unit floor keeps finite-difference noise on near-zero
    coordinates from registering as error.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = substream(seed, f"grad-check-{variant}")
    worst = 0.0
    for _ in range(trials):
        params, tokens, loss_start, schedules = _grad_check_case(config, variant, rng)
        _, analytic = loss_gradient(params, tokens, loss_start, schedules)
        fd = np.zeros_like(analytic)
        for i in range(params.flat.size):
            orig = params.flat[i]
            params.flat[i] = orig + eps
            up = sequence_loss(params, tokens, loss_start, schedules)
            params.flat[i] = orig - eps
            down = sequence_loss(params, tokens, loss_start, schedules)
            params.flat[i] = orig
            fd[i] = (up - down) / (2.0 * eps)
        denom = np.maximum(1.0, np.maximum(np.abs(fd), np.abs(analytic)))
        worst = max(worst, float(np.max(np.abs(fd - analytic) / denom)))
    return worst
