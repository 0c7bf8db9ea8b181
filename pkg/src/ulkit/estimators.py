"""Scikit-learn style facades over the functional core.

``UnlikelihoodTextGenerator`` is fit/generate-shaped: ``fit`` builds a
vocabulary and trains the small language model under the configured
objective, ``generate``/``predict`` decode paragraphs from outlines, and
``evaluate`` returns the full metrics report.  ``SentenceDeduplicator`` is
a transformer that rewrites paragraphs with near-duplicate sentences
removed.  Both follow the usual estimator conventions (constructor stores
hyperparameters untouched, fitted state ends in trailing-underscore
attributes, ``get_params``/``set_params`` come from ``BaseEstimator``).
"""

from __future__ import annotations

from typing import Iterable, Sequence

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from . import dedup as dedup_mod
from . import metrics as metrics_mod
from . import model as model_mod
from .corpus import CorpusSample, parse_sample
from .decoding import DecodeConfig
from .objectives import ObjectiveConfig
from .tokenizer import build_vocab, decode


def as_samples(X: Iterable) -> list[CorpusSample]:
    """Normalize samples given as CorpusSample, mapping, or (outline, paragraph)."""
    out = []
    for item in X:
        if isinstance(item, CorpusSample):
            out.append(item)
        elif isinstance(item, (tuple, list)) and len(item) == 2:
            out.append(CorpusSample(bullet_points=item[0], paragraph=item[1]))
        else:
            out.append(parse_sample(item))
    return out


class UnlikelihoodTextGenerator(BaseEstimator):
    """Outline-to-paragraph generator trained with a selectable objective.

    Parameters mirror the training plan and model configuration; see
    :class:`ulkit.model.TrainPlan` and :class:`ulkit.model.ModelConfig`.
    ``blocklist`` (an iterable of text phrases) is required exactly when
    ``objective="seq_ul_block"``.
    """

    def __init__(self, objective="mle", alpha=1.0, beta=10.0, seq_ngram=4,
                 mix_prob=0.5, epochs=1, batch_size=8, learning_rate=0.1,
                 embed_dim=64, context_len=128, num_blocks=1, max_vocab=2000,
                 beam_size=5, max_len=64, decode_len=32, token_step_objective=None,
                 blocklist=None, casefold=False, seed=0):
        self.objective = objective
        self.alpha = alpha
        self.beta = beta
        self.seq_ngram = seq_ngram
        self.mix_prob = mix_prob
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.embed_dim = embed_dim
        self.context_len = context_len
        self.num_blocks = num_blocks
        self.max_vocab = max_vocab
        self.beam_size = beam_size
        self.max_len = max_len
        self.decode_len = decode_len
        self.token_step_objective = token_step_objective
        self.blocklist = blocklist
        self.casefold = casefold
        self.seed = seed

    def _plan(self, init_from=None) -> model_mod.TrainPlan:
        return model_mod.TrainPlan(
            objective=self.objective,
            config=ObjectiveConfig(alpha=self.alpha, beta=self.beta,
                                   seq_ngram=self.seq_ngram, mix_prob=self.mix_prob),
            epochs=self.epochs, batch_size=self.batch_size,
            learning_rate=self.learning_rate, init_from=init_from,
            token_step_objective=self.token_step_objective,
            decode_len=self.decode_len,
        )

    def fit(self, X, y=None, init_from=None):
        """Build the vocabulary and train; ``init_from`` stages on a prior model."""
        samples = as_samples(X)
        self.vocab_ = build_vocab(samples, self.max_vocab, casefold=self.casefold)
        config = None
        if init_from is None:
            config = model_mod.ModelConfig(vocab_size=self.vocab_.size,
                                           embed_dim=self.embed_dim,
                                           context_len=self.context_len,
                                           num_blocks=self.num_blocks, seed=self.seed)
        elif isinstance(init_from, UnlikelihoodTextGenerator):
            self.vocab_ = init_from.vocab_  # staged models must share ids
            init_from = init_from.params_
        self.params_, self.log_ = model_mod.train(
            samples, self.vocab_, self._plan(init_from), blocklist=self.blocklist,
            config=config, seed=self.seed, casefold=self.casefold)
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("fit must be called before using this estimator")

    def _decode_config(self) -> DecodeConfig:
        strategy = "greedy" if self.beam_size == 1 else "beam"
        return DecodeConfig(strategy=strategy, beam_size=self.beam_size,
                            max_len=self.max_len)

    def generate(self, X) -> list[str]:
        """Decode one paragraph per input outline (samples or outline strings)."""
        self._check_fitted()
        samples = [CorpusSample(bullet_points=x, paragraph="(unused)") if isinstance(x, str)
                   else x for x in X]
        samples = as_samples(samples)
        outputs = metrics_mod.generate_outputs(self.params_, samples, self.vocab_,
                                               self._decode_config(),
                                               casefold=self.casefold)
        return [decode(out, self.vocab_) for out in outputs]

    def predict(self, X) -> list[str]:
        return self.generate(X)

    def evaluate(self, X, window: int = 128, automaton=None) -> metrics_mod.MetricsReport:
        self._check_fitted()
        return metrics_mod.evaluate_model(self.params_, as_samples(X), self.vocab_,
                                          decode=self._decode_config(),
                                          window=min(window, self.context_len),
                                          automaton=automaton, casefold=self.casefold)

    def score(self, X, y=None) -> float:
        """Teacher-forced next-token accuracy (higher is better)."""
        self._check_fitted()
        lm = metrics_mod.lm_metrics(self.params_, as_samples(X), self.vocab_,
                                    window=min(128, self.context_len),
                                    casefold=self.casefold)
        return lm.acc


class SentenceDeduplicator(BaseEstimator, TransformerMixin):
    """Drop near-duplicate sentences from paragraphs (post-hoc baseline)."""

    def __init__(self, threshold=0.91, keep="first", max_vocab=10000, casefold=False):
        self.threshold = threshold
        self.keep = keep
        self.max_vocab = max_vocab
        self.casefold = casefold

    def fit(self, X, y=None):
        """Learn the bag-of-tokens vocabulary the toy embedder uses."""
        texts = [x.paragraph if isinstance(x, CorpusSample) else str(x) for x in X]
        self.vocab_ = build_vocab(texts, self.max_vocab, casefold=self.casefold)
        return self

    def transform(self, X) -> list[str]:
        if not hasattr(self, "vocab_"):
            raise NotFittedError("fit must be called before transform")
        config = dedup_mod.DedupConfig(threshold=self.threshold, keep=self.keep)
        out = []
        for x in X:
            text = x.paragraph if isinstance(x, CorpusSample) else str(x)
            deduped, _ = dedup_mod.dedup_text(text, self.vocab_, config,
                                              casefold=self.casefold)
            out.append(deduped)
        return out
