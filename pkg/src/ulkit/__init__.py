"""Unlikelihood training toolkit.

Training objectives that suppress repetition and blocklisted phrases in
autoregressive text generation, plus everything needed to check they work
at desk scale: a synthetic outline-to-paragraph corpus, a small float64
language model with exact gradients, greedy/beam decoding, post-hoc
near-duplicate removal, and a metrics suite with brute-force twins.
"""

from .corpus import (CorpusSample, CorpusError, SynthConfig, load_blocklist,
                     load_corpus, parse_sample, save_blocklist, save_corpus,
                     serialize_sample, synth_corpus)
from .tokenizer import (PAD_ID, BOS_ID, EOS_ID, UNK_ID, TokenSequence, Vocab,
                        build_vocab, decode, encode, load_vocab, save_vocab,
                        tokenize_text)
from .candidates import (BlocklistAutomaton, CandidateSchedule, block_candidates,
                         compile_blocklist, encode_blocklist, naive_block_scan,
                         naive_seq_level_candidates, seq_level_candidates,
                         token_level_candidates)
from .objectives import (CLAMP_EPS, LossStats, ObjectiveConfig, block_loss,
                         composite_loss, likelihood_loss, loss_dp, loss_gradient,
                         unlikelihood_loss)
from .model import (ModelConfig, ModelParams, TrainLog, TrainPlan,
                    TrainingDiverged, forward, forward_all, grad_check,
                    init_model, load_checkpoint, pack_example, pack_prompt,
                    save_checkpoint, train)
from .decoding import DecodeConfig, beam_search, generate, greedy_decode
from .metrics import (LmMetrics, MetricsReport, blocklist_output_count,
                      corpus_seq_rep, evaluate_model, generate_outputs,
                      lm_metrics, rep_stats, rouge, seq_rep, uniq_seq)
from .dedup import (DedupConfig, DropRecord, cosine, dedup_paragraph,
                    dedup_report, dedup_text, load_embeddings, save_embeddings,
                    split_sentences, toy_embed)
from .estimators import SentenceDeduplicator, UnlikelihoodTextGenerator

__version__ = "0.1.0"
