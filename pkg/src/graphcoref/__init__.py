"""Coreference resolution as iterative graph refinement over a relation-aware Transformer."""

from .corpus import (ClusterSet, ConllParseError, Document, MentionSpan, SyntheticConfig, TokenSplitMap,
                     gen_synthetic, parse_conll, read_jsonl, write_conll, write_jsonl)
from .encoder import EncoderConfig, EncoderParams, Vocab, encode, init_params, load_checkpoint, save_checkpoint
from .graph import (COREF, MENTION, NO_LINK, CorefGraph, HeadExhaustionError, assign_heads, clusters_to_output,
                    decode_clusters, output_to_input, validate)
from .longdoc import (ReducedDoc, WindowPlan, decode_windows, detect_candidates, plan_windows, reduce_document,
                      refine_reduced, train_reduced, truncate)
from .metrics import ScoreReport, avg_f1, b_cubed, ceaf_phi4, muc, paired_bootstrap, score_corpus
from .objective import CandidateSet, antecedent_scores, loss_coref, loss_mention, mention_scores
from .refine import RefinementConfig, RefinementTrace, TrainOptions, refine, train

__version__ = "0.1.0"
