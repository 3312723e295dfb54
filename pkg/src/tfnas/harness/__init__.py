"""Scoring runs, correlation reports, ablations and the command line."""
from .config import RunConfig, load_config
from .corpus import Corpus, load_corpus, load_vocab, sample_minibatch, synthetic_corpus
from .runner import (AblationResult, ScoreResult, ScoreRow, ablate, aggregate_scores, evaluate, read_journal,
                     run_cells, score_architectures, select_deciles, stability_summary)
