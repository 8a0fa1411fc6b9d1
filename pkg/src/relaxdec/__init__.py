"""Decoding attentional translation models by relaxing the discrete
search over output sequences to continuous optimisation on the
probability simplex.

The package is organised bottom-up:

- `autodiff`: reverse-mode tape over float64 numpy arrays.
- `data`: synthetic parallel tasks, vocabularies, corpus file IO.
- `model`: attentional LSTM encoder-decoder, training, scoring.
- `checkpoint`: binary model serialisation that round-trips bit-exactly.
- `search`: greedy / beam / n-best / reranking baselines.
- `objectives`: single, bidirectional, and bilingual decoding costs.
- `relaxed`: exponentiated-gradient and gradient-descent decoders.
- `metrics`: corpus BLEU and evaluation reports.
- `experiment`, `cli`: batch drivers around everything above.
"""

from .autodiff import Tape, Tensor, tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .data import (
    ParallelCorpus,
    Vocabulary,
    build_vocab,
    generate_synthetic,
    read_corpus,
    split_corpus,
    write_corpus,
)
from .metrics import EvalReport, bleu, cost_scatter, make_eval_report
from .model import (
    ModelConfig,
    ModelParams,
    TrainConfig,
    forced_logits,
    init_model,
    perplexity,
    relaxed_log_prob,
    sequence_log_prob,
    train_model,
)
from .objectives import (
    ObjectiveSpec,
    bidirectional_cost,
    bilingual_cost,
    discrete_cost,
    ensemble_grad,
    reverse_rows,
)
from .relaxed import (
    DecodeResult,
    LogitSequence,
    OptimConfig,
    RelaxedSequence,
    eg_step,
    init_relaxed,
    line_search_eta,
    momentum_fold,
    relaxed_cost,
    relaxed_decode,
    relaxed_grad,
    round_solution,
    sgd_step,
)
from .search import (
    Hypothesis,
    NBestList,
    beam_decode,
    force_score,
    greedy_decode,
    read_nbest,
    rerank,
    to_natural_order,
    write_nbest,
)

__version__ = "0.1.0"

__all__ = [
    "Tape",
    "Tensor",
    "tensor",
    "load_checkpoint",
    "save_checkpoint",
    "ParallelCorpus",
    "Vocabulary",
    "build_vocab",
    "generate_synthetic",
    "read_corpus",
    "split_corpus",
    "write_corpus",
    "EvalReport",
    "bleu",
    "cost_scatter",
    "make_eval_report",
    "ModelConfig",
    "ModelParams",
    "TrainConfig",
    "forced_logits",
    "init_model",
    "perplexity",
    "relaxed_log_prob",
    "sequence_log_prob",
    "train_model",
    "ObjectiveSpec",
    "bidirectional_cost",
    "bilingual_cost",
    "discrete_cost",
    "ensemble_grad",
    "reverse_rows",
    "DecodeResult",
    "LogitSequence",
    "OptimConfig",
    "RelaxedSequence",
    "eg_step",
    "init_relaxed",
    "line_search_eta",
    "momentum_fold",
    "relaxed_cost",
    "relaxed_decode",
    "relaxed_grad",
    "round_solution",
    "sgd_step",
    "Hypothesis",
    "NBestList",
    "beam_decode",
    "force_score",
    "greedy_decode",
    "read_nbest",
    "rerank",
    "to_natural_order",
    "write_nbest",
    "__version__",
]
