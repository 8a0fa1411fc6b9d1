"""Corpus BLEU, cost normalisation, and evaluation reports.

BLEU is the classic corpus-level score: modified n-gram precisions for n
= 1..4 with clipped counts, geometric mean, multiplied by the brevity
penalty.  Tokens are case-folded first.  There is no smoothing: if any
precision is zero the score is zero.  Exactly one reference per
hypothesis.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

BLEU_MAX_ORDER = 4


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypotheses, references):
    """Corpus BLEU in percent for token-list hypotheses and references."""
    if len(hypotheses) != len(references):
        raise ValueError(
            f"hypothesis count {len(hypotheses)} != reference count {len(references)}"
        )
    if not hypotheses:
        raise ValueError("cannot score an empty corpus")
    matches = [0] * BLEU_MAX_ORDER
    totals = [0] * BLEU_MAX_ORDER
    hyp_len, ref_len = 0, 0
    for hyp, ref in zip(hypotheses, references):
        hyp = [t.lower() for t in hyp]
        ref = [t.lower() for t in ref]
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, BLEU_MAX_ORDER + 1):
            hc = _ngrams(hyp, n)
            rc = _ngrams(ref, n)
            totals[n - 1] += max(0, len(hyp) - n + 1)
            matches[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
    if hyp_len == 0:
        return 0.0
    log_p = 0.0
    for m, t in zip(matches, totals):
        if m == 0 or t == 0:
            return 0.0
        log_p += math.log(m / t)
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(log_p / BLEU_MAX_ORDER)


def normalized_continuous_cost(result):
    """Best Q per relaxed row, comparable across sentence lengths."""
    return result.continuous_cost / result.length


def normalized_discrete_cost(result):
    """Discrete cost per scored token (content tokens plus eos)."""
    return result.discrete_cost / (len(result.tokens) + 1)


@dataclass
class ScatterTable:
    """(continuous, discrete) normalised cost pairs plus the diagonal rate."""

    pairs: np.ndarray
    diagonal_fraction: float


def cost_scatter(results, tol=0.01):
    """Pair up normalised costs for a corpus of DecodeResults.

    Reports the fraction of sentences whose continuous and discrete
    costs agree within `tol`, i.e. sit on the diagonal of the scatter.
    """
    results = list(results)
    if not results:
        raise ValueError("cost_scatter needs at least one result")
    pairs = np.array(
        [
            (normalized_continuous_cost(r), normalized_discrete_cost(r))
            for r in results
        ]
    )
    close = np.abs(pairs[:, 0] - pairs[:, 1]) < tol
    return ScatterTable(pairs, float(close.mean()))


EVAL_HEADER = [
    "sentence_id",
    "continuous_cost",
    "discrete_cost",
    "output_length",
    "corpus_bleu",
    "corpus_avg_len",
]


@dataclass
class EvalReport:
    """Corpus BLEU, per-sentence costs, and the average output length.

    The corpus-level columns repeat on every CSV row so that one flat
    file with a single header line round-trips the whole report.
    """

    bleu: float
    continuous_costs: list
    discrete_costs: list
    output_lengths: list
    avg_len: float

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(EVAL_HEADER)
            for sid, (c, d, n) in enumerate(
                zip(self.continuous_costs, self.discrete_costs, self.output_lengths)
            ):
                writer.writerow(
                    [sid, repr(c), repr(d), n, repr(self.bleu), repr(self.avg_len)]
                )

    @classmethod
    def read_csv(cls, path):
        cont, disc, lens = [], [], []
        corpus_bleu, avg_len = 0.0, 0.0
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != EVAL_HEADER:
                raise ValueError(f"{path}: unexpected report header {header}")
            for _, c, d, n, b, a in reader:
                cont.append(float(c))
                disc.append(float(d))
                lens.append(int(n))
                corpus_bleu, avg_len = float(b), float(a)
        return cls(corpus_bleu, cont, disc, lens, avg_len)


def make_eval_report(hypotheses, references, continuous_costs, discrete_costs):
    """Assemble an EvalReport from decoded token strings and their costs."""
    lengths = [len(h) for h in hypotheses]
    return EvalReport(
        bleu=bleu(hypotheses, references),
        continuous_costs=list(continuous_costs),
        discrete_costs=list(discrete_costs),
        output_lengths=lengths,
        avg_len=float(np.mean(lengths)) if lengths else 0.0,
    )
