"""Decoding objectives over relaxed target sequences.

Three objective kinds share one evaluator interface:

  single          C(yhat) = -log P_fwd(yhat | x)
  bidirectional   C(yhat) = -alpha log P_r2l(rev yhat | x)
                            - (1-alpha) log P_l2r(yhat | x)
  bilingual       C(yhat) = -alpha log P_s2t(yhat | x)
                            - (1-alpha) log P_t2s(x | yhat)

Relaxed rows live in natural (left-to-right) order; evaluating under a
right-to-left model reverses the non-final rows and keeps the final row
(the designated eos slot) last, so reversing twice is the identity.  In
the bilingual reverse term the relaxed rows feed the t2s encoder through
expected source embeddings, all rows included (no soft truncation at the
eos slot).

Ensemble costs and gradients are computed term by term and combined as
the literal alpha-weighted sum, so linearity in alpha holds exactly in
floating point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .data import EOS
from .model import (
    ModelParams,
    _forced_from_enc,
    _relaxed_from_enc,
    encode,
)
from .search import force_score

KINDS = ("single", "bidirectional", "bilingual")


def _same_tokens(a, b):
    return a.content_tokens == b.content_tokens


@dataclass(frozen=True)
class ObjectiveSpec:
    """Which models score a relaxed sequence for one source sentence."""

    kind: str
    forward: ModelParams
    x: tuple
    reverse: ModelParams = None
    alpha: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(int(t) for t in self.x))
        if self.kind not in KINDS:
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if len(self.x) == 0:
            raise ValueError("objective needs a non-empty source sentence")
        if self.kind == "single":
            if self.reverse is not None:
                raise ValueError("single objective takes no reverse model")
        else:
            if self.reverse is None:
                raise ValueError(f"{self.kind} objective needs a reverse model")
        if self.kind == "bidirectional":
            if self.forward.config.direction != "l2r":
                raise ValueError("bidirectional forward model must be l2r")
            if self.reverse.config.direction != "r2l":
                raise ValueError("bidirectional reverse model must be r2l")
            if not _same_tokens(self.forward.tgt_vocab, self.reverse.tgt_vocab):
                raise ValueError("bidirectional models must share the target vocabulary")
            if not _same_tokens(self.forward.src_vocab, self.reverse.src_vocab):
                raise ValueError("bidirectional models must share the source vocabulary")
        if self.kind == "bilingual":
            if self.forward.config.side != "s2t":
                raise ValueError("bilingual forward model must be s2t")
            if self.reverse.config.side != "t2s":
                raise ValueError("bilingual reverse model must be t2s")
            if not _same_tokens(self.forward.tgt_vocab, self.reverse.src_vocab):
                raise ValueError(
                    "bilingual forward target vocabulary must equal reverse source vocabulary"
                )
            if not _same_tokens(self.forward.src_vocab, self.reverse.tgt_vocab):
                raise ValueError(
                    "bilingual forward source vocabulary must equal reverse target vocabulary"
                )

    @property
    def tgt_vocab_size(self):
        return self.forward.config.tgt_vocab_size

    @property
    def tgt_vocab(self):
        return self.forward.tgt_vocab


def reverse_rows(rows):
    """Row order seen by a right-to-left model: reverse all but the last row.

    The final row is the designated eos slot and stays in place; applied
    twice this is the identity.
    """
    if len(rows) <= 1:
        return list(rows)
    rows = list(rows)
    return rows[-2::-1] + [rows[-1]]


def _reverse_perm(ell):
    return list(range(ell - 2, -1, -1)) + [ell - 1] if ell > 1 else [0]


class _TermEval:
    """-log P(rows | x) under one model, differentiable in the rows.

    The encoder does not depend on the relaxed rows, so its states are
    computed once per sentence and reused as constants on every tape.
    """

    def __init__(self, model, x):
        self.model = model
        self.pt = model.tensors()
        self.enc = encode([int(t) for t in x], model, self.pt)
        self.x = [int(t) for t in x]

    def _ordered(self, tensors):
        if self.model.config.direction == "r2l":
            return [tensors[p] for p in _reverse_perm(len(tensors))]
        return tensors

    def cost(self, rows):
        tensors = [Tensor(rows[i]) for i in range(rows.shape[0])]
        lp = _relaxed_from_enc(self.enc, self._ordered(tensors), self.model, self.pt)
        return -float(lp.data)

    def cost_and_grad(self, rows):
        tensors = [Tensor(rows[i], requires_grad=True) for i in range(rows.shape[0])]
        with Tape() as tape:
            lp = _relaxed_from_enc(
                self.enc, self._ordered(tensors), self.model, self.pt
            )
            loss = ad.scale(lp, -1.0)
            tape.backward(loss)
        grad = np.stack(
            [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]
        )
        return float(loss.data), grad

    def discrete_cost(self, tokens):
        return -force_score(self.x, list(tokens) + [EOS], self.model)


class _SourceTermEval:
    """-log P(x | rows) under a t2s model: rows feed the encoder.

    Here the encoder does depend on the relaxed rows, so each evaluation
    records encoder and decoder on one tape.
    """

    def __init__(self, model, x):
        self.model = model
        self.pt = model.tensors()
        tgt = [int(t) for t in x] + [EOS]
        if model.config.direction == "r2l":
            tgt = tgt[-2::-1] + [EOS]
        self.tgt = tgt
        self.x = [int(t) for t in x]

    def cost(self, rows):
        tensors = [Tensor(rows[i]) for i in range(rows.shape[0])]
        enc = encode(tensors, self.model, self.pt)
        lp = _forced_from_enc(enc, self.tgt, self.model, self.pt)
        return -float(lp.data)

    def cost_and_grad(self, rows):
        tensors = [Tensor(rows[i], requires_grad=True) for i in range(rows.shape[0])]
        with Tape() as tape:
            enc = encode(tensors, self.model, self.pt)
            lp = _forced_from_enc(enc, self.tgt, self.model, self.pt)
            loss = ad.scale(lp, -1.0)
            tape.backward(loss)
        grad = np.stack(
            [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]
        )
        return float(loss.data), grad

    def discrete_cost(self, tokens):
        return -force_score(self.x, list(tokens) + [EOS], self.model)


class Evaluator:
    """Weighted combination of term evaluators for one (objective, x)."""

    def __init__(self, terms):
        self.terms = terms  # list of (weight, term evaluator)

    def cost(self, rows):
        return sum(w * term.cost(rows) for w, term in self.terms)

    def cost_and_grad(self, rows):
        total_c, total_g = 0.0, None
        for w, term in self.terms:
            c, g = term.cost_and_grad(rows)
            total_c += w * c
            total_g = w * g if total_g is None else total_g + w * g
        return total_c, total_g

    def discrete_cost(self, tokens):
        return sum(w * term.discrete_cost(tokens) for w, term in self.terms)


def build_evaluator(spec):
    """Bind an ObjectiveSpec to reusable term evaluators."""
    a = spec.alpha
    if spec.kind == "single":
        terms = [(1.0, _TermEval(spec.forward, spec.x))]
    elif spec.kind == "bidirectional":
        terms = [
            (a, _TermEval(spec.reverse, spec.x)),
            (1.0 - a, _TermEval(spec.forward, spec.x)),
        ]
    else:  # bilingual
        terms = [
            (a, _TermEval(spec.forward, spec.x)),
            (1.0 - a, _SourceTermEval(spec.reverse, spec.x)),
        ]
    return Evaluator(terms)


def _as_rows(yhat, spec):
    rows = np.asarray(getattr(yhat, "rows", yhat), dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != spec.tgt_vocab_size:
        raise ValueError(
            f"relaxed rows of shape {rows.shape}, expected "
            f"(ell, {spec.tgt_vocab_size})"
        )
    return rows


def bidirectional_cost(yhat, spec):
    """alpha-weighted sum of the r2l and l2r relaxed costs."""
    if spec.kind != "bidirectional":
        raise ValueError("spec is not a bidirectional objective")
    return build_evaluator(spec).cost(_as_rows(yhat, spec))


def bilingual_cost(yhat, spec):
    """alpha-weighted sum of the s2t cost and the t2s source-given-rows cost."""
    if spec.kind != "bilingual":
        raise ValueError("spec is not a bilingual objective")
    return build_evaluator(spec).cost(_as_rows(yhat, spec))


def ensemble_grad(yhat, spec):
    """Gradient of the objective with respect to the relaxed rows."""
    return build_evaluator(spec).cost_and_grad(_as_rows(yhat, spec))[1]


def discrete_cost(tokens, spec):
    """Objective value of a discrete hypothesis (content tokens, no eos)."""
    return build_evaluator(spec).discrete_cost(tokens)
