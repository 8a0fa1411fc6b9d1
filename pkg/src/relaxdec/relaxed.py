"""Decoding as continuous optimisation over the probability simplex.

Instead of searching discrete token sequences, the decoder relaxes each
target position i to a distribution yhat_i over the vocabulary and
minimises

    Q(yhat) = -sum_i yhat_i . log softmax(f(theta, yhat_<i, x))

where earlier rows feed the recurrence through expected embeddings.  Two
optimisers are provided: exponentiated gradient (EG), whose
multiplicative update keeps every row exactly on the simplex, and
plain gradient descent (SGD) on pre-softmax logits.  Both support
momentum (the step size is folded into the momentum accumulator, so the
multiplicative update is applied with step 1) and optional multiplicative
step-size annealing.

The returned solution is the best iterate by continuous cost, with the
initialisation kept in the candidate set, so the result is never worse
than the initialiser.  Rounding takes each row's argmax (ties to the
lowest token id) and truncates at the first eos.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .data import EOS
from .model import SIMPLEX_TOL, forced_logits
from .objectives import build_evaluator, reverse_rows
from .search import beam_decode, greedy_decode, rerank

PROB_FLOOR = 1e-300

INIT_STRATEGIES = ("uniform", "greedy", "beam", "rerank")


class RelaxedSequence:
    """ell rows, each a distribution over the target vocabulary."""

    __slots__ = ("rows",)

    def __init__(self, rows, validate=True):
        rows = np.ascontiguousarray(np.asarray(rows, dtype=np.float64))
        if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 2:
            raise ValueError(f"relaxed sequence needs (ell, vocab) rows, got {rows.shape}")
        if validate:
            if not np.all(np.isfinite(rows)):
                raise ValueError("relaxed rows contain NaN or Inf")
            if rows.min() < 0.0:
                raise ValueError(f"relaxed row entry below zero: {rows.min():.3e}")
            sums = rows.sum(axis=1)
            worst = np.abs(sums - 1.0).max()
            if worst > SIMPLEX_TOL:
                raise ValueError(f"relaxed row sums off by {worst:.3e} (> {SIMPLEX_TOL})")
        self.rows = rows

    def __len__(self):
        return self.rows.shape[0]

    @property
    def vocab_size(self):
        return self.rows.shape[1]

    @classmethod
    def uniform(cls, ell, vocab_size):
        return cls(np.full((ell, vocab_size), 1.0 / vocab_size), validate=False)


class LogitSequence:
    """Pre-softmax parameterisation used by the SGD decoder."""

    __slots__ = ("rows",)

    def __init__(self, rows):
        rows = np.ascontiguousarray(np.asarray(rows, dtype=np.float64))
        if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 2:
            raise ValueError(f"logit sequence needs (ell, vocab) rows, got {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise ValueError("logit rows contain NaN or Inf")
        self.rows = rows

    def __len__(self):
        return self.rows.shape[0]

    def to_relaxed(self):
        return RelaxedSequence(_softmax_rows(self.rows), validate=False)


def _softmax_rows(rows):
    z = rows - rows.max(axis=1, keepdims=True)
    w = np.exp(z)
    return w / w.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class OptimConfig:
    """Settings for one relaxed decode."""

    algorithm: str = "eg"
    eta: float = 50.0
    momentum: float = 0.9
    max_iter: int = 100
    init: str = "beam"
    beam_width: int = 5
    rerank_size: int = 10
    anneal: float = 1.0
    length: int = None
    conv_tol: float = 1e-6
    conv_window: int = 3

    def __post_init__(self):
        if self.algorithm not in ("eg", "sgd"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.init not in INIT_STRATEGIES:
            raise ValueError(f"unknown init strategy {self.init!r}")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not 0.0 < self.anneal <= 1.0:
            raise ValueError("anneal factor must lie in (0, 1]")
        if self.beam_width < 1 or self.rerank_size < 1:
            raise ValueError("beam_width and rerank_size must be at least 1")
        if self.length is not None and self.length < 1:
            raise ValueError("length must be at least 1 when given")
        if self.conv_tol <= 0 or self.conv_window < 1:
            raise ValueError("conv_tol must be positive and conv_window >= 1")


def default_relaxed_length(x):
    """Row count used by the uniform initialiser."""
    return int(round(1.2 * len(x))) + 1


def round_solution(yhat):
    """Argmax each row (ties to the lowest id), truncate at the first eos.

    Returns content token ids; the eos itself is not included.
    """
    rows = getattr(yhat, "rows", yhat)
    out = []
    for i in range(rows.shape[0]):
        w = int(np.argmax(rows[i]))
        if w == EOS:
            break
        out.append(w)
    return out


def entropy_diagnostic(yhat):
    """Total Shannon entropy (nats) of the rows; 0 log 0 counts as 0.

    The EG update can be read as minimising Q minus a weighted sum of
    row entropies, so this quantity is worth watching during decoding.
    """
    rows = getattr(yhat, "rows", yhat)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(rows > 0.0, rows * np.log(rows), 0.0)
    return float(-terms.sum())


def eg_step(yhat, grad, eta):
    """One exponentiated-gradient update, computed in log space.

    yhat_i(w) <- yhat_i(w) exp(-eta grad_i(w)) / Z_i.  Probabilities are
    floored at PROB_FLOOR before the log so zero mass cannot poison the
    update; rows renormalise through a max-subtracted softmax.
    """
    rows = getattr(yhat, "rows", yhat)
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != rows.shape:
        raise ValueError(f"gradient shape {grad.shape} != rows shape {rows.shape}")
    if not np.all(np.isfinite(grad)):
        raise ValueError("gradient contains NaN or Inf")
    if eta <= 0:
        raise ValueError("eta must be positive")
    u = np.log(np.maximum(rows, PROB_FLOOR)) - eta * grad
    u -= u.max(axis=1, keepdims=True)
    w = np.exp(u)
    z = w.sum(axis=1, keepdims=True)
    if not np.all(np.isfinite(z)) or np.any(z <= 0.0):
        raise ValueError("EG row lost all mass; step size too large")
    return RelaxedSequence(w / z, validate=False)


def momentum_fold(prev, current, gamma, eta):
    """Momentum accumulator: gamma * prev + eta * current.

    `prev` may be None on the first iteration.  The result is used as
    the already-scaled step, so the caller applies it with step size 1.
    """
    current = np.asarray(current, dtype=np.float64)
    if prev is None:
        return eta * current
    prev = np.asarray(prev, dtype=np.float64)
    if prev.shape != current.shape:
        raise ValueError(f"momentum shapes differ: {prev.shape} vs {current.shape}")
    return gamma * prev + eta * current


def _chain_to_logits(rows, ygrad):
    """Pull a gradient in yhat back through the row softmax.

    For each row, d/dr = y * (g - y . g): backpropagation through the
    softmax node.
    """
    rowdot = (rows * ygrad).sum(axis=1, keepdims=True)
    return rows * (ygrad - rowdot)


def relaxed_cost(yhat, spec):
    """Objective value Q(yhat) for any objective kind."""
    return build_evaluator(spec).cost(_rows_for(yhat, spec))


def relaxed_grad(yhat, spec):
    """dQ/dyhat as an (ell, vocab) array, holding model parameters fixed."""
    return build_evaluator(spec).cost_and_grad(_rows_for(yhat, spec))[1]


def _rows_for(yhat, spec):
    rows = np.asarray(getattr(yhat, "rows", yhat), dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != spec.tgt_vocab_size:
        raise ValueError(
            f"relaxed rows of shape {rows.shape}, expected (ell, {spec.tgt_vocab_size})"
        )
    return rows


def sgd_step(logits, spec, eta):
    """One gradient step on pre-softmax logits (no momentum)."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    rows = _softmax_rows(logits.rows)
    ygrad = build_evaluator(spec).cost_and_grad(rows)[1]
    return LogitSequence(logits.rows - eta * _chain_to_logits(rows, ygrad))


def _init_scorers(spec):
    if spec.kind == "single":
        return [(spec.forward, 1.0)]
    if spec.kind == "bidirectional":
        return [(spec.forward, 1.0 - spec.alpha), (spec.reverse, spec.alpha)]
    return [(spec.forward, spec.alpha), (spec.reverse, 1.0 - spec.alpha)]


def init_relaxed(strategy, spec, config=None):
    """Build the starting point for a relaxed decode.

    uniform: flat rows of length round(1.2 |x|) + 1 (or config.length).
    greedy/beam/rerank: run the corresponding baseline under the forward
    model and take the per-step predicted distributions along the chosen
    hypothesis (their pre-softmax logits for the SGD decoder, so both
    algorithms start from the same relaxed point).

    Returns a RelaxedSequence for EG and a LogitSequence for SGD.
    """
    config = config or OptimConfig(init=strategy)
    if strategy not in INIT_STRATEGIES:
        raise ValueError(f"unknown init strategy {strategy!r}")
    x = list(spec.x)
    fwd = spec.forward
    vocab = spec.tgt_vocab_size

    if strategy == "uniform":
        ell = config.length or default_relaxed_length(x)
        if config.algorithm == "sgd":
            return LogitSequence(np.zeros((ell, vocab)))
        return RelaxedSequence.uniform(ell, vocab)

    if strategy == "greedy":
        hyp = greedy_decode(x, fwd)
    elif strategy == "beam":
        hyp = beam_decode(x, fwd, width=config.beam_width)[0]
    else:  # rerank
        nbest = beam_decode(
            x, fwd, width=config.rerank_size, n_best=config.rerank_size
        )
        hyp, _ = rerank(nbest, _init_scorers(spec), x)

    tokens = list(hyp.tokens)
    if not tokens or tokens[-1] != EOS:
        tokens = tokens + [EOS]
    logits = np.stack(forced_logits(x, tokens, fwd))
    if fwd.config.direction == "r2l":
        logits = np.stack(reverse_rows(list(logits)))
    if config.algorithm == "sgd":
        return LogitSequence(logits)
    return RelaxedSequence(_softmax_rows(logits), validate=False)


@dataclass
class DecodeTrace:
    """Per-iteration record of one relaxed decode (index 0 is the init)."""

    q: list
    discrete: list
    grad_norm: list
    entropy: list

    def __len__(self):
        return len(self.q)

    def rows(self):
        return list(zip(range(len(self.q)), self.q, self.discrete, self.grad_norm, self.entropy))


@dataclass
class DecodeResult:
    """Outcome of a relaxed decode.

    `tokens` are natural-order content ids (no eos) of the returned
    rounding; `continuous_cost` is the best Q over all iterates
    (initialisation included); `discrete_cost` is the objective value of
    `tokens`; `best_iteration` is the iterate that was rounded.
    """

    tokens: list
    continuous_cost: float
    discrete_cost: float
    best_iteration: int
    length: int
    trace: DecodeTrace

    @property
    def iterations(self):
        return len(self.trace) - 1

    @property
    def init_continuous_cost(self):
        return self.trace.q[0]


def relaxed_decode(x, spec, config, on_iterate=None):
    """Optimise the relaxed objective for one sentence and round.

    Records Q, the rounded iterate's discrete cost, the gradient norm,
    and the row entropy at every iterate.  Stops after `max_iter`
    updates or once |Q_t - Q_{t-1}| < conv_tol holds for conv_window
    consecutive iterations.  The returned rounding falls back to the
    initialiser's rounding if that has a lower discrete cost, so the
    result never regresses below the initialiser in either cost.
    """
    x = [int(t) for t in x]
    if tuple(x) != spec.x:
        raise ValueError("source sentence does not match the objective's source")
    ev = build_evaluator(spec)

    start = init_relaxed(config.init, spec, config)
    if config.algorithm == "sgd":
        logits = start.rows.copy()
        cur = _softmax_rows(logits)
    else:
        cur = start.rows.copy()
    ell = cur.shape[0]

    qs, discs, gnorms, ents = [], [], [], []
    best_q, best_t, best_tokens, best_disc = math.inf, 0, None, math.inf
    t0_tokens, t0_disc = None, None
    folded = None
    streak = 0
    t = 0
    while True:
        q, ygrad = ev.cost_and_grad(cur)
        tokens_t = round_solution(cur)
        disc_t = ev.discrete_cost(tokens_t)
        qs.append(q)
        discs.append(disc_t)
        gnorms.append(float(np.linalg.norm(ygrad)))
        ents.append(entropy_diagnostic(cur))
        if on_iterate is not None:
            on_iterate(t, cur.copy())
        if t == 0:
            t0_tokens, t0_disc = tokens_t, disc_t
        if q < best_q:
            best_q, best_t, best_tokens, best_disc = q, t, tokens_t, disc_t
        if t > 0:
            streak = streak + 1 if abs(qs[-1] - qs[-2]) < config.conv_tol else 0
        if streak >= config.conv_window or t == config.max_iter:
            break
        eta_t = config.eta * config.anneal**t
        if config.algorithm == "sgd":
            rgrad = _chain_to_logits(cur, ygrad)
            folded = momentum_fold(folded, rgrad, config.momentum, eta_t)
            logits = logits - folded
            cur = _softmax_rows(logits)
        else:
            folded = momentum_fold(folded, ygrad, config.momentum, eta_t)
            cur = eg_step(cur, folded, 1.0).rows
        t += 1

    if best_disc > t0_disc:
        best_tokens, best_disc, ret_iter = t0_tokens, t0_disc, 0
    else:
        ret_iter = best_t
    trace = DecodeTrace(qs, discs, gnorms, ents)
    return DecodeResult(best_tokens, best_q, best_disc, ret_iter, ell, trace)


def line_search_eta(specs, config, etas=None):
    """Scan a log grid of step sizes over dev sentences.

    Picks the eta whose runs reach the lowest mean per-row continuous
    cost.  Returns (best eta, list of (eta, mean cost)).
    """
    if etas is None:
        etas = np.geomspace(10.0, 400.0, 6)
    results = []
    for eta in etas:
        cfg = dataclasses.replace(config, eta=float(eta))
        costs = []
        for spec in specs:
            res = relaxed_decode(list(spec.x), spec, cfg)
            costs.append(res.continuous_cost / res.length)
        results.append((float(eta), float(np.mean(costs))))
    best_eta = min(results, key=lambda r: r[1])[0]
    return best_eta, results


TRACE_HEADER = ["sentence_id", "t", "q", "discrete_cost", "grad_norm", "entropy"]


def write_trace_csv(path, traces):
    """Write (sentence id, DecodeTrace) pairs as one flat CSV."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for sid, trace in traces:
            for t, q, disc, gnorm, ent in trace.rows():
                writer.writerow(
                    [sid, t, repr(q), repr(disc), repr(gnorm), repr(ent)]
                )


def read_trace_csv(path):
    """Read a trace CSV back to {sentence id: DecodeTrace}."""
    out = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != TRACE_HEADER:
            raise ValueError(f"{path}: unexpected trace header {header}")
        for sid, t, q, disc, gnorm, ent in reader:
            sid = int(sid)
            if sid not in out:
                out[sid] = DecodeTrace([], [], [], [])
            trace = out[sid]
            if int(t) != len(trace.q):
                raise ValueError(f"{path}: iterations of sentence {sid} out of order")
            trace.q.append(float(q))
            trace.discrete.append(float(disc))
            trace.grad_norm.append(float(gnorm))
            trace.entropy.append(float(ent))
    return out
