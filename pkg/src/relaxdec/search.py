"""Discrete baseline decoders: greedy, length-synchronised beam, reranking.

All searches maximise the accumulated log probability of eos-terminated
token sequences.  Ties break deterministically: greedy picks the lowest
token id among argmaxes, and beam ranks candidate expansions by (score
desc, parent rank asc, token id asc).  Completed hypotheses (those that
just emitted eos) leave the beam and are collected on the side, with no
length normalisation anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .data import BOS, EOS
from .model import decoder_step, encode, init_decoder_state, sequence_log_prob


def default_max_len(x):
    """Default decode-length cap for a source sentence."""
    return 2 * len(x) + 5


@dataclass
class Hypothesis:
    """A decoded prefix: token ids, accumulated log-prob, completion flag.

    Completed hypotheses end in the eos id.  `tokens` are in the order
    the model generated them (a right-to-left model emits its target
    reversed; see to_natural_order).
    """

    tokens: list
    score: float
    completed: bool


def to_natural_order(tokens, direction):
    """Map model-order tokens to natural reading order.

    For a right-to-left model the content tokens are reversed; a trailing
    eos stays trailing.  Identity for left-to-right models.
    """
    if direction == "l2r":
        return list(tokens)
    toks = list(tokens)
    if toks and toks[-1] == EOS:
        return toks[-2::-1] + [EOS]
    return toks[::-1]


class NBestList:
    """Up to N completed hypotheses, best first, no duplicates."""

    def __init__(self, hypotheses):
        self.hypotheses = list(hypotheses)
        for a, b in zip(self.hypotheses, self.hypotheses[1:]):
            if a.score < b.score:
                raise ValueError("n-best list not sorted by score")
        seen = set()
        for h in self.hypotheses:
            key = tuple(h.tokens)
            if key in seen:
                raise ValueError("duplicate hypothesis in n-best list")
            seen.add(key)

    def __len__(self):
        return len(self.hypotheses)

    def __iter__(self):
        return iter(self.hypotheses)

    def __getitem__(self, i):
        return self.hypotheses[i]


def greedy_decode(x, params, max_len=None):
    """Argmax decoding; ties go to the lowest token id."""
    if max_len is None:
        max_len = default_max_len(x)
    pt = params.tensors()
    enc = encode(x, params, pt)
    state = init_decoder_state(enc, params, pt)
    emb = pt["tgt_embed"]
    prev = ad.row_select(emb, BOS)
    tokens, score, completed = [], 0.0, False
    for _ in range(max_len):
        step = decoder_step(prev, state, enc, params, pt)
        lp = ad.log_softmax(step.logits).data
        w = int(np.argmax(lp))
        tokens.append(w)
        score += float(lp[w])
        if w == EOS:
            completed = True
            break
        prev = ad.row_select(emb, w)
        state = step.state
    return Hypothesis(tokens, score, completed)


def beam_decode(x, params, width, max_len=None, n_best=None):
    """Length-synchronised beam search returning an NBestList.

    Width 1 coincides with greedy decoding token for token.  With a
    width at least the number of distinct prefixes the search is
    exhaustive over eos-terminated sequences of length <= max_len.
    """
    if width < 1:
        raise ValueError("beam width must be at least 1")
    if n_best is None:
        n_best = width
    if n_best > width:
        raise ValueError(f"n_best {n_best} exceeds beam width {width}")
    if max_len is None:
        max_len = default_max_len(x)

    pt = params.tensors()
    enc = encode(x, params, pt)
    emb = pt["tgt_embed"]
    start_state = init_decoder_state(enc, params, pt)
    bos_embed = ad.row_select(emb, BOS)

    # live item: (tokens tuple, score, state, prev_embed)
    live = [((), 0.0, start_state, bos_embed)]
    completed = []
    for _ in range(max_len):
        if not live:
            break
        candidates = []
        for rank, (tokens, score, state, prev) in enumerate(live):
            step = decoder_step(prev, state, enc, params, pt)
            lp = ad.log_softmax(step.logits).data
            for w in range(lp.shape[0]):
                candidates.append((score + float(lp[w]), rank, w, step.state))
        candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
        kept = candidates[:width]
        new_live = []
        for score, rank, w, state in kept:
            tokens = live[rank][0] + (w,)
            if w == EOS:
                completed.append(Hypothesis(list(tokens), score, True))
            else:
                new_live.append((tokens, score, state, ad.row_select(emb, w)))
        live = new_live

    completed.sort(key=lambda h: -h.score)
    if completed:
        return NBestList(completed[:n_best])
    # Nothing emitted eos within max_len: fall back to the best prefix.
    best = max(live, key=lambda item: item[1])
    return NBestList([Hypothesis(list(best[0]), best[1], False)])


def force_score(x, y, params):
    """Log probability the model assigns to hypothesis `y` for source `x`.

    `y` must end with the eos id.  A right-to-left model scores the
    reversed hypothesis; a t2s model scores `x` (plus eos) as its target
    given `y` as its source, eos included.
    """
    y = [int(t) for t in y]
    if not y or y[-1] != EOS:
        raise ValueError("force_score needs an eos-terminated hypothesis")
    cfg = params.config
    if cfg.side == "t2s":
        src, tgt = y, [int(t) for t in x] + [EOS]
    else:
        src, tgt = [int(t) for t in x], y
    if cfg.direction == "r2l":
        tgt = tgt[-2::-1] + [EOS]
    return sequence_log_prob(src, tgt, params)


def rerank(nbest, scorers, x):
    """Pick the hypothesis maximising a weighted sum of forced scores.

    `scorers` is a list of (ModelParams, weight) with weights summing to
    one.  Ties keep the hypothesis ranked higher in the input list.
    Returns (hypothesis, combined score).
    """
    hyps = list(nbest)
    if not hyps:
        raise ValueError("cannot rerank an empty n-best list")
    total_w = sum(w for _, w in scorers)
    if not scorers or abs(total_w - 1.0) > 1e-9:
        raise ValueError(f"scorer weights must sum to 1, got {total_w}")
    best_idx, best_score = 0, None
    for k, hyp in enumerate(hyps):
        combined = sum(w * force_score(x, hyp.tokens, m) for m, w in scorers)
        if best_score is None or combined > best_score:
            best_idx, best_score = k, combined
    return hyps[best_idx], best_score


def write_nbest(path, nbest_lists, vocab):
    """Write n-best lists in the line format `id ||| tokens ||| score`.

    Content tokens only (no eos); scores use repr so they round-trip.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for sid, nbest in enumerate(nbest_lists):
            for hyp in nbest:
                toks = [t for t in hyp.tokens if t != EOS]
                text = " ".join(vocab.token(t) for t in toks)
                fh.write(f"{sid} ||| {text} ||| {hyp.score!r}\n")


def read_nbest(path):
    """Parse an n-best file back to (sentence id, token strings, score) rows."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ||| ")
            if len(parts) != 3:
                raise ValueError(f"{path}: line {lineno}: expected 3 |||-fields")
            sid, text, score = parts
            rows.append((int(sid), text.split(), float(score)))
    return rows
