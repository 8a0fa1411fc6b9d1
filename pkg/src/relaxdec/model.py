"""Toy attentional LSTM encoder-decoder, trainable at desk scale.

The network follows the classic attentional recipe: a bidirectional
single-layer LSTM encoder, a two-layer LSTM decoder whose first-layer
input is the attention context concatenated with the previous target
embedding, an MLP attention scorer, and an output projection

    f_i = out_W @ tanh(mlp_W @ [c_i; e_{i-1}; g_i] + mlp_b) + out_b

over the target vocabulary.  Scoring accepts either discrete target ids
or relaxed rows (distributions over the vocabulary); a relaxed row feeds
the recurrence through its expected embedding, and its score term is the
dot product of the row with the log softmax of the logits, so scoring a
one-hot relaxed sequence reproduces the discrete log-probability bit for
bit.

Everything runs in float64 on the autodiff tape, one tape per sentence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .data import BOS, EOS, Vocabulary, orient_pairs

INIT_SCALE = 0.08
SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and orientation tags for one model."""

    src_vocab_size: int
    tgt_vocab_size: int
    embed_dim: int = 32
    hidden_dim: int = 32
    attn_dim: int = 16
    direction: str = "l2r"  # target generation order the model was trained with
    side: str = "s2t"  # s2t translates source->target, t2s the reverse

    def __post_init__(self):
        if self.direction not in ("l2r", "r2l"):
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.side not in ("s2t", "t2s"):
            raise ValueError(f"unknown side {self.side!r}")
        for name in ("src_vocab_size", "tgt_vocab_size", "embed_dim", "hidden_dim", "attn_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


def weight_shapes(cfg):
    """Name -> shape map for every parameter matrix/vector."""
    e, h, a = cfg.embed_dim, cfg.hidden_dim, cfg.attn_dim
    return {
        "src_embed": (cfg.src_vocab_size, e),
        "tgt_embed": (cfg.tgt_vocab_size, e),
        "enc_fwd_W": (4 * h, e + h),
        "enc_fwd_b": (4 * h,),
        "enc_bwd_W": (4 * h, e + h),
        "enc_bwd_b": (4 * h,),
        "dec0_W": (4 * h, 2 * h + e + h),
        "dec0_b": (4 * h,),
        "dec1_W": (4 * h, h + h),
        "dec1_b": (4 * h,),
        "init0_W": (h, h),
        "init0_b": (h,),
        "init1_W": (h, h),
        "init1_b": (h,),
        "att_enc_W": (2 * h, a),
        "att_dec_W": (h, a),
        "att_b": (a,),
        "att_v": (a,),
        "mlp_W": (h, 2 * h + e + h),
        "mlp_b": (h,),
        "out_W": (cfg.tgt_vocab_size, h),
        "out_b": (cfg.tgt_vocab_size,),
    }


@dataclass
class ModelParams:
    """Model weights plus the vocabularies they index.

    `weights` maps the names from weight_shapes() to float64 arrays.
    """

    config: ModelConfig
    weights: dict
    src_vocab: Vocabulary
    tgt_vocab: Vocabulary

    def __post_init__(self):
        expect = weight_shapes(self.config)
        if set(self.weights) != set(expect):
            raise ValueError("weight names do not match the architecture")
        for name, arr in self.weights.items():
            if arr.shape != expect[name]:
                raise ValueError(
                    f"{name}: shape {arr.shape} does not match {expect[name]}"
                )
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name}: non-finite values")
        if len(self.src_vocab) != self.config.src_vocab_size:
            raise ValueError("source vocabulary size disagrees with config")
        if len(self.tgt_vocab) != self.config.tgt_vocab_size:
            raise ValueError("target vocabulary size disagrees with config")

    def tensors(self, trainable=False):
        """Wrap the live weight arrays as Tensors (shared storage)."""
        return {
            name: Tensor(arr, requires_grad=trainable)
            for name, arr in self.weights.items()
        }

    def copy(self):
        return ModelParams(
            self.config,
            {k: v.copy() for k, v in self.weights.items()},
            self.src_vocab,
            self.tgt_vocab,
        )


def init_model(cfg, src_vocab, tgt_vocab, seed=0):
    """Fresh parameters, each entry uniform in +-INIT_SCALE."""
    rng = np.random.default_rng([seed, 3])
    weights = {
        name: rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)
        for name, shape in weight_shapes(cfg).items()
    }
    return ModelParams(cfg, weights, src_vocab, tgt_vocab)


@dataclass
class EncoderStates:
    """Per-position encoder outputs for one source sentence.

    `matrix` stacks the concatenated forward/backward hidden states, one
    row per source position; `att_proj` caches matrix @ att_enc_W for the
    attention scorer; `bwd_first` is the backward LSTM state after
    consuming the whole sentence, used to initialise the decoder.
    """

    matrix: Tensor
    att_proj: Tensor
    bwd_first: Tensor
    length: int


@dataclass
class DecoderStep:
    """One decoder time step: attention weights, context, new state, logits."""

    alpha: Tensor
    context: Tensor
    state: tuple
    g: Tensor
    logits: Tensor


def _lstm_step(w, b, x, h, c, hidden):
    z = ad.concat(x, h)
    pre = ad.affine(w, z, b)
    i = ad.sigmoid(ad.vslice(pre, 0, hidden))
    f = ad.sigmoid(ad.vslice(pre, hidden, 2 * hidden))
    o = ad.sigmoid(ad.vslice(pre, 2 * hidden, 3 * hidden))
    u = ad.tanh(ad.vslice(pre, 3 * hidden, 4 * hidden))
    c_new = ad.add(ad.mul(f, c), ad.mul(i, u))
    h_new = ad.mul(o, ad.tanh(c_new))
    return h_new, c_new


def _check_relaxed_row(row, size, what):
    if row.ndim != 1 or row.shape[0] != size:
        raise ValueError(f"{what}: row of shape {row.shape}, expected ({size},)")
    if row.min() < -SIMPLEX_TOL or abs(row.sum() - 1.0) > SIMPLEX_TOL:
        raise ValueError(
            f"{what}: row is not in the probability simplex "
            f"(min {row.min():.3e}, sum {row.sum():.12f})"
        )


def _source_embeddings(x, pt, cfg):
    """Embedding tensors for a source given as ids or relaxed rows."""
    emb = pt["src_embed"]
    out = []
    for j, item in enumerate(x):
        if isinstance(item, Tensor):
            _check_relaxed_row(item.data, cfg.src_vocab_size, f"source row {j}")
            out.append(ad.weighted_row_sum(item, emb))
        elif np.ndim(item) == 0:
            i = int(item)
            if not 0 <= i < cfg.src_vocab_size:
                raise ValueError(
                    f"source id {i} outside vocabulary of size {cfg.src_vocab_size}"
                )
            out.append(ad.row_select(emb, i))
        else:
            row = np.asarray(item, dtype=np.float64)
            _check_relaxed_row(row, cfg.src_vocab_size, f"source row {j}")
            out.append(ad.weighted_row_sum(Tensor(row), emb))
    return out


def encode(x, params, params_t=None):
    """Run the bidirectional encoder over a source sentence.

    `x` is a sequence of token ids, or of relaxed rows (arrays or
    Tensors holding distributions over the source vocabulary).
    """
    if len(x) == 0:
        raise ValueError("cannot encode an empty source sentence")
    cfg = params.config
    pt = params_t if params_t is not None else params.tensors()
    hidden = cfg.hidden_dim
    embeds = _source_embeddings(x, pt, cfg)

    zero = Tensor(np.zeros(hidden))
    h, c = zero, zero
    fwd = []
    for e in embeds:
        h, c = _lstm_step(pt["enc_fwd_W"], pt["enc_fwd_b"], e, h, c, hidden)
        fwd.append(h)
    h, c = zero, zero
    bwd = [None] * len(embeds)
    for j in range(len(embeds) - 1, -1, -1):
        h, c = _lstm_step(pt["enc_bwd_W"], pt["enc_bwd_b"], embeds[j], h, c, hidden)
        bwd[j] = h
    bwd_first = h
    rows = [ad.concat(f, b) for f, b in zip(fwd, bwd)]
    matrix = ad.stack(rows)
    att_proj = ad.matmul(matrix, pt["att_enc_W"])
    return EncoderStates(matrix, att_proj, bwd_first, len(embeds))


def init_decoder_state(enc, params, params_t=None):
    """Initial decoder state: a learned map of the final backward encoder state."""
    pt = params_t if params_t is not None else params.tensors()
    h0 = ad.tanh(ad.affine(pt["init0_W"], enc.bwd_first, pt["init0_b"]))
    h1 = ad.tanh(ad.affine(pt["init1_W"], enc.bwd_first, pt["init1_b"]))
    zero = Tensor(np.zeros(params.config.hidden_dim))
    return ((h0, zero), (h1, zero))


def decoder_step(prev_embed, prev_state, enc, params, params_t=None):
    """Advance the decoder one step given the previous target embedding."""
    cfg = params.config
    pt = params_t if params_t is not None else params.tensors()
    hidden = cfg.hidden_dim
    (h0, c0), (h1, c1) = prev_state
    g_prev = h1

    gproj = ad.add(ad.matmul(g_prev, pt["att_dec_W"]), pt["att_b"])
    u = ad.tanh(ad.add_rowvec(enc.att_proj, gproj))
    scores = ad.matmul(u, pt["att_v"])
    alpha = ad.softmax(scores)
    context = ad.weighted_row_sum(alpha, enc.matrix)

    x0 = ad.concat(context, prev_embed)
    h0n, c0n = _lstm_step(pt["dec0_W"], pt["dec0_b"], x0, h0, c0, hidden)
    h1n, c1n = _lstm_step(pt["dec1_W"], pt["dec1_b"], h0n, h1, c1, hidden)

    m = ad.tanh(
        ad.affine(pt["mlp_W"], ad.concat(context, prev_embed, h1n), pt["mlp_b"])
    )
    logits = ad.affine(pt["out_W"], m, pt["out_b"])
    return DecoderStep(alpha, context, ((h0n, c0n), (h1n, c1n)), h1n, logits)


def _validate_target_ids(y, cfg):
    y = [int(t) for t in y]
    if not y:
        raise ValueError("target sequence is empty")
    if y[-1] != EOS:
        raise ValueError("target sequence must end with the eos id")
    for t in y:
        if not 0 <= t < cfg.tgt_vocab_size:
            raise ValueError(
                f"target id {t} outside vocabulary of size {cfg.tgt_vocab_size}"
            )
    return y


def _forced_from_enc(enc, y, params, pt):
    """Teacher-forced log probability of id sequence `y` as a scalar Tensor."""
    state = init_decoder_state(enc, params, pt)
    emb = pt["tgt_embed"]
    prev = ad.row_select(emb, BOS)
    total = None
    for t in y:
        step = decoder_step(prev, state, enc, params, pt)
        lp = ad.log_softmax(step.logits)
        term = ad.pick(lp, t)
        total = term if total is None else ad.add(total, term)
        prev = ad.row_select(emb, t)
        state = step.state
    return total


def _relaxed_from_enc(enc, rows, params, pt):
    """Relaxed log probability of row Tensors `rows` as a scalar Tensor."""
    state = init_decoder_state(enc, params, pt)
    emb = pt["tgt_embed"]
    prev = ad.row_select(emb, BOS)
    total = None
    for r in rows:
        step = decoder_step(prev, state, enc, params, pt)
        lp = ad.log_softmax(step.logits)
        term = ad.dot(r, lp)
        total = term if total is None else ad.add(total, term)
        prev = ad.weighted_row_sum(r, emb)
        state = step.state
    return total


def sequence_log_prob(x, y, params):
    """log P(y | x) under the model; `y` must end with the eos id."""
    cfg = params.config
    y = _validate_target_ids(y, cfg)
    pt = params.tensors()
    enc = encode(x, params, pt)
    return float(_forced_from_enc(enc, y, params, pt).data)


def relaxed_log_prob(x, rows, params):
    """Relaxed score sum_i rows_i . log softmax(f_i) with expected embeddings.

    `rows` is an (ell, tgt_vocab) array of simplex rows.  At one-hot rows
    this equals sequence_log_prob of the corresponding id sequence.
    """
    cfg = params.config
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != cfg.tgt_vocab_size:
        raise ValueError(
            f"relaxed rows of shape {rows.shape}, expected (ell, {cfg.tgt_vocab_size})"
        )
    for i in range(rows.shape[0]):
        _check_relaxed_row(rows[i], cfg.tgt_vocab_size, f"target row {i}")
    pt = params.tensors()
    enc = encode(x, params, pt)
    row_tensors = [Tensor(rows[i]) for i in range(rows.shape[0])]
    return float(_relaxed_from_enc(enc, row_tensors, params, pt).data)


def forced_logits(x, y, params):
    """Per-step pre-softmax logits along a teacher-forced pass over `y`.

    Step i's logits are the model's prediction scores before consuming
    y_i, so argmaxing them along a greedy hypothesis reproduces the
    greedy choices.  Returns a list of float64 arrays.
    """
    cfg = params.config
    y = _validate_target_ids(y, cfg)
    pt = params.tensors()
    enc = encode(x, params, pt)
    state = init_decoder_state(enc, params, pt)
    emb = pt["tgt_embed"]
    prev = ad.row_select(emb, BOS)
    out = []
    for t in y:
        step = decoder_step(prev, state, enc, params, pt)
        out.append(step.logits.data.copy())
        prev = ad.row_select(emb, t)
        state = step.state
    return out


@dataclass
class TrainConfig:
    """Plain per-sentence SGD with clipping, halving on plateau, early stop."""

    epochs: int = 30
    lr: float = 0.5
    clip_norm: float = 5.0
    patience: int = 3
    min_rel_improvement: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.lr <= 0 or self.clip_norm <= 0:
            raise ValueError("epochs, lr, and clip_norm must be positive")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")


@dataclass
class TrainResult:
    params: "ModelParams"
    history: list  # dicts: epoch, train_loss (per token), dev_ppl, lr
    initial_dev_ppl: float
    best_epoch: int


def _numericalize(pairs, src_vocab, tgt_vocab):
    out = []
    for src, tgt in pairs:
        xs = src_vocab.encode(src)
        ys = tgt_vocab.encode(tgt) + [EOS]
        out.append((xs, ys))
    return out


def perplexity(examples, params):
    """exp of mean per-token negative log probability (eos tokens count)."""
    total, count = 0.0, 0
    for xs, ys in examples:
        total -= sequence_log_prob(xs, ys, params)
        count += len(ys)
    return math.exp(total / count)


def train_model(train_corpus, dev_corpus, src_vocab, tgt_vocab, model_config, train_config):
    """Train a model with per-sentence SGD; deterministic under the seed.

    Orientation (direction/side tags on `model_config`) is applied here
    by reordering the corpus, so callers always pass corpora and
    vocabularies in natural source/target roles.  Returns the weights
    with the best dev perplexity seen, which is never worse than the dev
    perplexity of the fresh initialisation.
    """
    cfg, tc = model_config, train_config
    if cfg.side == "t2s":
        src_vocab, tgt_vocab = tgt_vocab, src_vocab
    train_pairs = orient_pairs(train_corpus.pairs, cfg.direction, cfg.side)
    dev_pairs = orient_pairs(dev_corpus.pairs, cfg.direction, cfg.side)
    train_ex = _numericalize(train_pairs, src_vocab, tgt_vocab)
    dev_ex = _numericalize(dev_pairs, src_vocab, tgt_vocab)

    params = init_model(cfg, src_vocab, tgt_vocab, seed=tc.seed)
    rng = np.random.default_rng([tc.seed, 4])
    names = sorted(params.weights)

    initial_ppl = perplexity(dev_ex, params)
    best_ppl = initial_ppl
    best_weights = {k: v.copy() for k, v in params.weights.items()}
    best_epoch = 0
    # Plateau detection compares against the best trained epoch only;
    # the untrained initialisation is a fallback for the returned
    # weights, not a bar the first epoch has to clear.
    best_trained_ppl = math.inf
    lr = tc.lr
    history = []
    bad_epochs = 0

    for epoch in range(1, tc.epochs + 1):
        order = rng.permutation(len(train_ex))
        pt = params.tensors(trainable=True)
        total_nll, total_tokens = 0.0, 0
        for idx in order:
            xs, ys = train_ex[idx]
            with Tape() as tape:
                enc = encode(xs, params, pt)
                lp = _forced_from_enc(enc, ys, params, pt)
                loss = ad.scale(lp, -1.0)
                tape.backward(loss)
            total_nll += float(loss.data)
            total_tokens += len(ys)
            sq = 0.0
            for name in names:
                g = pt[name].grad
                if g is not None:
                    sq += float(np.sum(g * g))
            gscale = lr * min(1.0, tc.clip_norm / math.sqrt(sq)) if sq > 0 else lr
            for name in names:
                t = pt[name]
                if t.grad is not None:
                    t.data -= gscale * t.grad
                    t.grad = None
        dev_ppl = perplexity(dev_ex, params)
        history.append(
            {
                "epoch": epoch,
                "train_loss": total_nll / total_tokens,
                "dev_ppl": dev_ppl,
                "lr": lr,
            }
        )
        significant = dev_ppl < best_trained_ppl * (1.0 - tc.min_rel_improvement)
        best_trained_ppl = min(best_trained_ppl, dev_ppl)
        if dev_ppl < best_ppl:
            best_ppl = dev_ppl
            best_weights = {k: v.copy() for k, v in params.weights.items()}
            best_epoch = epoch
        if significant:
            bad_epochs = 0
        else:
            bad_epochs += 1
            lr *= 0.5
            if bad_epochs >= tc.patience:
                break

    best = ModelParams(cfg, best_weights, src_vocab, tgt_vocab)
    return TrainResult(best, history, initial_ppl, best_epoch)
