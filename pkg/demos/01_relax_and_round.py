"""
Decoding as optimisation: relax, descend, round
===============================================

Beam search explores token sequences one discrete choice at a time.  This
package takes a different route: represent the whole hypothesis as a
matrix of probability rows (one row per output position, one column per
vocabulary word), make the model's cross-entropy a differentiable
function of that matrix, and minimise it with exponentiated-gradient
steps that keep every row on the probability simplex.  At the end, each
row is rounded to its argmax token.

This script walks one sentence through that pipeline.
"""

import numpy as np

from relaxdec.data import EOS, build_vocab, generate_synthetic, split_corpus
from relaxdec.model import ModelConfig, TrainConfig, train_model, sequence_log_prob
from relaxdec.objectives import ObjectiveSpec
from relaxdec.relaxed import OptimConfig, relaxed_decode
from relaxdec.search import greedy_decode, to_natural_order

# ----------------------------------------------------------------------
# 1. A model to decode.  The substitution-cipher task maps each source
#    word to a fixed target word, so a small attentional LSTM learns it
#    quickly and we can focus on the decoding side.
# ----------------------------------------------------------------------
print("training a small cipher model (about two minutes) ...")
corpus = generate_synthetic("cipher", 2000, 12, seed=3)
train, dev, test = split_corpus(corpus, seed=3)
sv, tv = build_vocab(train.sources()), build_vocab(train.targets())
result = train_model(train, dev, sv, tv,
                     ModelConfig(len(sv), len(tv)),
                     TrainConfig(epochs=20, lr=0.5, seed=3))
model = result.params
print(f"dev perplexity after training: {min(h['dev_ppl'] for h in result.history):.3f}")

# ----------------------------------------------------------------------
# 2. Pick a sentence where decoding strategy matters.  The model is good
#    but not perfect, so on some sentences greedy's left-to-right
#    commitment and continuous optimisation land on different outputs.
#    Scan the test split for the first sentence where they disagree and
#    the optimiser is the one that recovers the reference (within the
#    first ten sentences here).
# ----------------------------------------------------------------------
def greedy_tokens_for(x):
    hyp = greedy_decode(x, model)
    return [t for t in to_natural_order(list(hyp.tokens), "l2r") if t != EOS]

def eg_config():
    # eta is the step size; momentum folds a decaying average of past
    # gradients into each step
    return OptimConfig(algorithm="eg", init="uniform", eta=1.0, momentum=0.9,
                       max_iter=100)

for source, reference in zip(test.sources(), test.targets()):
    x = sv.encode(source)
    greedy_tokens = greedy_tokens_for(x)
    spec = ObjectiveSpec("single", model, tuple(x))
    out = relaxed_decode(x, spec, eg_config())
    if out.tokens != greedy_tokens and tv.decode(out.tokens) == list(reference):
        break

print("\nsource   :", " ".join(source))
print("reference:", " ".join(reference))
print("greedy   :", " ".join(tv.decode(greedy_tokens)))

# ----------------------------------------------------------------------
# 3. Replay the optimisation and watch it.  The relaxation starts from
#    uniform rows -- maximum ignorance -- and every iterate is a stack of
#    probability rows: non-negative, each summing to one.  That invariant
#    is what exponentiated gradient buys over plain gradient steps.
# ----------------------------------------------------------------------
snapshots = []

def watch(t, rows):
    assert rows.min() >= 0.0 and np.allclose(rows.sum(axis=1), 1.0)
    if t in (0, 1, 2, 3, 5, 8, 12, 20, 35):
        snapshots.append((t, rows[1].copy()))

out = relaxed_decode(x, spec, eg_config(), on_iterate=watch)

print(f"\noptimised for {out.iterations} iterations")
print("continuous cost: start {:.4f} -> best {:.4f}".format(
    out.trace.q[0], out.continuous_cost))

# ----------------------------------------------------------------------
# 4. The second output position is where the two methods disagree, and
#    the relaxation lets it stay undecided: probability mass visibly
#    sloshes between the contenders for a few iterations before one wins.
#    A greedy decoder commits to its choice at step two and can never
#    come back.
# ----------------------------------------------------------------------
print("\nsecond row of the relaxation (top word and its probability):")
for t, row in snapshots:
    k = int(row.argmax())
    print(f"  iter {t:3d}: p({tv.decode([k])[0]!r}) = {row[k]:.3f}")

# ----------------------------------------------------------------------
# 5. Round: per-row argmax, truncated at the end-of-sequence marker.
#    The decoder keeps whichever iterate had the lowest continuous cost
#    and falls back to the initial rounding if optimisation never
#    improved the rounded sequence, so rounding can't make things worse.
#
#    Starting from uniform rows, the optimiser finds its own basin; here
#    it disagrees with greedy, and the two sequences' costs under the
#    model are close -- decoding as optimisation is a genuinely different
#    way to explore the output space, which is what makes it useful as a
#    baseline-independent decoder and as an engine for ensemble
#    objectives (see demo 03).
# ----------------------------------------------------------------------
print("\nrounded  :", " ".join(tv.decode(out.tokens)))
print("model cost of greedy's output   : {:.4f}".format(
    float(-sequence_log_prob(x, greedy_tokens + [EOS], model))))
print("model cost of optimiser's output: {:.4f}".format(out.discrete_cost))
print("optimiser matches the reference :", tv.decode(out.tokens) == list(reference))
print("greedy matches the reference    :", tv.decode(greedy_tokens) == list(reference))
