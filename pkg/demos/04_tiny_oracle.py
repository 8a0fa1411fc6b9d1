"""
Checking the decoders against brute force
=========================================

With a six-word vocabulary and four output positions there are only
6^4 = 1296 ways to round a relaxation, and after truncating everything
past the first end-of-sequence marker, 781 distinct token sequences.
That is small enough to score every single candidate and know the true
lowest-cost sequence.  Against that ground truth:

* a beam wide enough to cover the whole space must find exactly the
  optimal sequence (it is doing the same enumeration, just organised
  prefix-by-prefix), and
* the relaxed decoder must land between the oracle and its own starting
  point: never better than exhaustive search, never worse than where it
  started.
"""

import itertools

import numpy as np

from relaxdec.data import EOS, ParallelCorpus, build_vocab
from relaxdec.model import ModelConfig, TrainConfig, train_model
from relaxdec.objectives import ObjectiveSpec, build_evaluator
from relaxdec.relaxed import OptimConfig, relaxed_decode
from relaxdec.search import beam_decode

# ----------------------------------------------------------------------
# 1. A two-word copy task gives a 6-entry vocabulary: four reserved ids
#    (padding, unknown, start, end) plus "aa" and "bb".
# ----------------------------------------------------------------------
rng = np.random.default_rng(44)
alphabet = ["aa", "bb"]

def sentence():
    return [alphabet[i] for i in rng.integers(0, 2, size=rng.integers(1, 4))]

train = ParallelCorpus([(s, list(s)) for s in (sentence() for _ in range(200))],
                       split="train")
dev = ParallelCorpus([(s, list(s)) for s in (sentence() for _ in range(20))],
                     split="dev")
sv, tv = build_vocab(train.sources()), build_vocab(train.targets())
print(f"target vocabulary: {len(tv)} entries -> {6**4} roundings of a 4-row relaxation")

print("training (a few seconds) ...")
model = train_model(train, dev, sv, tv,
                    ModelConfig(len(sv), len(tv), embed_dim=16, hidden_dim=16, attn_dim=8),
                    TrainConfig(epochs=5, lr=0.5, seed=44)).params

# ----------------------------------------------------------------------
# 2. Enumerate every candidate the rounding could produce: sequences of
#    up to four non-end tokens (rounding truncates at the first end
#    marker, so longer candidates collapse onto these).
# ----------------------------------------------------------------------
non_eos = [t for t in range(6) if t != EOS]
candidates = [[]]
for length in range(1, 5):
    candidates += [list(c) for c in itertools.product(non_eos, repeat=length)]
print(f"{len(candidates)} distinct candidates after truncation")

# ----------------------------------------------------------------------
# 3. For each test input: oracle by enumeration, then beam, then EG.
# ----------------------------------------------------------------------
test_inputs = [[sv.id(t) for t in sentence()] for _ in range(20)]
eg_cfg = OptimConfig(algorithm="eg", init="uniform", length=4, eta=2.0,
                     momentum=0.9, max_iter=100)

beam_exact = eg_optimal = 0
for x in test_inputs:
    spec = ObjectiveSpec("single", model, tuple(x))
    ev = build_evaluator(spec)
    oracle = min(ev.discrete_cost(c) for c in candidates)

    # beam wide enough to be exhaustive over the same space
    beam_cost = -beam_decode(x, model, width=1296, max_len=5)[0].score
    beam_exact += abs(beam_cost - oracle) <= 1e-10

    out = relaxed_decode(x, spec, eg_cfg)
    assert out.discrete_cost >= oracle - 1e-10      # can't beat brute force
    assert out.discrete_cost <= out.trace.discrete[0] + 1e-10  # can't regress
    eg_optimal += abs(out.discrete_cost - oracle) <= 1e-10

print(f"\nbeam matches the enumeration oracle exactly: {beam_exact}/{len(test_inputs)}")
print(f"EG rounds to the globally optimal sequence:  {eg_optimal}/{len(test_inputs)}")
print("EG stayed within [oracle, its own starting cost] on every input")
