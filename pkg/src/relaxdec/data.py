"""Synthetic parallel corpora, vocabularies, and corpus file IO.

Four deterministic toy translation tasks are provided, ordered by
difficulty: copy, reverse, cipher (a fixed token permutation plus one
local adjacent swap per sentence), and noisy-cipher (cipher plus a
fraction of target tokens replaced by draws from a seeded confusion
distribution).  The noise makes the mapping ambiguous, so models trained
left-to-right and right-to-left err on different sentences, which is
what ensemble decoding exploits.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

PAD, UNK, BOS, EOS = 0, 1, 2, 3
SPECIALS = ("<pad>", "<unk>", "<s>", "</s>")

TASKS = ("copy", "reverse", "cipher", "noisy-cipher")


class Vocabulary:
    """Bijection between token strings and contiguous integer ids.

    Ids 0..3 are reserved for pad/unk/bos/eos in that order and are
    never remapped.  Content tokens occupy ids 4 and up.
    """

    def __init__(self, tokens, counts=None):
        self._tokens = list(SPECIALS) + [str(t) for t in tokens]
        self._ids = {tok: i for i, tok in enumerate(self._tokens)}
        if len(self._ids) != len(self._tokens):
            raise ValueError("vocabulary has duplicate tokens")
        self.counts = dict(counts or {})

    def __len__(self):
        return len(self._tokens)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self._tokens == other._tokens

    def __repr__(self):
        return f"Vocabulary(size={len(self)})"

    @property
    def content_tokens(self):
        return list(self._tokens[4:])

    def id(self, token):
        """Id of `token`, or the unk id when out of vocabulary."""
        return self._ids.get(token, UNK)

    def token(self, i):
        if not 0 <= i < len(self._tokens):
            raise ValueError(f"id {i} outside vocabulary of size {len(self._tokens)}")
        return self._tokens[i]

    def encode(self, tokens):
        return [self.id(t) for t in tokens]

    def decode(self, ids):
        return [self.token(i) for i in ids]


def build_vocab(sentences, min_freq=1):
    """Build a Vocabulary from an iterable of token lists.

    Tokens occurring fewer than `min_freq` times map to unk.  Ids are
    assigned by decreasing frequency, ties broken lexicographically, so
    construction is deterministic.
    """
    counts = Counter()
    for sent in sentences:
        counts.update(sent)
    kept = [
        t for t, c in counts.items() if c >= min_freq and t not in SPECIALS
    ]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(kept, counts)


@dataclass
class ParallelCorpus:
    """Aligned (source tokens, target tokens) pairs with a split tag."""

    pairs: list
    split: str = ""

    def __post_init__(self):
        for k, (src, tgt) in enumerate(self.pairs):
            if len(src) == 0 or len(tgt) == 0:
                raise ValueError(f"pair {k}: empty sentence")

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def sources(self):
        return [src for src, _ in self.pairs]

    def targets(self):
        return [tgt for _, tgt in self.pairs]


def generate_synthetic(
    task,
    n_pairs,
    vocab_size,
    seed,
    min_len=3,
    max_len=8,
    cipher_permutation=None,
    swaps_per_sentence=1,
    noise_rate=0.1,
):
    """Generate a deterministic synthetic parallel corpus.

    `vocab_size` counts the whole vocabulary including the 4 reserved
    ids, so the content alphabet has `vocab_size - 4` symbols.  Source
    sentences are drawn from one stream and task-specific randomness
    (permutation, swap positions, noise) from a second stream, both
    derived from `seed`; corpora for different tasks at the same seed
    therefore share identical source sides.

    The cipher task applies a seeded permutation of the content alphabet
    plus `swaps_per_sentence` adjacent transpositions at seeded
    positions.  The noisy-cipher task additionally replaces each target
    token with probability `noise_rate` by a draw from that token's
    seeded two-candidate confusion distribution.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")
    if n_pairs < 1:
        raise ValueError("n_pairs must be at least 1")
    if vocab_size < 8:
        raise ValueError("vocab_size must be at least 8 (4 reserved + 4 content)")
    if not 2 <= min_len <= max_len:
        raise ValueError("need 2 <= min_len <= max_len")

    n_content = vocab_size - 4
    alphabet = [f"w{i:02d}" for i in range(n_content)]
    rng_src = np.random.default_rng([seed, 0])
    rng_task = np.random.default_rng([seed, 1])

    if cipher_permutation is None:
        perm = rng_task.permutation(n_content)
    else:
        perm = np.asarray(cipher_permutation, dtype=int)
        if sorted(perm.tolist()) != list(range(n_content)):
            raise ValueError("cipher_permutation must permute the content alphabet")

    # Two confusion candidates per content symbol, with fixed 0.7/0.3 odds.
    confusion = []
    for i in range(n_content):
        others = [j for j in range(n_content) if j != i]
        pair = rng_task.choice(others, size=min(2, len(others)), replace=False)
        confusion.append(pair)

    pairs = []
    for _ in range(n_pairs):
        length = int(rng_src.integers(min_len, max_len + 1))
        src_idx = rng_src.integers(0, n_content, size=length)
        src = [alphabet[i] for i in src_idx]

        if task == "copy":
            tgt_idx = src_idx.copy()
        elif task == "reverse":
            tgt_idx = src_idx[::-1].copy()
        else:
            tgt_idx = perm[src_idx]
            for _ in range(swaps_per_sentence):
                if length >= 2:
                    k = int(rng_task.integers(0, length - 1))
                    tgt_idx[k], tgt_idx[k + 1] = tgt_idx[k + 1], tgt_idx[k]
            if task == "noisy-cipher":
                flips = rng_task.random(length) < noise_rate
                for j in range(length):
                    if flips[j]:
                        cands = confusion[tgt_idx[j]]
                        pickp = rng_task.random()
                        tgt_idx[j] = cands[0] if pickp < 0.7 else cands[-1]
        tgt = [alphabet[i] for i in tgt_idx]
        pairs.append((src, tgt))
    return ParallelCorpus(pairs)


def split_corpus(corpus, seed=0, ratios=(0.90, 0.05, 0.05)):
    """Shuffle deterministically and split into train/dev/test corpora."""
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must be three numbers summing to 1")
    n = len(corpus)
    order = np.random.default_rng([seed, 2]).permutation(n)
    n_dev = max(1, round(n * ratios[1]))
    n_test = max(1, round(n * ratios[2]))
    n_train = n - n_dev - n_test
    if n_train < 1:
        raise ValueError(f"corpus of {n} pairs too small to split")
    shuffled = [corpus.pairs[i] for i in order]
    return (
        ParallelCorpus(shuffled[:n_train], "train"),
        ParallelCorpus(shuffled[n_train : n_train + n_dev], "dev"),
        ParallelCorpus(shuffled[n_train + n_dev :], "test"),
    )


def read_sentences(path):
    """Read one tokenized sentence per line (UTF-8, CRLF tolerated)."""
    sents = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            toks = line.split()
            if not toks:
                raise ValueError(f"{path}: line {lineno}: empty sentence")
            sents.append(toks)
    return sents


def read_corpus(src_path, tgt_path, split=""):
    """Read an aligned corpus from two plain-text token files."""
    src = read_sentences(src_path)
    tgt = read_sentences(tgt_path)
    if len(src) != len(tgt):
        raise ValueError(
            f"line counts differ: {src_path} has {len(src)}, {tgt_path} has {len(tgt)}"
        )
    return ParallelCorpus(list(zip(src, tgt)), split)


def write_sentences(sents, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for toks in sents:
            fh.write(" ".join(toks) + "\n")


def write_corpus(corpus, src_path, tgt_path):
    write_sentences(corpus.sources(), src_path)
    write_sentences(corpus.targets(), tgt_path)


def orient_pairs(pairs, direction="l2r", side="s2t"):
    """Reorder a corpus for the model being trained.

    side "t2s" swaps source and target sentences; direction "r2l"
    reverses each (post-swap) target sentence.  Applied at training time
    so that models for all four combinations share one corpus on disk.
    """
    if direction not in ("l2r", "r2l"):
        raise ValueError(f"unknown direction {direction!r}")
    if side not in ("s2t", "t2s"):
        raise ValueError(f"unknown side {side!r}")
    out = []
    for src, tgt in pairs:
        if side == "t2s":
            src, tgt = tgt, src
        if direction == "r2l":
            tgt = list(reversed(tgt))
        out.append((list(src), list(tgt)))
    return out
