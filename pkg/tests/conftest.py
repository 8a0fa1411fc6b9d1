"""Shared helpers: tiny random models and a finite-difference oracle."""

import numpy as np
import pytest

from relaxdec.data import Vocabulary
from relaxdec.model import ModelConfig, init_model


def tiny_vocab(size):
    """Vocabulary of `size` ids total (4 specials + content tokens)."""
    return Vocabulary([f"w{i:02d}" for i in range(size - 4)])


def make_model(n_src=8, n_tgt=8, embed=6, hidden=6, attn=4,
               direction="l2r", side="s2t", seed=0):
    cfg = ModelConfig(n_src, n_tgt, embed_dim=embed, hidden_dim=hidden,
                      attn_dim=attn, direction=direction, side=side)
    return init_model(cfg, tiny_vocab(n_src), tiny_vocab(n_tgt), seed=seed)


def fd_grad(f, x, eps=1e-5):
    """Central-difference gradient of scalar f at array x (independent oracle)."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x)
        flat[i] = orig - eps
        lo = f(x)
        flat[i] = orig
        gf[i] = (hi - lo) / (2.0 * eps)
    return g


def rel_err(got, want, floor=1e-8):
    got = np.asarray(got, dtype=float)
    want = np.asarray(want, dtype=float)
    denom = np.maximum(np.maximum(np.abs(got), np.abs(want)), floor)
    return float(np.max(np.abs(got - want) / denom))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
