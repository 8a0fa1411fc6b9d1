"""Ensemble objectives: identities, alpha-linearity, and gradients."""

import numpy as np
import pytest

from relaxdec.data import EOS
from relaxdec.model import relaxed_log_prob, sequence_log_prob
from relaxdec.objectives import (
    ObjectiveSpec,
    bidirectional_cost,
    bilingual_cost,
    build_evaluator,
    discrete_cost,
    ensemble_grad,
    reverse_rows,
)
from conftest import make_model, rel_err

V = 8


def simplex_rows(ell, rng):
    raw = rng.random((ell, V)) + 0.05
    return raw / raw.sum(axis=1, keepdims=True)


def one_hot_rows(y):
    rows = np.zeros((len(y), V))
    rows[np.arange(len(y)), y] = 1.0
    return rows


@pytest.fixture(scope="module")
def models():
    return {
        "l2r": make_model(seed=31, direction="l2r", side="s2t"),
        "r2l": make_model(seed=32, direction="r2l", side="s2t"),
        "t2s": make_model(seed=33, direction="l2r", side="t2s"),
    }


def test_spec_validation(models):
    with pytest.raises(ValueError):
        ObjectiveSpec("triple", models["l2r"], (4,))
    with pytest.raises(ValueError):
        ObjectiveSpec("single", models["l2r"], (4,), reverse=models["r2l"])
    with pytest.raises(ValueError):
        ObjectiveSpec("bidirectional", models["l2r"], (4,))
    with pytest.raises(ValueError):
        ObjectiveSpec("bidirectional", models["l2r"], (4,), reverse=models["t2s"])
    with pytest.raises(ValueError):
        ObjectiveSpec("bilingual", models["l2r"], (4,), reverse=models["r2l"])
    with pytest.raises(ValueError):
        ObjectiveSpec("single", models["l2r"], (4,), alpha=1.5)
    with pytest.raises(ValueError):
        ObjectiveSpec("single", models["l2r"], ())


def test_reverse_rows_is_an_involution():
    rng = np.random.default_rng(0)
    for ell in (1, 2, 5):
        rows = [rng.random(V) for _ in range(ell)]
        back = reverse_rows(reverse_rows(rows))
        for a, b in zip(rows, back):
            assert a is b
    assert reverse_rows([]) == []


def test_reverse_rows_pins_the_last_row():
    rows = [np.full(V, i, dtype=float) for i in range(4)]
    rev = reverse_rows(rows)
    assert rev[-1] is rows[-1]
    assert [int(r[0]) for r in rev] == [2, 1, 0, 3]


def test_single_cost_matches_relaxed_score(models):
    rng = np.random.default_rng(1)
    spec = ObjectiveSpec("single", models["l2r"], (4, 6, 5))
    ev = build_evaluator(spec)
    rows = simplex_rows(4, rng)
    want = -relaxed_log_prob([4, 6, 5], rows, models["l2r"])
    assert abs(ev.cost(rows) - want) <= 1e-12


def test_one_hot_bidirectional_matches_forced_scores(models):
    x, y = [4, 6, 5], [5, 4, 6, EOS]
    spec = ObjectiveSpec(
        "bidirectional", models["l2r"], x, reverse=models["r2l"], alpha=0.3
    )
    got = bidirectional_cost(one_hot_rows(y), spec)
    fwd = sequence_log_prob(x, y, models["l2r"])
    rev = sequence_log_prob(x, [6, 4, 5, EOS], models["r2l"])
    assert abs(got - (-0.3 * rev - 0.7 * fwd)) <= 1e-10


def test_one_hot_bilingual_matches_forced_scores(models):
    x, y = [4, 6, 5], [5, 4, EOS]
    spec = ObjectiveSpec(
        "bilingual", models["l2r"], x, reverse=models["t2s"], alpha=0.4
    )
    got = bilingual_cost(one_hot_rows(y), spec)
    fwd = sequence_log_prob(x, y, models["l2r"])
    rev = sequence_log_prob(y, [4, 6, 5, EOS], models["t2s"])
    assert abs(got - (-0.4 * fwd - 0.6 * rev)) <= 1e-10


def test_one_hot_cost_equals_discrete_cost(models):
    x, y = [4, 6, 5], [5, 4]
    for kind, rev in (("bidirectional", "r2l"), ("bilingual", "t2s")):
        spec = ObjectiveSpec(kind, models["l2r"], x, reverse=models[rev], alpha=0.4)
        cont = build_evaluator(spec).cost(one_hot_rows(y + [EOS]))
        disc = discrete_cost(y, spec)
        assert abs(cont - disc) <= 1e-10, kind


def test_cost_is_exactly_linear_in_alpha(models):
    rng = np.random.default_rng(2)
    rows = simplex_rows(3, rng)
    x = (4, 5)

    def cost_at(kind, rev, a):
        spec = ObjectiveSpec(kind, models["l2r"], x, reverse=models[rev], alpha=a)
        return build_evaluator(spec).cost(rows)

    for kind, rev in (("bidirectional", "r2l"), ("bilingual", "t2s")):
        c0, c1 = cost_at(kind, rev, 0.0), cost_at(kind, rev, 1.0)
        for a in (0.25, 0.5, 0.8):
            assert cost_at(kind, rev, a) == a * c1 + (1 - a) * c0, kind


def test_alpha_extremes_reduce_to_single_terms(models):
    rng = np.random.default_rng(3)
    rows = simplex_rows(3, rng)
    x = (4, 5)
    single = build_evaluator(ObjectiveSpec("single", models["l2r"], x)).cost(rows)
    bid0 = ObjectiveSpec("bidirectional", models["l2r"], x,
                         reverse=models["r2l"], alpha=0.0)
    bil1 = ObjectiveSpec("bilingual", models["l2r"], x,
                         reverse=models["t2s"], alpha=1.0)
    assert build_evaluator(bid0).cost(rows) == single
    assert build_evaluator(bil1).cost(rows) == single


def test_ensemble_grad_is_weighted_sum_of_term_grads(models):
    rng = np.random.default_rng(4)
    rows = simplex_rows(3, rng)
    x = (4, 6)
    a = 0.35
    spec = ObjectiveSpec("bidirectional", models["l2r"], x,
                         reverse=models["r2l"], alpha=a)
    g = ensemble_grad(rows, spec)
    ev = build_evaluator(spec)
    (w0, t0), (w1, t1) = ev.terms
    want = w0 * t0.cost_and_grad(rows)[1] + w1 * t1.cost_and_grad(rows)[1]
    assert np.max(np.abs(g - want)) <= 1e-12


@pytest.mark.parametrize("kind,rev,alpha", [
    ("single", None, 0.5),
    ("bidirectional", "r2l", 0.3),
    ("bilingual", "t2s", 0.6),
])
def test_gradients_match_finite_differences(models, kind, rev, alpha):
    # directional derivatives along simplex tangents (+eps at j, -eps at
    # k within one row): the t2s encoder rejects rows off the simplex, so
    # only feasible perturbations are meaningful for every objective kind
    rng = np.random.default_rng(5)
    rows = simplex_rows(3, rng)
    spec = ObjectiveSpec(kind, models["l2r"], (4, 5),
                         reverse=None if rev is None else models[rev], alpha=alpha)
    ev = build_evaluator(spec)
    got = ev.cost_and_grad(rows)[1]
    assert got.shape == rows.shape

    eps = 1e-6
    for _ in range(10):
        i = int(rng.integers(rows.shape[0]))
        j, k = rng.choice(rows.shape[1], size=2, replace=False)
        bump = np.zeros_like(rows)
        bump[i, j], bump[i, k] = eps, -eps
        want = (ev.cost(rows + bump) - ev.cost(rows - bump)) / (2 * eps)
        have = got[i, j] - got[i, k]
        assert rel_err(have, want, floor=1e-6) < 1e-4


def test_cost_and_grad_cost_matches_plain_cost(models):
    rng = np.random.default_rng(6)
    rows = simplex_rows(4, rng)
    spec = ObjectiveSpec("bilingual", models["l2r"], (4, 6, 5),
                         reverse=models["t2s"], alpha=0.5)
    ev = build_evaluator(spec)
    c, _ = ev.cost_and_grad(rows)
    assert abs(c - ev.cost(rows)) <= 1e-12


def test_rows_shape_is_validated(models):
    spec = ObjectiveSpec("single", models["l2r"], (4,))
    with pytest.raises(ValueError):
        bidirectional_cost(np.ones((2, V)) / V, spec)
    spec2 = ObjectiveSpec("bidirectional", models["l2r"], (4,),
                          reverse=models["r2l"])
    with pytest.raises(ValueError):
        bidirectional_cost(np.ones((2, V + 1)) / (V + 1), spec2)
    with pytest.raises(ValueError):
        bidirectional_cost(np.ones(V) / V, spec2)
