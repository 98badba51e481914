import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gvlasov.lyapunov import IDENTITY, NotPositiveDefinite, QuadraticForm, solve_contraction
from gvlasov.model import ModelParams
from gvlasov.transport import (MAX_EXACT_N, CostGuardExceeded, EmpiricalMeasure, GroundMetric, SizeMismatch,
                               w2_exact, w2_sliced, w2q_bounds_check)
from oracles import w2_brute

seeds = st.integers(0, 2**31)


def cloud(seed, n, k=3, scale=1.0):
    return EmpiricalMeasure(np.random.default_rng(seed).normal(size=(n, k)) * scale)


def test_identity_any_order():
    mu = cloud(0, 20)
    nu = EmpiricalMeasure(mu.points[::-1])
    assert w2_exact(mu, nu) == 0.0
    assert w2_sliced(mu, nu) == 0.0


def test_singletons():
    x, y = np.array([[1.0, 2.0, 3.0]]), np.array([[0.0, -1.0, 3.5]])
    assert w2_exact(EmpiricalMeasure(x), EmpiricalMeasure(y)) == pytest.approx(np.linalg.norm(x - y), rel=1e-15)


@pytest.mark.parametrize("n", [2, 3, 5, 7])
def test_matches_permutation_oracle(n, backend):
    for s in range(5):
        mu, nu = cloud(s, n), cloud(100 + s, n)
        assert w2_exact(mu, nu) == pytest.approx(w2_brute(mu.points, nu.points), rel=1e-12)


def test_plan_is_a_permutation():
    mu, nu = cloud(1, 30), cloud(2, 30)
    val, col = w2_exact(mu, nu, return_plan=True)
    assert sorted(col.tolist()) == list(range(30))
    assert val == pytest.approx(math.sqrt(np.mean(np.sum((mu.points - nu.points[col]) ** 2, 1))), rel=1e-14)


@settings(max_examples=30)
@given(seeds, st.integers(1, 25))
def test_metric_axioms(seed, n):
    a, b, c = cloud(seed, n), cloud(seed + 1, n), cloud(seed + 2, n)
    ab, ba = w2_exact(a, b), w2_exact(b, a)
    assert ab == pytest.approx(ba, rel=1e-12, abs=1e-15)
    assert w2_exact(a, c) <= ab + w2_exact(b, c) + 1e-9
    assert ab > 0


@settings(max_examples=30)
@given(seeds, st.integers(2, 25), st.floats(0.01, 100))
def test_permutation_and_scaling(seed, n, s):
    a, b = cloud(seed, n), cloud(seed + 7, n)
    base = w2_exact(a, b)
    perm = np.random.default_rng(seed).permutation(n)
    assert w2_exact(EmpiricalMeasure(a.points[perm]), b) == pytest.approx(base, rel=1e-12)
    assert w2_exact(EmpiricalMeasure(s * a.points), EmpiricalMeasure(s * b.points)) == pytest.approx(s * base,
                                                                                                      rel=1e-12)


@settings(max_examples=30)
@given(seeds, st.integers(1, 40))
def test_sliced_lower_bounds_exact(seed, n):
    a, b = cloud(seed, n), cloud(seed + 3, n, scale=2.0)
    assert w2_sliced(a, b, n_projections=256, seed=seed) <= w2_exact(a, b) + 1e-9


def test_sliced_one_dimensional_case():
    rng = np.random.default_rng(4)
    x = np.zeros((15, 3))
    y = np.zeros((15, 3))
    x[:, 0], y[:, 0] = rng.normal(size=15), rng.normal(size=15) + 1
    mu, nu = EmpiricalMeasure(x), EmpiricalMeasure(y)
    exact_1d = math.sqrt(np.mean((np.sort(x[:, 0]) - np.sort(y[:, 0])) ** 2))
    assert w2_sliced(mu, nu, directions=[[3.0, 0, 0]]) == pytest.approx(exact_1d, rel=1e-14)
    assert w2_exact(mu, nu) == pytest.approx(exact_1d, rel=1e-12)


def test_translation():
    mu = cloud(5, 40)
    v = np.array([0.3, -1.2, 2.0])
    nu = EmpiricalMeasure(mu.points + v)
    assert w2_exact(mu, nu) == pytest.approx(np.linalg.norm(v), rel=1e-12)
    assert w2_sliced(mu, nu) <= np.linalg.norm(v) + 1e-12


def test_identity_form_equals_euclidean():
    mu, nu = cloud(1, 24, 6), cloud(2, 24, 6)
    assert w2_exact(mu, nu, GroundMetric("qform", IDENTITY)) == w2_exact(mu, nu)


def test_sandwich_with_contraction_form():
    form = solve_contraction(ModelParams(), 0.0).form
    mu, nu = cloud(11, 32), cloud(12, 32, scale=1.5)
    r = w2q_bounds_check(mu, nu, form)
    assert r.holds and min(r.slack) > 0
    z = w2q_bounds_check(mu, mu, form)
    assert z.w2 == 0.0 and z.w2q == 0.0 and z.holds
    assert set(r.to_dict()) >= {"w2", "w2q", "c_lo", "c_hi", "holds"}


@settings(max_examples=20)
@given(seeds, st.integers(1, 20), st.integers(1, 3))
def test_sandwich_random(seed, n, d):
    form = QuadraticForm(4.0, 4.5, 3.0, 0.5, -0.5)
    assert w2q_bounds_check(cloud(seed, n, 3 * d), cloud(seed + 1, n, 3 * d), form).holds


def test_qform_metric_matches_direct_cost():
    form = QuadraticForm(4.0, 4.5, 3.0, 0.5, -0.5)
    mu, nu = cloud(3, 6, 6), cloud(4, 6, 6)
    best = math.inf
    for perm in itertools.permutations(range(6)):
        d = mu.points - nu.points[list(perm)]
        best = min(best, np.mean(form.evaluate(d[:, :2], d[:, 2:4], d[:, 4:])))
    assert w2_exact(mu, nu, GroundMetric("qform", form)) == pytest.approx(math.sqrt(best), rel=1e-12)


def test_guards():
    with pytest.raises(SizeMismatch):
        w2_exact(cloud(0, 3), cloud(0, 4))
    with pytest.raises(SizeMismatch):
        w2_sliced(cloud(0, 3, 3), cloud(0, 3, 6))
    big = EmpiricalMeasure(np.zeros((MAX_EXACT_N + 1, 3)))
    with pytest.raises(CostGuardExceeded):
        w2_exact(big, big)
    with pytest.raises(NotPositiveDefinite):
        GroundMetric("qform", QuadraticForm(1.0, 1.0, 1.0, 2.0, 0.0))
    with pytest.raises(ValueError):
        GroundMetric("manhattan")
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        EmpiricalMeasure([[np.nan, 0, 0]])
