import numpy as np
import pytest
from hypothesis import given, strategies as st

from gvlasov import model
from gvlasov.model import ForceSpec, ModelParams, State, check_force_contracts, drift, eval_force

KINDS = ["zero", "linear", "tanh_saturating", "sine"]


def test_force_spec_validation():
    with pytest.raises(ValueError):
        ForceSpec("cubic", 1.0)
    with pytest.raises(ValueError):
        ForceSpec("linear", float("nan"))
    assert ForceSpec("zero", 3.0).c == 0.0
    with pytest.raises(ValueError):
        ForceSpec.from_dict({"kind": "linear", "c": 1.0, "offset": 2.0})
    assert ForceSpec.from_dict({"kind": "sine", "c": 2}) == ForceSpec("sine", 2.0)


def test_params_validation():
    for bad in ({"alpha": 0.0}, {"beta": -1.0}, {"lam": float("inf")}, {"dim": 0}, {"dim": 1.5}):
        with pytest.raises(ValueError):
            ModelParams(**bad)
    p = ModelParams(force_a=ForceSpec("tanh_saturating", -0.2), force_b=ForceSpec("sine", 0.3))
    assert p.eta == pytest.approx(0.5)
    assert p.to_dict()["lambda"] == 1.0


@pytest.mark.parametrize("kind", KINDS)
def test_builtin_forces_satisfy_contracts(kind):
    rep = check_force_contracts(ForceSpec(kind, 1.7), samples=2000, radius=20.0, seed=4, dim=3)
    assert rep.ok, rep.violations[:3]


def test_contract_checker_reports_witnesses(monkeypatch):
    monkeypatch.setattr(model, "lipschitz_constant", lambda spec: abs(spec.c) / 2)
    rep = check_force_contracts(ForceSpec("linear", 1.0), samples=50, radius=1.0, seed=0)
    assert not rep.ok
    v = rep.violations[0]
    assert v.kind == "lipschitz" and v.y is not None and v.excess > 0


@given(st.sampled_from(KINDS), st.floats(-5, 5), st.lists(st.floats(-50, 50), min_size=1, max_size=6))
def test_forces_are_odd_and_lipschitz(kind, c, xs):
    spec = ForceSpec(kind, c)
    x = np.array(xs)
    assert np.array_equal(eval_force(spec, -x), -eval_force(spec, x))
    y = x[::-1]
    lhs = np.linalg.norm(eval_force(spec, x) - eval_force(spec, y))
    assert lhs <= model.lipschitz_constant(spec) * np.linalg.norm(x - y) * (1 + 1e-12) + 1e-300


def test_drift_examples():
    p = ModelParams()
    s = State([1.0], [0.0], [0.0])
    dq, dp, dz = drift(s, p, 0.0)
    assert (dq[0], dp[0], dz[0]) == (0.0, -1.0, 0.0)
    s = State([0.5, -1.0], [2.0, 1.0], [0.25, 3.0])
    p2 = ModelParams(alpha=2.0, beta=3.0, lam=0.5, dim=2, force_a=ForceSpec("linear", 1.0))
    dq, dp, dz = drift(s, p2, np.array([0.1, -0.2]))
    np.testing.assert_allclose(dq, [2.0, 1.0])
    np.testing.assert_allclose(dp, [-3 * 0.5 - 0.5 - 0.1 + 0.5 * 0.25, 3.0 + 1.0 + 0.2 + 1.5])
    np.testing.assert_allclose(dz, [-1.0 - 0.5, -0.5 - 6.0])
    with pytest.raises(ValueError):
        drift(State([0.0], [0.0], [0.0]), p2, 0.0)


def test_state_roundtrip_and_validation():
    s = State.from_vector([1, 2, 3, 4, 5, 6])
    assert s.dim == 2 and s.as_vector().tolist() == [1, 2, 3, 4, 5, 6]
    with pytest.raises(ValueError):
        State([np.nan], [0], [0])
    with pytest.raises(ValueError):
        State([0, 1], [0], [0])
    with pytest.raises(ValueError):
        State.from_vector([1, 2])
