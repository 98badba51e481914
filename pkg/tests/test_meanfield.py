import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from gvlasov.meanfield import (EmpiricalProvider, FrozenReferenceProvider, LinearExactProvider, LinearOnlyMode,
                               MeanTrajectory, NotClosed, empirical_interaction, empirical_interactions,
                               integrate_mean_ode, reference_interaction, stationary_covariance_oracle)
from gvlasov.model import ForceSpec, ModelParams, eval_force
from gvlasov.rng import NOISE_REF, NoiseStream
from gvlasov.sde import IntegratorConfig, ParticleEnsemble
from oracles import mean_exact

ODD_KINDS = ["linear", "tanh_saturating", "sine"]


def ens_from_q(q):
    q = np.asarray(q, dtype=np.float64)
    return ParticleEnsemble(q, np.zeros_like(q), np.zeros_like(q))


def double_loop(q, spec):
    n = q.shape[0]
    out = np.zeros_like(q)
    for i in range(n):
        for j in range(n):
            out[i] += eval_force(spec, q[i] - q[j])
    return out / n


def test_single_particle_feels_nothing():
    for kind in ODD_KINDS:
        assert np.all(empirical_interaction(0, ens_from_q([[0.7, -1.2]]), ForceSpec(kind, 1.3)) == 0.0)


def test_linear_two_particle_example():
    e = ens_from_q([[1.0], [3.0]])
    assert empirical_interaction(0, e, ForceSpec("linear", 2.0)).tolist() == [-2.0]
    assert empirical_interactions(e.q, ForceSpec("linear", 2.0)).ravel().tolist() == [-2.0, 2.0]


def test_sine_against_double_loop(backend):
    q = np.random.default_rng(0).normal(size=(5, 2))
    spec = ForceSpec("sine", 1.0)
    np.testing.assert_allclose(empirical_interactions(q, spec), double_loop(q, spec), rtol=0, atol=1e-14)
    for i in range(5):
        np.testing.assert_allclose(empirical_interaction(i, ens_from_q(q), spec), double_loop(q, spec)[i],
                                   atol=1e-15)


def test_index_out_of_range():
    e = ens_from_q([[1.0], [2.0]])
    with pytest.raises(IndexError):
        empirical_interaction(2, e, ForceSpec("linear", 1.0))
    with pytest.raises(IndexError):
        empirical_interaction(-1, e, ForceSpec("linear", 1.0))


def test_fast_path_matches_direct_sum():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n, d = rng.integers(1, 40), rng.integers(1, 4)
        q = rng.normal(size=(n, d)) * rng.uniform(0.1, 10)
        spec = ForceSpec("linear", float(rng.uniform(-3, 3)))
        fast = empirical_interactions(q, spec, fast=True)
        slow = empirical_interactions(q, spec, fast=False)
        scale = max(np.abs(slow).max(), 1e-300)
        assert np.abs(fast - slow).max() <= 1e-12 * scale + 1e-300


@settings(max_examples=40)
@given(st.sampled_from(ODD_KINDS), st.integers(1, 30), st.integers(0, 2**31))
def test_antisymmetry(kind, n, seed):
    q = np.random.default_rng(seed).normal(size=(n, 2)) * 3
    spec = ForceSpec(kind, 1.7)
    total = empirical_interactions(q, spec, fast=False).sum(axis=0) * n
    assert np.abs(total).max() <= 1e-10 * n * n * 1.7 * max(1.0, np.abs(q).max())


@settings(max_examples=40)
@given(st.sampled_from(ODD_KINDS), st.integers(0, 2**31), st.floats(-5, 5))
def test_translation_invariance(kind, seed, shift):
    q = np.random.default_rng(seed).normal(size=(12, 2))
    spec = ForceSpec(kind, 0.9)
    a = empirical_interactions(q, spec)
    b = empirical_interactions(q + shift, spec)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_reference_interaction_examples():
    traj = MeanTrajectory([0.0, 1.0], [[1.0, 0, 0], [3.0, 0, 0]])
    lin = ForceSpec("linear", 0.5)
    assert reference_interaction([2.0], traj, lin, 0.5).tolist() == [0.0]
    assert reference_interaction([3.0], traj, lin, 0.0).tolist() == [1.0]
    with pytest.raises(LinearOnlyMode):
        reference_interaction([2.0], traj, ForceSpec("sine", 1.0), 0.5)
    y = ens_from_q([[0.25, -1.0]])
    s = ForceSpec("sine", 2.0)
    q = np.array([1.0, 0.5])
    np.testing.assert_allclose(reference_interaction(q, y, s), eval_force(s, q - y.q[0]), atol=1e-15)


def test_reference_ensemble_vs_linear_exact():
    rng = np.random.default_rng(5)
    ref = ens_from_q(rng.normal(size=(50, 2)))
    traj = MeanTrajectory([0.0, 1.0], np.tile(np.concatenate([ref.q.mean(0), [0, 0, 0, 0]]), (2, 1)))
    q = rng.normal(size=(20, 2))
    lin = ForceSpec("linear", 1.0)
    np.testing.assert_allclose(reference_interaction(q, ref, lin), reference_interaction(q, traj, lin, 0.3),
                               rtol=0, atol=1e-12)


def test_mean_trajectory_validation():
    with pytest.raises(ValueError):
        MeanTrajectory([0.0, 0.0], [[0, 0, 0], [0, 0, 0]])
    with pytest.raises(ValueError):
        MeanTrajectory([0.0, 1.0], [[0, 0, np.nan], [0, 0, 0]])
    t = MeanTrajectory([0.0, 1.0], [[0, 0, 0], [1, 2, 3]])
    assert t.at(0.25).tolist() == [0.25, 0.5, 0.75]
    with pytest.raises(ValueError):
        t.at(1.5)


def test_linear_exact_provider_guard():
    traj = MeanTrajectory([0.0, 1.0], [[0, 0, 0], [0, 0, 0]])
    with pytest.raises(LinearOnlyMode):
        LinearExactProvider(ForceSpec("tanh_saturating", 1.0), traj)
    LinearExactProvider(ForceSpec("zero", 0.0), traj)


def test_mean_ode_zero_is_fixed():
    traj = integrate_mean_ode(ModelParams(force_b=ForceSpec("linear", 1.0)), [0, 0, 0], 2.0, 0.01)
    assert not traj.m.any()


def test_mean_ode_matches_matrix_exponential():
    traj = integrate_mean_ode(ModelParams(force_b=ForceSpec("linear", 0.3)), [1, 0, 0], 1.0, 1e-3)
    np.testing.assert_allclose(traj.m[-1], mean_exact(1, 1, 1, [1, 0, 0], 1.0), atol=1e-8)


def test_mean_ode_linear_a_shifts_confinement():
    p = ModelParams(force_a=ForceSpec("linear", 0.5), dim=2)
    m0 = [1.0, -1.0, 0.0, 0.5, 0.2, 0.0]
    traj = integrate_mean_ode(p, m0, 1.0, 1e-3)
    m = np.array(m0).reshape(3, 2)
    expected = expm(np.array([[0, 1, 0], [-1.5, 0, 1], [0, -1, -1.0]])) @ m
    np.testing.assert_allclose(traj.m[-1], expected.ravel(), atol=1e-8)


def test_mean_ode_decays():
    traj = integrate_mean_ode(ModelParams(), [1, 1, 1], 60.0, 0.01)
    assert np.abs(traj.m[-1]).max() < 1e-4 * np.abs(traj.m[0]).max()


def test_mean_ode_not_closed():
    with pytest.raises(NotClosed):
        integrate_mean_ode(ModelParams(force_a=ForceSpec("sine", 0.1)), [0, 0, 0], 1.0, 0.1)
    with pytest.raises(NotClosed):
        integrate_mean_ode(ModelParams(force_b=ForceSpec("tanh_saturating", 0.1)), [0, 0, 0], 1.0, 0.1)
    with pytest.raises(ValueError):
        integrate_mean_ode(ModelParams(), [0, 0, 0], 1.0, 0.3)


def test_stationary_covariance_examples():
    np.testing.assert_allclose(stationary_covariance_oracle(ModelParams()), np.eye(3), atol=1e-14)
    s = stationary_covariance_oracle(ModelParams(alpha=2.0), kappa=1.0)
    np.testing.assert_allclose(s, np.diag([0.25, 0.5, 0.5]), atol=1e-14)
    assert not stationary_covariance_oracle(ModelParams(), noise_diag=(0, 0, 0)).any()
    with pytest.raises(NotClosed):
        stationary_covariance_oracle(ModelParams(force_a=ForceSpec("sine", 0.1)))


@settings(max_examples=50)
@given(st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0, 3))
def test_stationary_covariance_residual(alpha, beta, lam, kappa):
    p = ModelParams(alpha=alpha, beta=beta, lam=lam)
    s = stationary_covariance_oracle(p, kappa)
    m = p.drift_matrix(extra_confinement=kappa)
    r = m @ s + s @ m.T + np.diag([0, 0, 2.0])
    assert np.abs(r).max() <= 1e-12 * max(1.0, np.abs(s).max())
    np.testing.assert_allclose(s, np.diag([1 / (alpha * (beta + kappa)), 1 / alpha, 1 / alpha]), atol=1e-10)


def test_frozen_reference_provider_tracks_reference():
    p = ModelParams(force_b=ForceSpec("sine", 0.5))
    cfg = IntegratorConfig(0.01, "euler_maruyama", 1.0)
    rng = np.random.default_rng(0)
    ref = ParticleEnsemble(rng.normal(size=(64, 1)), rng.normal(size=(64, 1)), rng.normal(size=(64, 1)))
    prov = FrozenReferenceProvider(p.force_b, ref, p, cfg, NoiseStream(1, NOISE_REF))
    driven = ens_from_q([[0.3], [-0.2]])
    np.testing.assert_allclose(prov.terms(driven), reference_interaction(driven.q, ref, p.force_b))
    prov.advance()
    assert prov.reference.step_count == 1
    with pytest.raises(RuntimeError):
        prov.terms(driven)


def test_empirical_provider():
    q = np.random.default_rng(2).normal(size=(8, 1))
    prov = EmpiricalProvider(ForceSpec("tanh_saturating", 1.0))
    assert prov.mode == "empirical"
    np.testing.assert_array_equal(prov.terms(ens_from_q(q)), empirical_interactions(q, prov.force_b))
