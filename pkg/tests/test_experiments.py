import json
import math

import numpy as np
import pytest

from gvlasov.experiments import (KINDS, RUNNERS, ExperimentConfig, ExperimentReport, ReferenceBias,
                                 pooled_covariance, recompute_verdicts, run_chaos, run_contraction, run_moments,
                                 run_stationarity)
from gvlasov.lyapunov import InfeasibleForEta
from gvlasov.model import ForceSpec, ModelParams
from gvlasov.rng import GaussianLaw
from gvlasov.sde import ParticleEnsemble


def roundtrip(report):
    return json.loads(json.dumps(report.to_dict()))


def small_contraction(**kw):
    base = dict(n=128, t_end=5.0, sample_every=0.25, replicates=2, w2_subsample=32, w2_times=(0.0, 1.0, 5.0),
                fit_window=(1.0, 5.0))
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(n=0)
    with pytest.raises(ValueError):
        ExperimentConfig(reference="exact")
    with pytest.raises(ValueError):
        ExperimentConfig(sample_times=(0.0, 30.0))
    with pytest.raises(ValueError):
        ExperimentConfig(law={"center": (0, 0, 0), "sigma": 1})
    c = ExperimentConfig(law={"center": [1, 0, 0]})
    assert c.law == GaussianLaw(center=(1.0, 0.0, 0.0))
    assert len(c.times()) == 201
    assert set(RUNNERS) == set(KINDS)


def test_contraction_small_run():
    rep = run_contraction(small_contraction())
    assert rep.kind == "contraction" and isinstance(rep.passed, bool)
    assert rep.verdicts["slope_negative"]
    assert rep.fits["mean_form"]["slope"] < 0
    assert rep.info["forced"] is False and rep.info["eta0"] > 0
    assert len(rep.series["w2_subsample"]["x"]) == 3
    assert rep.series["w2_subsample"]["y"][-1] < rep.series["w2_subsample"]["y"][0]
    assert recompute_verdicts(roundtrip(rep)) == rep.verdicts
    assert recompute_verdicts(rep) == rep.verdicts


def test_contraction_null_coupling():
    law = GaussianLaw(center=(1.0, 0.0, 0.0))
    rep = run_contraction(small_contraction(law_a=law, law_b=law, replicates=1))
    assert not any(rep.series["mean_form"]["y"])
    assert rep.verdicts == {"null_coupling": True} and rep.passed


def test_contraction_refuses_past_threshold():
    params = ModelParams(force_b=ForceSpec("sine", 0.5))
    with pytest.raises(InfeasibleForEta) as info:
        run_contraction(small_contraction(params=params))
    assert info.value.eta == 0.5 and info.value.eta0 < 0.5
    rep = run_contraction(small_contraction(params=params, force=True, replicates=1))
    assert rep.info["forced"] is True and rep.margins == {}


def test_contraction_is_deterministic():
    a = run_contraction(small_contraction(replicates=1))
    b = run_contraction(small_contraction(replicates=1))
    assert a.to_dict() == b.to_dict()


def test_stationarity_small_run():
    cfg = ExperimentConfig(n=2000, t_end=10.0, sample_every=1.0, scheme="ou_splitting")
    rep = run_stationarity(cfg)
    np.testing.assert_allclose(rep.info["oracle"], np.eye(3), atol=1e-12)
    assert rep.info["max_rel_diag_error"] < 0.15
    assert rep.info["noise_consumed"] == 1000 * 2000
    assert recompute_verdicts(roundtrip(rep)) == rep.verdicts


def test_stationarity_nonlinear_uses_trend_rule():
    p = ModelParams(force_a=ForceSpec("tanh_saturating", 0.3), force_b=ForceSpec("sine", 0.05))
    rep = run_stationarity(ExperimentConfig(params=p, n=500, t_end=4.0, sample_every=1.0))
    assert set(rep.verdicts) == {"trend_stable"} and rep.info["oracle"] is None


def test_pooled_covariance():
    rng = np.random.default_rng(0)
    e = ParticleEnsemble(rng.normal(size=(5, 2)), rng.normal(size=(5, 2)), rng.normal(size=(5, 2)))
    cov, m = pooled_covariance(e)
    x = np.stack([e.q.ravel(), e.p.ravel(), e.z.ravel()], 1)
    np.testing.assert_allclose(cov, np.cov(x.T, bias=True), atol=1e-14)
    np.testing.assert_allclose(m, x.mean(0), atol=1e-15)


def test_moments_small_run():
    p = ModelParams(force_b=ForceSpec("linear", 0.05))
    cfg = ExperimentConfig(params=p, n=1000, t_end=10.0, sample_every=0.5, scheme="ou_splitting",
                           law=GaussianLaw(scale=0.0))
    rep = run_moments(cfg)
    assert rep.info["plateau_oracle"] == pytest.approx(1 / 1.05 + 2, rel=1e-12)
    assert "running_max_stable" in rep.verdicts and "plateau_within_5pct" in rep.verdicts
    assert rep.series["second_moment"]["y"][0] == 0.0
    assert recompute_verdicts(roundtrip(rep)) == rep.verdicts


def test_moments_refusal():
    p = ModelParams(force_b=ForceSpec("linear", 0.5))
    with pytest.raises(InfeasibleForEta):
        run_moments(ExperimentConfig(params=p, n=10, t_end=1.0))


def small_chaos(**kw):
    base = dict(params=ModelParams(force_b=ForceSpec("linear", 0.05)), n_sweep=(4, 8, 16, 32), t_end=2.0,
                sample_every=0.5, replicates=2, w2_times=(1.0, 2.0), force=True)
    base.update(kw)
    return ExperimentConfig(**base)


def test_chaos_small_run():
    rep = run_chaos(small_chaos())
    assert rep.info["forced"] is True and rep.info["eta0"] < 0.05
    e = rep.series["e"]["y"]
    assert all(v > 0 for v in e)
    assert rep.verdicts["w2_ordering"]
    assert rep.info["monitor_constant"] == pytest.approx(max(n * v for n, v in zip((4, 8, 16, 32), e)))
    assert recompute_verdicts(roundtrip(rep)) == rep.verdicts
    with pytest.raises(InfeasibleForEta):
        run_chaos(small_chaos(force=False))


def test_chaos_no_interaction_is_exact():
    # with B = zero both systems coincide
    rep = run_chaos(small_chaos(params=ModelParams(), force=False, n_sweep=(2, 3, 4, 5)))
    assert rep.series["e"]["y"] == [0.0, 0.0, 0.0, 0.0]
    assert rep.verdicts == {"null_coupling": True}


def test_chaos_reference_modes():
    p = ModelParams(force_b=ForceSpec("sine", 0.05))
    with pytest.raises(ValueError):
        run_chaos(small_chaos(params=p))
    with pytest.warns(ReferenceBias):
        rep = run_chaos(small_chaos(params=p, reference="frozen_reference", reference_size=64, replicates=1))
    assert rep.config["reference"] == "frozen_reference"


def test_chaos_exchangeability():
    # particle 0 and a random other particle see statistically identical errors
    rep = run_chaos(small_chaos(n_sweep=(8, 9, 10, 11), replicates=60, t_end=1.0, w2_times=()))
    for n in (8, 9, 10, 11):
        a = np.array(rep.series[f"particle_first_n{n}"]["y"])
        b = np.array(rep.series[f"particle_other_n{n}"]["y"])
        se = math.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
        assert abs(a.mean() - b.mean()) <= 4 * se


def test_report_roundtrip_and_bool_verdicts():
    rep = ExperimentReport("contraction", {}, {}, {}, {}, {"x": np.bool_(True)})
    assert type(rep.verdicts["x"]) is bool
    json.dumps(rep.to_dict())
    with pytest.raises(ValueError):
        recompute_verdicts({"kind": "nope", "series": {}, "config": {}})
