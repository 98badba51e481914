"""The four headline experiments and their verdict rules.

Each runner produces an :class:`ExperimentReport` whose verdicts are a pure
function of the stored series and config echo; :func:`recompute_verdicts`
re-derives them offline.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from gvlasov import lyapunov
from gvlasov.lyapunov import InfeasibleForEta
from gvlasov.meanfield import (EmpiricalProvider, FrozenReferenceProvider, LinearExactProvider, integrate_mean_ode,
                               stationary_covariance_oracle)
from gvlasov.model import ModelParams
from gvlasov.rng import INIT_A, INIT_B, INIT_REF, NOISE_REF, GaussianLaw, NoiseStream, derive_seed
from gvlasov.sde import IntegratorConfig, ParticleEnsemble, run_coupled, simulate
from gvlasov.stats import NonPositiveSeries, RateFit, fit_rate
from gvlasov.transport import EmpiricalMeasure, w2_exact

FORMAT_VERSION = 1
KINDS = ("contraction", "stationarity", "moments", "chaos")


class ReferenceBias(UserWarning):
    pass


def _law_from(doc):
    if isinstance(doc, GaussianLaw):
        return doc
    doc = dict(doc)
    unknown = set(doc) - {"center", "scale", "cov"}
    if unknown:
        raise ValueError(f"unknown initial-law keys: {sorted(unknown)}")
    cov = doc.get("cov")
    return GaussianLaw(tuple(float(c) for c in doc.get("center", (0.0, 0.0, 0.0))), float(doc.get("scale", 1.0)),
                       None if cov is None else tuple(tuple(float(v) for v in r) for r in cov))


@dataclass(frozen=True)
class ExperimentConfig:
    """Shared configuration; fields irrelevant to a given experiment are ignored by it."""

    params: ModelParams = field(default_factory=ModelParams)
    n: int = 4096
    dt: float = 1e-2
    t_end: float = 20.0
    scheme: str = "euler_maruyama"
    sample_every: float = 0.1
    sample_times: tuple | None = None
    seed: int = 0
    replicates: int = 3
    force: bool = False
    # contraction
    law_a: GaussianLaw = GaussianLaw(center=(2.0, 0.0, 0.0))
    law_b: GaussianLaw = GaussianLaw(center=(-2.0, 0.0, 0.0))
    a3_tilde: float | None = None
    fit_window: tuple | None = None
    w2_subsample: int = 256
    w2_times: tuple = (0.0, 1.0, 2.0, 5.0, 10.0, 20.0)
    # stationarity / moments
    law: GaussianLaw = GaussianLaw()
    # chaos
    n_sweep: tuple = (16, 64, 256, 1024)
    reference: str = "linear_exact"
    reference_size: int = 16384

    def __post_init__(self):
        object.__setattr__(self, "law_a", _law_from(self.law_a))
        object.__setattr__(self, "law_b", _law_from(self.law_b))
        object.__setattr__(self, "law", _law_from(self.law))
        if self.n < 1 or self.replicates < 1:
            raise ValueError("n and replicates must be >= 1")
        if self.reference not in ("linear_exact", "frozen_reference"):
            raise ValueError(f"unknown reference mode {self.reference!r}")
        self.integrator()
        times = self.times()
        if any(t < 0 or t > self.t_end + 1e-12 for t in times) or np.any(np.diff(times) <= 0):
            raise ValueError("sample_times must be strictly increasing within [0, t_end]")

    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(self.dt, self.scheme, self.t_end)

    def times(self):
        if self.sample_times is not None:
            return np.asarray(self.sample_times, dtype=np.float64)
        k = int(round(self.t_end / self.sample_every))
        return np.arange(k + 1) * self.sample_every

    def replicate_seed(self, *keys) -> int:
        return derive_seed(self.seed, *keys)

    def to_dict(self):
        return {
            "params": self.params.to_dict(),
            "n": self.n, "dt": self.dt, "t_end": self.t_end, "scheme": self.scheme,
            "sample_every": self.sample_every,
            "sample_times": None if self.sample_times is None else [float(t) for t in self.sample_times],
            "seed": self.seed, "replicates": self.replicates, "force": self.force,
            "law_a": self.law_a.to_dict(), "law_b": self.law_b.to_dict(), "law": self.law.to_dict(),
            "a3_tilde": self.a3_tilde,
            "fit_window": None if self.fit_window is None else list(self.fit_window),
            "w2_subsample": self.w2_subsample, "w2_times": list(self.w2_times),
            "n_sweep": list(self.n_sweep), "reference": self.reference, "reference_size": self.reference_size,
        }


@dataclass
class ExperimentReport:
    kind: str
    config: dict
    series: dict
    fits: dict
    margins: dict
    verdicts: dict
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.verdicts = {k: bool(v) for k, v in self.verdicts.items()}

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_dict(self):
        return {"format_version": FORMAT_VERSION, "kind": self.kind, "config": self.config,
                "series": self.series, "fits": self.fits, "margins": self.margins,
                "verdicts": self.verdicts, "passed": self.passed, "info": self.info}


def _series(x, y):
    return {"x": [float(v) for v in x], "y": [float(v) for v in y]}


def _precondition(variant, params, cfg, **kw):
    """Solve the coefficient system; refuse unless ``cfg.force``."""
    try:
        sol = lyapunov.solve(variant, params, params.eta, **kw)
        return sol, {"eta": params.eta, "eta0": sol.eta0, "forced": False}
    except InfeasibleForEta as exc:
        if not cfg.force:
            raise
        return None, {"eta": params.eta, "eta0": exc.eta0, "forced": True}


# -- contraction ----------------------------------------------------------------

def _judge_contraction(series, config):
    y = np.asarray(series["mean_form"]["y"])
    x = np.asarray(series["mean_form"]["x"])
    info = {"monotonicity_violations": int(np.sum(np.diff(y) > 0))}
    if not np.any(y > 0):
        return {}, {"null_coupling": True}, info
    window = config["fit_window"] or [min(1.0, config["t_end"]), config["t_end"]]
    fits = {"mean_form": fit_rate(x, y, window).to_dict()}
    for key in sorted(series):
        if key.startswith("mean_form_r"):
            try:
                fits[key] = fit_rate(series[key]["x"], series[key]["y"], window).to_dict()
            except NonPositiveSeries:
                pass
    slopes = [f["slope"] for k, f in fits.items() if k.startswith("mean_form_r")]
    if slopes:
        info["replicate_slope_spread"] = float(max(slopes) - min(slopes))
    ratio = float(y[-1] / y[0])
    info["decay_ratio"] = ratio
    verdicts = {
        "slope_negative": fits["mean_form"]["slope"] < 0,
        "fit_r2": fits["mean_form"]["r_squared"] >= 0.99,
        "decay_ratio": ratio <= 1e-3,
    }
    return fits, verdicts, info


def run_contraction(cfg: ExperimentConfig) -> ExperimentReport:
    """Two ensembles from different initial laws, synchronously coupled.

    Decay of ``E Q(diff)`` under the solved contraction form is fitted on a
    semilog scale; exact W2 between subsamples of the two ensembles is
    recorded at ``w2_times`` as a coupling-free cross-check.
    """
    params = cfg.params
    sol, pre = _precondition("contraction", params, cfg, a3_tilde=cfg.a3_tilde)
    if sol is None:
        a3t = cfg.a3_tilde if cfg.a3_tilde is not None else lyapunov.best_a3_tilde(params)
        form, margins = lyapunov.contraction_form(params, a3t), {}
    else:
        form, margins = sol.form, dict(sol.margins)
        margins["rate_bound"] = lyapunov.contraction_rate_bound(sol)
    icfg = cfg.integrator()
    times = cfg.times()
    w2_steps = {icfg.steps_for(t) for t in cfg.w2_times if t <= cfg.t_end}
    k = min(cfg.n, cfg.w2_subsample)
    series, forms, w2s = {}, [], []
    for r in range(cfg.replicates):
        seed = cfg.replicate_seed(r)
        a0 = ParticleEnsemble.sample(cfg.law_a, cfg.n, params.dim, seed, INIT_A)
        # identical laws share the initial draw, so the coupling null test is exact
        b_stream = INIT_A if cfg.law_b == cfg.law_a else INIT_B
        b0 = ParticleEnsemble.sample(cfg.law_b, cfg.n, params.dim, seed, b_stream)
        w2_row = []

        def hook(a, b):
            if a.step_count in w2_steps:
                w2_row.append((a.time, w2_exact(EmpiricalMeasure(a.points()[:k]), EmpiricalMeasure(b.points()[:k]))))

        run = run_coupled(a0, b0, params, icfg, seed, times, form=form, on_sample=hook)
        forms.append(run.mean_form)
        series[f"mean_form_r{r}"] = _series(run.times, run.mean_form)
        if r == 0:
            series["mean_dq2_r0"] = _series(run.times, run.mean_dq2)
            series["mean_dp2_r0"] = _series(run.times, run.mean_dp2)
            series["mean_dz2_r0"] = _series(run.times, run.mean_dz2)
        w2s.append([v for _, v in w2_row])
        w2_t = [t for t, _ in w2_row]
    stack = np.array(forms)
    series["mean_form"] = _series(times, stack.mean(axis=0))
    series["mean_form_min"] = _series(times, stack.min(axis=0))
    series["mean_form_max"] = _series(times, stack.max(axis=0))
    if w2_t:
        series["w2_subsample"] = _series(w2_t, np.mean(w2s, axis=0))
    config = cfg.to_dict()
    fits, verdicts, info = _judge_contraction(series, config)
    info.update(pre)
    info["form"] = form.to_dict()
    info["w2_subsample_size"] = k
    return ExperimentReport("contraction", config, series, fits, margins, verdicts, info)


# -- stationarity -------------------------------------------------------------------

def _linear_kappa(params):
    if params.force_a.is_linear and params.force_b.is_linear:
        return params.force_b.slope
    return None


COV_NAMES = ("qq", "qp", "qz", "pp", "pz", "zz")
COV_IDX = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


def pooled_covariance(ens: ParticleEnsemble):
    """3x3 covariance of ``(q_k, p_k, z_k)`` pooled over particles and coordinates, plus the mean."""
    x = np.stack([ens.q, ens.p, ens.z], axis=-1).reshape(-1, 3)
    m = x.mean(axis=0)
    c = x - m
    return c.T @ c / x.shape[0], m


def _judge_stationarity(series, config, oracle):
    n_eff = config["n"] * config["params"]["dim"]
    last = {name: series[f"cov_{name}"]["y"][-1] for name in COV_NAMES}
    info, verdicts = {}, {}
    mean_norm = series["mean_norm"]["y"][-1]
    info["mean_norm"] = mean_norm
    if oracle is None:
        half = [i for i, t in enumerate(series["cov_qq"]["x"]) if t >= config["t_end"] / 2.0]
        drift = max(abs(series[f"cov_{d}"]["y"][-1] / series[f"cov_{d}"]["y"][half[0]] - 1.0)
                    for d in ("qq", "pp", "zz"))
        info["trend_drift"] = drift
        verdicts["trend_stable"] = drift <= 0.05
        return {}, verdicts, info
    S = np.asarray(oracle)
    rel = [abs(last[n] / S[i, j] - 1.0) for n, (i, j) in zip(COV_NAMES, COV_IDX) if i == j]
    band = 3.0 / math.sqrt(n_eff)
    off = [abs(last[n] - S[i, j]) / math.sqrt(S[i, i] * S[j, j]) for n, (i, j) in zip(COV_NAMES, COV_IDX) if i != j]
    info["max_rel_diag_error"] = max(rel)
    info["max_off_diag_error"] = max(off)
    info["off_diag_band"] = band
    mean_band = 4.0 * math.sqrt(float(np.trace(S)) * config["params"]["dim"] / config["n"])
    info["mean_band"] = mean_band
    verdicts["diag_within_5pct"] = max(rel) <= 0.05
    verdicts["off_diag_within_band"] = max(off) <= band
    verdicts["mean_within_clt_band"] = mean_norm <= mean_band
    return {}, verdicts, info


def run_stationarity(cfg: ExperimentConfig) -> ExperimentReport:
    """Evolve one ensemble and compare its covariance with the linear-case oracle.

    Without a closed oracle (nonlinear forces) the run is judged on the
    stability of the diagonal covariance over the second half.
    """
    params = cfg.params
    kappa = _linear_kappa(params)
    oracle = None if kappa is None else stationary_covariance_oracle(params, kappa)
    icfg = cfg.integrator()
    seed = cfg.replicate_seed(0)
    ens0 = ParticleEnsemble.sample(cfg.law, cfg.n, params.dim, seed, INIT_A)

    def observe(e):
        cov, m = pooled_covariance(e)
        out = {f"cov_{n}": cov[i, j] for n, (i, j) in zip(COV_NAMES, COV_IDX)}
        out["mean_norm"] = float(np.linalg.norm(np.concatenate([e.q.mean(0), e.p.mean(0), e.z.mean(0)])))
        return out

    _, rows, noise = simulate(ens0, params, icfg, seed, EmpiricalProvider(params.force_b), cfg.times(), observe)
    series = _rows_to_series(rows)
    config = cfg.to_dict()
    fits, verdicts, info = _judge_stationarity(series, config, oracle)
    info["oracle"] = None if oracle is None else oracle.tolist()
    info["noise_consumed"] = noise.consumed
    return ExperimentReport("stationarity", config, series, fits, {}, verdicts, info)


def _rows_to_series(rows):
    out = {}
    for t, name, val in rows:
        s = out.setdefault(name, {"x": [], "y": []})
        s["x"].append(float(t))
        s["y"].append(float(val))
    return out


# -- moments ----------------------------------------------------------------------

def _window_max(x, y, lo, hi):
    sel = [v for t, v in zip(x, y) if lo <= t <= hi]
    return max(sel) if sel else float("nan")


def _judge_moments(series, config, plateau):
    x, y = series["second_moment"]["x"], series["second_moment"]["y"]
    T = config["t_end"]
    late = _window_max(x, y, T / 2.0, T)
    early = _window_max(x, y, T / 4.0, T / 2.0)
    band = series["second_moment_se"]["y"][-1] * 3.0
    info = {"max_late": late, "max_early": early, "mc_band": band}
    verdicts = {"running_max_stable": late <= 1.05 * early + band}
    sel = [v for t, v in zip(x, y) if t >= T / 2.0]
    info["plateau_mean"] = float(np.mean(sel))
    if plateau is not None:
        info["plateau_oracle"] = plateau
        info["plateau_rel_error"] = abs(info["plateau_mean"] / plateau - 1.0)
        verdicts["plateau_within_5pct"] = info["plateau_rel_error"] <= 0.05
    return {}, verdicts, info


def run_moments(cfg: ExperimentConfig) -> ExperimentReport:
    """Track ``(1/N) sum |X_i|^2`` and the mean second-moment form over a long run."""
    params = cfg.params
    sol, pre = _precondition("second_moment", params, cfg)
    form = sol.form if sol is not None else lyapunov._second_moment_form(
        params, *lyapunov.best_second_moment_coefficients(params)[:2])
    kappa = _linear_kappa(params)
    plateau = None
    if kappa is not None:
        plateau = float(np.trace(stationary_covariance_oracle(params, kappa))) * params.dim
    icfg = cfg.integrator()
    seed = cfg.replicate_seed(0)
    ens0 = ParticleEnsemble.sample(cfg.law, cfg.n, params.dim, seed, INIT_A)

    def observe(e):
        r2 = np.sum(e.q ** 2, axis=1) + np.sum(e.p ** 2, axis=1) + np.sum(e.z ** 2, axis=1)
        return {"second_moment": float(r2.mean()),
                "second_moment_se": float(r2.std() / math.sqrt(e.n)),
                "mean_form": float(np.mean(form.evaluate(e.q, e.p, e.z)))}

    _, rows, _ = simulate(ens0, params, icfg, seed, EmpiricalProvider(params.force_b), cfg.times(), observe)
    series = _rows_to_series(rows)
    config = cfg.to_dict()
    fits, verdicts, info = _judge_moments(series, config, plateau)
    info.update(pre)
    info["form"] = form.to_dict()
    return ExperimentReport("moments", config, series, fits, {} if sol is None else dict(sol.margins), verdicts, info)


# -- chaos ------------------------------------------------------------------------

def _judge_chaos(series, config):
    ns = np.asarray(series["e"]["x"])
    es = np.asarray(series["e"]["y"])
    if not np.any(es > 0):
        return {}, {"null_coupling": True}, {}
    keep = ns >= 2
    fit = fit_rate(ns[keep], es[keep], mode="loglog")
    w2 = np.asarray(series["w2_marginal"]["y"])
    bound = np.sqrt(np.asarray(series["w2_bound"]["y"]))
    info = {"w2_slack": (bound - w2).tolist()}
    verdicts = {
        "slope_in_range": -1.25 <= fit.slope <= -0.80,
        "fit_r2": fit.r_squared >= 0.95,
        "w2_ordering": bool(np.all(w2 <= bound + 1e-12 * np.maximum(1.0, bound))),
    }
    return {"e": fit.to_dict()}, verdicts, info


def _reference_provider(cfg, params, seed, traj):
    if cfg.reference == "linear_exact":
        return LinearExactProvider(params.force_b, traj)
    ref0 = ParticleEnsemble.sample(cfg.law, cfg.reference_size, params.dim, seed, INIT_REF)
    return FrozenReferenceProvider(params.force_b, ref0, params, cfg.integrator(), NoiseStream(seed, NOISE_REF))


def run_chaos(cfg: ExperimentConfig) -> ExperimentReport:
    """Interacting particles against the reference system, same noise and initial data.

    ``e(N)`` is, per replicate, the maximum over sample times of the mean of
    ``|X^{i,N} - Xref^i|^2`` over particles, then averaged over replicates.
    Exact W2 between the two clouds at each sample time lower-bounds the
    same quantity through the identity coupling; its squared maximum,
    averaged over replicates, is stored as ``w2_marginal``.
    """
    params = cfg.params
    _, pre = _precondition("chaos", params, cfg)
    if cfg.reference == "linear_exact" and not params.force_b.is_linear:
        raise ValueError("linear_exact reference requires a linear interaction force; use frozen_reference")
    if cfg.reference == "frozen_reference" and cfg.reference_size < 16 * max(cfg.n_sweep):
        warnings.warn(f"reference size {cfg.reference_size} < 16 * max(N); reference bias may dominate",
                      ReferenceBias, stacklevel=2)
    icfg = cfg.integrator()
    times = cfg.times()
    d = params.dim
    m0 = np.repeat(cfg.law.mean_vector, d)
    traj = integrate_mean_ode(params, m0, cfg.t_end, cfg.dt) if cfg.reference == "linear_exact" else None
    w2_steps = {icfg.steps_for(t) for t in cfg.w2_times if t <= cfg.t_end}
    series = {}
    e_vals, w2_vals, idx_other = [], [], {}
    for n in cfg.n_sweep:
        maxes, w2max, profiles, p0, pj = [], [], [], [], []
        j = int(np.random.default_rng(cfg.replicate_seed(n, 1 << 20)).integers(1, n)) if n > 1 else 0
        idx_other[n] = j
        for r in range(cfg.replicates):
            seed = cfg.replicate_seed(n, r)
            ens0 = ParticleEnsemble.sample(cfg.law, n, d, seed, INIT_A)
            w2_here, diff_here = [], []

            def hook(a, b):
                dq, dp, dz = a.q - b.q, a.p - b.p, a.z - b.z
                per = np.sum(dq * dq, 1) + np.sum(dp * dp, 1) + np.sum(dz * dz, 1)
                diff_here.append((per[0], per[j]))
                if a.step_count in w2_steps:
                    w2_here.append(w2_exact(EmpiricalMeasure(a.points()), EmpiricalMeasure(b.points())) ** 2)

            providers = (EmpiricalProvider(params.force_b), _reference_provider(cfg, params, seed, traj))
            run = run_coupled(ens0, ens0.copy(), params, icfg, seed, times, providers=providers, on_sample=hook)
            total = run.mean_dq2 + run.mean_dp2 + run.mean_dz2
            profiles.append(total)
            maxes.append(float(total.max()))
            w2max.append(max(w2_here) if w2_here else 0.0)
            arr = np.array(diff_here)
            p0.append(arr[:, 0].max())
            pj.append(arr[:, 1].max())
        e_vals.append(float(np.mean(maxes)))
        w2_vals.append(float(np.mean(w2max)))
        series[f"profile_n{n}"] = _series(times, np.mean(profiles, axis=0))
        series[f"particle_first_n{n}"] = _series(range(cfg.replicates), p0)
        series[f"particle_other_n{n}"] = _series(range(cfg.replicates), pj)
    series["e"] = _series(cfg.n_sweep, e_vals)
    series["w2_marginal"] = _series(cfg.n_sweep, np.sqrt(w2_vals))
    series["w2_bound"] = _series(cfg.n_sweep, e_vals)
    config = cfg.to_dict()
    fits, verdicts, info = _judge_chaos(series, config)
    info.update(pre)
    info["other_particle_index"] = {str(k): v for k, v in idx_other.items()}
    info["monitor_constant"] = float(max(n * e for n, e in zip(cfg.n_sweep, e_vals)))
    return ExperimentReport("chaos", config, series, fits, {}, verdicts, info)


RUNNERS = {
    "contraction": run_contraction,
    "stationarity": run_stationarity,
    "moments": run_moments,
    "chaos": run_chaos,
}


def recompute_verdicts(report) -> dict:
    """Re-derive the verdicts of a report (object or dict) from its series and config."""
    doc = report.to_dict() if isinstance(report, ExperimentReport) else report
    kind, series, config = doc["kind"], doc["series"], doc["config"]
    if kind == "contraction":
        return _judge_contraction(series, config)[1]
    if kind == "stationarity":
        oracle = doc["info"].get("oracle")
        return _judge_stationarity(series, config, oracle)[1]
    if kind == "moments":
        return _judge_moments(series, config, doc["info"].get("plateau_oracle"))[1]
    if kind == "chaos":
        return _judge_chaos(series, config)[1]
    raise ValueError(f"unknown report kind {kind!r}")


__all__ = [
    "ExperimentConfig", "ExperimentReport", "RateFit", "fit_rate", "NonPositiveSeries", "ReferenceBias",
    "run_contraction", "run_stationarity", "run_moments", "run_chaos", "recompute_verdicts", "RUNNERS",
    "pooled_covariance",
]
