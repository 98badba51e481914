"""Command-line entry point.

Exit codes: 0 all verdicts pass, 1 usage or configuration error, 2 verdict
failure, 3 runtime or numerical error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import os
import sys
from fractions import Fraction

import numpy as np

from gvlasov import kernels, lyapunov
from gvlasov.experiments import RUNNERS
from gvlasov.io import (CloudFormatError, ConfigError, defaults_toml, parse_config, read_cloud, read_toml,
                        report_json_text, report_svg, rows_csv_text, series_csv_text, write_cloud, write_manifest)
from gvlasov.model import ForceSpec, ZERO, ModelParams, check_force_contracts
from gvlasov.rng import INIT_A, INIT_B
from gvlasov.sde import ParticleEnsemble, run_coupled, simulate, strong_order_check
from gvlasov.transport import CostGuardExceeded, GroundMetric, SizeMismatch, w2_exact, w2_sliced
from gvlasov.meanfield import EmpiricalProvider

EXIT_OK, EXIT_USAGE, EXIT_VERDICT, EXIT_RUNTIME = 0, 1, 2, 3
EXPERIMENTS = {"contraction": "contraction", "stationary": "stationarity", "moments": "moments", "chaos": "chaos"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _force_arg(text):
    kind, _, c = text.partition(":")
    try:
        return ForceSpec(kind, float(c) if c else 0.0)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _model_flags(p):
    g = p.add_argument_group("model")
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--dim", type=int)
    g.add_argument("--force-a", type=_force_arg, metavar="KIND[:C]")
    g.add_argument("--force-b", type=_force_arg, metavar="KIND[:C]")


def _run_flags(p):
    p.add_argument("--config", help="TOML config with [model], [integrator], [experiment], [output]")
    p.add_argument("--print-defaults", action="store_true", help="print the default config and exit")
    p.add_argument("--out", help="output directory (overrides [output].dir)")
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--t-end", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--scheme", choices=("euler_maruyama", "ou_splitting"))
    p.add_argument("--replicates", type=int)
    p.add_argument("--force", action="store_true", help="run even if eta is not below eta0")
    p.add_argument("--no-svg", action="store_true")


def build_parser():
    top = _Parser(prog="gvlasov", description="Simulate and analyse a kinetic mean-field particle system.",
                  epilog="exit codes: 0 pass, 1 usage/config error, 2 verdict failure, 3 runtime error")
    top.add_argument("--threads", type=int, help="threads for the compiled kernels (env GVLASOV_NUM_THREADS)")
    sub = top.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    helps = {"simulate": "evolve one ensemble and write its final cloud",
             "couple": "synchronously couple two ensembles and record their distance",
             "contraction": "decay of the coupled distance under the contraction form",
             "stationary": "stationary covariance against the linear-case oracle",
             "moments": "long-run boundedness of the second moment",
             "chaos": "interacting vs reference particles over an N sweep"}
    for name in ("simulate", "couple", *EXPERIMENTS):
        p = sub.add_parser(name, help=helps[name])
        _model_flags(p)
        _run_flags(p)
    p = sub.add_parser("lyapunov", help="solve a coefficient system and print eta0")
    _model_flags(p)
    p.add_argument("--variant", choices=lyapunov.VARIANTS, default="contraction")
    p.add_argument("--a3-tilde", type=float)
    p.add_argument("--eta", type=float, help="defaults to C_A + C_B of the model")
    p = sub.add_parser("w2", help="W2 distance between two cloud files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--metric", choices=("euclidean_sq", "qform"), default="euclidean_sq")
    p.add_argument("--sliced", type=int, metavar="K", help="use K random projections instead of the exact solver")
    p.add_argument("--seed", type=int, default=0)
    _model_flags(p)
    p.add_argument("--a3-tilde", type=float, help="contraction form used by --metric qform")
    p = sub.add_parser("validate", help="force-contract and integrator-order checks")
    _model_flags(p)
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--radius", type=float, default=10.0)
    p.add_argument("--paths", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    return top


def _model_doc(args, doc):
    m = doc.setdefault("model", {})
    for flag, key in (("alpha", "alpha"), ("beta", "beta"), ("lam", "lambda"), ("dim", "dim")):
        v = getattr(args, flag, None)
        if v is not None:
            m[key] = v
    for flag in ("force_a", "force_b"):
        v = getattr(args, flag, None)
        if v is not None:
            m[flag] = v.to_dict()
    return doc


def _params_from_flags(args):
    doc = _model_doc(args, {})
    cfg, _ = parse_config(doc)
    return cfg.params


def _experiment_config(args, kind):
    if args.config:
        doc = read_toml(args.config)
        if "model" not in doc:
            raise ConfigError(f"{args.config}: missing section [model] (see --print-defaults)")
    else:
        doc = {}
    _model_doc(args, doc)
    integ = doc.setdefault("integrator", {})
    ex = doc.setdefault("experiment", {})
    for flag, sec, key in (("t_end", integ, "t_end"), ("dt", integ, "dt"), ("scheme", integ, "scheme"),
                           ("seed", ex, "seed"), ("n", ex, "n"), ("replicates", ex, "replicates")):
        v = getattr(args, flag)
        if v is not None:
            sec[key] = v
    if args.force:
        ex["force"] = True
    cfg, out = parse_config(doc, kind=kind)
    if args.out:
        out["dir"] = args.out
    if args.no_svg:
        out["svg"] = False
    return cfg, out


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _emit(out_dir, name, text, files):
    path = os.path.join(out_dir, name)
    os.makedirs(out_dir, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    files.append(path)
    return path


def cmd_experiment(args, kind):
    if args.print_defaults:
        print(defaults_toml(kind), end="")
        return EXIT_OK
    cfg, out = _experiment_config(args, kind)
    started = _now()
    report = RUNNERS[kind](cfg)
    files = []
    _emit(out["dir"], f"{kind}_series.csv", series_csv_text(report.series), files)
    _emit(out["dir"], f"{kind}_report.json", report_json_text(report), files)
    if out["svg"]:
        _emit(out["dir"], f"{kind}.svg", report_svg(report), files)
    write_manifest(os.path.join(out["dir"], f"{kind}_manifest.json"), report.config, cfg.seed, started, _now(), files)
    for name, ok in report.verdicts.items():
        print(f"{kind}.{name}: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_VERDICT


def cmd_simulate(args):
    if args.print_defaults:
        print(defaults_toml(), end="")
        return EXIT_OK
    cfg, out = _experiment_config(args, None)
    started = _now()
    p = cfg.params
    seed = cfg.replicate_seed(0)
    ens0 = ParticleEnsemble.sample(cfg.law, cfg.n, p.dim, seed, INIT_A)

    def observe(e):
        r2 = np.sum(e.q ** 2, 1) + np.sum(e.p ** 2, 1) + np.sum(e.z ** 2, 1)
        return {"second_moment": float(r2.mean()), "mean_q_norm": float(np.linalg.norm(e.q.mean(0)))}

    final, rows, _ = simulate(ens0, p, cfg.integrator(), seed, EmpiricalProvider(p.force_b), cfg.times(), observe)
    files = []
    _emit(out["dir"], "simulate_series.csv", rows_csv_text(rows), files)
    path = os.path.join(out["dir"], "simulate_final.csv")
    write_cloud(path, final.points())
    files.append(path)
    write_manifest(os.path.join(out["dir"], "simulate_manifest.json"), cfg.to_dict(), cfg.seed, started, _now(), files)
    print(f"simulated N={cfg.n} to t={final.time:g}; second moment {rows[-1][2]:.6g}" if rows else "done")
    return EXIT_OK


def cmd_couple(args):
    if args.print_defaults:
        print(defaults_toml(), end="")
        return EXIT_OK
    cfg, out = _experiment_config(args, None)
    started = _now()
    p = cfg.params
    seed = cfg.replicate_seed(0)
    try:
        form = lyapunov.solve_contraction(p, p.eta, cfg.a3_tilde).form
    except lyapunov.InfeasibleForEta:
        form = lyapunov.IDENTITY
    a0 = ParticleEnsemble.sample(cfg.law_a, cfg.n, p.dim, seed, INIT_A)
    b0 = ParticleEnsemble.sample(cfg.law_b, cfg.n, p.dim, seed, INIT_B)
    run = run_coupled(a0, b0, p, cfg.integrator(), seed, cfg.times(), form=form)
    files = []
    _emit(out["dir"], "couple_series.csv", rows_csv_text(run.rows()), files)
    write_manifest(os.path.join(out["dir"], "couple_manifest.json"), cfg.to_dict(), cfg.seed, started, _now(), files)
    print(f"coupled N={cfg.n}; mean form {run.mean_form[0]:.6g} -> {run.mean_form[-1]:.6g}")
    return EXIT_OK


def _fraction_hint(x):
    f = Fraction(x).limit_denominator(1000)
    return f" (= {f})" if f.denominator > 1 and abs(float(f) - x) <= 1e-12 * max(1.0, abs(x)) else ""


def cmd_lyapunov(args):
    params = _params_from_flags(args)
    eta = params.eta if args.eta is None else args.eta
    kw = {"a3_tilde": args.a3_tilde} if args.variant == "contraction" else {}
    if args.a3_tilde is not None and args.variant != "contraction":
        raise UsageError("--a3-tilde applies to the contraction variant only")
    try:
        sol = lyapunov.solve(args.variant, params, eta, **kw)
    except lyapunov.InfeasibleForEta as exc:
        print(f"variant={args.variant} eta={exc.eta!r} eta0={exc.eta0!r}{_fraction_hint(exc.eta0)}")
        print("infeasible: eta is not below eta0")
        return EXIT_VERDICT
    f = sol.form
    print(f"variant={sol.variant}")
    for name, val in zip(("a1", "a2", "a3", "a4", "a5"), f.coefficients):
        print(f"{name}={val!r}")
    if sol.a3_tilde is not None:
        print(f"a3_tilde={sol.a3_tilde!r}")
    print(f"eta={sol.eta!r}")
    print(f"eta0={sol.eta0!r}{_fraction_hint(sol.eta0)}")
    for k, v in sol.margins.items():
        print(f"margin.{k}={v!r}")
    return EXIT_OK


def cmd_w2(args):
    mu, nu = read_cloud(args.a), read_cloud(args.b)
    if args.metric == "qform":
        params = _params_from_flags(args)
        metric = GroundMetric("qform", lyapunov.contraction_form(
            params, args.a3_tilde if args.a3_tilde is not None else lyapunov.best_a3_tilde(params)))
    else:
        metric = GroundMetric()
    if args.sliced:
        if args.metric != "euclidean_sq":
            raise UsageError("--sliced supports the euclidean_sq metric only")
        val = w2_sliced(mu, nu, args.sliced, args.seed)
    else:
        val = w2_exact(mu, nu, metric)
    print(repr(val))
    return EXIT_OK


def cmd_validate(args):
    params = _params_from_flags(args)
    ok = True
    for label, spec in (("A", params.force_a), ("B", params.force_b)):
        rep = check_force_contracts(spec, args.samples, args.radius, args.seed, dim=params.dim)
        print(f"force {label} {spec.kind}(c={spec.c!r}): {'PASS' if rep.ok else 'FAIL'} "
              f"({len(rep.violations)} violations in {rep.samples} samples)")
        ok &= rep.ok
    lin = ModelParams(params.alpha, params.beta, params.lam, params.dim,
                      params.force_a if params.force_a.is_linear else ZERO, ZERO)
    slope, dts, errs = strong_order_check(lin, 1.0, [0.1, 0.05, 0.025, 0.0125], args.paths, args.seed)
    good = 0.8 <= slope <= 1.2
    print(f"euler_maruyama strong order: {slope:.4f} {'PASS' if good else 'FAIL'} (expected 0.8..1.2)")
    ok &= good
    return EXIT_OK if ok else EXIT_VERDICT


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.threads is not None:
            kernels.set_num_threads(args.threads)
        if args.command in EXPERIMENTS:
            return cmd_experiment(args, EXPERIMENTS[args.command])
        return {"simulate": cmd_simulate, "couple": cmd_couple, "lyapunov": cmd_lyapunov,
                "w2": cmd_w2, "validate": cmd_validate}[args.command](args)
    except (UsageError, ConfigError, CloudFormatError, SizeMismatch, CostGuardExceeded,
            lyapunov.InfeasibleForEta, lyapunov.InvalidA3Tilde, OSError) as exc:
        if isinstance(exc, lyapunov.InfeasibleForEta):
            print(f"error: {exc}; pass --force to run anyway", file=sys.stderr)
        else:
            print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # numerical or runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
