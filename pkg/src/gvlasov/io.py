"""Configuration documents, point clouds, series CSV, reports, manifests and SVG.

Floats are written with ``repr`` (shortest round-trip), so a write/read
cycle is exact and identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import sys

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from gvlasov.experiments import ExperimentConfig
from gvlasov.model import ForceSpec, ModelParams

FORMAT_VERSION = 1


class ConfigError(ValueError):
    pass


class CloudFormatError(ValueError):
    pass


DEFAULTS = {
    "model": {
        "alpha": 1.0, "beta": 1.0, "lambda": 1.0, "dim": 1,
        "force_a": {"kind": "zero", "c": 0.0},
        "force_b": {"kind": "zero", "c": 0.0},
    },
    "integrator": {"dt": 0.01, "scheme": "euler_maruyama", "t_end": 20.0},
    "experiment": {
        "n": 4096, "seed": 0, "replicates": 3, "sample_every": 0.1, "force": False,
        "law_a": {"center": [2.0, 0.0, 0.0], "scale": 1.0},
        "law_b": {"center": [-2.0, 0.0, 0.0], "scale": 1.0},
        "law": {"center": [0.0, 0.0, 0.0], "scale": 1.0},
        "w2_subsample": 256, "w2_times": [0.0, 1.0, 2.0, 5.0, 10.0, 20.0],
        "n_sweep": [16, 64, 256, 1024], "reference": "linear_exact", "reference_size": 16384,
    },
    "output": {"dir": "out", "svg": True},
}

# per-experiment adjustments to DEFAULTS
KIND_DEFAULTS = {
    "stationarity": {"integrator": {"scheme": "ou_splitting", "t_end": 50.0},
                     "experiment": {"n": 10000, "sample_every": 1.0}},
    "moments": {"model": {"dim": 3, "force_b": {"kind": "linear", "c": 0.05}},
                "integrator": {"scheme": "ou_splitting", "t_end": 100.0},
                "experiment": {"sample_every": 0.5, "law": {"center": [0.0, 0.0, 0.0], "scale": 0.0}}},
    "chaos": {"model": {"dim": 3, "force_b": {"kind": "linear", "c": 0.05}}},
}

# optional keys without a default value
OPTIONAL = {"experiment": {"a3_tilde", "fit_window", "sample_times"}}
LAW_KEYS = {"center", "scale", "cov"}


def _as_float(val, where):
    if isinstance(val, bool):
        raise ConfigError(f"{where}: expected a number, got a boolean")
    if isinstance(val, (int, float)):
        return float(val)
    if isinstance(val, str):
        try:
            return float(val)
        except ValueError:
            pass
    raise ConfigError(f"{where}: expected a number, got {val!r}")


def _as_int(val, where):
    f = _as_float(val, where)
    if f != int(f):
        raise ConfigError(f"{where}: expected an integer, got {val!r}")
    return int(f)


def _check_keys(doc, allowed, where):
    unknown = set(doc) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")


def _force(doc, where):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected a table")
    _check_keys(doc, {"kind", "c"}, where)
    try:
        return ForceSpec(str(doc.get("kind", "zero")), _as_float(doc.get("c", 0.0), f"{where}.c"))
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _law(doc, where):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected a table")
    _check_keys(doc, LAW_KEYS, where)
    out = {"center": [_as_float(v, f"{where}.center") for v in doc.get("center", [0.0, 0.0, 0.0])],
           "scale": _as_float(doc.get("scale", 1.0), f"{where}.scale")}
    if len(out["center"]) != 3:
        raise ConfigError(f"{where}.center must have 3 entries (q, p, z)")
    if "cov" in doc:
        out["cov"] = [[_as_float(v, f"{where}.cov") for v in row] for row in doc["cov"]]
    return out


def defaults_for(kind: str | None = None) -> dict:
    out = {sec: dict(body) for sec, body in DEFAULTS.items()}
    for sec, body in KIND_DEFAULTS.get(kind, {}).items():
        out[sec].update(body)
    return out


def parse_config(doc: dict, require_model: bool = True, kind: str | None = None):
    """Validate a config document; returns ``(ExperimentConfig, output_options)``.

    Missing keys take the defaults of ``kind`` (see :func:`defaults_for`).
    """
    base = defaults_for(kind)
    _check_keys(doc, DEFAULTS, "the top level")
    if require_model and "model" not in doc:
        raise ConfigError("missing section [model] (see --print-defaults)")
    for sec in doc:
        if not isinstance(doc[sec], dict):
            raise ConfigError(f"[{sec}] must be a table")
        _check_keys(doc[sec], set(DEFAULTS[sec]) | OPTIONAL.get(sec, set()), f"[{sec}]")
    m = {**base["model"], **doc.get("model", {})}
    try:
        params = ModelParams(
            alpha=_as_float(m["alpha"], "model.alpha"), beta=_as_float(m["beta"], "model.beta"),
            lam=_as_float(m["lambda"], "model.lambda"), dim=_as_int(m["dim"], "model.dim"),
            force_a=_force(m["force_a"], "model.force_a"), force_b=_force(m["force_b"], "model.force_b"))
    except ValueError as exc:
        raise ConfigError(f"[model]: {exc}") from None
    integ = {**base["integrator"], **doc.get("integrator", {})}
    ex = {**base["experiment"], **doc.get("experiment", {})}
    out = {**base["output"], **doc.get("output", {})}
    kw = dict(
        params=params,
        dt=_as_float(integ["dt"], "integrator.dt"), scheme=str(integ["scheme"]),
        t_end=_as_float(integ["t_end"], "integrator.t_end"),
        n=_as_int(ex["n"], "experiment.n"), seed=_as_int(ex["seed"], "experiment.seed"),
        replicates=_as_int(ex["replicates"], "experiment.replicates"),
        sample_every=_as_float(ex["sample_every"], "experiment.sample_every"),
        force=bool(ex["force"]),
        law_a=_law(ex["law_a"], "experiment.law_a"), law_b=_law(ex["law_b"], "experiment.law_b"),
        law=_law(ex["law"], "experiment.law"),
        w2_subsample=_as_int(ex["w2_subsample"], "experiment.w2_subsample"),
        w2_times=tuple(_as_float(v, "experiment.w2_times") for v in ex["w2_times"]),
        n_sweep=tuple(_as_int(v, "experiment.n_sweep") for v in ex["n_sweep"]),
        reference=str(ex["reference"]),
        reference_size=_as_int(ex["reference_size"], "experiment.reference_size"),
    )
    if "a3_tilde" in ex:
        kw["a3_tilde"] = _as_float(ex["a3_tilde"], "experiment.a3_tilde")
    if "fit_window" in ex:
        kw["fit_window"] = tuple(_as_float(v, "experiment.fit_window") for v in ex["fit_window"])
    if "sample_times" in ex:
        kw["sample_times"] = tuple(_as_float(v, "experiment.sample_times") for v in ex["sample_times"])
    try:
        cfg = ExperimentConfig(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg, {"dir": str(out["dir"]), "svg": bool(out["svg"])}


def read_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def load_config(path, require_model: bool = True, kind: str | None = None):
    try:
        return parse_config(read_toml(path), require_model, kind)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(type(v))


def defaults_toml(kind: str | None = None) -> str:
    """The default configuration (for ``kind``) as a TOML document."""
    lines = []
    for sec, body in defaults_for(kind).items():
        lines.append(f"[{sec}]")
        tables = []
        for k, v in body.items():
            if isinstance(v, dict):
                tables.append((k, v))
            else:
                lines.append(f"{k} = {_toml_value(v)}")
        for name in sorted(OPTIONAL.get(sec, ())):
            lines.append(f"# {name} = (unset)")
        for k, v in tables:
            lines.append("")
            lines.append(f"[{sec}.{k}]")
            for kk, vv in v.items():
                lines.append(f"{kk} = {_toml_value(vv)}")
        lines.append("")
    return "\n".join(lines)


# -- point clouds -------------------------------------------------------------------

def cloud_header(dim: int):
    return [f"{s}{k + 1}" for s in "qpz" for k in range(dim)]


def write_cloud(path, points):
    """One particle per row, columns ``q1..qd, p1..pd, z1..zd``."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] % 3:
        raise ValueError("points must have shape (N, 3d)")
    lines = [",".join(cloud_header(pts.shape[1] // 3))]
    lines.extend(",".join(repr(float(v)) for v in row) for row in pts)
    _write_text(path, "\n".join(lines) + "\n")


def read_cloud(path):
    """Parse a cloud file into an :class:`~gvlasov.transport.EmpiricalMeasure`."""
    from gvlasov.transport import EmpiricalMeasure

    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CloudFormatError(f"{path}: empty file, header expected")
    header = [h.strip() for h in rows[0]]
    if len(header) % 3 or header != cloud_header(len(header) // 3):
        raise CloudFormatError(f"{path}:1: header must be q1..qd,p1..pd,z1..zd, got {','.join(header)}")
    width = len(header)
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise CloudFormatError(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
        try:
            vals = [float(v) for v in row]
        except ValueError:
            bad = next(v for v in row if not _is_float(v))
            raise CloudFormatError(f"{path}:{lineno}: non-numeric field {bad!r}") from None
        if not all(math.isfinite(v) for v in vals):
            raise CloudFormatError(f"{path}:{lineno}: non-finite value")
        data.append(vals)
    if not data:
        raise CloudFormatError(f"{path}: at least one particle required")
    return EmpiricalMeasure(np.array(data, dtype=np.float64))


def _is_float(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


# -- series, reports, manifests ---------------------------------------------------------

def series_csv_text(series: dict) -> str:
    lines = ["series,x,y"]
    for name, s in series.items():
        lines.extend(f"{name},{float(x)!r},{float(y)!r}" for x, y in zip(s["x"], s["y"]))
    return "\n".join(lines) + "\n"


def write_series_csv(report, path):
    series = report.series if hasattr(report, "series") else report["series"]
    _write_text(path, series_csv_text(series))


def rows_csv_text(rows) -> str:
    """``(time, name, value)`` rows as CSV."""
    lines = ["time,name,value"]
    lines.extend(f"{float(t)!r},{name},{float(v)!r}" for t, name, v in rows)
    return "\n".join(lines) + "\n"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def report_json_text(report) -> str:
    doc = report.to_dict() if hasattr(report, "to_dict") else report
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"


def write_report(report, path):
    _write_text(path, report_json_text(report))


def read_report(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format_version {doc.get('format_version')!r}")
    return doc


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(path, config: dict, seed: int, started: str, finished: str, files):
    from gvlasov import __version__

    doc = {
        "format_version": FORMAT_VERSION, "tool_version": __version__, "config": config,
        "master_seed": seed, "started": started, "finished": finished,
        "files": {os.path.basename(f): sha256_file(f) for f in sorted(files)},
    }
    _write_text(path, json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")
    return doc


def _write_text(path, text):
    d = os.path.dirname(os.fspath(path))
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


# -- SVG ------------------------------------------------------------------------------

def svg_plot(curves: dict, title: str = "", logx: bool = False, logy: bool = False,
             width: int = 640, height: int = 400) -> str:
    """Line plot of ``{name: (xs, ys)}``; points non-positive on a log axis are dropped."""
    pad_l, pad_r, pad_t, pad_b = 70, 20, 30, 45
    tx = (lambda v: math.log10(v)) if logx else (lambda v: v)
    ty = (lambda v: math.log10(v)) if logy else (lambda v: v)
    pts = {}
    for name, (xs, ys) in curves.items():
        pts[name] = [(tx(x), ty(y)) for x, y in zip(xs, ys)
                     if math.isfinite(x) and math.isfinite(y) and (x > 0 or not logx) and (y > 0 or not logy)]
    allp = [p for v in pts.values() for p in v]
    if not allp:
        allp = [(0.0, 0.0), (1.0, 1.0)]
    x0, x1 = min(p[0] for p in allp), max(p[0] for p in allp)
    y0, y1 = min(p[1] for p in allp), max(p[1] for p in allp)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    w, h = width - pad_l - pad_r, height - pad_t - pad_b

    def sx(v):
        return pad_l + (v - x0) / (x1 - x0) * w

    def sy(v):
        return pad_t + h - (v - y0) / (y1 - y0) * h

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="14">{_esc(title)}</text>',
           f'<rect x="{pad_l}" y="{pad_t}" width="{w}" height="{h}" fill="none" stroke="black"/>']
    for k in range(5):
        fx = x0 + (x1 - x0) * k / 4
        fy = y0 + (y1 - y0) * k / 4
        lx = f"1e{fx:.2f}" if logx else f"{fx:.4g}"
        ly = f"1e{fy:.2f}" if logy else f"{fy:.4g}"
        out.append(f'<text x="{sx(fx):.1f}" y="{pad_t + h + 16}" text-anchor="middle" font-size="11">{lx}</text>')
        out.append(f'<text x="{pad_l - 6}" y="{sy(fy) + 4:.1f}" text-anchor="end" font-size="11">{ly}</text>')
    for i, (name, pp) in enumerate(pts.items()):
        if not pp:
            continue
        color = colors[i % len(colors)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pp)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        out.append(f'<text x="{pad_l + 8}" y="{pad_t + 16 + 14 * i}" font-size="11" fill="{color}">{_esc(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s):
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


PLOTS = {
    "contraction": (("mean_form", "mean_form_min", "mean_form_max"), False, True),
    "stationarity": (("cov_qq", "cov_pp", "cov_zz"), False, False),
    "moments": (("second_moment", "mean_form"), False, False),
    "chaos": (("e",), True, True),
}


def report_svg(report) -> str:
    doc = report.to_dict() if hasattr(report, "to_dict") else report
    names, logx, logy = PLOTS[doc["kind"]]
    curves = {n: (doc["series"][n]["x"], doc["series"][n]["y"]) for n in names if n in doc["series"]}
    return svg_plot(curves, title=doc["kind"], logx=logx, logy=logy)
