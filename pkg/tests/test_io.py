import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from gvlasov.experiments import ExperimentConfig, run_contraction
from gvlasov.io import (CloudFormatError, ConfigError, defaults_for, defaults_toml, load_config, parse_config,
                        read_cloud, read_report, report_json_text, report_svg, rows_csv_text, series_csv_text,
                        sha256_file, svg_plot, write_cloud, write_manifest, write_report, write_series_csv)
from gvlasov.model import ForceSpec

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib


def test_cloud_roundtrip_zero_ulp(tmp_path):
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(1000, 6)) * np.exp(rng.uniform(-30, 30, size=(1000, 6)))
    path = tmp_path / "c.csv"
    write_cloud(path, pts)
    back = read_cloud(path).points
    assert back.dtype == np.float64 and np.array_equal(back.view(np.uint64), pts.view(np.uint64))


@settings(max_examples=30)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.sampled_from([3, 6])),
              elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_cloud_roundtrip_property(tmp_path_factory, pts):
    path = tmp_path_factory.mktemp("c") / "c.csv"
    write_cloud(path, pts)
    np.testing.assert_array_equal(read_cloud(path).points, pts + 0.0)


def test_cloud_format_errors(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("q1,p1,z1\n")
    with pytest.raises(CloudFormatError, match="at least one particle required"):
        read_cloud(p)
    p.write_text("")
    with pytest.raises(CloudFormatError, match="header"):
        read_cloud(p)
    p.write_text("q1,z1,p1\n0,0,0\n")
    with pytest.raises(CloudFormatError, match=":1:"):
        read_cloud(p)
    p.write_text("q1,p1,z1\n0,0,0\n1,2\n")
    with pytest.raises(CloudFormatError, match=":3: expected 3 columns"):
        read_cloud(p)
    p.write_text("q1,p1,z1\n0,0,0\n0,abc,0\n")
    with pytest.raises(CloudFormatError, match=":3: non-numeric field 'abc'"):
        read_cloud(p)
    p.write_text("q1,p1,z1\nnan,0,0\n")
    with pytest.raises(CloudFormatError, match=":2: non-finite"):
        read_cloud(p)
    with pytest.raises(ValueError):
        write_cloud(p, np.zeros((2, 4)))


def test_singleton_cloud(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("q1,p1,z1\n0,0,0\n")
    assert read_cloud(p).points.tolist() == [[0.0, 0.0, 0.0]]


def test_defaults_parse_and_match():
    for kind in (None, "contraction", "stationarity", "moments", "chaos"):
        text = defaults_toml(kind)
        cfg, out = parse_config(tomllib.loads(text), kind=kind)
        d = defaults_for(kind)
        assert cfg.n == d["experiment"]["n"] and cfg.scheme == d["integrator"]["scheme"]
        assert out == {"dir": "out", "svg": True}
    assert defaults_for("stationarity")["integrator"]["scheme"] == "ou_splitting"


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError, match=r"missing section \[model\]"):
        parse_config({"integrator": {"dt": 0.01}})
    parse_config({}, require_model=False)
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config({"model": {"gamma": 1.0}})
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config({"model": {}, "solver": {}})
    with pytest.raises(ConfigError, match="model.alpha"):
        parse_config({"model": {"alpha": "one"}})
    with pytest.raises(ConfigError, match="model.alpha"):
        parse_config({"model": {"alpha": True}})
    with pytest.raises(ConfigError):
        parse_config({"model": {"alpha": -1.0}})
    with pytest.raises(ConfigError):
        parse_config({"model": {"force_b": {"kind": "cubic", "c": 1.0}}})
    with pytest.raises(ConfigError):
        parse_config({"model": {}, "integrator": {"scheme": "rk4"}})
    with pytest.raises(ConfigError):
        parse_config({"model": {}, "experiment": {"law": {"center": [0, 0]}}})
    bad = tmp_path / "bad.toml"
    bad.write_text("[model\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.toml")


def test_config_values_flow_through(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('[model]\nalpha = 2\nlambda = 0.5\ndim = 2\n[model.force_b]\nkind = "sine"\nc = 0.1\n'
                 '[experiment]\nn = 10\nfit_window = [1, 3]\nsample_times = [0, 1, 2]\n'
                 '[integrator]\nt_end = 2.0\n[output]\ndir = "x"\nsvg = false\n')
    cfg, out = load_config(p)
    assert cfg.params.alpha == 2.0 and cfg.params.lam == 0.5 and cfg.params.dim == 2
    assert cfg.params.force_b == ForceSpec("sine", 0.1)
    assert cfg.n == 10 and cfg.fit_window == (1.0, 3.0) and cfg.sample_times == (0.0, 1.0, 2.0)
    assert out == {"dir": "x", "svg": False}


def test_csv_texts_use_shortest_roundtrip():
    s = series_csv_text({"a": {"x": [0.1, 1.0], "y": [1 / 3, 2.0]}})
    assert s == "series,x,y\na,0.1,0.3333333333333333\na,1.0,2.0\n"
    assert rows_csv_text([(0.0, "m", 0.1)]) == "time,name,value\n0.0,m,0.1\n"


@pytest.fixture(scope="module")
def small_report():
    return run_contraction(ExperimentConfig(n=32, t_end=2.0, sample_every=0.5, replicates=1, w2_subsample=8,
                                            w2_times=(0.0, 2.0), fit_window=(0.5, 2.0)))


def test_report_roundtrip_and_manifest(tmp_path, small_report):
    rp, cp = tmp_path / "r.json", tmp_path / "s.csv"
    write_report(small_report, rp)
    write_series_csv(small_report, cp)
    doc = read_report(rp)
    assert doc["verdicts"] == small_report.verdicts and doc["kind"] == "contraction"
    m = write_manifest(tmp_path / "m.json", doc["config"], 0, "t0", "t1", [rp, cp])
    assert m["files"] == {"r.json": sha256_file(rp), "s.csv": sha256_file(cp)}
    assert json.loads((tmp_path / "m.json").read_text())["files"] == m["files"]
    bad = tmp_path / "v.json"
    bad.write_text(json.dumps({"format_version": 99}))
    with pytest.raises(ValueError, match="format_version"):
        read_report(bad)


def test_svg_is_deterministic(small_report):
    a, b = report_svg(small_report), report_svg(json.loads(report_json_text(small_report)))
    assert a == b and a.startswith("<svg") and "polyline" in a
    s = svg_plot({"<x>": ([1, 10, 100], [0, 1, 2])}, title="a&b", logx=True, logy=True)
    assert "&lt;x&gt;" in s and "a&amp;b" in s
    assert svg_plot({}) .count("polyline") == 0
