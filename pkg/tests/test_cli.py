import dataclasses
import json
import subprocess
import sys

import pytest

import hypdecay.cli as cli
from hypdecay.cli import ConfigError, load_config, parse_config, parse_pq, run


def _cfg(tmp_path, **extra):
    cfg = {"schema_version": 1, "generator": {"name": "wave", "n": 1, "params": {"c": 1, "delta": 1, "mu": 0}},
           "grid": {"extent": 5.0, "points_per_axis": 1025}}
    cfg.update(extra)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def _report(out):
    return json.loads((out / "report.json").read_text())


def test_parse_pq():
    assert parse_pq("1,inf") == (1.0, float("inf"))
    assert parse_pq([2, 2]) == (2.0, 2.0)
    for bad in ("3,1.5", "1", "a,b", "1.5,2.5"):
        with pytest.raises(ConfigError):
            parse_pq(bad)


@pytest.mark.parametrize(
    "cfg",
    [
        {"generator": {"name": "heat"}},
        {},
        {"generator": {"name": "wave"}, "operator": {}},
        {"schema_version": 9, "generator": {"name": "wave"}},
        {"generator": {"name": "wave"}, "data": {"kind": "cube"}},
        {"generator": {"name": "wave"}, "derivatives": [{"r": 0, "alpha": [1, 1]}]},
        {"generator": {"name": "wave"}, "time": {"samples": 4}},
        {"generator": {"name": "wave"}, "time": {"window": [5, 1]}},
        {"generator": {"name": "wave"}, "data": {"kind": "gaussian", "slot": 3}},
        {"generator": {"name": "wave", "params": {"c": -1}}},
    ],
)
def test_parse_config_rejects(cfg):
    with pytest.raises((ConfigError, ValueError)):
        parse_config(cfg)


def test_load_config_malformed(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_exit_code_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["analyze", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    gen = tmp_path / "gen.json"
    gen.write_text(json.dumps({"generator": {"name": "heat"}}))
    assert run(["analyze", "--config", str(gen), "--out", str(tmp_path / "o")]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_exit_code_numeric(tmp_path):
    assert run(["grad", "--n", "4", "--N", "40", "--out", str(tmp_path)]) == 3


def test_exit_code_inconclusive(tmp_path, monkeypatch):
    # a stable verdict whose zero set runs into the grid edge is undecided
    real = cli.classify_symbol

    def edge_touching(*args, **kwargs):
        cls = real(*args, **kwargs)
        return dataclasses.replace(cls, verdict=dataclasses.replace(cls.verdict, inconclusive=True))

    monkeypatch.setattr(cli, "classify_symbol", edge_touching)
    assert run(["analyze", "--config", str(_cfg(tmp_path)), "--out", str(tmp_path / "o")]) == 4


def test_unstable_exits_zero(tmp_path, capsys):
    path = _cfg(tmp_path, generator={"name": "wave", "n": 1, "params": {"c": 1, "delta": -0.5, "mu": 0}})
    assert run(["verify", "--config", str(path), "--out", str(tmp_path / "o")]) == 0
    assert "unstable" in capsys.readouterr().out
    rep = _report(tmp_path / "o")
    assert rep["classification"]["prediction"]["status"] == "no_decay"
    assert {r["status"] for r in rep["verification"]["rows"]} == {"skipped"}


def test_analyze_outputs(tmp_path):
    out = tmp_path / "o"
    assert run(["analyze", "--config", str(_cfg(tmp_path)), "--out", str(out)]) == 0
    rep = _report(out)
    assert set(rep["outputs"]) == {"roots.csv", "chart_roots.svg"}
    assert rep["wave_case"] == {"from_parameters": "dissipative", "from_geometry": "dissipative"}
    at = {(r["p"], r["q"]): r["exponent"] for r in rep["classification"]["prediction"]["at"]}
    assert at[(1.0, "inf")] == pytest.approx(-0.5) and at[(2.0, 2.0)] == pytest.approx(0.0)
    assert "timestamp" not in json.dumps(rep["provenance"])
    assert (out / "chart_roots.svg").read_text().lstrip().startswith("<?xml")


def test_verify_dissipative_passes_and_is_deterministic(tmp_path):
    path = _cfg(tmp_path, data={"kind": "gaussian", "slot": 1},
                derivatives=[{"r": 0}, {"r": 0, "alpha": [1]}], pq=["1,inf", "2,2", [1.5, 3]])
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert run(["verify", "--config", str(path), "--out", str(out)]) == 0
    rep = _report(outs[0])
    rows = rep["verification"]["rows"]
    assert len(rows) == 6 and all(r["status"] == "pass" for r in rows)
    assert rep["verification"]["all_pass"]
    for name in rep["outputs"] + ["report.json"]:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_verify_kg_not_applicable(tmp_path):
    path = _cfg(tmp_path, generator={"name": "wave", "n": 1, "params": {"c": 1, "delta": 0, "mu": 1}})
    assert run(["verify", "--config", str(path), "--out", str(tmp_path / "o")]) == 0
    rows = _report(tmp_path / "o")["verification"]["rows"]
    assert {r["status"] for r in rows} == {"not_applicable"}
    assert all("on-axis" in r["reason"] for r in rows)


def test_verify_conditional_requires_outer_data(tmp_path):
    gen = {"name": "wave", "n": 1, "params": {"c": 1, "delta": 1, "mu": -1}}
    path = _cfg(tmp_path, generator=gen, grid={"extent": 10.0, "points_per_axis": 2049})
    assert run(["verify", "--config", str(path), "--out", str(tmp_path / "o")]) == 0
    assert {r["status"] for r in _report(tmp_path / "o")["verification"]["rows"]} == {"skipped"}
    path = _cfg(tmp_path, generator=gen, grid={"extent": 10.0, "points_per_axis": 2049},
                data={"kind": "annulus", "r_inner": 1.5, "r_outer": 3.0, "slot": 1}, pq=["1,inf"])
    assert run(["verify", "--config", str(path), "--out", str(tmp_path / "p")]) == 0
    row = _report(tmp_path / "p")["verification"]["rows"][0]
    assert row["status"] == "pass"


def test_cli_overrides(tmp_path, monkeypatch):
    path = _cfg(tmp_path)
    monkeypatch.setenv("HYPDECAY_OUT", str(tmp_path / "env"))
    monkeypatch.setenv("HYPDECAY_THREADS", "1")
    assert run(["analyze", "--config", str(path), "--pq", "2,2", "--tol", "0.05"]) == 0
    rep = _report(tmp_path / "env")
    assert [r["p"] for r in rep["classification"]["prediction"]["at"]] == [2.0]
    assert rep["provenance"]["threads"] == 1
    assert run(["analyze", "--config", str(path), "--pq", "3,1"]) == 2


def test_grad_roundtrip_through_analyze(tmp_path):
    out = tmp_path / "g"
    assert run(["grad", "--n", "1", "--N", "2", "--out", str(out)]) == 0
    rep = _report(out)
    assert rep["grad"]["M"] == 3 and rep["origin_order"]["min_alpha"] == 2
    dump = json.loads((out / "grad_matrices.json").read_text())
    assert dump["B_diagonal"] == [0.0, 1.0, 2.0]
    cfg = tmp_path / "from_grad.json"
    cfg.write_text(json.dumps({"operator_file": str(out / "symbol.json"),
                               "grid": {"extent": 5.0, "points_per_axis": 1025}}))
    assert run(["analyze", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    cls = _report(tmp_path / "a")["classification"]
    assert cls["stability"]["verdict"] == "strongly_stable"
    assert cls["prediction"]["at"][0]["exponent"] == pytest.approx(-0.5)


def test_wave_subcommand(tmp_path, capsys):
    assert run(["wave", "--n", "1", "--mu", "1", "--out", str(tmp_path)]) == 0
    assert "klein_gordon" in capsys.readouterr().out
    assert (tmp_path / "symbol.json").exists()


def test_solve_snapshots(tmp_path):
    path = _cfg(tmp_path, solve={"points": 256, "times": [0, 1, 5]}, data={"kind": "gaussian", "slot": 1})
    assert run(["solve", "--config", str(path), "--out", str(tmp_path / "s")]) == 0
    rep = _report(tmp_path / "s")
    assert "snapshot.csv" in rep["outputs"] and "chart_snapshot.svg" in rep["outputs"]
    header = (tmp_path / "s" / "snapshot.csv").read_text().splitlines()[0]
    assert header == "t,x_1,re_u,im_u"


def test_entry_point_subprocess(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hypdecay.cli", "wave", "--delta", "1", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "dissipative" in proc.stdout
