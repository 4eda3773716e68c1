import csv
import json
import math

import pytest

from thermoformal import cli
from thermoformal.config import ConfigParseError, parse_config, preset_path, load_preset


def _write(tmp_path, cfg, name="cfg.ini"):
    p = tmp_path / name
    p.write_text(cfg.to_ini())
    return p


def _run(tmp_path, cmd, config, *extra):
    out = tmp_path / f"out_{cmd}"
    code = cli.run([cmd, "--config", str(config), "--out", str(out), *extra])
    rep = json.loads((out / "report.json").read_text()) if (out / "report.json").exists() else None
    return code, rep, out


@pytest.mark.parametrize("name", ["linear", "pitchfork"])
def test_round_trip(name):
    cfg = load_preset(name)
    assert parse_config(cfg.to_ini()) == cfg


def test_unknown_key_has_location():
    with pytest.raises(ConfigParseError) as ei:
        parse_config("[system]\nm = 1\n\n[params]\n  alphaa = 0.5\n", "x.ini")
    assert ei.value.line == 5 and ei.value.col == 3
    assert str(ei.value).startswith("x.ini:5:3:")


def test_unknown_section_and_bad_value():
    with pytest.raises(ConfigParseError, match="unknown section"):
        parse_config("[nope]\na = 1\n")
    with pytest.raises(ConfigParseError) as ei:
        parse_config("[params]\nalpha = high\n")
    assert ei.value.line == 2


def test_out_of_range_rejected():
    with pytest.raises(ConfigParseError, match="alpha"):
        parse_config("[params]\nalpha = 1.5\n")


def test_config_error_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[system]\nbogus = 3\n")
    assert cli.run(["verify", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "bad.ini:2:1" in capsys.readouterr().err


def test_unknown_flag_exit_2(tmp_path):
    assert cli.run(["verify", "--config", str(preset_path("linear")), "--frobnicate"]) == 2
    assert cli.run(["nonsense", "--config", str(preset_path("linear"))]) == 2


def test_verify_linear_preset(tmp_path):
    code, rep, out = _run(tmp_path, "verify", preset_path("linear"))
    assert code == 0 and rep["pass"]
    assert (out / "config.ini").exists()


def test_verify_pitchfork_preset(tmp_path):
    code, rep, _ = _run(tmp_path, "verify", preset_path("pitchfork"))
    assert code == 0
    names = {c["name"] for c in rep["checks"]}
    assert {"eq1_alpha_bound", "psi_below_pressure", "eq2_srb_relation"} <= names
    assert any(n.startswith("H1") for n in names) and any(n.startswith("H5") for n in names)


def test_verify_alpha_above_bound(tmp_path, pf_cfg):
    import dataclasses
    cfg = dataclasses.replace(pf_cfg, params=dataclasses.replace(pf_cfg.params, alpha=0.95))
    code, rep, _ = _run(tmp_path, "verify", _write(tmp_path, cfg))
    assert code == 1
    c = next(c for c in rep["checks"] if c["name"] == "eq1_alpha_bound")
    assert c["margin"] < 0 and not c["pass"]


def test_classify_zero_segments(tmp_path, lin_cfg):
    import dataclasses
    cfg = dataclasses.replace(lin_cfg, budgets=dataclasses.replace(lin_cfg.budgets, classify_segments=0))
    code, _, out = _run(tmp_path, "classify", _write(tmp_path, cfg))
    assert code == 0
    lines = (out / "segments.csv").read_text().splitlines()
    assert len(lines) == 1 and lines[0].startswith("index,")


def test_curve_linear(tmp_path):
    code, _, out = _run(tmp_path, "curve", preset_path("linear"), "--t-range", "0:1.25:6")
    assert code == 0
    rows = list(csv.DictReader((out / "curve.csv").open()))
    assert len(rows) == 6
    for r in rows:
        assert float(r["P"]) == pytest.approx((1 - float(r["t"])) * math.log(2), abs=1e-6)


def test_entropy_linear(tmp_path):
    code, rep, out = _run(tmp_path, "entropy", preset_path("linear"))
    assert code == 0
    assert rep["extras"]["estimate"]["pressure"] == pytest.approx(math.log(2), abs=0.05)
    assert (out / "entropy.csv").exists()


def test_bad_t_range_exit_2(tmp_path):
    assert _run(tmp_path, "curve", preset_path("linear"), "--t-range", "1:0:3")[0] == 2
