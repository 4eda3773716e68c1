"""One test per acceptance criterion; each prints a single PASS/FAIL line."""

import csv
import filecmp
import json
import math
import shutil
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from thermoformal import cli
from thermoformal import decomposition as dec
from thermoformal import equilibrium as eq
from thermoformal import thermo as th
from thermoformal.config import preset_path

LOG2 = math.log(2)


def verdict(k: int, ok: bool, detail: str) -> None:
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def run_cli(tmp_path, cmd, preset, *extra):
    out = tmp_path / f"{preset}_{cmd}"
    code = cli.run([cmd, "--config", str(preset_path(preset)), "--out", str(out), "--threads", "1", *extra])
    return code, json.loads((out / "report.json").read_text()), out


def check(rep, name):
    return next(c for c in rep["checks"] if c["name"] == name)


def test_criterion_01_entropy_identity(lin, lin_cfg):
    t = time.time()
    est = th.estimate_pressure(lin, th.Potential.zero(), "ALL", eps_schedule=(0.1, 0.05, 0.025),
                               n_schedule=range(1, 23), candidates=lin_cfg.budgets.candidates, threads=1)
    dt = time.time() - t
    err = abs(est.extrapolated - LOG2)
    verdict(1, err <= 0.05 and dt <= 60, f"P(ALL,0)={est.extrapolated:.5f} |err|={err:.4f} time={dt:.1f}s")


def test_criterion_02_spectral_exactness(doubling):
    op = eq.build_transfer_operator(doubling, None, 1024)
    c = 0.37
    sh = eq.build_transfer_operator(doubling, th.Potential.constant_value(c), 1024)
    e1 = abs(op.eigenvalue - 2.0)
    e2 = abs(sh.eigenvalue - 2.0 * math.exp(c))
    verdict(2, e1 <= 1e-10 and e2 <= 1e-10, f"|lambda-2|={e1:.2e} |shifted-2e^c|={e2:.2e}")


def test_criterion_03_pressure_curve(lin, pf, pf_cfg):
    pc = eq.pressure_curve(lin, 0.0, 1.25, 6, N_cells=1024, alpha=0.6)
    err = float(np.max(np.abs(pc.values - (1 - pc.t_grid) * LOG2)))
    lin_ok = err <= 1e-6 and pc.root is not None and abs(pc.root - 1) <= 1e-6
    pq = eq.pressure_curve(pf, 0.0, 1.25, 6, N_cells=pf_cfg.cells(), alpha=pf_cfg.params.alpha)
    pf_ok = pq.root is not None and 0.9 <= pq.root <= 1.1 and pq.convex and pq.decreasing
    verdict(3, lin_ok and pf_ok,
            f"linear max err={err:.1e} root={pc.root:.9f}; pitchfork root={pq.root:.6f} "
            f"convex={pq.convex} decreasing={pq.decreasing}")


def test_criterion_04_decomposition_calculus():
    t = time.time()
    bad_dec = bad_cat = words = premises = 0
    for n in range(1, 13):
        W = dec.all_words(n)
        for a in (0.5, 0.6, 0.75):
            c, bad = dec.check_decomposition_words(W, a)
            words, bad_dec = words + c, bad_dec + len(bad)
            c, bad = dec.check_concatenation_words(W, a)
            premises, bad_cat = premises + c, bad_cat + len(bad)
    dt = time.time() - t
    verdict(4, bad_dec == 0 and bad_cat == 0 and dt <= 30,
            f"{words} words: decomposition failures={bad_dec}; {premises} concatenation premises: "
            f"counterexamples={bad_cat}; time={dt:.1f}s")


@pytest.mark.parametrize("preset", ["linear", "pitchfork"])
def test_criterion_05_specification(tmp_path, preset):
    code, rep, out = run_cli(tmp_path, "spec", preset)
    rows = list(csv.DictReader((out / "glue.csv").open()))
    over = sum(1 for r in rows if int(r["max_transition"]) > float(r["tau_bound"]))
    fails = check(rep, "glue_failures")["value"]
    worst = check(rep, "glue_max_shadow_error")["value"]
    ok = code == 0 and len(rows) == 100 and fails == 0 and over == 0 and worst <= 0.05
    verdict(5, ok, f"{preset}: pairs={len(rows)} failures={fails:g} tau over bound={over} "
                   f"max shadow error={worst:.4f}")


@pytest.mark.parametrize("which", ["linear", "pitchfork"])
def test_criterion_06_contraction_bound(which, lin_preset, pf, lin_cfg, pf_cfg):
    f, cfg = (lin_preset, lin_cfg) if which == "linear" else (pf, pf_cfg)
    prm = dec.DecompositionParams.from_skew(f, cfg.params.alpha)
    rep = dec.contraction_bound_check(f, prm, eta=0.01, num_samples=1000, n_max=20)
    viol = [c for c in rep.checks if not c.passed and not c.informational]
    verdict(6, rep.passed, f"{which}: violations={len(viol)} C={rep.extras.get('C')}")


@pytest.mark.parametrize("which", ["linear", "pitchfork"])
def test_criterion_07_bowen_property(which, lin_preset, pf, lin_cfg, pf_cfg):
    f, cfg = (lin_preset, lin_cfg) if which == "linear" else (pf, pf_cfg)
    prm = dec.DecompositionParams.from_skew(f, cfg.params.alpha)
    phi = th.Potential.holder_test(f.m, 1.0)
    rep = th.bowen_variation(f, phi, prm, eta=0.01, n_values=(5, 10, 20, 30))
    per = rep.extras["per_n"]
    verdict(7, rep.passed, f"{which}: V={rep.extras['V']:.4g} per n={ {k: round(v, 5) for k, v in per.items()} }")


def test_criterion_08_cylinder_counts():
    bad = []
    for n in range(1, 15):
        for a in (0.6, 0.75, 0.9):
            c = th.cylinder_count((2, 1), n, a)
            if not c.ok:
                bad.append((n, a, c.count_R_n, c.bound))
    verdict(8, not bad, f"violations={len(bad)} over n<=14, alpha in (0.6, 0.75, 0.9)")


def test_criterion_09_s_pressure(tmp_path, pf, pf_cfg):
    code, rep, _ = run_cli(tmp_path, "entropy", "pitchfork", "--collection", "S")
    c = check(rep, "s_entropy_bound")
    bound = th.entropy_bound(pf.profile, pf_cfg.params.alpha) + 0.05
    ok = code == 0 and c["pass"] and c["value"] <= bound + 1e-12
    verdict(9, ok, f"h(S)={c['value']:.4f} <= {bound:.4f}")


@pytest.mark.parametrize("preset", ["linear", "pitchfork"])
def test_criterion_10_srb(tmp_path, preset):
    code, rep, _ = run_cli(tmp_path, "srb", preset)
    srb = [c for c in rep["checks"] if c["name"].startswith("srb_")]
    worst = max(abs(c["value"]) for c in srb)
    pes = check(rep, "pesin_residual")
    tol = 0.01 if preset == "linear" else 0.05
    ok = code == 0 and len(srb) == 5 and all(c["pass"] for c in srb) and worst <= tol
    if preset == "linear":
        ok = ok and pes["value"] <= 1e-4
    else:
        ok = ok and check(rep, "pesin_residual_monotone")["pass"]
    verdict(10, ok, f"{preset}: max discrepancy={worst:.2e} (tol {tol}) pesin residual={pes['value']:.2e}")


def test_criterion_11_lyapunov(lin, lin_preset, pf):
    ly = eq.lyapunov_exponents(lin, orbit_length=10_000)
    ex = sorted(ly["exponents"])
    e_lin = max(abs(ex[-1] - LOG2), abs(ex[0] + math.log(4)))
    fib = 0.0
    for f in (lin_preset, pf):
        fe = eq.lyapunov_exponents(f, orbit_length=10_000)["fiber_exponents"]
        fib = max(fib, max(abs(e - math.log(f.lambda_s)) for e in fe))
    verdict(11, e_lin <= 1e-10 and fib <= 1e-10, f"linear err={e_lin:.1e} fiber err={fib:.1e}")


COMMANDS = ["verify", "classify", "pressure", "entropy", "spec", "curve", "srb"]


@pytest.mark.parametrize("preset", ["linear", "pitchfork"])
def test_criterion_12_determinism(tmp_path, preset):
    diffs = []
    for cmd in COMMANDS:
        # same --out both times: the output directory is part of the echoed config
        _, _, out = run_cli(tmp_path, cmd, preset)
        first = out.with_name(out.name + "_first")
        shutil.move(out, first)
        run_cli(tmp_path, cmd, preset)
        names = sorted(p.name for p in first.iterdir())
        if names != sorted(p.name for p in out.iterdir()):
            diffs.append(f"{cmd}: file lists differ")
            continue
        _, mism, err = filecmp.cmpfiles(first, out, names, shallow=False)
        diffs += [f"{cmd}/{n}" for n in mism + err]
    verdict(12, not diffs, f"{preset}: {len(COMMANDS)} commands run twice, differing artifacts={diffs or 0}")
