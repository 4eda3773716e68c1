"""Command line entry point: ``thermoformal <command> --config FILE``.

Every command writes ``report.json``, the resolved ``config.ini`` and its CSV
artifacts into the output directory.  Exit status: 0 when every decisive check
passes, 1 when one fails or an estimator breaks down, 2 on usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import decomposition as dec
from . import equilibrium as eq
from . import thermo as th
from .base_dynamics import ConfigError, RootFindingError, verify_base_hypotheses
from .config import ConfigParseError, ExperimentConfig, load_config, parse_t_range
from .reports import SCHEMA_VERSION, HypothesisReport, jsonable
from .solenoid import SkewProduct, SolenoidPoint, verify_skew_hypotheses

COMMANDS = ("verify", "classify", "pressure", "entropy", "spec", "curve", "srb")


class RunFailure(RuntimeError):
    """An estimator could not produce a usable answer; partial artifacts are kept."""


# ---------------------------------------------------------------------------
# shared pieces
# ---------------------------------------------------------------------------


def _potential(cfg: ExperimentConfig, f: SkewProduct, with_extrema: bool = True) -> th.Potential:
    p = cfg.potential
    name = p.name.lower()
    if name in ("geo", "geometric"):
        return eq.geometric_extrema(f, t=p.t) if with_extrema else th.Potential.geometric(f, p.t)
    phi = th.potential_from_name(name, f, p.amplitude, p.fiber_coef, p.exponent)
    if with_extrema:
        phi = th.estimate_extrema(f, phi, samples=cfg.budgets.extrema_samples, seed=cfg.run.seed)
    return phi


def _coarser(per: tuple, kint: tuple):
    half = tuple(c // 2 for c in per)
    ok = all(h > 0 and h % k == 0 for h, k in zip(half, kint))
    if len(per) == 1:
        ok = half[0] > 0 and half[0] % int(np.prod(kint)) == 0
    return half if ok else None


def spectral_pressure(cfg: ExperimentConfig, f: SkewProduct, phi: th.Potential, threads=None):
    """log of the leading Ulam eigenvalue, with the change against a grid twice as coarse."""
    per = eq._per_axis(f.g, cfg.cells())

    def run(cells, gap):
        sk = eq.ulam_skeleton(f.g, cells, cfg.budgets.ulam_samples, threads)
        if phi.kind == "geometric":
            # t phi^geo: the scale rides on the extrema, the values on the base
            vals = cfg.potential.t * f.geometric_potential(sk.x_mid)
        else:
            vals = eq._base_values(f, phi, sk.x_mid)
        return eq.operator_from_values(sk, vals, gap=gap)

    op = run(per, True)
    coarse = _coarser(per, f.g.kint)
    unc = abs(op.pressure - run(coarse, False).pressure) if coarse else 0.0
    return op.pressure, unc, op


def _n_schedule(cfg: ExperimentConfig):
    return tuple(range(cfg.schedules.n_min, cfg.schedules.n_max + 1))


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return v


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_verify(cfg: ExperimentConfig, out: Path, threads=None) -> HypothesisReport:
    f = cfg.build_system()
    alpha = cfg.params.alpha
    rep = HypothesisReport()
    rep.extend(verify_base_hypotheses(f.g, f.profile))
    rep.extend(verify_skew_hypotheses(f, seed=cfg.run.seed, pairs=cfg.budgets.pairs, threads=threads))
    bound = dec.eq1_bound(f.profile.L_global, f.profile.lambda_u) if not f.profile.empty else 1.0
    rep.add("eq1_alpha_bound", alpha, bound, bound - alpha, alpha < bound,
            "alpha must stay below the bound for theta < 1")
    if alpha >= bound:
        # theta_alpha >= 1: the remaining checks have no meaning
        return rep
    params = dec.DecompositionParams.from_skew(f, alpha)
    phi = _potential(cfg, f)
    P, unc, op = spectral_pressure(cfg, f, phi, threads)
    est = th.PressureEstimate("ALL", f"spectral:{phi.label}", (), (), np.zeros((0, 0)), np.zeros((0, 0), int),
                           np.zeros((0, 0), bool), np.zeros(0), P, unc, ["spectral"])
    rep.extend(th.uniqueness_certificate(f, phi, params, est))
    gap = op.spectral_gap
    rep.add("spectral_gap_positive", gap, 0.0, gap, gap > 0,
            "uniqueness proxy: 1 - |lambda_2| / lambda_max of the discretized operator")
    for chk in th.variation_gap(f, phi, params).checks:
        chk.informational = True
        chk.note = "sufficient condition; psi_below_pressure is checked directly"
        rep.checks.append(chk)
    geo = phi if phi.kind == "geometric" and cfg.potential.t == 1.0 else eq.geometric_extrema(f)
    srb = eq.srb_hypothesis_check(f, params, geo)
    for chk in srb.checks:
        chk.informational = True
    rep.extend(srb)
    for chk in rep.checks:
        if chk.name.startswith("H5"):
            chk.informational = True
    rep.extras.update({"profile": f.profile.to_json(), "theta": params.theta,
                       "potential": phi.label, "spectral": op.to_json()})
    return rep


def cmd_classify(cfg: ExperimentConfig, out: Path, threads=None) -> HypothesisReport:
    f = cfg.build_system()
    alpha = cfg.params.alpha
    count, n = cfg.budgets.classify_segments, cfg.budgets.classify_length
    rows = []
    bad = 0
    W = np.zeros((0, n), np.int8)
    if count > 0:
        S = f.attractor_sample(60, count, cfg.run.seed, keep_past=False, threads=threads)
        W = dec.itinerary_of(f, S.base, n)
        for i, bits in enumerate(W):
            c = dec.classify_segment(bits, alpha)
            s, pre, suf = dec.decompose(bits, alpha)
            if not dec.in_good(pre, alpha) or (suf.size and not dec.classify_segment(suf, alpha)["in_S"]):
                bad += 1
            start = [*S.base[i], *np.column_stack([S.fiber[i].real, S.fiber[i].imag]).ravel()]
            rows.append((i, *start, n, "".join(str(int(b)) for b in bits), float(bits.mean()),
                         c["in_G"], c["in_S"], s))
    m = f.m
    coords = [f"base_{i}" for i in range(m)] + [f"{p}_fiber_{i}" for i in range(m) for p in ("re", "im")]
    _write_csv(out / "segments.csv", ["index", *coords, "n", "itinerary", "beta", "in_G", "in_S", "s"], rows)
    rep = HypothesisReport()
    if rows:
        rep.extend(dec.check_concatenation(None, alpha, words=W))
        rep.add("decomposition_invalid", bad, 0, -bad, bad == 0, "prefix in G and suffix in S")
    rep.extras.update({"segments": len(rows), "in_G": int(sum(r[-3] for r in rows)),
                       "in_S": int(sum(r[-2] for r in rows))})
    return rep


def _pressure_run(cfg: ExperimentConfig, f, phi, collection, threads):
    alpha = cfg.params.alpha
    return th.estimate_pressure(f, phi, collection, eps_schedule=cfg.schedules.eps,
                                n_schedule=_n_schedule(cfg), candidates=cfg.budgets.candidates,
                                saturation=cfg.budgets.saturation, seed=cfg.run.seed,
                                alpha=alpha, threads=threads)


def _reliability(rep: HypothesisReport, est) -> None:
    bad = "unreliable" in est.flags
    rep.add("estimator_reliable", 0.0 if bad else 1.0, 1.0, -1.0 if bad else 0.0, not bad,
            ",".join(est.flags))


def cmd_pressure(cfg: ExperimentConfig, out: Path, threads=None, collection=None) -> HypothesisReport:
    f = cfg.build_system()
    phi = _potential(cfg, f, with_extrema=False)
    col = (collection or cfg.schedules.collection).upper()
    est = _pressure_run(cfg, f, phi, col, threads)
    est.to_csv(out / "pressure.csv")
    rep = HypothesisReport()
    _reliability(rep, est)
    if col == "ALL":
        P, unc, _ = spectral_pressure(cfg, f, phi, threads)
        d = abs(est.extrapolated - P)
        rep.add("spectral_agreement", d, cfg.checks.entropy_tol, cfg.checks.entropy_tol - d,
                d <= cfg.checks.entropy_tol, f"spectral pressure {P:.6g}", informational=True)
    rep.extras["estimate"] = est.summary()
    return rep


def cmd_entropy(cfg: ExperimentConfig, out: Path, threads=None, collection=None) -> HypothesisReport:
    f = cfg.build_system()
    col = (collection or cfg.schedules.collection).upper()
    est = _pressure_run(cfg, f, th.Potential.zero(), col, threads)
    est.to_csv(out / "entropy.csv")
    rep = HypothesisReport()
    tol = cfg.checks.entropy_tol
    h = est.extrapolated
    logdeg = math.log(f.profile.deg)
    if col == "ALL":
        _reliability(rep, est)
        d = abs(h - logdeg)
        rep.add("entropy_log_deg", h, logdeg, tol - d, d <= tol, f"|h - log deg| <= {tol}")
    elif col == "S":
        bound = th.entropy_bound(f.profile, cfg.params.alpha)
        if h == -math.inf:
            rep.add("s_entropy_bound", h, bound, math.inf, True, "S collection empty")
        else:
            _reliability(rep, est)
            rep.add("s_entropy_bound", h, bound + tol, bound + tol - h, h <= bound + tol,
                    "log q + eps(alpha) + m log L plus tolerance")
    else:
        _reliability(rep, est)
        rep.add("g_entropy_at_most_log_deg", h, logdeg + tol, logdeg + tol - h, h <= logdeg + tol)
    rep.extras["estimate"] = est.summary()
    return rep


def cmd_spec(cfg: ExperimentConfig, out: Path, threads=None) -> HypothesisReport:
    f = cfg.build_system()
    alpha = cfg.params.alpha
    eps = cfg.schedules.glue_eps
    pairs = cfg.budgets.glue_pairs
    rows = []
    gl = None
    if pairs > 0:
        gl = dec.Gluer(f, eps, seed=cfg.run.seed)
        b, z, past, n = dec.sample_good_segments(f, alpha, 2 * pairs, cfg.budgets.glue_max_len,
                                                 cfg.run.seed)
        for i in range(pairs):
            segs = [dec.make_segment(f, SolenoidPoint(b[j], z[j], past[j]), int(n[j]))
                    for j in (2 * i, 2 * i + 1)]
            try:
                res = gl.glue(segs, alpha=alpha)
                v = dec.verify_glue(f, res, segs, eps)
                rows.append((i, int(n[2 * i]), int(n[2 * i + 1]), int(res.transitions.max()),
                             res.tau_bound, v["max_shadow_error"], v["pass"], ""))
            except dec.GlueError as e:
                rows.append((i, int(n[2 * i]), int(n[2 * i + 1]), -1, gl.tau_bound, math.nan,
                             False, str(e)))
    _write_csv(out / "glue.csv", ["pair", "n1", "n2", "max_transition", "tau_bound",
                                  "max_shadow_error", "pass", "note"], rows)
    rep = HypothesisReport()
    fails = sum(1 for r in rows if not r[6])
    rep.add("glue_failures", fails, 0, -fails, fails == 0, f"{len(rows)} pairs at eps={eps}")
    worst = max((r[5] for r in rows if not math.isnan(r[5])), default=0.0)
    rep.add("glue_max_shadow_error", worst, eps, eps - worst, worst <= eps)
    if gl is not None:
        rep.extras.update({"tau_bound": gl.tau_bound, "tau_base": gl.tau_base, "tau_s": gl.tau_s,
                           "holonomy_C": gl.C, "delta": gl.delta})
    return rep


def cmd_curve(cfg: ExperimentConfig, out: Path, threads=None, t_range=None) -> HypothesisReport:
    f = cfg.build_system()
    a, b, n = parse_t_range(t_range or cfg.schedules.t_range)
    pc = eq.pressure_curve(f, a, b, n, cfg.cells(), alpha=cfg.params.alpha,
                           samples=cfg.budgets.ulam_samples, threads=threads)
    pc.to_csv(out / "curve.csv")
    rep = HypothesisReport()
    root = pc.root
    rep.add("root_found", math.nan if root is None else root, 1.0,
            math.nan if root is None else -abs(root - 1.0), root is not None,
            "bisection root of t -> P(t phi^geo)")
    rep.add("convex", float(pc.convex), 1.0, 0.0 if pc.convex else -1.0, pc.convex,
            "second differences >= -1e-9")
    rep.add("strictly_decreasing", float(pc.decreasing), 1.0, 0.0 if pc.decreasing else -1.0,
            pc.decreasing)
    gapl = float(np.min(pc.values - pc.l1))
    rep.add("l1_below_curve", gapl, 0.0, gapl + 1e-9, pc.l1_below)
    rep.extras.update(pc.summary())
    return rep


def cmd_srb(cfg: ExperimentConfig, out: Path, threads=None) -> HypothesisReport:
    f = cfg.build_system()
    b = cfg.budgets
    trend = b.trend_cells or None
    rep = eq.srb_check(f, cfg.cells(), b.orbit_length, seed=cfg.run.seed, tol=cfg.checks.srb_tol,
                       pesin_tol=cfg.checks.pesin_tol, trend_cells=trend, lift_samples=b.lift_samples,
                       lyapunov_length=b.lyapunov_length, samples=b.ulam_samples, threads=threads)
    ly = rep.extras["lyapunov"]
    dev = max(abs(x - math.log(f.lambda_s)) for x in ly["fiber_exponents"])
    rep.add("fiber_exponent_log_lambda_s", dev, 1e-10, 1e-10 - dev, dev <= 1e-10)
    ta, ig = rep.extras["time_averages"], rep.extras["integrals"]
    _write_csv(out / "srb.csv", ["observable", "time_average", "integral", "discrepancy"],
               [(k, ta[k], ig[k], abs(ta[k] - ig[k])) for k in ta])
    _write_csv(out / "lyapunov.csv", ["index", "exponent"], list(enumerate(ly["exponents"])))
    return rep


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thermoformal",
                                description="Equilibrium-state experiments on solenoid attractors.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="INI experiment file")
    p.add_argument("--seed", type=int, default=None, help="override [run] seed")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (fallback: THERMOFORMAL_THREADS, then 1)")
    p.add_argument("--out", default=None, help="output directory (default: [run] output_dir)")
    p.add_argument("--collection", choices=("all", "G", "S", "g", "s"), default=None,
                   help="pressure/entropy: collection to estimate over")
    p.add_argument("--potential", choices=("zero", "holder", "geo"), default=None,
                   help="override [potential] name")
    p.add_argument("--t-range", default=None, help="curve: a:b:n grid of t values")
    return p


def run(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 2
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.out is not None:
            cfg = cfg.with_output(args.out)
        if args.potential is not None:
            import dataclasses
            cfg = dataclasses.replace(cfg, potential=dataclasses.replace(cfg.potential, name=args.potential))
        if args.t_range is not None:
            parse_t_range(args.t_range)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be positive")
    except (ConfigParseError, ConfigError, ValueError) as e:
        print(f"thermoformal: {e}", file=sys.stderr)
        return 2

    out = Path(cfg.run.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.to_ini())
    kw = {}
    if args.command in ("pressure", "entropy"):
        kw["collection"] = args.collection
    if args.command == "curve":
        kw["t_range"] = args.t_range
    fn = globals()[f"cmd_{args.command}"]
    error = None
    try:
        rep = fn(cfg, out, args.threads, **kw)
    except ConfigError as e:
        print(f"thermoformal: {e}", file=sys.stderr)
        return 2
    except (RunFailure, RootFindingError, dec.GlueError, eq.SpectralError, ArithmeticError) as e:
        rep = HypothesisReport()
        error = f"{type(e).__name__}: {e}"
        rep.add("run_completed", 0.0, 1.0, -1.0, False, error)
    doc = {"schema_version": SCHEMA_VERSION, "command": args.command, "seed": cfg.run.seed}
    doc.update(rep.to_dict())
    (out / "report.json").write_text(json.dumps(jsonable(doc), indent=2) + "\n")
    for c in rep.checks:
        tag = "PASS" if c.passed else ("info" if c.informational else "FAIL")
        print(f"{tag:4s} {c.name}: value={c.value:.6g} bound={c.bound:.6g} margin={c.margin:.6g}")
    if error:
        print(f"thermoformal: {error}", file=sys.stderr)
    return 0 if rep.passed else 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
