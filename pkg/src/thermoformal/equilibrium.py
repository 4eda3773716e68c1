"""Equilibrium states through an Ulam discretization of the transfer operator.

The weighted operator L h(y) = sum_{g x = y} exp(phi(x)) h(x) is projected on
piecewise-constant functions over a grid of congruent cells.  Its leading
eigenvalue approximates exp P(phi), and the product of the left and right
eigenvectors gives the cell weights of the equilibrium state on the base.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize

from . import rng as _rng
from .base_dynamics import BaseMap, ConfigError, normalize
from .decomposition import DecompositionParams, eq1_bound
from .reports import HypothesisReport
from .solenoid import TWO_PI, SkewProduct, SolenoidPoint
from .thermo import Potential, entropy_bound, fiber_depth

REFILL_NOISE = 1e-13


class SpectralError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# geometric potential
# ---------------------------------------------------------------------------


def geometric_potential(f: SkewProduct, p: SolenoidPoint, norm: str = "adapted") -> float:
    """phi^geo(p) = -log |det Df| along E^cu(p)."""
    past = p.past
    if norm != "adapted" and past is None:
        past = f.decode_past(p.base, p.fiber)
    return float(f.geometric_potential(p.base, past, norm=norm))


def _grid(m: int, per_axis: int):
    u = (np.arange(per_axis) + 0.5) / per_axis
    return np.stack(np.meshgrid(*([u] * m), indexing="ij"), axis=-1).reshape(-1, m)


def geometric_extrema(f: SkewProduct, per_axis: int | None = None, t: float = 1.0) -> Potential:
    """t * phi^geo with its sup and inf over the torus and over Omega_rho.

    phi^geo depends on the base point only, so the extrema come from a grid
    refined by Nelder-Mead from the best grid points.
    """
    m = f.m
    per_axis = per_axis or {1: 8192, 2: 512}.get(m, 64)
    X = _grid(m, per_axis)
    v = f.geometric_potential(X)

    def polish(starts, sign, keep=None):
        best = -np.inf
        for x0 in starts:
            def obj(x):
                x = normalize(np.asarray(x)[None, :])
                if keep is not None and not keep(x)[0]:
                    return np.inf
                return -sign * float(f.geometric_potential(x)[0])
            res = minimize(obj, x0, method="Nelder-Mead",
                           options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 2000})
            if np.isfinite(res.fun):
                best = max(best, -res.fun)
        return sign * best

    def ext(vals, pts, keep=None):
        if vals.size == 0:
            return -np.inf, np.inf
        hi = pts[np.argsort(-vals, kind="stable")[:4]]
        lo = pts[np.argsort(vals, kind="stable")[:4]]
        return max(vals.max(), polish(hi, 1.0, keep)), min(vals.min(), polish(lo, -1.0, keep))

    sup, inf = ext(v, X)
    prof = f.profile
    sup_om, inf_om = -np.inf, np.inf
    if not prof.empty:
        mask = prof.in_omega_rho(X)
        sup_om, inf_om = ext(v[mask], X[mask], prof.in_omega_rho)
    phi = Potential.geometric(f, 1.0)
    from dataclasses import replace
    phi = replace(phi, sup_on_Lambda=float(sup), inf_on_Lambda=float(inf),
                  sup_on_omega=float(sup_om), inf_on_omega=float(inf_om))
    return phi if t == 1.0 else phi.scaled(t)


# ---------------------------------------------------------------------------
# Ulam discretization
# ---------------------------------------------------------------------------


def _per_axis(g: BaseMap, N_cells) -> tuple:
    if np.ndim(N_cells) == 0:
        n = int(N_cells)
        side = round(n ** (1.0 / g.m))
        if side**g.m != n:
            raise ConfigError(f"N_cells={n} is not a perfect {g.m}-th power")
        per = (side,) * g.m
    else:
        per = tuple(int(v) for v in N_cells)
        if len(per) != g.m:
            raise ConfigError("one cell count per axis is needed")
    if g.m == 1:
        if per[0] % g.deg:
            raise ConfigError(f"N_cells must be a multiple of deg(g) = {g.deg}")
    else:
        for c, k in zip(per, g.kint):
            if c % k:
                raise ConfigError(f"cells per axis must be multiples of the axis degrees {g.kint}")
    return per


@dataclass
class UlamSkeleton:
    """Cell geometry of the discretized operator, independent of the potential.

    Entry e contributes frac[e] * exp(phi(x_mid[e])) at (rows[e], cols[e]):
    row = target cell, column = source cell.
    """

    per_axis: tuple
    rows: np.ndarray
    cols: np.ndarray
    frac: np.ndarray
    x_mid: np.ndarray
    push: sp.csr_matrix = field(repr=False)        # Lebesgue push-forward between cells
    exact: bool = False

    @property
    def N(self) -> int:
        return int(np.prod(self.per_axis))

    def centers(self) -> np.ndarray:
        axes = [(np.arange(c) + 0.5) / c for c in self.per_axis]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(self.per_axis))

    def matrix(self, phi_mid: np.ndarray | None = None) -> sp.csr_matrix:
        w = self.frac if phi_mid is None else self.frac * np.exp(phi_mid)
        return sp.csr_matrix((w, (self.rows, self.cols)), shape=(self.N, self.N))


def _skeleton_1d(g: BaseMap, N: int) -> UlamSkeleton:
    """Exact image arcs of each source cell under the monotone lift."""
    x = np.arange(N + 1) / N
    gx = g.eval(x[:, None])[:, 0]
    Y0 = gx[:-1]
    ell = np.mod(gx[1:] - gx[:-1], 1.0)
    ell[ell == 0] = 1.0
    rows, cols, frac, mids = [], [], [], []
    prow, pcol, pval = [], [], []
    span = int(np.ceil(ell.max() * N)) + 2
    for s in range(span):
        lo_cell = np.floor(Y0 * N) + s
        a = np.maximum(Y0, lo_cell / N)
        b = np.minimum(Y0 + ell, (lo_cell + 1) / N)
        length = b - a
        ok = length > 1e-15
        i = np.flatnonzero(ok)
        if i.size == 0:
            continue
        j = np.mod(lo_cell[ok].astype(np.int64), N)
        # source point over the middle of the sub-arc, by interpolation in the cell
        u = ((a[ok] + b[ok]) / 2 - Y0[ok]) / ell[ok]
        rows.append(j); cols.append(i); frac.append(length[ok] * N)
        mids.append(normalize((x[i] + u / N))[:, None])
        prow.append(i); pcol.append(j); pval.append(length[ok] / ell[ok])
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    push = sp.csr_matrix((np.concatenate(pval), (np.concatenate(prow), np.concatenate(pcol))), shape=(N, N))
    return UlamSkeleton((N,), rows, cols, np.concatenate(frac), np.concatenate(mids), push, True)


def _skeleton_nd(g: BaseMap, per: tuple, samples: int, threads: int | None = None) -> UlamSkeleton:
    """Sampled quadrature: s^m regular points per target cell, pulled back by every branch."""
    m = g.m
    per_arr = np.array(per)
    N = int(np.prod(per))
    sub = _grid(m, samples)                                   # offsets in the unit cell
    S = sub.shape[0]
    centers_idx = np.stack(np.meshgrid(*[np.arange(c) for c in per], indexing="ij"), -1).reshape(-1, m)

    def work(ci, lo, hi):
        idx = centers_idx[lo:hi]
        Y = (idx[:, None, :] + sub[None, :, :]) / per_arr            # (n, S, m)
        Y = Y.reshape(-1, m)
        rows_t = np.repeat(np.arange(lo, hi), S)
        out_r, out_c, out_x = [], [], []
        for sym in g.symbol_tuples():
            X = g.inverse_branch(Y, sym)
            cell = np.minimum((X * per_arr).astype(np.int64), per_arr - 1)
            out_r.append(rows_t); out_c.append(np.ravel_multi_index(cell.T, per)); out_x.append(X)
        return np.concatenate(out_r), np.concatenate(out_c), np.concatenate(out_x)

    parts = _rng.run_chunks(work, N, threads, size=256)
    rows = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    X = np.concatenate([p[2] for p in parts])
    frac = np.full(rows.size, 1.0 / S)
    # forward push-forward of Lebesgue; k_i * samples points per axis split evenly
    axes = [(np.arange(samples * k) + 0.5) / (samples * k) for k in g.kint]
    fsub = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m)
    F = fsub.shape[0]
    Xs = ((centers_idx[:, None, :] + fsub[None, :, :]) / per_arr).reshape(-1, m)
    tgt = np.minimum((g.eval(Xs) * per_arr).astype(np.int64), per_arr - 1)
    push = sp.csr_matrix((np.full(Xs.shape[0], 1.0 / F), (np.repeat(np.arange(N), F),
                                                             np.ravel_multi_index(tgt.T, per))),
                         shape=(N, N))
    return UlamSkeleton(per, rows, cols, frac, X, push, False)


def ulam_skeleton(g: BaseMap, N_cells, samples: int = 4, threads: int | None = None) -> UlamSkeleton:
    per = _per_axis(g, N_cells)
    if g.m == 1:
        return _skeleton_1d(g, per[0])
    return _skeleton_nd(g, per, samples, threads)


@dataclass
class TransferOperatorApprox:
    skeleton: UlamSkeleton = field(repr=False)
    matrix: sp.csr_matrix = field(repr=False)
    eigenvalue: float
    right: np.ndarray = field(repr=False)
    left: np.ndarray = field(repr=False)
    second_ratio: float
    residual: float
    iterations: int
    converged: bool
    flags: list = field(default_factory=list)

    @property
    def N_cells(self) -> int:
        return self.skeleton.N

    @property
    def pressure(self) -> float:
        return math.log(self.eigenvalue)

    @property
    def spectral_gap(self) -> float:
        return 1.0 - self.second_ratio

    def to_json(self, include_matrix: bool = False) -> dict:
        out = {
            "N_cells": self.N_cells,
            "eigenvalue": self.eigenvalue,
            "pressure": self.pressure,
            "second_ratio": self.second_ratio,
            "gap": self.spectral_gap,
            "defect": equilibrium_measure(self).defect,
            "residual": self.residual,
            "converged": self.converged,
            "flags": list(self.flags),
        }
        if include_matrix:
            coo = self.matrix.tocoo()
            out["matrix"] = {"row": coo.row.tolist(), "col": coo.col.tolist(), "data": coo.data.tolist()}
        return out


def _power(M: sp.csr_matrix, tol: float, max_iter: int):
    N = M.shape[0]
    v = np.full(N, 1.0 / N)
    lam = 0.0
    res = np.inf
    for it in range(1, max_iter + 1):
        w = M @ v
        lam = w.sum()
        if lam <= 0:
            raise SpectralError("operator annihilated the positive cone")
        w /= lam
        res = np.abs(w - v).sum()
        v = w
        if res <= tol:
            break
    # residual of the eigen-equation in l1, relative to the eigenvalue
    resid = float(np.abs(M @ v - lam * v).sum() / lam)
    return float(lam), v, resid, it


def _second_ratio(M: sp.csr_matrix, lam: float, r: np.ndarray, l: np.ndarray,
                  max_iter: int = 4000, window: int = 100, tol: float = 1e-7) -> float:
    """|lambda_2| / lambda_max.

    Dense eigenvalues for small grids; otherwise power iteration on the operator
    deflated by the leading eigenpair, from a fixed start vector, so repeated
    runs give identical bits.
    """
    N = M.shape[0]
    if N <= 600:
        mags = np.sort(np.abs(np.linalg.eigvals(M.toarray())))[::-1]
        k = int(np.argmin(np.abs(mags - lam)))
        rest = np.delete(mags, k)
        return float(rest[0] / lam) if rest.size else 0.0
    scale = lam / float(l @ r)
    v = np.random.default_rng(20240517).random(N) - 0.5
    logs = []
    prev = np.inf
    for it in range(max_iter):
        w = M @ v
        w -= (scale * float(l @ v)) * r
        nrm = float(np.abs(w).sum())
        if nrm <= 1e-300 * lam:
            return 0.0
        logs.append(math.log(nrm / lam))
        v = w / nrm
        if len(logs) >= 2 * window and (it + 1) % window == 0:
            est = sum(logs[-window:]) / window
            if abs(est - prev) <= tol:
                break
            prev = est
    return float(math.exp(sum(logs[-window:]) / window)) if len(logs) >= window else float(
        math.exp(sum(logs) / len(logs)))


def operator_from_values(sk: UlamSkeleton, phi_mid: np.ndarray | None, tol: float = 1e-12,
                         max_iter: int = 100_000, gap: bool = True) -> TransferOperatorApprox:
    M = sk.matrix(phi_mid)
    lam, r, res_r, it_r = _power(M, tol, max_iter)
    MT = M.T.tocsr()
    lam_l, l, res_l, it_l = _power(MT, tol, max_iter)
    ratio = _second_ratio(M, lam, r, l) if gap else float("nan")
    flags = []
    converged = max(res_r, res_l) <= 1e-10
    if not converged:
        flags.append("power_iteration_stagnated")
    if gap and 1.0 - ratio < 1e-6:
        flags.append("gap_below_1e-6")
    return TransferOperatorApprox(sk, M, lam, r / r.sum(), l / l.sum(), ratio, max(res_r, res_l),
                                  max(it_r, it_l), converged, flags)


def _base_values(g_or_f, phi, X):
    """phi on base points X; fiber-dependent potentials see the fiber replayed along branch 0."""
    if phi is None:
        return None
    if isinstance(phi, Potential):
        if isinstance(g_or_f, SkewProduct):
            f = g_or_f
            past = np.empty(X.shape[:-1] + (fiber_depth(f), f.m))
            cur = X
            for j in range(past.shape[-2]):
                cur = f.g.inverse_branch(cur, f.g.symbol_tuples()[0])
                past[..., j, :] = cur
            return phi(X, f.replay(past))
        return phi(X, np.zeros(X.shape, complex))
    return np.asarray(phi(X), dtype=float)


def build_transfer_operator(g_or_f, phi=None, N_cells=1024, samples: int = 4,
                            skeleton: UlamSkeleton | None = None, gap: bool = True,
                            threads: int | None = None) -> TransferOperatorApprox:
    """Ulam matrix of the transfer operator of exp(phi), with its leading eigendata.

    ``phi`` is None (zero potential), a callable on base points, or a
    Potential (fiber-collapsed through the replayed fiber).
    """
    g = g_or_f.g if isinstance(g_or_f, SkewProduct) else g_or_f
    sk = skeleton or ulam_skeleton(g, N_cells, samples, threads)
    return operator_from_values(sk, _base_values(g_or_f, phi, sk.x_mid), gap=gap)


@dataclass
class MeasureApprox:
    weights: np.ndarray
    skeleton: UlamSkeleton = field(repr=False)
    defect: float = float("nan")

    def integrate_base(self, fn: Callable, samples: int = 4) -> float:
        """Integral of a base function, uniform within each cell."""
        per = np.array(self.skeleton.per_axis)
        m = per.size
        sub = _grid(m, samples)
        idx = np.stack(np.meshgrid(*[np.arange(c) for c in per], indexing="ij"), -1).reshape(-1, m)
        vals = np.asarray(fn(((idx[:, None, :] + sub[None]) / per).reshape(-1, m)), float)
        cell_mean = vals.reshape(idx.shape[0], -1).mean(axis=1)
        return float(self.weights @ cell_mean)

    def sample_base(self, count: int, gen: np.random.Generator) -> np.ndarray:
        per = np.array(self.skeleton.per_axis)
        cells = gen.choice(self.weights.size, size=count, p=self.weights)
        idx = np.stack(np.unravel_index(cells, tuple(per)), axis=-1)
        return normalize((idx + gen.random(idx.shape)) / per)


def equilibrium_measure(op: TransferOperatorApprox) -> MeasureApprox:
    """Cell weights proportional to left_i * right_i, with the invariance defect."""
    w = op.left * op.right
    w = w / w.sum()
    pushed = op.skeleton.push.T @ w
    return MeasureApprox(w, op.skeleton, float(np.abs(pushed - w).sum()))


# ---------------------------------------------------------------------------
# the pressure curve t -> P(t phi^geo)
# ---------------------------------------------------------------------------


@dataclass
class PressureCurve:
    t_grid: np.ndarray
    values: np.ndarray
    root: float | None
    l1: np.ndarray
    l2: np.ndarray
    t0: float
    psi: np.ndarray
    psi_below: np.ndarray
    convex: bool
    decreasing: bool
    l1_below: bool
    flags: list = field(default_factory=list)
    second_ratio: np.ndarray | None = None

    def uniqueness_interval(self) -> tuple | None:
        """Smallest and largest grid t with Psi(t phi^geo) < P(t phi^geo)."""
        ts = self.t_grid[self.psi_below]
        return (float(ts.min()), float(ts.max())) if ts.size else None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "P", "l1", "l2", "psi", "psi_below_P"])
            for row in zip(self.t_grid, self.values, self.l1, self.l2, self.psi, self.psi_below):
                w.writerow([f"{row[0]:.17g}", f"{row[1]:.17g}", f"{row[2]:.17g}", f"{row[3]:.17g}",
                            f"{row[4]:.17g}", int(row[5])])

    def summary(self) -> dict:
        return {
            "root": self.root,
            "t0": self.t0,
            "convex": self.convex,
            "strictly_decreasing": self.decreasing,
            "l1_below_curve": self.l1_below,
            "uniqueness_interval": self.uniqueness_interval(),
            "flags": list(self.flags),
        }


def _psi_t(geo: Potential, t: float, alpha: float, bound: float) -> float:
    if bound == -math.inf:
        return -math.inf
    p = geo.scaled(t)
    return alpha * p.sup_on_omega + (1 - alpha) * p.sup_on_Lambda + bound


def pressure_curve(f: SkewProduct, t_min: float = 0.0, t_max: float = 1.25, steps: int = 6,
                   N_cells=1024, alpha: float | None = None, samples: int = 4,
                   root_tol: float = 1e-9, geo: Potential | None = None,
                   threads: int | None = None) -> PressureCurve:
    """P(t phi^geo) = log of the leading Ulam eigenvalue, on a t grid, with its root.

    The root is bracketed on the grid and refined by bisection; l1, l2, t0 and
    Psi(t phi^geo) come from the profile constants and the extrema of phi^geo.
    """
    if steps < 2:
        raise ValueError("need at least two grid points")
    sk = ulam_skeleton(f.g, N_cells, samples, threads)
    phi_mid = f.geometric_potential(sk.x_mid)
    geo = geo or geometric_extrema(f)

    def P(t):
        return operator_from_values(sk, t * phi_mid, gap=False).pressure

    ts = np.linspace(t_min, t_max, steps)
    vals = np.array(_rng.map_ordered(P, list(ts), threads))
    flags = []
    root = None
    sign = np.sign(vals)
    hit = np.flatnonzero(sign == 0)
    if hit.size:
        root = float(ts[hit[0]])
    else:
        br = np.flatnonzero(sign[:-1] * sign[1:] < 0)
        if br.size:
            a, b = ts[br[0]], ts[br[0] + 1]
            fa = vals[br[0]]
            while b - a > root_tol:
                c = 0.5 * (a + b)
                fc = P(c)
                if fc == 0:
                    a = b = c
                    break
                if np.sign(fc) == np.sign(fa):
                    a, fa = c, fc
                else:
                    b = c
            root = float(0.5 * (a + b))
        else:
            flags.append("no_sign_change")
    d2 = np.diff(vals, 2)
    convex = bool(np.all(d2 >= -1e-9))
    decreasing = bool(np.all(np.diff(vals) < 0))
    prof = f.profile
    logdeg = math.log(prof.deg)
    l1 = logdeg + np.minimum(ts * geo.inf_on_Lambda, ts * geo.sup_on_Lambda)
    bound = entropy_bound(prof, alpha) if alpha is not None else -math.inf
    l2 = ts * geo.sup_on_Lambda + bound
    t0 = -bound / geo.sup_on_Lambda if bound != -math.inf and geo.sup_on_Lambda < 0 else -math.inf
    psi = np.array([_psi_t(geo, t, alpha, bound) if alpha is not None else -math.inf for t in ts])
    psi_below = psi < vals
    l1_below = bool(np.all(l1 <= vals + 1e-9))
    if geo.sup_on_Lambda < 0 and not decreasing:
        flags.append("not_strictly_decreasing")
    if not convex:
        flags.append("not_convex")
    return PressureCurve(ts, vals, root, l1, l2, float(t0), psi, psi_below, convex, decreasing,
                         l1_below, flags)


# ---------------------------------------------------------------------------
# Lyapunov exponents
# ---------------------------------------------------------------------------


def _typical_orbits(f: SkewProduct, count: int, gen: np.random.Generator):
    b = gen.random((count, f.m))
    r = np.sqrt(gen.random((count, f.m)))
    z = r * np.exp(1j * TWO_PI * gen.random((count, f.m)))
    return b, z


def _noisy_step(f: SkewProduct, b, z, gen):
    # a tiny refill keeps doubling-type maps from collapsing to 0 in floating point
    b, z = f.step(b, z)
    return normalize(b + REFILL_NOISE * gen.random(b.shape)), z


def lyapunov_exponents(f: SkewProduct, orbit_length: int = 10_000, seed: int = 0, orbits: int = 16,
                       burn_in: int = 100) -> dict:
    """All 3m exponents by QR iteration along typical orbits (mean over an ensemble).

    Coordinates are ordered fiber first, so Df is block upper triangular and
    the fiber exponents come out as log lambda_s exactly.
    """
    if orbit_length < 1:
        raise ValueError("orbit_length must be positive")
    m = f.m
    gen = _rng.stream(seed, "equilibrium.lyapunov")
    b, z = _typical_orbits(f, orbits, gen)
    for _ in range(burn_in):
        b, z = _noisy_step(f, b, z, gen)
    perm = np.r_[np.arange(m, 3 * m), np.arange(m)]
    Q = np.broadcast_to(np.eye(3 * m), (orbits, 3 * m, 3 * m)).copy()
    acc = np.zeros((orbits, 3 * m))
    for _ in range(orbit_length):
        J = f.full_jacobian(b)[:, perm][:, :, perm]
        Q, R = np.linalg.qr(J @ Q)
        acc += np.log(np.abs(np.diagonal(R, axis1=1, axis2=2)))
        b, z = _noisy_step(f, b, z, gen)
    per = acc / orbit_length
    mean = per.mean(axis=0)
    fiber = mean[: 2 * m]
    base = mean[2 * m:]
    ex = np.sort(mean)[::-1]
    return {
        "exponents": ex.tolist(),
        "base_exponents": base.tolist(),
        "fiber_exponents": fiber.tolist(),
        "lambda_plus": float(ex[ex > 0].sum()),
        "spread": float(np.where(per > 0, per, 0).sum(axis=1).std()),
        "orbit_length": orbit_length,
        "orbits": orbits,
    }


# ---------------------------------------------------------------------------
# SRB checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Observable:
    name: str
    fn: Callable = field(repr=False)
    fiber: bool = False

    def __call__(self, b, z):
        return self.fn(b, z)


def default_observables(m: int) -> list[Observable]:
    obs = [
        Observable("cos_2pi_x0", lambda b, z: np.cos(TWO_PI * b[..., 0])),
        Observable("sin_2pi_x0", lambda b, z: np.sin(TWO_PI * b[..., 0])),
        Observable("cos_4pi_x0", lambda b, z: np.cos(2 * TWO_PI * b[..., 0])),
        Observable("re_z0", lambda b, z: z[..., 0].real, fiber=True),
    ]
    if m >= 2:
        obs.append(Observable("cos_2pi_x0_plus_x1", lambda b, z: np.cos(TWO_PI * (b[..., 0] + b[..., 1]))))
    else:
        obs.append(Observable("abs2_z0", lambda b, z: np.abs(z[..., 0]) ** 2, fiber=True))
    return obs


def lift_sample(f: SkewProduct, mu: MeasureApprox, op: TransferOperatorApprox, phi_mid_fn: Callable,
                count: int, gen: np.random.Generator):
    """Points of the lifted measure: base from the cell weights, backward branches
    drawn with probability proportional to exp(phi) h at each preimage.
    """
    sk = mu.skeleton
    per = np.array(sk.per_axis)
    y = mu.sample_base(count, gen)
    h = op.right / op.right.mean()
    past = np.empty((count, fiber_depth(f), f.m))
    cur = y
    for j in range(past.shape[1]):
        pre = f.g.inverse_branches(cur)                                  # (count, deg, m)
        cells = np.minimum((pre * per).astype(np.int64), per - 1)
        flat = np.ravel_multi_index(np.moveaxis(cells, -1, 0), tuple(per))
        w = np.exp(phi_mid_fn(pre)) * h[flat]
        w = w / w.sum(axis=1, keepdims=True)
        u = gen.random((count, 1))
        pick = np.minimum((np.cumsum(w, axis=1) < u).sum(axis=1), w.shape[1] - 1)
        cur = pre[np.arange(count), pick]
        past[:, j] = cur
    return y, f.replay(past)


def time_averages(f: SkewProduct, observables: Sequence[Observable], total: int, seed: int,
                  orbits: int = 1000, burn_in: int = 100, threads: int | None = None) -> np.ndarray:
    """Ensemble time averages from Lebesgue-random starts, total samples split over orbits."""
    steps = max(1, total // orbits)
    chunk = 250

    def work(ci, lo, hi):
        gen = _rng.stream(seed, "equilibrium.time_average", ci)
        b, z = _typical_orbits(f, hi - lo, gen)
        for _ in range(burn_in):
            b, z = _noisy_step(f, b, z, gen)
        acc = np.zeros(len(observables))
        for _ in range(steps):
            acc += np.array([o(b, z).sum() for o in observables])
            b, z = _noisy_step(f, b, z, gen)
        return acc

    parts = _rng.run_chunks(work, orbits, threads, size=chunk)
    return np.sum(parts, axis=0) / (steps * orbits)


def srb_check(f: SkewProduct, N_cells=1024, orbit_length: int = 1_000_000,
              observables: Sequence[Observable] | None = None, seed: int = 0, tol: float = 0.01,
              pesin_tol: float | None = 1e-4, trend_cells: Sequence | None = None, lift_samples: int = 200_000,
              lyapunov_length: int = 10_000, samples: int = 4, threads: int | None = None) -> HypothesisReport:
    """Time averages of typical orbits against integrals for the t = 1 equilibrium state.

    Also reports the Pesin residual |h - lambda^+| with h = P(phi^geo) -
    integral of phi^geo, and its trend over coarser grids.
    """
    observables = list(observables or default_observables(f.m))
    sk = ulam_skeleton(f.g, N_cells, samples, threads)
    phi_mid = f.geometric_potential(sk.x_mid)
    op = operator_from_values(sk, phi_mid)
    mu = equilibrium_measure(op)
    gen = _rng.stream(seed, "equilibrium.srb_lift")
    integrals = np.empty(len(observables))
    need_lift = any(o.fiber for o in observables)
    if need_lift:
        yb, yz = lift_sample(f, mu, op, f.geometric_potential, lift_samples, gen)
    for i, o in enumerate(observables):
        if o.fiber:
            integrals[i] = float(np.mean(o(yb, yz)))
        else:
            integrals[i] = mu.integrate_base(lambda X, o=o: o(X, np.zeros(X.shape, complex)), samples)
    averages = time_averages(f, observables, orbit_length, seed, threads=threads)
    disc = np.abs(averages - integrals)
    rep = HypothesisReport()
    for o, a, I, d in zip(observables, averages, integrals, disc):
        rep.add(f"srb_{o.name}", float(d), tol, tol - float(d), bool(d <= tol),
                f"time average {a:.6g}, integral {I:.6g}")
    lyap = lyapunov_exponents(f, lyapunov_length, seed)
    lam_plus = lyap["lambda_plus"]

    def h_of(opx, mux):
        return opx.pressure - mux.integrate_base(f.geometric_potential, samples)

    h = h_of(op, mu)
    resid = abs(h - lam_plus)
    # without a tolerance the residual is reported only
    ptol = math.inf if pesin_tol is None else pesin_tol
    rep.add("pesin_residual", resid, ptol, ptol - resid, bool(resid <= ptol),
            f"h={h:.8g}, lambda+={lam_plus:.8g}", informational=pesin_tol is None)
    rep.add("margulis_ruelle", h, lam_plus + 0.05, lam_plus + 0.05 - h, bool(h <= lam_plus + 0.05))
    trend = {}
    if trend_cells:
        for nc in trend_cells:
            sk2 = ulam_skeleton(f.g, nc, samples, threads)
            op2 = operator_from_values(sk2, f.geometric_potential(sk2.x_mid), gap=False)
            trend[str(nc)] = abs(h_of(op2, equilibrium_measure(op2)) - lam_plus)
        trend[str(N_cells)] = resid
        seq = list(trend.values())
        mono = all(b <= a + 1e-12 for a, b in zip(seq, seq[1:]))
        rep.add("pesin_residual_monotone", float(mono), 1.0, 0.0 if mono else -1.0, mono,
                "residual nonincreasing as N_cells grows", informational=True)
    rep.extras.update({
        "eigenvalue": op.eigenvalue,
        "pressure_t1": op.pressure,
        "h_est": h,
        "lambda_plus": lam_plus,
        "defect": mu.defect,
        "second_ratio": op.second_ratio,
        "time_averages": {o.name: float(a) for o, a in zip(observables, averages)},
        "integrals": {o.name: float(I) for o, I in zip(observables, integrals)},
        "pesin_trend": trend,
        "lyapunov": lyap,
    })
    return rep


def srb_hypothesis_check(f: SkewProduct, params: DecompositionParams | float,
                         geo: Potential | None = None) -> HypothesisReport:
    """log q + eps(alpha) + m log L < min(log deg g, -sup phi^geo)."""
    alpha = getattr(params, "alpha", params)
    geo = geo or geometric_extrema(f)
    prof = f.profile
    lhs = entropy_bound(prof, alpha)
    rhs = min(math.log(prof.deg), -geo.sup_on_Lambda)
    margin = rhs - lhs if lhs != -math.inf else math.inf
    rep = HypothesisReport()
    rep.add("eq2_srb_relation", lhs, rhs, margin, bool(lhs < rhs))
    rep.extras.update({"sup_phi_geo": geo.sup_on_Lambda, "log_deg": math.log(prof.deg)})
    return rep


def srb_parameter_search(base_config, deltas: Sequence[float], lambda_us: Sequence[float],
                         alphas: Sequence[float], rho: float | None = None) -> list[dict]:
    """Scan (delta, lambda_u, alpha); each row records both sides of the SRB relation.

    Rows with alpha at or above the alpha bound are kept but marked invalid.
    """
    from dataclasses import replace as dc_replace
    from .base_dynamics import ProfileError, build_expansion_profile

    rows = []
    for d in deltas:
        cfg = dc_replace(base_config, delta=float(d))
        g = BaseMap(cfg)
        for lu in lambda_us:
            try:
                prof = build_expansion_profile(g, lambda_u=float(lu),
                                               rho=rho if rho is not None else cfg.rho)
            except ProfileError as e:
                rows += [{"delta": float(d), "lambda_u": float(lu), "alpha": float(a), "q": None,
                          "L": None, "lhs": math.nan, "rhs": math.nan, "margin": math.nan,
                          "alpha_valid": False, "pass": False, "note": str(e)} for a in alphas]
                continue
            f = SkewProduct(g, prof)
            geo = geometric_extrema(f)
            for a in alphas:
                a = float(a)
                bound_a = eq1_bound(prof.L_global, float(lu)) if not prof.empty else 1.0
                lhs = entropy_bound(prof, a)
                rhs = min(math.log(prof.deg), -geo.sup_on_Lambda)
                rows.append({
                    "delta": float(d), "lambda_u": float(lu), "alpha": a,
                    "q": prof.q, "L": None if prof.empty else prof.L_global,
                    "lhs": lhs, "rhs": rhs, "margin": rhs - lhs,
                    "alpha_valid": bool(a < bound_a),
                    "pass": bool(lhs < rhs and a < bound_a), "note": "",
                })
    return rows


__all__ = [
    "MeasureApprox",
    "Observable",
    "PressureCurve",
    "SpectralError",
    "TransferOperatorApprox",
    "UlamSkeleton",
    "build_transfer_operator",
    "default_observables",
    "equilibrium_measure",
    "geometric_extrema",
    "geometric_potential",
    "lift_sample",
    "lyapunov_exponents",
    "operator_from_values",
    "pressure_curve",
    "srb_check",
    "srb_hypothesis_check",
    "srb_parameter_search",
    "time_averages",
    "ulam_skeleton",
]
