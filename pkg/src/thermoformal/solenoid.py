"""Fiber-contracting skew products over the base maps.

The phase space is T^m x (D^2)^m.  A point is a base point t in the torus and
m complex fiber coordinates, and

    f(t, z)_i = (g(t), lambda_s z_i + s e^{2 pi i t_i}).

Points of the attractor are determined by their backward base orbit: the
fiber coordinate is the geometric series sum_j s lambda_s^{j-1} e(t_{-j}).
Everything here therefore carries an optional backward history ``past``
(past[..., 0, :] is the chosen preimage of the base point, past[..., 1, :]
its preimage, and so on).  Building samples backward also avoids the
round-off collapse of forward iteration of x -> 2x in binary floating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .base_dynamics import (
    BaseMap,
    ConfigError,
    ExpansionProfile,
    build_expansion_profile,
    centered,
    normalize,
    torus_distance,
)
from .reports import HypothesisReport

TWO_PI = 2.0 * math.pi
FIBER_DIAMETER = 2.0


class HolonomyError(RuntimeError):
    """The backward itinerary of a point could not be recovered unambiguously."""


class ConeError(RuntimeError):
    """Graph transform for the centre-unstable direction failed to settle."""


@dataclass(frozen=True)
class SolenoidPoint:
    base: np.ndarray
    fiber: np.ndarray
    past: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "base", normalize(np.atleast_1d(self.base)))
        object.__setattr__(self, "fiber", np.atleast_1d(np.asarray(self.fiber, dtype=complex)))
        if np.any(np.abs(self.fiber) > 1 + 1e-12):
            raise ValueError("fiber coordinates must lie in the closed unit disk")


@dataclass
class AttractorSample:
    base: np.ndarray            # (count, m)
    fiber: np.ndarray           # (count, m) complex
    past: np.ndarray | None     # (count, burn_in, m) or None
    burn_in: int
    seed: int

    def __len__(self):
        return self.base.shape[0]

    def point(self, i: int) -> SolenoidPoint:
        past = None if self.past is None else self.past[i]
        return SolenoidPoint(self.base[i], self.fiber[i], past)

    def to_csv(self, path) -> None:
        m = self.base.shape[1]
        cols = [f"base_{i}" for i in range(m)]
        for i in range(m):
            cols += [f"re_fiber_{i}", f"im_fiber_{i}"]
        data = [self.base[:, i] for i in range(m)]
        for i in range(m):
            data += [self.fiber[:, i].real, self.fiber[:, i].imag]
        arr = np.column_stack(data)
        np.savetxt(path, arr, delimiter=",", header=",".join(cols), comments="", fmt="%.17g")


class SkewProduct:
    """The map f over g with fiber contraction lambda_s and rotation scale s."""

    def __init__(self, g: BaseMap, profile: ExpansionProfile | None = None,
                 fiber_contraction: float | None = None, fiber_rotation_scale: float = 0.5,
                 n_h: int = 60):
        self.g = g
        self.m = g.m
        self.profile = profile if profile is not None else build_expansion_profile(g)
        self.lambda_s = 2.0 ** (-g.deg) if fiber_contraction is None else float(fiber_contraction)
        self.scale = float(fiber_rotation_scale)
        self.n_h = int(n_h)
        if not 0 < self.lambda_s < 1:
            raise ConfigError("fiber contraction must lie in (0, 1)")
        if self.scale <= 0 or self.lambda_s + self.scale > 1:
            raise ConfigError("need lambda_s + fiber_rotation_scale <= 1 so f maps M into itself")
        self.radius = self.scale / (1.0 - self.lambda_s)  # fibers of the attractor lie in this disk

    # -- the map ------------------------------------------------------------

    def step(self, base, fiber):
        base = np.asarray(base, dtype=float)
        new_fiber = self.lambda_s * np.asarray(fiber) + self.scale * np.exp(1j * TWO_PI * base)
        return self.g.eval(base), new_fiber

    def eval(self, p: SolenoidPoint) -> SolenoidPoint:
        b, z = self.step(p.base, p.fiber)
        past = None
        if p.past is not None:
            past = np.concatenate([p.base[None, :], p.past[:-1]], axis=0)
        return SolenoidPoint(b, z, past)

    __call__ = eval

    def iterate(self, base, fiber, n):
        for _ in range(n):
            base, fiber = self.step(base, fiber)
        return base, fiber

    @staticmethod
    def project(p: SolenoidPoint):
        return p.base

    # -- metric -------------------------------------------------------------

    @staticmethod
    def distance(b1, z1, b2, z2):
        """d_M: max of the base max-metric and the fiber sup-distance."""
        dz = np.max(np.abs(np.asarray(z1) - np.asarray(z2)), axis=-1)
        return np.maximum(torus_distance(b1, b2), dz)

    def metric(self, p1: SolenoidPoint, p2: SolenoidPoint) -> float:
        return float(self.distance(p1.base, p1.fiber, p2.base, p2.fiber))

    # -- backward orbits and the attractor ----------------------------------

    def replay(self, past, z_tail=None):
        """Fiber over the base point whose backward orbit is ``past``."""
        past = np.asarray(past, dtype=float)
        z = np.zeros(past.shape[:-2] + (self.m,), dtype=complex) if z_tail is None else z_tail
        for j in range(past.shape[-2] - 1, -1, -1):
            z = self.lambda_s * z + self.scale * np.exp(1j * TWO_PI * past[..., j, :])
        return z

    def backward_random(self, y, depth, gen: np.random.Generator):
        """Backward orbit of y with inverse branches chosen uniformly at random."""
        y = np.asarray(y, dtype=float)
        past = np.empty(y.shape[:-1] + (depth, self.m))
        cur = y
        for j in range(depth):
            idx = gen.integers(0, self.g.deg, size=y.shape[:-1])
            cur = self.g.inverse_branch(cur, self.g.symbols_of_index(idx))
            past[..., j, :] = cur
        return past

    def backward_along(self, y, target_past):
        """Path-lift y backward along a reference backward orbit (nearest preimages)."""
        depth = target_past.shape[-2]
        past = np.empty(np.shape(y)[:-1] + (depth, self.m))
        cur = np.asarray(y, dtype=float)
        for j in range(depth):
            cur, _ = self.g.nearest_preimage(cur, target_past[..., j, :])
            past[..., j, :] = cur
        return past

    def attractor_sample(self, burn_in: int, count: int, seed: int, keep_past: bool = True,
                         threads: int | None = None) -> AttractorSample:
        """Points within lambda_s^burn_in * diam of the attractor.

        Each point is f^burn_in of a start point: the end base point is uniform,
        the path back to the start uses uniformly random inverse branches and
        the start fiber is uniform in the unit disk.
        """
        if burn_in < 1:
            raise ValueError("burn_in must be >= 1")

        def work(ci, lo, hi):
            gen = _rng.stream(seed, "solenoid.attractor", ci)
            n = hi - lo
            y = gen.random((n, self.m))
            past = self.backward_random(y, burn_in, gen)
            r = np.sqrt(gen.random((n, self.m)))
            z0 = r * np.exp(1j * TWO_PI * gen.random((n, self.m)))
            z = self.replay(past, z0)
            return y, z, (past if keep_past else None)

        parts = _rng.run_chunks(work, count, threads)
        base = np.concatenate([p[0] for p in parts]) if parts else np.zeros((0, self.m))
        fiber = np.concatenate([p[1] for p in parts]) if parts else np.zeros((0, self.m), complex)
        past = np.concatenate([p[2] for p in parts]) if keep_past and parts else None
        return AttractorSample(base, fiber, past, burn_in, seed)

    def decode_past(self, base, fiber, depth=None, slack=1e-12):
        """Recover the backward orbit of an attractor point from its fiber coordinate."""
        depth = depth or self.n_h
        base = np.asarray(base, dtype=float)
        z = np.asarray(fiber, dtype=complex)
        past = []
        err = slack
        for j in range(depth):
            pre = self.g.inverse_branches(base)                       # (deg, m)
            cand = (z[None, :] - self.scale * np.exp(1j * TWO_PI * pre)) / self.lambda_s
            ok = np.all(np.abs(cand) <= self.radius + err, axis=-1)
            if ok.sum() != 1:
                if j > 0 and self.lambda_s ** j < 1e-14:
                    break
                raise HolonomyError(
                    f"backward itinerary ambiguous at depth {j} ({int(ok.sum())} candidates): "
                    "point too far from the attractor, increase burn_in")
            i = int(np.argmax(ok))
            base, z = pre[i], cand[i]
            past.append(base)
            err = err / self.lambda_s
            if err > 0.25 * self.radius:
                break
        return np.array(past)

    def holonomy(self, xhat, yhat, p: SolenoidPoint) -> SolenoidPoint:
        """Move p from the fiber over xhat to the fiber over yhat along its stable set."""
        xhat = normalize(np.atleast_1d(xhat))
        if torus_distance(xhat, p.base) > 1e-12:
            raise ValueError("p must lie over xhat")
        past = p.past if p.past is not None else self.decode_past(p.base, p.fiber)
        past = past[: self.n_h]
        z, ypast = self.holonomy_arrays(past, p.fiber, np.atleast_1d(yhat))
        return SolenoidPoint(yhat, z, ypast)

    def holonomy_arrays(self, xpast, xfiber, yhat):
        ypast = self.backward_along(yhat, xpast)
        d = np.exp(1j * TWO_PI * ypast) - np.exp(1j * TWO_PI * xpast)   # (..., H, m)
        w = self.scale * self.lambda_s ** np.arange(xpast.shape[-2])
        z = np.asarray(xfiber) + np.einsum("...jm,j->...m", d, w)
        return z, ypast

    # -- centre-unstable direction -------------------------------------------

    def fiber_base_derivative(self, base):
        """d(fiber image)/d(base) as a real (..., 2m, m) matrix."""
        base = np.asarray(base, dtype=float)
        B = np.zeros(base.shape[:-1] + (2 * self.m, self.m))
        for i in range(self.m):
            B[..., 2 * i, i] = -TWO_PI * self.scale * np.sin(TWO_PI * base[..., i])
            B[..., 2 * i + 1, i] = TWO_PI * self.scale * np.cos(TWO_PI * base[..., i])
        return B

    def full_jacobian(self, base):
        """Df as a real (m + 2m) square matrix: base block first, then fiber (re, im)."""
        base = np.asarray(base, dtype=float)
        m = self.m
        J = np.zeros(base.shape[:-1] + (3 * m, 3 * m))
        J[..., :m, :m] = self.g.jacobian(base)
        J[..., m:, :m] = self.fiber_base_derivative(base)
        idx = np.arange(m, 3 * m)
        J[..., idx, idx] = self.lambda_s
        return J

    def graph_step(self, A, base):
        """E^cu graph over the base: A(f p) = (B(p) + lambda_s A(p)) Dg(p)^{-1}."""
        Dinv = np.linalg.inv(self.g.jacobian(base))
        return (self.fiber_base_derivative(base) + self.lambda_s * A) @ Dinv

    def cu_graph(self, past, steps=40, A0=None, return_ratios=False):
        """Graph of E^cu at the base point reached after following ``past`` forward."""
        steps = min(steps, past.shape[-2])
        shape = past.shape[:-2] + (2 * self.m, self.m)
        A = np.zeros(shape) if A0 is None else A0
        A_alt = np.ones(shape)
        ratios = []
        prev = None
        for j in range(steps - 1, -1, -1):
            b = past[..., j, :]
            A = self.graph_step(A, b)
            if return_ratios:
                A_alt = self.graph_step(A_alt, b)
                diff = np.max(np.abs(A - A_alt), axis=(-2, -1))
                if prev is not None:
                    # once both graphs agree to round-off the ratio is noise
                    ratios.append(np.where(prev > 1e-10, diff / np.where(prev > 0, prev, 1.0), np.nan))
                prev = diff
        if return_ratios:
            return A, np.array(ratios)
        return A

    def geometric_potential(self, base, past=None, norm="adapted"):
        """phi^geo = -log |det Df restricted to E^cu|.

        In the adapted norm (E^cu measured by its base projection) this is
        -log det Dg.  The Euclidean choice differs by a coboundary and needs
        the graph of E^cu, hence ``past``.
        """
        base = np.asarray(base, dtype=float)
        det = np.abs(self.g.det_jacobian(base))
        if norm == "adapted":
            return -np.log(det)
        if past is None:
            raise ValueError("Euclidean geometric potential needs the backward history")
        A, ratios = self.cu_graph(past, return_ratios=True)
        if ratios.size and np.any(ratios[-1] >= 1.0):
            raise ConeError(f"graph transform not contracting: last ratio {ratios[-1].max():.3g}")
        A_next = self.graph_step(A, base)

        def vol(M):
            G = np.eye(self.m) + np.swapaxes(M, -1, -2) @ M
            return np.sqrt(np.linalg.det(G))

        return -np.log(det * vol(A_next) / vol(A))


def verify_skew_hypotheses(f: SkewProduct, seed: int = 0, pairs: int = 10_000,
                           burn_in: int = 60, threads: int | None = None) -> HypothesisReport:
    rep = HypothesisReport()
    gen = _rng.stream(seed, "solenoid.verify")
    m = f.m
    lam = f.lambda_s

    rep.add("H3_lambda_s_range", lam, 1.0, 1.0 - lam, 0 < lam < 1)

    t = gen.random((pairs, m))
    z1 = np.sqrt(gen.random((pairs, m))) * np.exp(1j * TWO_PI * gen.random((pairs, m)))
    z2 = np.sqrt(gen.random((pairs, m))) * np.exp(1j * TWO_PI * gen.random((pairs, m)))
    _, w1 = f.step(t, z1)
    _, w2 = f.step(t, z2)
    ratio = float(np.max(np.max(np.abs(w1 - w2), -1) / np.max(np.abs(z1 - z2), -1)))
    rep.add("H3_fiber_contraction", ratio, lam, lam - ratio, ratio <= lam * (1 + 1e-12),
            "max d_M(f p, f q)/d_M(p, q) over pairs in a common fiber")

    b, _ = f.step(t, z1)
    semi = float(np.max(torus_distance(b, f.g.eval(t))))
    rep.add("semiconjugacy", semi, 1e-12, 1e-12 - semi, semi <= 1e-12)

    S = f.attractor_sample(burn_in, 2 * pairs, seed, threads=threads)
    P, Q = slice(0, pairs), slice(pairs, 2 * pairs)
    C = holonomy_constant(f, S.base[P], S.fiber[P], S.past[P], S.base[Q], S.fiber[Q])
    rep.add("H4_holonomy_C", C, 2.0, 2.0 - C, C <= 2.0,
            "measured sandwich constant on random attractor pairs; the measured value is used downstream",
            informational=True)
    rep.extras["C_holonomy"] = C

    # invariance f(h_{x,y}(p)) = h_{gx,gy}(f p) on nearby pairs
    k = min(pairs, 2000)
    xb, xz, xp = S.base[:k], S.fiber[:k], S.past[:k, : f.n_h]
    yb = normalize(xb + (gen.random((k, m)) - 0.5) * 0.02)
    hz, hpast = f.holonomy_arrays(xp, xz, yb)
    fb, fz = f.step(yb, hz)
    fxb, fxz = f.step(xb, xz)
    fxp = np.concatenate([xb[:, None, :], xp[:, :-1]], axis=1)
    gz, _ = f.holonomy_arrays(fxp, fxz, f.g.eval(yb))
    inv_err = float(np.max(np.abs(fz - gz)))
    tol = 2 * lam ** f.n_h + 1e-12
    rep.add("H4_holonomy_invariance", inv_err, tol, tol - inv_err, inv_err <= tol)

    prof = f.profile
    if prof.empty:
        rep.add("H5_lambda_s_gt_inv_L", lam, float("nan"), float("inf"), True, "Omega empty: vacuous",
                informational=True)
    else:
        invL = 1.0 / prof.L_global
        rep.add("H5_lambda_s_gt_inv_L", lam, invL, lam - invL, lam > invL,
                "required lambda_s > 1/L; see fiber_contraction_override", informational=True)

    _, ratios = f.cu_graph(S.past[:k], steps=40, return_ratios=True)
    cone = float(np.nanmax(ratios)) if np.any(np.isfinite(ratios)) else 0.0
    rep.add("H5_cone_contraction", cone, 1.0, 1.0 - cone, cone < 1.0,
            "per-step contraction of the E^cu graph transform")
    return rep


def holonomy_constant(f: SkewProduct, xb, xz, xpast, yb, yz) -> float:
    """Smallest C with (1/C) S <= d_M <= C S, S = d_N + |h(p) - q|, over the given pairs."""
    hz, _ = f.holonomy_arrays(xpast[..., : f.n_h, :], xz, yb)
    dN = torus_distance(xb, yb)
    S = dN + np.max(np.abs(hz - yz), axis=-1)
    dM = f.distance(xb, xz, yb, yz)
    keep = (dM > 0) & (S > 0)
    r = S[keep] / dM[keep]
    return float(max(np.max(r), np.max(1.0 / r), 1.0))


__all__ = [
    "AttractorSample",
    "ConeError",
    "HolonomyError",
    "SkewProduct",
    "SolenoidPoint",
    "holonomy_constant",
    "verify_skew_hypotheses",
    "centered",
]
