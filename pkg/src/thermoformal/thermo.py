"""Pressure and entropy estimators, the bounds Psi(phi) and eps(alpha), cylinder counts.

Collections of orbit segments are named ``ALL`` (every segment of the
attractor), ``G`` (good segments) and ``S`` (segments spending at least a
fraction alpha of their time in Omega_rho).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from . import rng as _rng
from .base_dynamics import BaseMap, ExpansionProfile, normalize, torus_distance
from .decomposition import (
    DecompositionParams,
    bowen_pairs,
    good_prefix_table,
    itinerary_of,
)
from .reports import HypothesisReport
from .solenoid import TWO_PI, SkewProduct, SolenoidPoint, holonomy_constant

COLLECTIONS = ("ALL", "G", "S")
NEG_INF = float("-inf")


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Potential:
    """A potential on M evaluated on (base, fiber) arrays of shape (..., m)."""

    kind: str
    evaluator: Callable = field(repr=False)
    holder_K: float = float("nan")
    holder_exponent: float = 1.0
    sup_on_Lambda: float = float("nan")
    inf_on_Lambda: float = float("nan")
    sup_on_omega: float = float("nan")
    label: str = ""
    inf_on_omega: float = float("nan")

    def __call__(self, base, fiber):
        return self.evaluator(np.asarray(base, dtype=float), np.asarray(fiber, dtype=complex))

    def at(self, p) -> float:
        return float(self(p.base, p.fiber))

    def shifted(self, c: float) -> "Potential":
        """phi + c; extrema move with it."""
        ev = self.evaluator
        return replace(
            self,
            evaluator=lambda b, z: ev(b, z) + c,
            sup_on_Lambda=self.sup_on_Lambda + c,
            inf_on_Lambda=self.inf_on_Lambda + c,
            sup_on_omega=self.sup_on_omega + c,
            inf_on_omega=self.inf_on_omega + c,
            kind="constant" if self.kind == "zero" else self.kind,
            label=f"{self.label or self.kind}+{c:g}",
        )

    def scaled(self, t: float) -> "Potential":
        """t * phi; for t < 0 the sup and inf swap roles."""
        ev = self.evaluator
        lo, hi = sorted((t * self.inf_on_Lambda, t * self.sup_on_Lambda))
        if t >= 0:
            so, io = t * self.sup_on_omega, t * self.inf_on_omega
        else:
            so, io = t * self.inf_on_omega, t * self.sup_on_omega
        return replace(self, evaluator=lambda b, z: t * ev(b, z), holder_K=abs(t) * self.holder_K,
                       sup_on_Lambda=hi, inf_on_Lambda=lo, sup_on_omega=so, inf_on_omega=io,
                       label=f"{t:g}*{self.label or self.kind}")

    @classmethod
    def zero(cls) -> "Potential":
        return cls("zero", lambda b, z: np.zeros(b.shape[:-1]), 0.0, 1.0, 0.0, 0.0, 0.0, "", 0.0)

    @classmethod
    def constant_value(cls, c: float) -> "Potential":
        return cls("constant", lambda b, z: np.full(b.shape[:-1], float(c)), 0.0, 1.0, c, c, c, "", c)

    @classmethod
    def holder_test(cls, m: int, amplitude: float = 0.1, fiber_coef: float = 0.0,
                    exponent: float = 1.0) -> "Potential":
        """amplitude * sum_i c(b_i) + fiber_coef * sum_i Re z_i.

        c is cos(2 pi t) for exponent 1 and |sin(pi t)|^exponent otherwise.  K
        bounds the Hoelder quotient in the max metric of M (fiber diameter 2).
        """
        if not 0 < exponent <= 1:
            raise ValueError("Hoelder exponent must lie in (0, 1]")
        a, c, beta = float(amplitude), float(fiber_coef), float(exponent)
        if beta == 1.0:
            def ev(b, z):
                return a * np.cos(TWO_PI * b).sum(axis=-1) + c * z.real.sum(axis=-1)
            K = m * (TWO_PI * abs(a) + abs(c))
        else:
            def ev(b, z):
                return a * (np.abs(np.sin(np.pi * b)) ** beta).sum(axis=-1) + c * z.real.sum(axis=-1)
            K = m * (abs(a) * np.pi**beta + abs(c) * 2.0 ** (1.0 - beta))
        return cls("holder_test", ev, K, beta)

    @classmethod
    def geometric(cls, f: SkewProduct, t: float = 1.0) -> "Potential":
        """t * phi^geo in the adapted norm (depends on the base point only)."""
        return cls("geometric", lambda b, z: t * f.geometric_potential(b), float("nan"), 1.0,
                   label=f"{t:g}*geo")


def potential_from_name(name: str, f: SkewProduct, amplitude: float = 0.1,
                        fiber_coef: float = 0.0, exponent: float = 1.0, t: float = 1.0) -> Potential:
    name = name.lower()
    if name == "zero":
        return Potential.zero()
    if name in ("holder", "holder_test"):
        return Potential.holder_test(f.m, amplitude, fiber_coef, exponent)
    if name in ("geo", "geometric"):
        return Potential.geometric(f, t)
    raise ValueError(f"unknown potential {name!r}")


def _omega_rho_points(profile: ExpansionProfile, count: int, gen: np.random.Generator):
    """Uniform-ish base points in the rho-thickening of Omega (box union)."""
    c, h = profile.omega_centers, profile.omega_halfwidths + profile.rho
    vol = np.prod(2 * h, axis=1)
    box = gen.choice(len(c), size=count, p=vol / vol.sum())
    u = gen.random((count, c.shape[1])) * 2 - 1
    return normalize(c[box] + u * h[box])


def _attractor_over(f: SkewProduct, base, gen, depth: int = 60):
    past = f.backward_random(base, depth, gen)
    return f.replay(past), past


def _refine(f: SkewProduct, phi: Potential, base, fiber, past, sign: float, steps: int,
            radius: float, gen, keep=None):
    """Local random search on the base, fiber carried along the stable holonomy."""
    best_b, best_z, best_p = base.copy(), fiber.copy(), past.copy()
    best_v = sign * phi(best_b, best_z)
    for _ in range(steps):
        trial = normalize(best_b + radius * (gen.random(best_b.shape) * 2 - 1))
        z, p = f.holonomy_arrays(best_p, best_z, trial)
        v = sign * phi(trial, z)
        if keep is not None:
            v = np.where(keep(trial), v, -np.inf)
        up = v > best_v
        best_b[up], best_z[up], best_p[up], best_v[up] = trial[up], z[up], p[up], v[up]
        radius *= 0.5
    return float(np.max(best_v)) * sign


def estimate_extrema(f: SkewProduct, phi: Potential, samples: int = 1_000_000, seed: int = 0,
                     refine_steps: int = 10, top: int = 16, burn_in: int = 40) -> Potential:
    """Fill sup/inf of phi over the attractor and sup over pi^{-1}(Omega_rho)."""
    if phi.kind in ("zero", "constant"):
        return phi
    gen = _rng.stream(seed, "thermo.extrema")
    S = f.attractor_sample(burn_in, samples, seed)
    vals = phi(S.base, S.fiber)
    rad = 0.5 / max(samples, 1) ** (1.0 / f.m)
    hi_i = np.argsort(-vals, kind="stable")[:top]
    lo_i = np.argsort(vals, kind="stable")[:top]
    sup = max(float(vals.max()), _refine(f, phi, S.base[hi_i], S.fiber[hi_i], S.past[hi_i],
                                         1.0, refine_steps, rad, gen))
    inf = min(float(vals.min()), _refine(f, phi, S.base[lo_i], S.fiber[lo_i], S.past[lo_i],
                                         -1.0, refine_steps, rad, gen))
    sup_om, inf_om = NEG_INF, float("inf")
    prof = f.profile
    if not prof.empty:
        count = max(samples // 10, 1000)
        b = _omega_rho_points(prof, count, gen)
        z, past = _attractor_over(f, b, gen, burn_in)
        v = phi(b, z)
        r_om = 0.5 / count ** (1.0 / f.m)
        hi = np.argsort(-v, kind="stable")[:top]
        lo = np.argsort(v, kind="stable")[:top]
        sup_om = max(float(v.max()), _refine(f, phi, b[hi], z[hi], past[hi], 1.0, refine_steps,
                                             r_om, gen, keep=prof.in_omega_rho))
        inf_om = min(float(v.min()), _refine(f, phi, b[lo], z[lo], past[lo], -1.0, refine_steps,
                                             r_om, gen, keep=prof.in_omega_rho))
    return replace(phi, sup_on_Lambda=sup, inf_on_Lambda=inf, sup_on_omega=sup_om, inf_on_omega=inf_om)


def holder_check(f: SkewProduct, phi: Potential, pairs: int = 10_000, seed: int = 0,
                 scale: float = 0.05) -> HypothesisReport:
    """|phi(x) - phi(y)| <= K d_M(x, y)^beta on sampled nearby attractor pairs."""
    S = f.attractor_sample(40, pairs, seed)
    gen = _rng.stream(seed, "thermo.holder")
    yb = normalize(S.base + scale * (gen.random(S.base.shape) * 2 - 1) * gen.random((pairs, 1)))
    yz, _ = f.holonomy_arrays(S.past[:, : f.n_h], S.fiber, yb)
    yz = yz + scale * gen.random((pairs, f.m)) * np.exp(1j * TWO_PI * gen.random((pairs, f.m)))
    d = f.distance(S.base, S.fiber, yb, yz)
    diff = np.abs(phi(S.base, S.fiber) - phi(yb, yz))
    keep = d > 0
    q = diff[keep] / d[keep] ** phi.holder_exponent
    worst = float(q.max()) if q.size else 0.0
    rep = HypothesisReport()
    rep.add("holder_quotient", worst, phi.holder_K, phi.holder_K - worst,
            bool(worst <= phi.holder_K * (1 + 1e-12)), f"{int(keep.sum())} pairs")
    return rep


# ---------------------------------------------------------------------------
# Bowen metric, Birkhoff sums
# ---------------------------------------------------------------------------


def _as_arrays(system, x):
    if isinstance(x, SolenoidPoint):
        b, z = np.asarray(x.base, float), np.asarray(x.fiber, complex)
    else:
        b, z = x
        b = np.asarray(b, float)
        z = None if z is None else np.asarray(z, complex)
    return b, z


def _step(system, b, z):
    if isinstance(system, SkewProduct):
        return system.step(b, z)
    return system.eval(b), z


def _dist(system, b1, z1, b2, z2):
    if isinstance(system, SkewProduct):
        return system.distance(b1, z1, b2, z2)
    return torus_distance(b1, b2)


def bowen_distance(system, x, y, n: int) -> float:
    """d_n(x, y) = max_{0 <= k < n} d(f^k x, f^k y)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    b1, z1 = _as_arrays(system, x)
    b2, z2 = _as_arrays(system, y)
    out = np.zeros(np.broadcast_shapes(b1.shape, b2.shape)[:-1])
    for k in range(n):
        out = np.maximum(out, _dist(system, b1, z1, b2, z2))
        if k < n - 1:
            b1, z1 = _step(system, b1, z1)
            b2, z2 = _step(system, b2, z2)
    return out if out.ndim else float(out)


def birkhoff_sum(f: SkewProduct, phi: Potential, x, n: int):
    """S_n phi(x) = phi(x) + ... + phi(f^{n-1} x); S_0 = 0."""
    if n < 0:
        raise ValueError("n must be >= 0")
    b, z = _as_arrays(f, x)
    total = np.zeros(b.shape[:-1])
    for k in range(n):
        total = total + phi(b, z)
        if k < n - 1:
            b, z = f.step(b, z)
    return total if total.ndim else float(total)


# ---------------------------------------------------------------------------
# separated sets and partition sums
# ---------------------------------------------------------------------------


@dataclass
class OrbitBatch:
    """Forward orbits of candidate points, time-major for cheap prefixes."""

    B: np.ndarray            # (n, N, m)
    Z: np.ndarray            # (n, N, 2m) or (n, N, 0) for base systems
    fiber_box: tuple = ()    # per fiber column (lo, hi)

    @property
    def size(self) -> int:
        return self.B.shape[1]

    @property
    def length(self) -> int:
        return self.B.shape[0]

    def prefix(self, n: int) -> "OrbitBatch":
        return OrbitBatch(self.B[:n], self.Z[:n], self.fiber_box)

    def take(self, idx) -> "OrbitBatch":
        return OrbitBatch(np.ascontiguousarray(self.B[:, idx]), np.ascontiguousarray(self.Z[:, idx]),
                          self.fiber_box)


def orbit_batch(system, base, fiber=None, n: int = 1) -> OrbitBatch:
    base = np.atleast_2d(np.asarray(base, dtype=float))
    N, m = base.shape
    B = np.empty((n, N, m))
    skew = isinstance(system, SkewProduct)
    Z = np.empty((n, N, 2 * m if skew else 0))
    b = normalize(base)
    z = None
    if skew:
        z = np.zeros((N, m), complex) if fiber is None else np.atleast_2d(np.asarray(fiber, complex))
    for k in range(n):
        B[k] = b
        if skew:
            Z[k, :, 0::2] = z.real
            Z[k, :, 1::2] = z.imag
        if k < n - 1:
            b, z = _step(system, b, z)
    box = tuple((float(Z[:, :, c].min()), float(Z[:, :, c].max())) for c in range(Z.shape[2])) if N else ()
    return OrbitBatch(B, Z, box)


def _cells(batch: OrbitBatch, eps: float):
    """Integer cells of width >= eps on a few coordinates of the orbit."""
    n, N, m = batch.B.shape
    G = max(1, int(math.floor(1.0 / eps)))
    cols, dims, per = [], [], []
    for k in sorted({0, n - 1}):
        for a in range(m):
            cols.append(np.minimum((batch.B[k, :, a] * G).astype(np.int64), G - 1))
            dims.append(G)
            per.append(True)
    if batch.Z.shape[2] and m == 1:
        # one-dimensional bases also key on the time-0 fiber
        for c in range(batch.Z.shape[2]):
            lo, hi = batch.fiber_box[c]
            cnt = int(math.floor((hi - lo) / eps)) + 1
            cols.append(np.minimum(((batch.Z[0, :, c] - lo) / eps).astype(np.int64), cnt - 1))
            dims.append(cnt)
            per.append(False)
    while len(dims) > 1 and np.sum(np.log2(np.array(dims, float))) > 60:
        cols.pop(); dims.pop(); per.pop()
    cells = np.stack(cols, axis=1) if N else np.zeros((0, len(dims)), np.int64)
    return np.ascontiguousarray(cells), np.array(dims, np.int64), np.array(per, np.bool_)


@dataclass
class SeparatedSet:
    indices: np.ndarray
    n: int
    eps: float
    scanned: int
    candidates: int
    saturated: bool
    min_separation: float

    def __len__(self):
        return int(self.indices.size)


def separated_subset(batch: OrbitBatch, eps: float, budget: int | None = None,
                     check: bool = True) -> SeparatedSet:
    """Greedy (n, eps)-separated subset of a candidate batch, in batch order."""
    n, N = batch.length, batch.size
    if N == 0:
        return SeparatedSet(np.zeros(0, np.int64), n, eps, 0, 0, False, float("inf"))
    cells, dims, per = _cells(batch, eps)
    cap = N if budget is None else int(budget)
    # point-major copies keep each pairwise check in cache
    B = np.ascontiguousarray(batch.B.transpose(1, 0, 2))
    Z = np.ascontiguousarray(batch.Z.transpose(1, 0, 2))
    kept, scanned = _kernels.greedy_separated(B, Z, cells, dims, per, float(eps), cap)
    sep = float("inf")
    if check and kept.size > 1:
        sep = float(_kernels.min_separation(B, Z, cells, dims, per, kept))
        if sep < eps:
            raise AssertionError(f"separated set violates d_n >= eps: {sep} < {eps}")
    return SeparatedSet(kept, n, eps, int(scanned), N, bool(scanned < N), sep)


def build_separated_set(system, candidates, n: int, eps: float, budget: int | None = None) -> SeparatedSet:
    """Greedy (n, eps)-separated subset of ``candidates`` (points or (base, fiber) arrays)."""
    if isinstance(candidates, (list, tuple)) and candidates and isinstance(candidates[0], SolenoidPoint):
        base = np.array([p.base for p in candidates])
        fiber = np.array([p.fiber for p in candidates]) if isinstance(system, SkewProduct) else None
    else:
        base, fiber = _as_arrays(system, candidates)
    return separated_subset(orbit_batch(system, base, fiber, n), eps, budget)


# ---------------------------------------------------------------------------
# candidate samplers for the three collections
# ---------------------------------------------------------------------------


def fiber_depth(f: SkewProduct, tol: float = 1e-16) -> int:
    """Backward steps after which the start fiber is forgotten to within tol."""
    return max(1, math.ceil(math.log(tol) / math.log(f.lambda_s)))


class CollectionSampler:
    """Initial points x with (x, n) in the collection."""

    def __init__(self, f: SkewProduct, collection: str = "ALL", alpha: float | None = None,
                 burn_in: int | None = None, seed: int = 0, threads: int | None = None):
        collection = collection.upper()
        if collection not in COLLECTIONS:
            raise ValueError(f"collection must be one of {COLLECTIONS}")
        if collection != "ALL" and alpha is None:
            raise ValueError(f"collection {collection} needs alpha")
        self.f, self.collection, self.alpha = f, collection, alpha
        self.burn_in = fiber_depth(f) if burn_in is None else int(burn_in)
        self.seed, self.threads = seed, threads
        self.depends_on_n = collection != "ALL"

    def draw(self, n: int, count: int):
        if self.collection == "ALL":
            S = self.f.attractor_sample(self.burn_in, count, self.seed, keep_past=False,
                                        threads=self.threads)
            return S.base, S.fiber
        if self.collection == "G":
            return self._draw_good(n, count)
        return self._draw_steered(n, count)

    def _draw_good(self, n, count):
        got_b, got_z, have = [], [], 0
        for r in range(16):
            S = self.f.attractor_sample(self.burn_in, max(count, 1024), self.seed + 104729 * (r + 1) + n,
                                        keep_past=False, threads=self.threads)
            bits = itinerary_of(self.f, S.base, n)
            ok = good_prefix_table(bits, self.alpha)[:, -1]
            got_b.append(S.base[ok]); got_z.append(S.fiber[ok])
            have += int(ok.sum())
            if have >= count:
                break
        return np.concatenate(got_b)[:count], np.concatenate(got_z)[:count]

    def _draw_steered(self, n, count):
        """Segments with beta >= alpha, found by steering backward orbits into Omega_rho.

        The end point of the segment is drawn in Omega_rho half of the time,
        then each backward step takes, with a per-candidate probability in
        [1/2, 1], a preimage inside Omega_rho when one exists.
        """
        f, prof = self.f, self.f.profile
        m = f.m
        if prof.empty or n < 1:
            return np.zeros((0, m)), np.zeros((0, m), complex)
        marked = [list(sym) for sym in prof.omega_symbols]
        got_b, got_z, have = [], [], 0
        for r in range(64):
            gen = _rng.stream(self.seed, "thermo.steered", 1000 * n + r)
            N = max(count, 1024)
            y = np.where(gen.random((N, 1)) < 0.5, _omega_rho_points(prof, N, gen), gen.random((N, m)))
            p = 0.5 + 0.5 * gen.random(N)
            cur = y
            for _ in range(n - 1):
                # only the marked branches can land in Omega_rho
                pre = np.stack([f.g.inverse_branch(cur, sym) for sym in marked], axis=1)
                inside = prof.in_omega_rho(pre)
                pick = np.argmax(inside + 0.5 * gen.random(inside.shape), axis=1)
                use_in = (gen.random(N) < p) & inside.any(axis=1)
                rnd = f.g.inverse_branch(cur, f.g.symbols_of_index(gen.integers(0, f.g.deg, size=N)))
                cur = np.where(use_in[:, None], pre[np.arange(N), pick], rnd)
            z, _ = _attractor_over(f, cur, gen, self.burn_in)
            bits = itinerary_of(f, cur, n)
            ok = bits.sum(axis=1) / n >= self.alpha
            got_b.append(cur[ok]); got_z.append(z[ok])
            have += int(ok.sum())
            if have >= count:
                break
        return np.concatenate(got_b)[:count], np.concatenate(got_z)[:count]


@dataclass
class PartitionSum:
    log_sum: float
    size: int
    saturated: bool
    candidates: int
    lower_bound: bool = True


def _weighted_partition(batch: OrbitBatch, phi_orbit: np.ndarray | None, n: int, eps: float,
                        budget: int | None) -> tuple[PartitionSum, SeparatedSet]:
    """Greedy partition sum with candidates ordered by decreasing S_n phi."""
    sub = batch.prefix(n)
    if phi_orbit is None:
        S = np.zeros(sub.size)
    else:
        S = phi_orbit[:n].sum(axis=0)
    order = np.argsort(-S, kind="stable")
    if np.any(order != np.arange(order.size)):
        sub = sub.take(order)
        S = S[order]
    else:
        sub = OrbitBatch(np.ascontiguousarray(sub.B), np.ascontiguousarray(sub.Z), sub.fiber_box)
    sep = separated_subset(sub, eps, budget)
    if len(sep) == 0:
        return PartitionSum(NEG_INF, 0, sep.saturated, sub.size), sep
    return PartitionSum(float(logsumexp(S[sep.indices])), len(sep), sep.saturated, sub.size), sep


def partition_sum(f: SkewProduct, phi: Potential, collection: str, n: int, eps: float,
                  sampler: CollectionSampler | None = None, candidates: int = 65_536,
                  alpha: float | None = None, seed: int = 0, budget: int | None = None) -> PartitionSum:
    """log of sum_{x in E} exp(S_n phi(x)) over a greedy (n, eps)-separated E.

    A lower bound for the supremum over separated sets; -inf for an empty
    collection.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    sampler = sampler or CollectionSampler(f, collection, alpha, seed=seed)
    b, z = sampler.draw(n, candidates)
    if len(b) == 0:
        return PartitionSum(NEG_INF, 0, False, 0)
    batch = orbit_batch(f, b, z, n)
    vals = None if phi.kind == "zero" else np.stack([phi(_unpack_b(batch, k), _unpack_z(batch, k))
                                                     for k in range(n)])
    return _weighted_partition(batch, vals, n, eps, budget)[0]


def _unpack_b(batch: OrbitBatch, k: int):
    return batch.B[k]


def _unpack_z(batch: OrbitBatch, k: int):
    return batch.Z[k, :, 0::2] + 1j * batch.Z[k, :, 1::2]


# ---------------------------------------------------------------------------
# pressure estimates
# ---------------------------------------------------------------------------


@dataclass
class PressureEstimate:
    collection: str
    phi_kind: str
    epsilon_schedule: tuple
    n_schedule: tuple
    partition_sums: np.ndarray      # (len eps, len n) log partition sums, nan where not computed
    sizes: np.ndarray               # separated-set sizes, -1 where not computed
    saturated: np.ndarray           # size passed the candidate fraction (excluded from fits)
    value_at_scale: np.ndarray      # slope per eps
    extrapolated: float
    uncertainty: float
    flags: list = field(default_factory=list)
    candidates: int = 0
    fit_ranges: list = field(default_factory=list)

    @property
    def pressure(self) -> float:
        return self.extrapolated

    def summary(self) -> dict:
        return {
            "collection": self.collection,
            "phi_kind": self.phi_kind,
            "pressure": self.extrapolated,
            "uncertainty": self.uncertainty,
            "value_at_scale": {f"{e:g}": float(v) for e, v in zip(self.epsilon_schedule, self.value_at_scale)},
            "fit_ranges": {f"{e:g}": list(r) for e, r in zip(self.epsilon_schedule, self.fit_ranges)},
            "candidates": self.candidates,
            "flags": list(self.flags),
        }

    def rows(self):
        for i, e in enumerate(self.epsilon_schedule):
            for j, n in enumerate(self.n_schedule):
                if self.sizes[i, j] < 0:
                    continue
                yield [f"{e:.17g}", n, f"{self.partition_sums[i, j]:.17g}",
                       f"{self.value_at_scale[i]:.17g}", int(self.sizes[i, j]), int(self.saturated[i, j])]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epsilon", "n", "log_partition_sum", "slope", "separated_size", "saturated"])
            w.writerows(self.rows())


def _slope(ns, ls, period: int | None = None):
    """Least-squares slope over the top half of the usable n values.

    With a period p the slope is the difference quotient over the last p
    steps instead, which is exact for counts growing in periodic jumps.
    """
    ns, ls = np.asarray(ns, float), np.asarray(ls, float)
    if period and ns.size:
        last = ns[-1]
        hit = np.flatnonzero(ns == last - period)
        if hit.size:
            return float((ls[-1] - ls[hit[0]]) / period), (int(last - period), int(last))
    if ns.size < 2:
        return float("nan"), ()
    h = ns.size // 2
    x, y = ns[h:], ls[h:]
    if x.size < 2:
        x, y = ns[-2:], ls[-2:]
    return float(np.polyfit(x, y, 1)[0]), (int(x[0]), int(x[-1]))


def estimate_pressure(f: SkewProduct, phi: Potential, collection: str = "ALL",
                      eps_schedule=(0.1, 0.05, 0.025), n_schedule=tuple(range(1, 23)),
                      candidates: int = 262_144, saturation: float = 1 / 16, seed: int = 0,
                      alpha: float | None = None, sampler: CollectionSampler | None = None,
                      threads: int | None = None, period: int | None = None) -> PressureEstimate:
    """P(D, phi, eps) as the growth rate of greedy partition sums, per eps.

    For each eps the n schedule is walked upward until the separated set
    holds more than ``saturation`` times the candidate count; beyond that the
    candidates are too sparse to resolve new orbits.  The slope is fitted
    over the top half of the unsaturated n values.  For the S collection the
    counts jump whenever alpha n crosses an integer, so the slope is taken
    across one period ceil(1 / (1 - alpha)) (see ``_slope``).
    """
    eps_schedule = tuple(sorted((float(e) for e in eps_schedule), reverse=True))
    n_schedule = tuple(sorted(int(n) for n in n_schedule))
    if not eps_schedule or not n_schedule:
        raise ValueError("schedules must be nonempty")
    collection = collection.upper()
    sampler = sampler or CollectionSampler(f, collection, alpha, seed=seed, threads=threads)
    if period is None and collection == "S" and alpha is not None and alpha < 1:
        period = math.ceil(1.0 / (1.0 - alpha) - 1e-9)
    E, Nn = len(eps_schedule), len(n_schedule)
    logs = np.full((E, Nn), np.nan)
    sizes = np.full((E, Nn), -1, np.int64)
    sat = np.zeros((E, Nn), bool)
    done = np.zeros(E, bool)
    cache: dict = {}

    def batch_for(n):
        key = n if sampler.depends_on_n else "all"
        if key not in cache:
            cache.clear()
            length = n if sampler.depends_on_n else n_schedule[-1]
            b, z = sampler.draw(length, candidates)
            batch = orbit_batch(f, b, z, length) if len(b) else None
            vals = None
            if batch is not None and phi.kind != "zero":
                vals = np.stack([phi(_unpack_b(batch, k), _unpack_z(batch, k)) for k in range(length)])
            cache[key] = (batch, vals)
        return cache[key]

    empty = False
    for j, n in enumerate(n_schedule):
        if done.all():
            break
        batch, vals = batch_for(n)
        if batch is None:
            logs[:, j] = NEG_INF
            sizes[:, j] = 0
            empty = True
            continue
        for i, eps in enumerate(eps_schedule):
            if done[i]:
                continue
            ps, _ = _weighted_partition(batch, vals, n, eps, None)
            logs[i, j], sizes[i, j] = ps.log_sum, ps.size
            if ps.size > saturation * ps.candidates:
                sat[i, j] = True
                done[i] = True
    slopes = np.full(E, np.nan)
    ranges = []
    flags = []
    reliable = np.zeros(E, bool)
    for i in range(E):
        use = (sizes[i] > 0) & ~sat[i] & np.isfinite(logs[i])
        slopes[i], r = _slope(np.array(n_schedule)[use], logs[i][use], period)
        ranges.append(r)
        windowed = bool(r) and (not period or r[1] - r[0] == period)
        reliable[i] = int(use.sum()) >= 3 and windowed and np.isfinite(slopes[i])
    if empty and np.all(sizes <= 0):
        slopes[:] = NEG_INF
        flags.append("empty_collection")
        value, unc = NEG_INF, 0.0
    else:
        if done.any():
            flags.append("n_range_truncated_by_saturation")
        good = np.flatnonzero(reliable)
        if good.size == 0:
            flags.append("unreliable")
            value, unc = float(slopes[-1]), float("nan")
        else:
            k = good[-1]
            if k != E - 1:
                flags.append(f"smallest_reliable_eps_{eps_schedule[k]:g}")
            value = float(slopes[k])
            unc = float(abs(slopes[k] - slopes[good[-2]])) if good.size > 1 else float("nan")
    return PressureEstimate(collection, phi.label or phi.kind, eps_schedule, n_schedule, logs, sizes, sat,
                            slopes, value, unc, flags, candidates, ranges)


def estimate_entropy(f: SkewProduct, collection: str = "ALL", **kw) -> PressureEstimate:
    """Entropy of a collection: the pressure of the zero potential."""
    return estimate_pressure(f, Potential.zero(), collection, **kw)


# ---------------------------------------------------------------------------
# eps(alpha), Psi(phi) and the theorem checks
# ---------------------------------------------------------------------------


def binary_entropy(a: float) -> float:
    if a <= 0.0 or a >= 1.0:
        return 0.0
    return -a * math.log(a) - (1 - a) * math.log(1 - a)


def epsilon_alpha(alpha: float, deg: int, q: int) -> float:
    """H(max(alpha, 1/2)) + (1 - alpha) * max(log((deg - q) / q), 0).

    log q + eps(alpha) bounds the growth rate of words with at least alpha n
    letters among q marked ones out of deg.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if not 1 <= q <= deg:
        raise ValueError("need 1 <= q <= deg")
    r = deg - q
    tilt = math.log(r / q) if r > q else 0.0
    return binary_entropy(max(alpha, 0.5)) + (1 - alpha) * tilt


def _profile(source) -> ExpansionProfile:
    if isinstance(source, ExpansionProfile):
        return source
    if isinstance(source, SkewProduct):
        return source.profile
    raise TypeError("need a SkewProduct or ExpansionProfile")


def entropy_bound(profile: ExpansionProfile, alpha: float) -> float:
    """log q + eps(alpha) + m log L (the bound on h(S))."""
    if profile.q == 0 or profile.empty:
        return NEG_INF
    return math.log(profile.q) + epsilon_alpha(alpha, profile.deg, profile.q) + profile.g.m * profile.log_L


def psi_bound(f: SkewProduct, phi: Potential, params: DecompositionParams | float) -> float:
    """alpha sup_{Omega_rho} phi + (1 - alpha) sup phi + log q + eps(alpha) + m log L."""
    alpha = getattr(params, "alpha", params)
    prof = f.profile
    base = entropy_bound(prof, alpha)
    if base == NEG_INF:
        return NEG_INF
    if math.isnan(phi.sup_on_Lambda) or math.isnan(phi.sup_on_omega):
        raise ValueError("potential extrema not estimated (see estimate_extrema)")
    return alpha * phi.sup_on_omega + (1 - alpha) * phi.sup_on_Lambda + base


def uniqueness_certificate(f: SkewProduct, phi: Potential, params: DecompositionParams | float,
                           pressure: PressureEstimate | float,
                           s_pressure: PressureEstimate | float | None = None) -> HypothesisReport:
    """Psi(phi) < P(phi) beyond the estimator uncertainty, and P(S, phi) <= Psi(phi)."""
    psi = psi_bound(f, phi, params)
    P = pressure.extrapolated if isinstance(pressure, PressureEstimate) else float(pressure)
    unc = pressure.uncertainty if isinstance(pressure, PressureEstimate) else 0.0
    unc = 0.0 if not np.isfinite(unc) else unc
    rep = HypothesisReport()
    margin = P - unc - psi if psi != NEG_INF else float("inf")
    note = "inconclusive: margin within estimator uncertainty" if (psi != NEG_INF and abs(P - psi) <= unc) else ""
    rep.add("psi_below_pressure", psi, P, margin, bool(margin > 0), note)
    if s_pressure is not None:
        PS = s_pressure.extrapolated if isinstance(s_pressure, PressureEstimate) else float(s_pressure)
        m2 = psi - PS if PS != NEG_INF else float("inf")
        if PS == NEG_INF and psi == NEG_INF:
            m2 = float("inf")
        rep.add("s_pressure_below_psi", PS, psi, m2, bool(m2 >= 0),
                "greedy lower bound for P(S, phi)")
    rep.extras.update({"psi": psi, "pressure": P, "uncertainty": unc,
                       "certificate": bool(rep.passed)})
    return rep


def variation_gap(f: SkewProduct, phi: Potential, params: DecompositionParams | float) -> HypothesisReport:
    """sup phi - inf phi < log deg - log q - eps(alpha) - m log L."""
    alpha = getattr(params, "alpha", params)
    prof = f.profile
    rhs = float("inf")
    if prof.q > 0 and not prof.empty:
        rhs = math.log(prof.deg) - entropy_bound(prof, alpha)
    if math.isnan(phi.sup_on_Lambda) or math.isnan(phi.inf_on_Lambda):
        raise ValueError("potential extrema not estimated (see estimate_extrema)")
    var = phi.sup_on_Lambda - phi.inf_on_Lambda
    rep = HypothesisReport()
    rep.add("variation_gap", var, rhs, rhs - var, bool(var < rhs))
    return rep


def bowen_variation(f: SkewProduct, phi: Potential, params: DecompositionParams, eta: float = 0.01,
                    num_samples: int = 1000, seed: int = 0, n_values=(5, 10, 20, 30),
                    C: float | None = None, growth_tol: float = 0.25) -> HypothesisReport:
    """max |S_n phi(x) - S_n phi(y)| over y in B_n(x, eta), (x, n) good, against V.

    V = 2^(beta+1) C K eta^beta / (1 - max(theta, lambda_s)^beta).  The trend
    check compares the largest two n values: a bounded variation should not
    grow by more than ``growth_tol`` relative to its level.
    """
    if C is None:
        S = f.attractor_sample(60, 4000, seed)
        C = holonomy_constant(f, S.base[:2000], S.fiber[:2000], S.past[:2000],
                              S.base[2000:], S.fiber[2000:])
    beta, K = phi.holder_exponent, phi.holder_K
    r = max(params.theta, f.lambda_s) ** beta
    V = 2 ** (beta + 1) * C * K * eta**beta / (1 - r) if K > 0 else 0.0
    per_n = {}
    for i, n in enumerate(n_values):
        bp = bowen_pairs(f, params.alpha, eta, num_samples, int(n), seed + 7 * i, n_values=[int(n)])
        worst = 0.0
        if bp.n.size:
            k = int(n)
            sx = np.zeros(bp.n.size)
            sy = np.zeros(bp.n.size)
            for t in range(k):
                sx += phi(bp.xb[:, t], bp.xz[:, t])
                sy += phi(bp.yb[:, t], bp.yz[:, t])
            worst = float(np.max(np.abs(sx - sy)))
        per_n[int(n)] = (worst, int(bp.n.size))
    rep = HypothesisReport()
    obs = max(w for w, _ in per_n.values())
    rep.add("bowen_variation", obs, V, V - obs, bool(obs <= V),
            f"C={C:.4g}, K={K:.4g}, theta={params.theta:.4g}")
    ns = sorted(per_n)
    if len(ns) >= 2:
        a, b = per_n[ns[-2]][0], per_n[ns[-1]][0]
        growth = (b - a) / b if b > 0 else 0.0
        rep.add("bowen_variation_no_growth", growth, growth_tol, growth_tol - growth,
                bool(growth <= growth_tol), f"n={ns[-2]} -> n={ns[-1]}")
    rep.extras.update({"V": V, "C": C, "per_n": {str(n): per_n[n][0] for n in ns},
                       "pairs": {str(n): per_n[n][1] for n in ns}})
    return rep


# ---------------------------------------------------------------------------
# cylinder counting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CylinderCount:
    n: int
    alpha: float
    count_R_n: int
    bound: float
    deg: int
    q: int

    @property
    def ok(self) -> bool:
        return self.count_R_n <= self.bound * (1 + 1e-12)


ENUMERATION_LIMIT = 1 << 24


def _marked_symbols(source) -> tuple[int, list[int]]:
    if isinstance(source, tuple) and len(source) == 2 and all(isinstance(v, (int, np.integer)) for v in source):
        deg, q = int(source[0]), int(source[1])
        return deg, list(range(q))
    prof = _profile(source)
    kint = prof.g.kint
    marked = []
    for sym in prof.omega_symbols:
        idx = 0
        for s, k in zip(sym, kint):
            idx = idx * int(k) + int(s)
        marked.append(idx)
    return prof.deg, sorted(set(marked))


def cylinder_count(source, n: int, alpha: float, mode: str = "enumerate") -> CylinderCount:
    """Number of length-n branch words whose fraction of Omega symbols is >= alpha.

    ``source`` is a SkewProduct, an ExpansionProfile, or a (deg, q) pair.
    ``mode="enumerate"`` walks all deg^n words; ``mode="formula"`` sums the
    binomial counts instead and has no size limit.
    """
    deg, marked = _marked_symbols(source)
    q = len(marked)
    if n < 0:
        raise ValueError("n must be >= 0")
    if mode == "enumerate":
        if deg**n > ENUMERATION_LIMIT:
            raise ValueError(f"deg^n = {deg}^{n} words is too many to enumerate; use mode='formula'")
        mark = np.zeros(deg, np.int64)
        mark[marked] = 1
        idx = np.arange(deg**n, dtype=np.int64)
        hits = np.zeros(idx.size, np.int64)
        for _ in range(n):
            hits += mark[idx % deg]
            idx //= deg
        count = int(np.sum(hits / n >= alpha)) if n > 0 else 1
    elif mode == "formula":
        count = sum(math.comb(n, k) * q**k * (deg - q) ** (n - k) for k in range(n + 1)
                    if n == 0 or k / n >= alpha)
    else:
        raise ValueError("mode must be 'enumerate' or 'formula'")
    if q == 0:
        bound = 0.0 if alpha > 0 else float(deg) ** n
    else:
        bound = math.exp((math.log(q) + epsilon_alpha(alpha, deg, q)) * n) if alpha > 0 else float(deg) ** n
    return CylinderCount(n, alpha, count, bound, deg, q)


__all__ = [
    "COLLECTIONS",
    "CollectionSampler",
    "CylinderCount",
    "OrbitBatch",
    "PartitionSum",
    "Potential",
    "PressureEstimate",
    "SeparatedSet",
    "binary_entropy",
    "birkhoff_sum",
    "bowen_distance",
    "bowen_variation",
    "build_separated_set",
    "cylinder_count",
    "entropy_bound",
    "epsilon_alpha",
    "estimate_entropy",
    "estimate_extrema",
    "estimate_pressure",
    "holder_check",
    "orbit_batch",
    "partition_sum",
    "potential_from_name",
    "psi_bound",
    "separated_subset",
    "uniqueness_certificate",
    "variation_gap",
]
