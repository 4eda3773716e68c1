"""Base maps of the torus: linear expanding maps and their pitchfork deformations.

Points of the m-torus are float arrays whose last axis has length m, with every
coordinate in [0, 1).  All maps act on arrays of points (leading axes are batch
axes) so that orbit ensembles can be pushed forward in one numpy call.

The pitchfork family deforms the coordinate with the weakest linear factor:

    g(x)_a = k_a x_a - (delta / 2 pi) B(x) sin(2 pi x_a)   (mod 1)

where B is a smooth bump equal to 1 near the fixed point 0 and supported in the
box of half-width ``pert_radius``.  The remaining coordinates stay linear.
"""

from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .reports import HypothesisReport

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
TOL_ROOT = 1e-12
MAX_DIM = 3


class ConfigError(ValueError):
    """Invalid map configuration, rejected at construction time."""


class RootFindingError(RuntimeError):
    def __init__(self, branch, message="inverse branch did not converge"):
        super().__init__(f"{message} (branch {branch})")
        self.branch = branch


class ProfileError(ValueError):
    """Raised when (H1)/(H2) cannot hold for the requested constants."""


# ---------------------------------------------------------------------------
# torus helpers
# ---------------------------------------------------------------------------


def normalize(x):
    x = np.mod(np.asarray(x, dtype=float), 1.0)
    # np.mod(-1e-17, 1) rounds to 1.0
    return np.where(x >= 1.0, 0.0, x)


def centered(x):
    """Signed representative in [-1/2, 1/2) of a coordinate mod 1."""
    x = np.asarray(x, dtype=float)
    return np.mod(x + 0.5, 1.0) - 0.5


def coord_distance(x, y):
    return np.abs(centered(np.asarray(x) - np.asarray(y)))


def torus_distance(x, y):
    """Flat max-metric d_N on the torus (last axis = coordinates)."""
    return np.max(coord_distance(x, y), axis=-1)


# ---------------------------------------------------------------------------
# bump function
# ---------------------------------------------------------------------------


def _psi(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def _dpsi(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos]) / t[pos] ** 2
    return out


def bump(u, r):
    """Smooth cutoff: 1 for |u| <= r/2, 0 for |u| >= r, C-infinity in between."""
    u = np.abs(np.asarray(u, dtype=float))
    s = np.clip((r - u) / (0.5 * r), 0.0, 1.0)
    a, b = _psi(s), _psi(1.0 - s)
    return a / (a + b)


def bump_deriv(u, r):
    u = np.asarray(u, dtype=float)
    au = np.abs(u)
    s = np.clip((r - au) / (0.5 * r), 0.0, 1.0)
    a, b = _psi(s), _psi(1.0 - s)
    da, db = _dpsi(s), _dpsi(1.0 - s)
    dbds = (da * b + a * db) / (a + b) ** 2
    inside = (au > 0.5 * r) & (au < r)
    return np.where(inside, dbds * (-np.sign(u) / (0.5 * r)), 0.0)


# ---------------------------------------------------------------------------
# configuration and map
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BaseMapConfig:
    m: int = 1
    kind: str = "linear"
    linear_factors: tuple = (2,)
    delta: float = 0.0
    pert_radius: float = 0.1
    pert_radius_transverse: float | None = None
    lambda_u: float = 0.7
    rho: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "linear_factors", tuple(int(k) for k in self.linear_factors))
        if not 1 <= self.m <= MAX_DIM:
            raise ConfigError(f"base dimension m={self.m} unsupported (1..{MAX_DIM})")
        if self.kind not in ("linear", "pitchfork"):
            raise ConfigError(f"unknown map kind {self.kind!r}")
        if len(self.linear_factors) != self.m:
            raise ConfigError("need exactly m linear factors")
        if min(self.linear_factors) < 2:
            raise ConfigError("linear factors must be integers >= 2")
        if self.kind == "linear" and self.delta != 0:
            raise ConfigError("linear maps require delta = 0")
        if self.delta < 0:
            raise ConfigError("delta must be >= 0")
        if not 0 < self.pert_radius < 0.5:
            raise ConfigError("pert_radius must lie in (0, 1/2)")
        if self.pert_radius_transverse is None:
            object.__setattr__(self, "pert_radius_transverse", self.pert_radius)
        if not 0 < self.pert_radius_transverse < 0.5:
            raise ConfigError("pert_radius_transverse must lie in (0, 1/2)")
        if not 0 < self.lambda_u < 1:
            raise ConfigError("lambda_u must lie in (0, 1)")
        if self.rho <= 0:
            raise ConfigError("rho must be positive")
        if len(set(self.linear_factors)) != self.m:
            warnings.warn("repeated linear factors: eigenvalues are not distinct", stacklevel=3)


class BaseMap:
    """A linear or pitchfork-deformed expanding map of the m-torus."""

    def __init__(self, config: BaseMapConfig):
        self.config = config
        self.m = config.m
        self.k = np.array(config.linear_factors, dtype=float)
        self.kint = tuple(config.linear_factors)
        self.deg = int(np.prod(self.kint))
        # the weakest eigenvalue direction carries the deformation
        self.axis = int(np.argmin(self.k))
        self.delta = float(config.delta) if config.kind == "pitchfork" else 0.0
        self.r = float(config.pert_radius)
        self.r_t = float(config.pert_radius_transverse)
        self.radii = np.array([self.r if i == self.axis else self.r_t for i in range(self.m)])
        self._c = self.delta / TWO_PI
        self._check_local_diffeo()

    @property
    def perturbed(self) -> bool:
        return self.delta > 0

    def __repr__(self):
        return f"BaseMap(kind={self.config.kind!r}, k={self.kint}, delta={self.delta})"

    # -- pieces of the deformation ----------------------------------------

    def _bump_other(self, x):
        """Product of the bump over the non-deformed coordinates."""
        out = np.ones(np.shape(x)[:-1])
        for i in range(self.m):
            if i != self.axis:
                out = out * bump(centered(x[..., i]), self.r_t)
        return out

    def lift_axis(self, s, bother):
        """Lift of the deformed coordinate as a function of s in [-1/2, 1/2]."""
        ka = self.k[self.axis]
        if not self.perturbed:
            return ka * s
        return ka * s - self._c * bother * bump(s, self.r) * np.sin(TWO_PI * s)

    def lift_axis_deriv(self, s, bother):
        ka = self.k[self.axis]
        if not self.perturbed:
            return np.full(np.shape(s), ka) * np.ones_like(bother)
        b = bump(s, self.r)
        db = bump_deriv(s, self.r)
        return ka - self._c * bother * (db * np.sin(TWO_PI * s) + TWO_PI * b * np.cos(TWO_PI * s))

    # -- evaluation -------------------------------------------------------

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        out = self.k * x
        if self.perturbed:
            a = self.axis
            s = centered(x[..., a])
            bfull = self._bump_other(x) * bump(s, self.r)
            out[..., a] = out[..., a] - self._c * bfull * np.sin(TWO_PI * x[..., a])
        return normalize(out)

    def iterate(self, x, n):
        for _ in range(n):
            x = self.eval(x)
        return x

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        J = np.zeros(x.shape + (self.m,))
        for i in range(self.m):
            J[..., i, i] = self.k[i]
        if not self.perturbed:
            return J
        a = self.axis
        s = centered(x[..., a])
        bother = self._bump_other(x)
        J[..., a, a] = self.lift_axis_deriv(s, bother)
        ba = bump(s, self.r)
        sn = np.sin(TWO_PI * s)
        for i in range(self.m):
            if i == a:
                continue
            ui = centered(x[..., i])
            part = bump_deriv(ui, self.r_t)
            for j in range(self.m):
                if j not in (i, a):
                    part = part * bump(centered(x[..., j]), self.r_t)
            J[..., a, i] = -self._c * ba * part * sn
        return J

    def det_jacobian(self, x):
        # only the deformed row has off-diagonal entries, so the Jacobian is
        # triangular up to permutation and det = product of the diagonal
        J = self.jacobian(x)
        return np.prod(np.diagonal(J, axis1=-2, axis2=-1), axis=-1)

    def local_lipschitz(self, x):
        """L(x): max-norm operator norm of Dg(x)^{-1}."""
        J = self.jacobian(x)
        a = self.axis
        others = [1.0 / self.k[i] for i in range(self.m) if i != a]
        daa = J[..., a, a]
        row = np.ones_like(daa)
        for i in range(self.m):
            if i != a:
                row = row + np.abs(J[..., a, i]) / self.k[i]
        La = row / daa
        if others:
            return np.maximum(La, max(others))
        return La

    # -- partition and inverse branches -----------------------------------

    def branch_symbols(self, x):
        """Per-axis symbol of the canonical branch partition (element containing 0 is 0)."""
        x = np.asarray(x, dtype=float)
        sym = np.empty(x.shape, dtype=np.int64)
        bother = self._bump_other(x)
        for i in range(self.m):
            s = centered(x[..., i])
            if i == self.axis:
                T = self.lift_axis(s, bother)
            else:
                T = self.k[i] * s
            sym[..., i] = np.mod(np.floor(T + 0.5), self.kint[i]).astype(np.int64)
        return sym

    def branch_index(self, x):
        sym = self.branch_symbols(x)
        idx = np.zeros(sym.shape[:-1], dtype=np.int64)
        for i in range(self.m):
            idx = idx * self.kint[i] + sym[..., i]
        return idx

    def symbol_tuples(self):
        return list(itertools.product(*[range(k) for k in self.kint]))

    def _solve_axis(self, T, bother, branch, max_iter=100):
        """Solve lift_axis(s) = T on [-1/2, 1/2] by safeguarded Newton (monotone lift)."""
        # the compiled kernel mirrors lift_axis / lift_axis_deriv entry by entry
        ka = self.k[self.axis]
        T = np.asarray(T, dtype=float)
        s = np.clip(T / ka, -0.5, 0.5)
        if not self.perturbed:
            return s
        Tf = np.ascontiguousarray(np.broadcast_to(T, np.broadcast_shapes(T.shape, np.shape(bother))))
        bo = np.ascontiguousarray(np.broadcast_to(bother, Tf.shape), dtype=float)
        out, resid = _kernels.solve_lift(Tf.ravel(), bo.ravel(), float(ka), self._c, self.r, max_iter)
        if np.all(resid <= TOL_ROOT):
            return out.reshape(Tf.shape)
        raise RootFindingError(branch)

    def inverse_branch(self, y, symbols):
        """Preimage of y in the partition element with per-axis ``symbols``.

        ``symbols`` is a length-m sequence; each entry may be an int or an
        integer array broadcasting against the batch shape of y.
        """
        y = np.asarray(y, dtype=float)
        x = np.empty(y.shape)
        for i in range(self.m):
            if i == self.axis:
                continue
            x[..., i] = self._axis_preimage_linear(y[..., i], symbols[i], i)
        bother = self._bump_other(x) if self.perturbed else np.ones(y.shape[:-1])
        a = self.axis
        ya = centered(y[..., a])
        t = _branch_offset(ya, symbols[a], self.kint[a])
        branch = tuple(int(np.ravel(sv)[0]) for sv in symbols)
        x[..., a] = normalize(self._solve_axis(ya + t, bother, branch))
        return x

    def symbols_of_index(self, idx):
        """Per-axis symbols (list of arrays) of flat branch indices."""
        idx = np.asarray(idx, dtype=np.int64)
        out = []
        for k in reversed(self.kint):
            out.append(idx % k)
            idx = idx // k
        return out[::-1]

    def _axis_preimage_linear(self, yi, j, i):
        yc = centered(yi)
        t = _branch_offset(yc, j, self.kint[i])
        return normalize((yc + t) / self.k[i])

    def inverse_branches(self, y):
        """All deg(g) preimages of y, shape (..., deg, m), ordered by branch index."""
        y = np.asarray(y, dtype=float)
        out = [self.inverse_branch(y, sym) for sym in self.symbol_tuples()]
        return np.stack(out, axis=-2)

    def nearest_preimage(self, y, target):
        """Preimage of y closest to ``target`` (path-lifting choice of inverse branch)."""
        pre = self.inverse_branches(y)
        d = torus_distance(pre, np.asarray(target)[..., None, :])
        j = np.argmin(d, axis=-1)
        return np.take_along_axis(pre, j[..., None, None], axis=-2)[..., 0, :], j

    def _check_local_diffeo(self):
        if not self.perturbed:
            return
        s = np.linspace(-0.5, 0.5, 200001)
        d = self.lift_axis_deriv(s, np.ones_like(s))
        if np.min(d) <= 0 or self.delta >= self.k[self.axis]:
            raise ConfigError("deformed derivative vanishes: g is not a local diffeomorphism")

    def lift_iterate_interval(self, lo, hi, n):
        """Lift length of g^n applied to [lo, hi] along a linear axis-free 1-d map (m = 1)."""
        if self.m != 1:
            raise ValueError("interval lift only defined for m = 1")
        a, b = np.asarray(lo, float), np.asarray(hi, float)
        lengths = []
        for _ in range(n):
            a, b = self._lift1(a), self._lift1(b)
            lengths.append(b - a)
        return np.array(lengths)

    def _lift1(self, X):
        # continuous lift of the 1-d map to the real line
        fl = np.floor(X + 0.5)
        s = X - fl
        return self.k[0] * fl + self.lift_axis(s, np.ones_like(s))


def _branch_offset(yc, j, k):
    """Integer t = j (mod k) with yc + t inside the lift range [-k/2, k/2)."""
    t1 = np.broadcast_to(np.asarray(j, dtype=float), np.shape(yc))
    t2 = t1 - k
    ok1 = (yc + t1 >= -k / 2) & (yc + t1 < k / 2)
    return np.where(ok1, t1, t2)


# ---------------------------------------------------------------------------
# expansion profile
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExpansionProfile:
    """Region Omega where inverse branches may expand, with its constants."""

    g: BaseMap = field(repr=False)
    lambda_u: float
    rho: float
    L_global: float
    omega_centers: np.ndarray = field(repr=False)
    omega_halfwidths: np.ndarray = field(repr=False)
    q: int
    deg: int
    omega_symbols: tuple = ()
    # m >= 2: Omega as a boolean tile grid (lower corner, tile widths, mask)
    tiles: tuple | None = field(default=None, repr=False)

    @property
    def empty(self) -> bool:
        return len(self.omega_centers) == 0

    @property
    def log_L(self) -> float:
        return math.log(self.L_global) if not self.empty else float("-inf")

    def L_of(self, x):
        return self.g.local_lipschitz(x)

    def _in_boxes(self, x, pad):
        x = np.asarray(x, dtype=float)
        if self.tiles is not None:
            return _in_tiles(x, pad, *self.tiles)
        hit = np.zeros(x.shape[:-1], dtype=bool)
        for c, h in zip(self.omega_centers, self.omega_halfwidths):
            # shared tile faces must not fall through on round-off
            inside = np.all(coord_distance(x, c) <= h + pad + 1e-12, axis=-1)
            hit |= inside
        return hit

    def in_omega(self, x):
        return self._in_boxes(x, 0.0)

    def in_omega_rho(self, x):
        """Indicator of the rho-thickening (max metric) of Omega."""
        return self._in_boxes(x, self.rho)

    def boxes(self):
        return [
            {"lo": (c - h).tolist(), "hi": (c + h).tolist()}
            for c, h in zip(self.omega_centers, self.omega_halfwidths)
        ]

    def to_json(self) -> dict:
        return {
            "omega_boxes": self.boxes(),
            "L_global": None if self.empty else float(self.L_global),
            "lambda_u": float(self.lambda_u),
            "rho": float(self.rho),
            "q": int(self.q),
            "deg": int(self.deg),
        }


def build_expansion_profile(g: BaseMap, lambda_u: float | None = None, rho: float | None = None,
                            grid: int = 100_000) -> ExpansionProfile:
    """Locate Omega = closure{L >= lambda_u}, its constant L and the cover number q."""
    lambda_u = g.config.lambda_u if lambda_u is None else lambda_u
    rho = g.config.rho if rho is None else rho
    if not 0 < lambda_u < 1:
        raise ProfileError("lambda_u must lie in (0, 1)")
    lin = float(np.max(1.0 / g.k))
    if lin >= lambda_u:
        raise ProfileError(
            f"(H2) violated: linear contraction {lin:.4g} >= lambda_u, Omega is the whole torus")

    if not g.perturbed:
        centers = np.zeros((0, g.m))
        return ExpansionProfile(g, lambda_u, rho, float("nan"), centers, centers.copy(), 0, g.deg)

    tiles = None
    if g.m == 1:
        centers, halfs, Lmax = _omega_1d(g, lambda_u, grid)
    else:
        centers, halfs, Lmax, tiles = _omega_tiles(g, lambda_u)

    if len(centers) == 0:
        return ExpansionProfile(g, lambda_u, rho, float("nan"), centers, halfs, 0, g.deg)

    L_global = Lmax * (1 + 1e-6)
    if L_global <= 1:
        raise ProfileError(f"Omega nonempty but sup L = {L_global:.6g} <= 1: (H1) needs L > 1")

    syms = _omega_symbols(g, centers, halfs)
    q = len(syms)
    if q >= g.deg:
        raise ProfileError(f"(H2) violated: Omega meets q={q} >= deg={g.deg} partition elements")
    return ExpansionProfile(g, lambda_u, rho, float(L_global), centers, halfs, q, g.deg,
                            tuple(syms), tiles)


def _omega_1d(g, lambda_u, grid):
    s = (np.arange(grid) + 0.5) / grid - 0.5
    L = g.local_lipschitz(s[:, None])
    mask = L >= lambda_u
    if not mask.any():
        return np.zeros((0, 1)), np.zeros((0, 1)), float("nan")
    if mask.all():
        raise ProfileError("Omega covers the whole circle")
    # rotate so the scan starts outside Omega; runs then never wrap
    start = int(np.argmin(mask))
    idx = (np.arange(grid) + start) % grid
    m_rot = mask[idx]
    edges = np.flatnonzero(np.diff(m_rot.astype(np.int8)))
    centers, halfs = [], []
    Lmax = float(np.max(L[mask]))

    def f(u):
        return float(g.local_lipschitz(np.array([[u]]))[0]) - lambda_u

    h = 1.0 / grid
    for a, b in zip(edges[::2], edges[1::2]):
        lo_in = s[idx[a + 1]]
        hi_in = s[idx[b]]
        lo = _bisect(f, lo_in - h, lo_in)
        hi = _bisect(f, hi_in + h, hi_in)
        if hi < lo:
            hi += 1.0
        centers.append([0.5 * (lo + hi)])
        halfs.append([0.5 * (hi - lo)])
        for u in (lo, hi):
            Lmax = max(Lmax, f(u) + lambda_u)
    return np.array(centers), np.array(halfs), Lmax


def _bisect(f, out_pt, in_pt, iters=60):
    """Boundary of {f >= 0} between an outside and an inside point; returns the inside end."""
    for _ in range(iters):
        mid = 0.5 * (out_pt + in_pt)
        if f(mid) >= 0:
            in_pt = mid
        else:
            out_pt = mid
    return in_pt


def _omega_tiles(g, lambda_u, tiles=None, fine=None):
    """Conservative Omega for m >= 2: union of tiles of the deformation support."""
    m = g.m
    tiles = tiles or (48 if m == 2 else 24)
    fine = fine or (10 if m == 2 else 6)
    edges = [np.linspace(-r, r, tiles + 1) for r in g.radii]
    widths = np.array([e[1] - e[0] for e in edges])
    # fine sample of each tile including its boundary, evaluated in one batch
    u = np.linspace(0.0, 1.0, fine)
    pts = [(e[:-1, None] + (e[1] - e[0]) * u[None, :]).ravel() for e in edges]
    P = np.stack(np.meshgrid(*pts, indexing="ij"), axis=-1)
    L = g.local_lipschitz(normalize(P))
    L = L.reshape(sum(((tiles, fine) for _ in range(m)), ()))
    # move the fine axes to the end and reduce over them
    L = L.transpose(tuple(range(0, 2 * m, 2)) + tuple(range(1, 2 * m, 2)))
    Lmax_tile = L.reshape((tiles,) * m + (-1,)).max(axis=-1)
    hits = Lmax_tile >= lambda_u
    if not hits.any():
        return np.zeros((0, m)), np.zeros((0, m)), float("nan"), None
    # one-tile dilation guards against level-set pieces between samples
    dil = hits.copy()
    for shift in itertools.product((-1, 0, 1), repeat=m):
        dil |= np.roll(hits, shift, axis=tuple(range(m))) & _no_wrap(hits.shape, shift)
    centers, halfs = [], []
    for tidx in zip(*np.nonzero(dil)):
        centers.append([edges[ax][t] + 0.5 * widths[ax] for ax, t in enumerate(tidx)])
        halfs.append(list(0.5 * widths))
    Lmax = _refine_max(g, P.reshape(-1, m), L.reshape(-1), float(Lmax_tile[dil].max()))
    lo = np.array([e[0] for e in edges])
    sat = dil.astype(np.int64)
    for ax in range(m):
        sat = np.cumsum(sat, axis=ax)
    sat = np.pad(sat, [(1, 0)] * m)
    return np.array(centers), np.array(halfs), Lmax, (lo, widths, sat)


def _in_tiles(x, pad, lo, widths, sat):
    """Does the pad-box around x meet a marked tile?  Uses a summed-area table."""
    m = lo.size
    n = sat.shape[0] - 1
    u = centered(x)
    a = np.floor((u - pad - lo) / widths - 1e-9).astype(np.int64)
    b = np.floor((u + pad - lo) / widths + 1e-9).astype(np.int64)
    valid = np.all((b >= 0) & (a < n), axis=-1)
    a = np.clip(a, 0, n - 1)
    b = np.clip(b, 0, n - 1) + 1
    total = np.zeros(x.shape[:-1], dtype=np.int64)
    # inclusion-exclusion over the 2^m corners of the index box
    for corner in itertools.product((0, 1), repeat=m):
        idx = tuple(np.where(c, b[..., i], a[..., i]) for i, c in enumerate(corner))
        sign = (-1) ** (m - sum(corner))
        total = total + sign * sat[idx]
    return valid & (total > 0)


def _refine_max(g, P, L, Lmax, starts=8):
    """Polish the sampled maximum of L by local search from the best samples."""
    from scipy.optimize import minimize

    best = Lmax
    for i in np.argsort(L)[-starts:]:
        res = minimize(lambda z: -float(g.local_lipschitz(normalize(z[None, :]))[0]), P[i],
                       method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14})
        best = max(best, -float(res.fun))
    return best


def _no_wrap(shape, shift):
    mask = np.ones(shape, dtype=bool)
    for ax, sh in enumerate(shift):
        sl = [slice(None)] * len(shape)
        if sh == 1:
            sl[ax] = 0
            mask[tuple(sl)] = False
        elif sh == -1:
            sl[ax] = -1
            mask[tuple(sl)] = False
    return mask


def _omega_symbols(g, centers, halfs, per_axis=16):
    u = np.linspace(-1.0, 1.0, per_axis)
    grid = np.stack(np.meshgrid(*([u] * g.m), indexing="ij"), axis=-1).reshape(-1, g.m)
    P = centers[:, None, :] + halfs[:, None, :] * grid[None, :, :]
    sym = g.branch_symbols(normalize(P)).reshape(-1, g.m)
    return [tuple(int(v) for v in row) for row in np.unique(sym, axis=0)]


# ---------------------------------------------------------------------------
# hypothesis verification
# ---------------------------------------------------------------------------


def _sample_grid(m, per_axis):
    u = (np.arange(per_axis) + 0.5) / per_axis
    return np.stack(np.meshgrid(*([u] * m), indexing="ij"), axis=-1).reshape(-1, m)


def _covers(points, eps, m):
    """True if every eps-cell of the torus holds an image point (implies eps-density)."""
    nb = int(math.ceil(1.0 / eps))
    cells = np.floor(normalize(points) * nb).astype(np.int64)
    cells = np.minimum(cells, nb - 1)
    flat = np.ravel_multi_index(tuple(cells.T), (nb,) * m)
    return np.unique(flat).size == nb**m


def exactness_partition_time(g: BaseMap, eps=0.01, n_max=30, per_axis=None):
    """Smallest n such that g^n of every partition element is eps-dense."""
    m = g.m
    per_axis = per_axis or (int(8 / eps) if m == 1 else int(min(600, 4 / eps)))
    P = _sample_grid(m, per_axis)
    idx = g.branch_index(P)
    worst = 0
    for b in range(g.deg):
        X = P[idx == b]
        n = 0
        while not _covers(X, eps if m == 1 else max(eps, 0.05), m):
            n += 1
            if n > n_max:
                return n_max + 1
            X = g.eval(X)
        worst = max(worst, n)
    return worst


def exactness_ball_time(g: BaseMap, radius=0.05, eps=0.05, n_max=40, samples=4000):
    """Smallest n such that g^n of every ball of a net is eps-dense (stronger proxy)."""
    m = g.m
    spacing = 2 * radius
    centers = _sample_grid(m, int(round(1 / spacing)))
    per = int(round(samples ** (1.0 / m)))
    offs = (_sample_grid(m, per) - 0.5) * 2 * radius
    worst = 0
    for c in centers:
        X = normalize(c + offs)
        n = 0
        while not _covers(X, eps, m):
            n += 1
            if n > n_max:
                return n_max + 1
            X = g.eval(X)
        worst = max(worst, n)
    return worst


def verify_base_hypotheses(g: BaseMap, profile: ExpansionProfile, eps=0.01, n_max=30,
                           grid=None) -> HypothesisReport:
    rep = HypothesisReport()
    m = g.m
    per_axis = grid or (100_000 if m == 1 else 400)
    X = _sample_grid(m, per_axis)
    if g.perturbed and m > 1:
        # densify around the deformation support
        axes = [np.linspace(-r, r, 301) for r in g.radii]
        X = np.concatenate([X, normalize(np.stack(np.meshgrid(*axes, indexing="ij"),
                                                  axis=-1).reshape(-1, m))])
    L = g.local_lipschitz(X)
    inside = profile.in_omega(X)

    off = L[~inside]
    margin_off = float(profile.lambda_u - off.max()) if off.size else float("inf")
    rep.add("H1_off_omega", off.max() if off.size else float("nan"), profile.lambda_u,
            margin_off, margin_off > 0, "max L(x) outside Omega must stay below lambda_u")

    if profile.empty:
        rep.add("H1_in_omega", float("nan"), float("nan"), float("inf"), True,
                "Omega empty: vacuous")
        rep.add("H1_L_gt_1", float("nan"), 1.0, float("inf"), True, "Omega empty: vacuous")
    else:
        on = L[inside]
        mx = float(on.max()) if on.size else float("-inf")
        rep.add("H1_in_omega", mx, profile.L_global, profile.L_global - mx,
                mx <= profile.L_global)
        rep.add("H1_L_gt_1", profile.L_global, 1.0, profile.L_global - 1.0,
                profile.L_global > 1.0)

    rep.add("H2_q_lt_deg", profile.q, g.deg, g.deg - profile.q, profile.q < g.deg)

    det = g.det_jacobian(X)
    rep.add("local_diffeo", float(det.min()), 0.0, float(det.min()), bool(det.min() > 0))

    n_part = exactness_partition_time(g, eps=eps, n_max=n_max)
    rep.add("exactness_partition", n_part, n_max, n_max - n_part, n_part <= n_max,
            f"smallest n with g^n(Q_i) {eps}-dense for every partition element")
    n_ball = exactness_ball_time(g, n_max=n_max)
    rep.add("exactness_balls", n_ball, n_max, n_max - n_ball, n_ball <= n_max,
            "smallest n with g^n(B) 0.05-dense for a net of radius-0.05 balls")
    return rep
