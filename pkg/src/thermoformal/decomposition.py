"""Orbit segments, the good/bad collections and what can be done with them.

An orbit segment (x, n) carries the bits chi(pi f^i x) for i < n, where chi is
the indicator of the rho-thickened expansion region.  With a threshold alpha:

* the bad collection S holds segments whose bit fraction is >= alpha;
* the good collection G holds segments all of whose suffixes have bit
  fraction < alpha (and the empty segment).

Every segment splits as a maximal good prefix followed by a bad suffix.
Good segments can be glued (specification) and have contracting backward
branches, which :func:`contraction_bound_check` tests pointwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .base_dynamics import ConfigError, centered, normalize, torus_distance
from .reports import HypothesisReport
from .solenoid import TWO_PI, SkewProduct, SolenoidPoint, holonomy_constant


class GlueError(RuntimeError):
    """Specification gluing could not be completed."""


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------


def eq1_bound(L: float, lambda_u: float) -> float:
    """Largest admissible alpha: log lambda_u / (log lambda_u - log L)."""
    if not (L > 1):
        return 1.0
    return math.log(lambda_u) / (math.log(lambda_u) - math.log(L))


def theta_alpha(L: float, lambda_u: float, alpha: float) -> float:
    """Contraction rate L^alpha lambda_u^(1-alpha) of backward branches along good segments."""
    if not 0 <= alpha < 1:
        raise ValueError("alpha must lie in [0, 1)")
    if not 0 < lambda_u < 1:
        raise ValueError("lambda_u must lie in (0, 1)")
    if math.isnan(L):
        # empty expansion region: only the off-region contraction is left
        return lambda_u
    if alpha >= eq1_bound(L, lambda_u):
        raise ValueError("theta >= 1: alpha too large")
    return math.exp(alpha * math.log(L) + (1 - alpha) * math.log(lambda_u))


@dataclass(frozen=True)
class DecompositionParams:
    alpha: float
    rho: float
    L_global: float
    lambda_u: float
    lambda_s: float
    theta: float = field(init=False)

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.rho <= 0:
            raise ConfigError("rho must be positive")
        object.__setattr__(self, "theta", theta_alpha(self.L_global, self.lambda_u, self.alpha))

    @classmethod
    def from_skew(cls, f: SkewProduct, alpha: float) -> "DecompositionParams":
        p = f.profile
        return cls(alpha, p.rho, p.L_global, p.lambda_u, f.lambda_s)

    @property
    def eq1_bound(self) -> float:
        return eq1_bound(self.L_global, self.lambda_u)


# ---------------------------------------------------------------------------
# itineraries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OrbitSegment:
    start: SolenoidPoint | None
    length: int
    itinerary: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.itinerary, dtype=np.int8).reshape(-1)
        if bits.size != self.length:
            raise ValueError("itinerary length must equal the segment length")
        object.__setattr__(self, "itinerary", bits)


def base_orbit(f: SkewProduct, base, n):
    """Bases pi f^i x for i = 0..n (n + 1 points)."""
    out = np.empty(np.shape(base)[:-1] + (n + 1, f.m))
    b = np.asarray(base, dtype=float)
    out[..., 0, :] = b
    for i in range(n):
        b = f.g.eval(b)
        out[..., i + 1, :] = b
    return out


def itinerary_of(f: SkewProduct, base, n):
    orb = base_orbit(f, base, max(n - 1, 0))[..., :n, :]
    return f.profile.in_omega_rho(orb).astype(np.int8)


def make_segment(f: SkewProduct, p: SolenoidPoint, n: int) -> OrbitSegment:
    return OrbitSegment(p, n, itinerary_of(f, p.base, n))


def _bits(seg):
    return seg.itinerary if isinstance(seg, OrbitSegment) else np.asarray(seg, dtype=np.int8)


def birkhoff_fraction(seg) -> float:
    bits = _bits(seg)
    if bits.size == 0:
        raise ValueError("beta is undefined for the empty segment")
    return float(bits.sum()) / bits.size


def in_good(bits, alpha: float) -> bool:
    """Every suffix has bit fraction < alpha (right-to-left scan)."""
    total = 0
    n = len(bits)
    for j in range(1, n + 1):
        total += int(bits[n - j])
        # compare averages, not alpha * j: 3 / 5 rounds to the same float as 0.6
        if total / j >= alpha:
            return False
    return True


def classify_segment(seg, params_or_alpha) -> dict:
    alpha = getattr(params_or_alpha, "alpha", params_or_alpha)
    bits = _bits(seg)
    in_S = bits.size > 0 and bits.sum() / bits.size >= alpha
    return {"in_S": bool(in_S), "in_G": in_good(bits, alpha)}


def decompose(seg, params_or_alpha, f: SkewProduct | None = None):
    """(s, prefix, suffix) with s maximal such that the length-s prefix is good.

    For an OrbitSegment the suffix starts at f^s x, which needs ``f``; without
    it the suffix start is left as None.
    """
    alpha = getattr(params_or_alpha, "alpha", params_or_alpha)
    bits = _bits(seg)
    n = bits.size
    s = 0
    for cand in range(n, -1, -1):
        if in_good(bits[:cand], alpha):
            s = cand
            break
    if not isinstance(seg, OrbitSegment):
        return s, bits[:s], bits[s:]
    start = seg.start
    if f is not None and start is not None:
        for _ in range(s):
            start = f.eval(start)
    elif s > 0:
        start = None
    return s, OrbitSegment(seg.start, s, bits[:s]), OrbitSegment(start, n - s, bits[s:])


def good_prefix_table(W: np.ndarray, alpha: float) -> np.ndarray:
    """G[w, s] = prefix of length s of word w is good, for a (words, n) 0/1 array."""
    W = np.asarray(W, dtype=np.int64)
    num, n = W.shape
    cs = np.concatenate([np.zeros((num, 1), np.int64), np.cumsum(W, axis=1)], axis=1)
    G = np.ones((num, n + 1), dtype=bool)
    for s in range(1, n + 1):
        j = np.arange(1, s + 1)
        suffix = cs[:, s][:, None] - cs[:, s - j]
        G[:, s] = np.all(suffix / j[None, :] < alpha, axis=1)
    return G


def good_table(W: np.ndarray, alpha: float) -> np.ndarray:
    """T[w, a, b] = subword [a, b) of w is good (b >= a)."""
    W = np.asarray(W, dtype=np.int64)
    num, n = W.shape
    cs = np.concatenate([np.zeros((num, 1), np.int64), np.cumsum(W, axis=1)], axis=1)
    T = np.zeros((num, n + 1, n + 1), dtype=bool)
    for a in range(n + 1):
        T[:, a, a] = True
        # subword [a, b) is good iff every suffix [b - j, b) with j <= b - a is below alpha
        for b in range(a + 1, n + 1):
            j = np.arange(1, b - a + 1)
            suffix = cs[:, b][:, None] - cs[:, b - j]
            T[:, a, b] = np.all(suffix / j[None, :] < alpha, axis=1)
    return T


def all_words(n: int) -> np.ndarray:
    if n == 0:
        return np.zeros((1, 0), dtype=np.int8)
    idx = np.arange(2**n)[:, None]
    return ((idx >> np.arange(n - 1, -1, -1)[None, :]) & 1).astype(np.int8)


def check_concatenation_words(W: np.ndarray, alpha: float) -> tuple[int, list]:
    """Check (x, a) good and (f^a x, b - a) good imply (x, b) good on every cut."""
    T = good_table(W, alpha)
    n = W.shape[1]
    checked = 0
    bad = []
    for a in range(n + 1):
        for b in range(a, n + 1):
            premise = T[:, 0, a] & T[:, a, b]
            checked += int(premise.sum())
            viol = premise & ~T[:, 0, b]
            for w in np.flatnonzero(viol)[:5]:
                bad.append("".join(map(str, W[w, :b])))
    return checked, bad


def check_decomposition_words(W: np.ndarray, alpha: float) -> tuple[int, list]:
    """decompose returns maximal s with good prefix and bad-or-empty suffix, for every word."""
    n = W.shape[1]
    G = good_prefix_table(W, alpha)
    bad = []
    for w in range(W.shape[0]):
        s, pre, suf = decompose(W[w], alpha)
        ok = G[w, s] and not G[w, s + 1:].any()
        if suf.size:
            ok = ok and suf.sum() / suf.size >= alpha
        if not ok:
            bad.append("".join(map(str, W[w])))
    return W.shape[0], bad


def check_concatenation(f: SkewProduct | None, params, num_samples: int = 10_000, seed: int = 0,
                        max_len: int = 64, words: np.ndarray | None = None) -> HypothesisReport:
    """Concatenation closure of G on sampled (or supplied) itineraries."""
    alpha = getattr(params, "alpha", params)
    rep = HypothesisReport()
    if words is None:
        gen = _rng.stream(seed, "decomposition.concatenation")
        lens = gen.integers(1, max_len + 1, size=num_samples)
        checked, bad = 0, []
        if f is not None and not f.profile.empty:
            S = f.attractor_sample(20, num_samples, seed, keep_past=False)
            for L_ in np.unique(lens):
                sel = np.flatnonzero(lens == L_)
                W = itinerary_of(f, S.base[sel], int(L_))
                c, b = check_concatenation_words(W, alpha)
                checked, bad = checked + c, bad + b
        else:
            # biased random words reach both collections
            for L_ in np.unique(lens):
                sel = int(np.sum(lens == L_))
                p = gen.random((sel, 1))
                W = (gen.random((sel, int(L_))) < p).astype(np.int8)
                c, b = check_concatenation_words(W, alpha)
                checked, bad = checked + c, bad + b
    else:
        checked, bad = check_concatenation_words(words, alpha)
    rep.add("concatenation_counterexamples", len(bad), 0, -len(bad), not bad,
            f"{checked} premises checked" + (f"; first: {bad[0]}" if bad else ""))
    rep.extras["checked"] = checked
    rep.extras["counterexamples"] = bad[:10]
    return rep


# ---------------------------------------------------------------------------
# specification
# ---------------------------------------------------------------------------


@dataclass
class GlueResult:
    z: SolenoidPoint
    transitions: np.ndarray
    tau_bound: int
    shadow_errors: np.ndarray
    offsets: np.ndarray
    orbit_base: np.ndarray = field(repr=False)
    orbit_fiber: np.ndarray = field(repr=False)
    step_error: float = 0.0
    tau_base_bound: int = 0
    tau_s: int = 0
    delta: float = 0.0

    def to_json(self) -> dict:
        return {
            "z_base": self.z.base.tolist(),
            "z_fiber": [[float(c.real), float(c.imag)] for c in self.z.fiber],
            "transitions": self.transitions.tolist(),
            "tau_bound": int(self.tau_bound),
            "tau_base_bound": int(self.tau_base_bound),
            "tau_s": int(self.tau_s),
            "offsets": self.offsets.tolist(),
            "shadow_errors": self.shadow_errors.tolist(),
            "step_error": float(self.step_error),
        }


def injectivity_radius(f: SkewProduct) -> float:
    """delta_0: below rho (when the expansion region is nonempty) and half a partition width."""
    g = f.g
    # the deformed branch widths differ little from the linear ones; sample them
    s = np.linspace(-0.5, 0.5, 20001)
    widths = [0.5 / k for k in g.k]
    if g.perturbed:
        bo = np.ones_like(s)
        T = g.lift_axis(s, bo)
        cuts = s[np.flatnonzero(np.diff(np.floor(T + 0.5)))]
        if cuts.size > 1:
            widths.append(0.5 * float(np.min(np.diff(cuts))))
    d0 = min(widths)
    if not f.profile.empty:
        d0 = min(d0, f.profile.rho)
    return d0


def guided_transitions(g, Y, A, delta: float, t_max: int = 24, per_axis: int | None = None):
    """For each centre Y[p] and target A[p, j] find t and v in B_delta(Y[p]) with g^t(v) = A[p, j].

    The delta-ball is sampled on a grid and pushed forward; at each t the
    target is pulled back along the inverse branches followed by the sample
    whose image is closest to it.  The pair is resolved at the first t for
    which the pulled-back point lands in the ball.  Returns the times (-1 when
    unresolved) and the chains v = c[0] -> ... -> c[t] = target.
    """
    m = g.m
    Y = np.asarray(Y, dtype=float)
    A = np.asarray(A, dtype=float)
    P, T = A.shape[0], A.shape[1]
    per_axis = per_axis or (256 if m == 1 else 32)
    u = (np.arange(per_axis) + 0.5) / per_axis * 2 - 1
    O = 0.95 * delta * np.stack(np.meshgrid(*([u] * m), indexing="ij"), -1).reshape(-1, m)
    X = normalize(Y[:, None, :] + O[None])                   # (P, S, m)
    hist = [X]
    times = np.full((P, T), -1, dtype=np.int64)
    chains: dict = {}
    for t in range(t_max + 1):
        if t > 0:
            X = g.eval(X)
            hist.append(X)
        todo = np.argwhere(times < 0)
        if todo.size == 0:
            break
        pp, jj = todo[:, 0], todo[:, 1]
        d = torus_distance(hist[t][pp], A[pp, jj][:, None, :])  # (Q, S)
        best = np.argmin(d, axis=1)
        cur = A[pp, jj]
        chain = [cur]
        for i in range(t - 1, -1, -1):
            cur, _ = g.nearest_preimage(cur, hist[i][pp, best])
            chain.append(cur)
        ok = torus_distance(cur, Y[pp]) <= delta
        for q in np.flatnonzero(ok):
            times[pp[q], jj[q]] = t
            chains[(int(pp[q]), int(jj[q]))] = np.array([c[q] for c in chain[::-1]])
    return times, chains


def transition_time_bound(f: SkewProduct, delta: float, seed: int = 0, centers: int | None = None,
                          targets: int = 8, t_max: int = 24) -> int:
    """Largest guided transition time over a net of delta-balls and random targets."""
    g = f.g
    m = g.m
    centers = centers or (64 if m == 1 else 16)
    gen = _rng.stream(seed, "decomposition.tau")
    u = np.arange(centers) / centers
    Y = np.stack(np.meshgrid(*([u] * m), indexing="ij"), -1).reshape(-1, m)
    A = gen.random((Y.shape[0], targets, m))
    times, _ = guided_transitions(g, Y, A, delta, t_max)
    if np.any(times < 0):
        raise GlueError(f"some delta-ball does not cover the torus within {t_max} steps")
    return int(times.max())


class Gluer:
    """Reusable specification machinery for one skew product and scale."""

    def __init__(self, f: SkewProduct, eps: float, fiber: bool = True, C: float | None = None,
                 seed: int = 0):
        self.f = f
        self.eps = float(eps)
        self.fiber = fiber
        lam = f.lambda_s
        self.delta0 = injectivity_radius(f)
        if self.eps > 0.5:
            raise GlueError("eps above the injectivity scale")
        if fiber:
            self.delta = min(self.eps * (1 - lam) / TWO_PI, self.delta0)
            if C is None:
                S = f.attractor_sample(60, 4000, seed)
                C = holonomy_constant(f, S.base[:2000], S.fiber[:2000], S.past[:2000],
                                      S.base[2000:], S.fiber[2000:])
            self.C = float(C)
            self.tau_s = max(0, math.ceil(math.log(2 * self.C / self.eps) / math.log(1 / lam)))
        else:
            self.delta = min(self.eps, self.delta0)
            self.C = 1.0 if C is None else float(C)
            self.tau_s = 0
        self.tau_base = transition_time_bound(f, self.delta, seed=seed)
        self.tau_bound = self.tau_base + self.tau_s
        self.t_max = 2 * self.tau_base + 4

    # -- helpers ------------------------------------------------------------

    def _pull_back(self, end, ref):
        """Preimage chain of ``end`` following reference points ref[-1], ref[-2], ... ."""
        g = self.f.g
        out = np.empty_like(ref)
        cur = end
        for i in range(ref.shape[0] - 1, -1, -1):
            pre = g.inverse_branches(cur)
            d = torus_distance(pre, ref[i][None, :])
            dd = np.sort(d)
            if dd.size > 1 and dd[0] > 0.5 * dd[1]:
                raise GlueError("pullback ball escapes the injectivity domain (eps above delta_0)")
            cur = pre[int(np.argmin(d))]
            out[i] = cur
        return out

    def _transition(self, a, y):
        """Chain v -> ... -> a with d(v, y) <= delta, found by the guided search."""
        times, chains = guided_transitions(self.f.g, y[None, :], a[None, None, :], self.delta,
                                           self.t_max)
        if times[0, 0] < 0:
            raise GlueError(f"transition search exhausted tau_max={self.t_max} (delta={self.delta:g})")
        return int(times[0, 0]), chains[(0, 0)]

    # -- main ---------------------------------------------------------------

    def glue(self, segments: list[OrbitSegment], alpha: float | None = None) -> GlueResult:
        f = self.f
        if not segments:
            raise ValueError("need at least one segment")
        if alpha is not None:
            for s in segments:
                if not in_good(s.itinerary, alpha):
                    raise ValueError("specification is only claimed for good segments")
        k = len(segments)
        orbits = [base_orbit(f, s.start.base, s.length) for s in segments]   # (n_j + 1, m)
        for s in segments:
            if self.fiber and (s.start.past is None or s.start.past.shape[0] < self.tau_s):
                raise GlueError("fiber alignment needs a backward history of length tau_s")

        # backwards: build the chain for the last segment, then prepend
        last = segments[-1]
        pieces: list[np.ndarray] = [orbits[-1]]           # forward order
        ext = last.start.past[: self.tau_s][::-1] if self.tau_s else np.zeros((0, f.m))
        head = ext[0] if self.tau_s else orbits[-1][0]
        transitions = []
        if self.tau_s:
            pieces.insert(0, ext)
        for j in range(k - 2, -1, -1):
            seg = segments[j]
            y_end = orbits[j][-1]
            t, path = self._transition(head, y_end)
            v = path[0]
            chain = self._pull_back(v, orbits[j][:-1])             # times 0..n_j-1
            # path[:-1] runs from v (time n_j) up to, not including, head
            pieces.insert(0, np.concatenate([chain, path[:-1]]))
            transitions.insert(0, t + self.tau_s)
            if self.tau_s:
                ext = self._pull_back(chain[0], seg.start.past[: self.tau_s][::-1])
                pieces.insert(0, ext)
                head = ext[0]
            else:
                head = chain[0]
        orbit = np.concatenate([p for p in pieces if p.size], axis=0)
        n0 = self.tau_s
        # history before time 0 follows the first segment's own past
        hist_ref = segments[0].start.past
        if hist_ref is not None and hist_ref.shape[0] > self.tau_s:
            rest = hist_ref[self.tau_s:]
            start = orbit[0]
            past_ext = self._pull_back(start, rest[::-1])[::-1] if rest.shape[0] else rest
        else:
            past_ext = np.zeros((0, f.m))
        # forward fiber along the whole chain; starting from 0 at the earliest
        # history point costs lambda_s^depth
        full = np.concatenate([past_ext[::-1], orbit], axis=0)
        fib = np.zeros((full.shape[0], f.m), dtype=complex)
        for t in range(1, full.shape[0]):
            fib[t] = f.lambda_s * fib[t - 1] + f.scale * np.exp(1j * TWO_PI * full[t - 1])
        off_hist = past_ext.shape[0]
        steps = torus_distance(f.g.eval(full[:-1]), full[1:])
        step_error = float(steps.max()) if steps.size else 0.0

        offsets = [0]
        for j in range(k - 1):
            offsets.append(offsets[-1] + segments[j].length + transitions[j])
        offsets = np.array(offsets)
        errs = []
        for j, seg in enumerate(segments):
            xb, xz = seg.start.base, seg.start.fiber
            worst = 0.0
            for mm in range(seg.length + 1):
                tt = off_hist + n0 + offsets[j] + mm
                d = f.distance(xb, xz, full[tt], fib[tt]) if self.fiber else torus_distance(xb, full[tt])
                worst = max(worst, float(d))
                xb, xz = f.step(xb, xz)
            errs.append(worst)
        zpt = SolenoidPoint(full[off_hist + n0], fib[off_hist + n0],
                            full[: off_hist + n0][::-1].copy())
        return GlueResult(zpt, np.array(transitions, dtype=int), self.tau_bound, np.array(errs),
                          offsets, full[off_hist + n0:], fib[off_hist + n0:], step_error,
                          self.tau_base, self.tau_s, self.delta)


def specification_glue(f: SkewProduct, segments: list[OrbitSegment], eps: float,
                       fiber: bool = True, alpha: float | None = None, gluer: Gluer | None = None
                       ) -> GlueResult:
    if len(segments) == 1 and gluer is None:
        seg = segments[0]
        orb = base_orbit(f, seg.start.base, seg.length)
        fib = [seg.start.fiber]
        for i in range(seg.length):
            fib.append(f.step(orb[i], fib[-1])[1])
        return GlueResult(seg.start, np.zeros(0, int), 0, np.zeros(1), np.zeros(1, int), orb,
                          np.array(fib))
    gl = gluer or Gluer(f, eps, fiber=fiber)
    return gl.glue(segments, alpha=alpha)


def verify_glue(f: SkewProduct, res: GlueResult, segments: list[OrbitSegment], eps: float,
                fiber: bool = True, step_tol: float = 1e-9) -> dict:
    """Recompute every shadow distance from the stored orbit of the glued point."""
    ok_steps = torus_distance(f.g.eval(res.orbit_base[:-1]), res.orbit_base[1:])
    errs = []
    for j, seg in enumerate(segments):
        xb, xz = seg.start.base, seg.start.fiber
        worst = 0.0
        for mm in range(seg.length + 1):
            t = res.offsets[j] + mm
            if fiber:
                d = f.distance(xb, xz, res.orbit_base[t], res.orbit_fiber[t])
            else:
                d = torus_distance(xb, res.orbit_base[t])
            worst = max(worst, float(d))
            xb, xz = f.step(xb, xz)
        errs.append(worst)
    errs = np.array(errs)
    return {
        "max_shadow_error": float(errs.max()),
        "step_error": float(ok_steps.max()) if ok_steps.size else 0.0,
        "tau_ok": bool(np.all(res.transitions <= res.tau_bound)),
        "pass": bool(errs.max() <= eps and (ok_steps.size == 0 or ok_steps.max() <= step_tol)
                     and np.all(res.transitions <= res.tau_bound)),
    }


# ---------------------------------------------------------------------------
# Bowen balls along good segments
# ---------------------------------------------------------------------------


@dataclass
class BowenPairs:
    """Pairs (x, y) with y in the n-th Bowen ball of x, with both orbits stored."""

    n: np.ndarray            # (P,)
    kind: np.ndarray         # (P,) 0 fiber, 1 base, 2 mixed
    xb: np.ndarray           # (P, N + 1, m) base orbit of x (padded past n)
    xz: np.ndarray           # (P, N + 1, m) fiber orbit of x
    yb: np.ndarray
    yz: np.ndarray


def sample_good_segments(f: SkewProduct, alpha: float, count: int, n_max: int, seed: int,
                         n_min: int = 1, burn_in: int = 60, n_values=None):
    """Attractor points x and lengths n with (x, n) in the good collection."""
    gen = _rng.stream(seed, "decomposition.good_segments")
    got_b, got_z, got_p, got_n = [], [], [], []
    round_ = 0
    need = count
    while need > 0 and round_ < 20:
        S = f.attractor_sample(burn_in, 2 * need + 16, seed + 7919 * round_)
        if n_values is None:
            ns = gen.integers(n_min, n_max + 1, size=len(S))
        else:
            ns = np.resize(np.asarray(n_values), len(S))
        for n in np.unique(ns):
            sel = np.flatnonzero(ns == n)
            bits = itinerary_of(f, S.base[sel], int(n))
            G = good_prefix_table(bits, alpha)[:, -1]
            keep = sel[G]
            got_b.append(S.base[keep]); got_z.append(S.fiber[keep]); got_p.append(S.past[keep])
            got_n.append(np.full(keep.size, n))
        need = count - sum(x.shape[0] for x in got_b)
        round_ += 1
    b = np.concatenate(got_b)[:count]
    z = np.concatenate(got_z)[:count]
    p = np.concatenate(got_p)[:count]
    n = np.concatenate(got_n)[:count]
    return b, z, p, n


def bowen_pairs(f: SkewProduct, alpha: float, eta: float, count: int, n_max: int, seed: int,
                n_values=None) -> BowenPairs:
    """y in B_n(x, eta) built in the ratio fiber : base-pullback : mixed = 1 : 1 : 2.

    The base perturbation is placed at time n and pulled back along the orbit
    of x through the matching inverse branches; the fiber perturbation is
    placed at time 0.  Pairs leaving the Bowen ball are shrunk and retried.
    """
    gen = _rng.stream(seed, "decomposition.bowen_pairs")
    xb0, xz0, _, ns = sample_good_segments(f, alpha, count, n_max, seed, n_values=n_values)
    P = xb0.shape[0]
    N = int(ns.max())
    m = f.m
    kind = np.resize(np.array([0, 1, 2, 2]), P)
    gen.shuffle(kind)
    xb = base_orbit(f, xb0, N)
    xz = np.empty(xb.shape, dtype=complex)
    xz[:, 0] = xz0
    for i in range(N):
        xz[:, i + 1] = f.step(xb[:, i], xz[:, i])[1]
    yb = np.empty_like(xb)
    yz = np.empty_like(xz)
    scale = np.full(P, 0.9)
    db = (gen.random((P, m)) * 2 - 1)
    ang = gen.random((P, m))
    rad = np.sqrt(gen.random((P, m)))
    dz = rad * np.exp(1j * TWO_PI * ang)
    for attempt in range(30):
        use_b = (kind >= 1)[:, None] * db * (eta * scale)[:, None]
        use_z = (kind != 1)[:, None] * dz * (eta * scale)[:, None]
        # base: pull back the perturbed time-n point along x's orbit
        end = normalize(xb[np.arange(P), ns] + use_b)
        cur = end
        chain = np.empty_like(xb)
        for i in range(N, -1, -1):
            # points with n < i are simply carried at their own time-n value
            active = ns >= i
            if i == N:
                chain[:, i] = np.where(active[:, None], cur, xb[:, i])
                continue
            pre, _ = f.g.nearest_preimage(cur, xb[:, i])
            cur = np.where((ns > i)[:, None], pre, np.where((ns == i)[:, None], end, cur))
            chain[:, i] = cur
        # beyond time n follow g forward
        for i in range(N):
            late = ns <= i
            if late.any():
                chain[late, i + 1] = f.g.eval(chain[late, i])
        yb[:] = chain
        yz[:, 0] = xz[:, 0] + use_z
        for i in range(N):
            yz[:, i + 1] = f.step(yb[:, i], yz[:, i])[1]
        d = f.distance(xb, xz, yb, yz)                          # (P, N + 1)
        inside = np.array([d[p, : ns[p]].max() < eta if ns[p] > 0 else True for p in range(P)])
        if inside.all():
            break
        scale = np.where(inside, scale, scale * 0.5)
    keep = inside
    return BowenPairs(ns[keep], kind[keep], xb[keep], xz[keep], yb[keep], yz[keep])


def contraction_bound_check(f: SkewProduct, params: DecompositionParams, eta: float = 0.01,
                            num_samples: int = 1000, seed: int = 0, n_max: int = 20,
                            C: float | None = None) -> HypothesisReport:
    """d(f^k x, f^k y) <= C eta (theta^(n-k) + lambda_s^k) for y in B_n(x, eta), k = 0..n."""
    if C is None:
        S = f.attractor_sample(60, 4000, seed)
        C = holonomy_constant(f, S.base[:2000], S.fiber[:2000], S.past[:2000],
                              S.base[2000:], S.fiber[2000:])
    bp = bowen_pairs(f, params.alpha, eta, num_samples, n_max, seed)
    th, lam = params.theta, f.lambda_s
    worst = 0.0
    violations = 0
    for p in range(bp.n.size):
        n = int(bp.n[p])
        k = np.arange(n + 1)
        lhs = f.distance(bp.xb[p, : n + 1], bp.xz[p, : n + 1], bp.yb[p, : n + 1], bp.yz[p, : n + 1])
        rhs = C * eta * (th ** (n - k) + lam**k)
        r = lhs / rhs
        worst = max(worst, float(r.max()))
        violations += int(np.sum(lhs > rhs))
    rep = HypothesisReport()
    rep.add("contraction_max_ratio", worst, 1.0, 1.0 - worst, worst <= 1.0,
            f"{bp.n.size} pairs, C={C:.4g}, theta={th:.4g}")
    rep.add("contraction_violations", violations, 0, -violations, violations == 0)
    rep.extras.update({"pairs": int(bp.n.size), "C": C, "theta": th, "eta": eta})
    return rep


# ---------------------------------------------------------------------------
# nonexpansive points
# ---------------------------------------------------------------------------


def nonexpansive_scan(f: SkewProduct, eps: float, num_samples: int = 200, horizon: int = 30,
                      seed: int = 0, alpha: float = 0.5, per_axis: int = 4) -> HypothesisReport:
    """Fraction of sampled x having a companion y != x eps-close for all |k| <= horizon.

    Companions come from a grid net of the eps-box around x (base offsets times
    fiber offsets, the zero offset excluded).  Backward orbits of y follow the
    inverse branches nearest to x's backward orbit, and the fiber is pulled
    back by inverting the fiber map along them.
    """
    gen = _rng.stream(seed, "decomposition.nonexpansive")
    m = f.m
    S = f.attractor_sample(max(60, horizon), 4 * num_samples, seed)
    bits = itinerary_of(f, S.base, horizon)
    ok = bits.mean(axis=1) <= alpha
    idx = np.flatnonzero(ok)[:num_samples]
    u = (np.arange(per_axis) + 0.5) / per_axis * 2 - 1
    ub = 0.95 * eps * np.stack(np.meshgrid(*([u] * m), indexing="ij"), -1).reshape(-1, m)
    uz = np.concatenate([[0.0], 0.95 * eps * u])
    offsets_b = np.concatenate([np.zeros((1, m)), ub])
    cand = [(ob, oz) for ob in offsets_b for oz in uz if np.any(ob != 0) or oz != 0]
    survivors = 0
    for i in idx:
        xb0, xz0, xpast = S.base[i], S.fiber[i], S.past[i, :horizon]
        Yb = normalize(xb0[None, :] + np.array([c[0] for c in cand]))
        Yz = xz0[None, :] + np.array([c[1] for c in cand])[:, None] * np.exp(
            1j * TWO_PI * gen.random((len(cand), m)))
        alive = np.ones(len(cand), dtype=bool)
        # forward
        xb, xz, yb, yz = xb0[None, :], xz0[None, :], Yb, Yz
        for _ in range(horizon + 1):
            alive &= f.distance(xb, xz, yb, yz) < eps
            xb, xz = f.step(xb, xz)
            yb, yz = f.step(yb, yz)
        # backward
        yb, yz = Yb, Yz
        xz = xz0
        for j in range(horizon):
            xprev = xpast[j]
            ybp, _ = f.g.nearest_preimage(yb, np.broadcast_to(xprev, yb.shape))
            yz = (yz - f.scale * np.exp(1j * TWO_PI * ybp)) / f.lambda_s
            xz = (xz - f.scale * np.exp(1j * TWO_PI * xprev)) / f.lambda_s
            yb = ybp
            alive &= f.distance(xprev[None, :], xz[None, :], yb, yz) < eps
        survivors += int(alive.any())
    frac = survivors / max(len(idx), 1)
    rep = HypothesisReport()
    rep.add("nonexpansive_survival_fraction", frac, 0.0, -frac, frac == 0.0,
            f"{len(idx)} samples, eps={eps}, horizon={horizon}")
    rep.extras.update({"samples": int(len(idx)), "survivors": survivors})
    return rep
