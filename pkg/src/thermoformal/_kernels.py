"""Compiled scalar kernels for the deformed coordinate of the pitchfork map."""

from __future__ import annotations

import math

import numba as nb
import numpy as np

TWO_PI = 2.0 * math.pi


@nb.njit(cache=True)
def _psi(t):
    return math.exp(-1.0 / t) if t > 0.0 else 0.0


@nb.njit(cache=True)
def _dpsi(t):
    return math.exp(-1.0 / t) / (t * t) if t > 0.0 else 0.0


@nb.njit(cache=True)
def bump1(u, r):
    au = abs(u)
    s = min(max((r - au) / (0.5 * r), 0.0), 1.0)
    a = _psi(s)
    b = _psi(1.0 - s)
    return a / (a + b)


@nb.njit(cache=True)
def dbump1(u, r):
    au = abs(u)
    if au <= 0.5 * r or au >= r:
        return 0.0
    s = (r - au) / (0.5 * r)
    a = _psi(s)
    b = _psi(1.0 - s)
    dbds = (_dpsi(s) * b + a * _dpsi(1.0 - s)) / ((a + b) * (a + b))
    sg = 1.0 if u > 0 else -1.0
    return dbds * (-sg / (0.5 * r))


@nb.njit(cache=True)
def lift1(s, bo, k, c, r):
    return k * s - c * bo * bump1(s, r) * math.sin(TWO_PI * s)


@nb.njit(cache=True)
def dlift1(s, bo, k, c, r):
    return k - c * bo * (dbump1(s, r) * math.sin(TWO_PI * s)
                         + TWO_PI * bump1(s, r) * math.cos(TWO_PI * s))


@nb.njit(cache=True)
def solve_lift(T, bother, k, c, r, max_iter):
    """Solve lift1(s) = T on [-1/2, 1/2] for each entry (monotone increasing lift).

    Safeguarded Newton: a bracket is kept, Newton steps leaving it are
    replaced by bisection.  Returns the roots and a per-entry residual.
    """
    n = T.shape[0]
    out = np.empty(n)
    res = np.empty(n)
    for i in range(n):
        t = T[i]
        bo = bother[i]
        lo, hi = -0.5, 0.5
        s = min(max(t / k, -0.5), 0.5)
        dxold = 1.0
        for _ in range(max_iter):
            F = lift1(s, bo, k, c, r) - t
            if F == 0.0:
                break
            if F < 0.0:
                lo = s
            else:
                hi = s
            dF = dlift1(s, bo, k, c, r)
            s_new = s - F / dF
            # bisect when Newton leaves the bracket or is not halving the step
            if not (lo < s_new < hi) or abs(2.0 * F) > abs(dxold * dF):
                s_new = 0.5 * (lo + hi)
            dxold = s_new - s
            if abs(dxold) <= 1e-17 or hi - lo <= 1e-16:
                s = s_new
                break
            s = s_new
        out[i] = s
        res[i] = abs(lift1(s, bo, k, c, r) - t)
    return out, res


# ---------------------------------------------------------------------------
# (n, eps)-separated sets
# ---------------------------------------------------------------------------
# B is (N, n, m) base orbits, Z is (N, n, 2m) fiber orbits with real and
# imaginary parts interleaved.  cells holds integer cell coordinates of width
# >= eps, so two points closer than eps in d_n sit in neighbouring cells.


@nb.njit(cache=True)
def _close(B, Z, i, j, eps):
    _, n, m = B.shape
    d2 = Z.shape[2]
    eps2 = eps * eps
    for k in range(n):
        for a in range(m):
            d = abs(B[i, k, a] - B[j, k, a])
            d = min(d, 1.0 - d)
            if d >= eps:
                return False
        for a in range(0, d2, 2):
            dx = Z[i, k, a] - Z[j, k, a]
            dy = Z[i, k, a + 1] - Z[j, k, a + 1]
            if dx * dx + dy * dy >= eps2:
                return False
    return True


@nb.njit(cache=True)
def bowen_dist(B, Z, i, j):
    _, n, m = B.shape
    d2 = Z.shape[2]
    out = 0.0
    fz = 0.0
    for k in range(n):
        for a in range(m):
            d = abs(B[i, k, a] - B[j, k, a])
            out = max(out, min(d, 1.0 - d))
        for a in range(0, d2, 2):
            dx = Z[i, k, a] - Z[j, k, a]
            dy = Z[i, k, a + 1] - Z[j, k, a + 1]
            fz = max(fz, dx * dx + dy * dy)
    return max(out, math.sqrt(fz))


@nb.njit(cache=True)
def _key(c, dims):
    key = 0
    for a in range(c.shape[0]):
        key = key * dims[a] + c[a]
    return key


@nb.njit(cache=True)
def _neighbour(c, off, dims, periodic, out):
    """Write the neighbouring cell into out; False when it leaves a non-periodic grid."""
    cc = off
    for a in range(c.shape[0]):
        v = c[a] + cc % 3 - 1
        cc //= 3
        if periodic[a]:
            v %= dims[a]
        elif v < 0 or v >= dims[a]:
            return False
        out[a] = v
    return True


@nb.njit(cache=True)
def _slot(keys, key):
    """Open-addressing probe: slot holding key, or the empty slot where it belongs."""
    mask = np.uint64(keys.shape[0] - 1)
    x = np.uint64(key)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    h = np.int64((x ^ (x >> np.uint64(31))) & mask)
    mask = np.int64(mask)
    while keys[h] != -1 and keys[h] != key:
        h = (h + 1) & mask
    return h


def _table_size(n):
    size = 1
    while size < 2 * max(n, 1):
        size *= 2
    return size


@nb.njit(cache=True)
def _greedy(B, Z, cells, dims, periodic, eps, max_keep, keys, heads):
    N = B.shape[0]
    D = cells.shape[1]
    kept = np.empty(min(N, max_keep), np.int64)
    nk = 0
    nxt = np.full(N, -1, np.int64)
    nb_cell = np.empty(D, np.int64)
    total = 3**D
    scanned = 0
    for i in range(N):
        if nk >= max_keep:
            break
        scanned += 1
        ok = True
        for o in range(total):
            # own cell first: rejections usually happen there
            off = (o + total // 2) % total
            if not _neighbour(cells[i], off, dims, periodic, nb_cell):
                continue
            h = _slot(keys, _key(nb_cell, dims))
            if keys[h] == -1:
                continue
            j = heads[h]
            while j >= 0:
                if _close(B, Z, i, j, eps):
                    ok = False
                    break
                j = nxt[j]
            if not ok:
                break
        if ok:
            key = _key(cells[i], dims)
            h = _slot(keys, key)
            if keys[h] == -1:
                keys[h] = key
            else:
                nxt[i] = heads[h]
            heads[h] = i
            kept[nk] = i
            nk += 1
    return kept[:nk], scanned


def greedy_separated(B, Z, cells, dims, periodic, eps, max_keep):
    """Greedy (n, eps)-separated subset in scan order.  Returns (kept, scanned)."""
    size = _table_size(min(B.shape[0], max_keep))
    keys = np.full(size, -1, np.int64)
    heads = np.full(size, -1, np.int64)
    return _greedy(B, Z, cells, dims, periodic, eps, max_keep, keys, heads)


@nb.njit(cache=True)
def _min_sep(B, Z, cells, dims, periodic, kept, keys, heads):
    D = cells.shape[1]
    nxt = np.full(B.shape[0], -1, np.int64)
    for i in kept:
        key = _key(cells[i], dims)
        h = _slot(keys, key)
        if keys[h] == -1:
            keys[h] = key
        else:
            nxt[i] = heads[h]
        heads[h] = i
    nb_cell = np.empty(D, np.int64)
    best = np.inf
    for i in kept:
        for off in range(3**D):
            if not _neighbour(cells[i], off, dims, periodic, nb_cell):
                continue
            h = _slot(keys, _key(nb_cell, dims))
            if keys[h] == -1:
                continue
            j = heads[h]
            while j >= 0:
                if j != i:
                    best = min(best, bowen_dist(B, Z, i, j))
                j = nxt[j]
    return best


def min_separation(B, Z, cells, dims, periodic, kept):
    """Smallest d_n over kept pairs in neighbouring cells (inf when none)."""
    size = _table_size(kept.size)
    return _min_sep(B, Z, cells, dims, periodic, kept, np.full(size, -1, np.int64),
                    np.full(size, -1, np.int64))
