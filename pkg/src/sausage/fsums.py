"""Lattice sums of products of the kernels G_k.

Every G_k is a time integral of the continuous-time heat kernel, and the
heat kernel is a product of one-dimensional kernels ive(|x_j|, t/d).  A
sum over a box of a product of G's therefore factorises over coordinates
once the time integrals are pulled outside, which turns a d-dimensional
lattice sum into a handful of one-dimensional ones.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate
from scipy.special import ive

from .kernels import _sorted_tuples, check_green, green_GN, green_table


@lru_cache(maxsize=8)
def log_nodes(lo: float, hi: float, width: float, order: int):
    """Gauss-Legendre panels in u = log t; returns t and weights for dt."""
    x, w = leggauss(order)
    ts, ws = [], []
    a = lo
    while a < hi - 1e-12:
        b = min(a + width, hi)
        ts.append(a + (b - a) * (x + 1) / 2)
        ws.append(w * (b - a) / 2)
        a = b
    u = np.concatenate(ts)
    t = np.exp(u)
    return t, np.concatenate(ws) * t


FINE = (-12.0, 12.0, 2.0, 6)
COARSE = (-7.0, 11.0, 3.0, 4)


def _weights(t, w, k):
    return w * t ** (k - 1) / math.factorial(k - 1)


def _q(d, t, lo, hi):
    """q[x - lo, i] = ive(|x|, t_i / d) for x in [lo, hi]."""
    xs = np.arange(lo, hi + 1)
    return ive(np.abs(xs)[:, None], (t / d)[None, :])


def _coord_groups(*shift_vectors):
    """Distinct per-coordinate shift tuples with multiplicities."""
    rows = np.stack([np.asarray(v, dtype=np.int64) for v in shift_vectors], axis=1)
    uniq, counts = np.unique(rows, axis=0, return_counts=True)
    return list(zip(map(tuple, uniq.tolist()), counts.tolist()))


def _check_klm(d, *ks):
    for k in ks:
        if k < 1:
            raise ValueError("kernel orders must be >= 1")
        check_green(d, k)
    if 3 * d <= 2 * sum(ks) + d:
        raise ValueError("summand is not summable for these orders")


def f_klm_box(d: int, k: int, l: int, m: int, z, a, b, R: int, rule=FINE) -> float:
    """sum over |w|_inf <= R of G_k(z - b + w) G_l(w) G_m(a - b + w)."""
    _check_klm(d, k, l, m)
    z, a, b = (np.asarray(v, dtype=np.int64) for v in (z, a, b))
    c, e = z - b, a - b
    t, w = log_nodes(*rule)
    span = R + int(max(np.abs(c).max(), np.abs(e).max()))
    q = _q(d, t, -span, span)
    ws = np.arange(-R, R + 1)
    total = np.ones((len(t),) * 3)
    for (cj, ej), mult in _coord_groups(c, e):
        S = np.einsum("ws,wt,wu->stu", q[cj + ws + span], q[ws + span], q[ej + ws + span],
                      optimize=True)
        total *= S**mult
    return float(np.einsum("stu,s,t,u->", total, _weights(t, w, k), _weights(t, w, l),
                           _weights(t, w, m), optimize=True))


@lru_cache(maxsize=None)
def _radial_max(d, k):
    """Sorted radii of the tabulated points and the suffix maxima of G_k."""
    tab = green_table(d, k)
    tuples = _sorted_tuples(d, tab.rt)
    radix = tab.rt + 1
    idx = np.zeros(len(tuples), dtype=np.int64)
    for j in range(d):
        idx = idx * radix + tuples[:, j]
    vals = tab.values[idx]
    r = np.sqrt((tuples.astype(float) ** 2).sum(axis=1))
    order = np.argsort(r)
    r, vals = r[order], vals[order]
    return r, np.maximum.accumulate(vals[::-1])[::-1]


def _envelope(d, k):
    """env(r) >= G_k(x) for every |x| >= r."""
    tab = green_table(d, k)
    radii, suffix = _radial_max(d, k)

    def env(r):
        i = int(np.searchsorted(radii, r))
        inner = suffix[i] if i < len(suffix) else 0.0
        return max(inner, tab.c_hi * max(r, tab.rt) ** (-tab.expo))
    return env


def f_klm_tail(d: int, k: int, l: int, m: int, z, a, b, R: int) -> float:
    """Upper bound on the part of the full sum over w with |w|_inf > R.

    Each kernel is bounded by a radial envelope in |w| shifted by the
    length of its offset, and the lattice sum by the integral of the
    envelope product over the region covered by the unit cubes.
    """
    z, a, b = (np.asarray(v, dtype=np.int64) for v in (z, a, b))
    sc = float(np.linalg.norm(z - b))
    se = float(np.linalg.norm(a - b))
    envs = [(_envelope(d, k), sc), (_envelope(d, l), 0.0), (_envelope(d, m), se)]
    h = math.sqrt(d) / 2

    def f(r):
        # a point at radius >= r is at distance >= r - s from a shift of size s
        return math.prod(env(max(r - s, 0.0)) for env, s in envs)

    surface = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
    r0 = R + 1 - h
    if r0 <= 0:
        return math.inf
    def g(r):
        return f(r - h) * r ** (d - 1)

    # piecewise near the tabulated radii, smooth power laws beyond
    r1 = max(r0, max(green_table(d, j).rt for j in (k, l, m)) + max(sc, se) + h + 1.0)
    val = 0.0
    if r1 > r0:
        # upper Riemann sum: f is non-increasing, r^(d-1) increasing
        grid = np.linspace(r0, r1, int(math.ceil(r1 - r0)) * 20 + 2)
        val += sum((hi - lo) * f(lo - h) * hi ** (d - 1) for lo, hi in zip(grid[:-1], grid[1:]))
    val += integrate.quad(g, r1, np.inf, limit=200)[0]
    return float(surface * val)


def f_klm(d: int, k: int, l: int, m: int, z, a, b, box_radius: int) -> tuple[float, float]:
    """F_{k,l,m}(z, a, b) truncated to |w|_inf <= box_radius, with a tail bound."""
    if box_radius < 0:
        raise ValueError("box_radius must be >= 0")
    return (f_klm_box(d, k, l, m, z, a, b, box_radius),
            f_klm_tail(d, k, l, m, z, a, b, box_radius))


def apply_A_box(d: int, k: int, l: int, m: int, z, a, b, R: int, rule=COARSE) -> float:
    """sum over y, y', w in [-R, R]^d of
    (g(y) g(y - y') + g(y') g(y - y')) G_k(z - b - y' + w) G_l(w) G_m(a - b + y - y' + w).

    Five time integrals with coordinates factorised.  The coarse rule keeps
    the five-fold node product affordable at a relative error of a few 1e-3.
    """
    _check_klm(d, k, l, m)
    z, a, b = (np.asarray(v, dtype=np.int64) for v in (z, a, b))
    c, e = z - b, a - b
    t, w = log_nodes(*rule)
    n = len(t)
    span = 3 * R + int(max(np.abs(c).max(), np.abs(e).max()))
    q = _q(d, t, -span, span)

    def Q(x):
        return q[np.asarray(x) + span]

    r = np.arange(-R, R + 1)
    diff = r[None, :] - r[:, None]  # [y', w] -> w - y'
    groups = _coord_groups(c, e)
    totals = [np.ones((n,) * 5), np.ones((n,) * 5)]
    for (cj, ej), mult in groups:
        B1 = np.zeros((n, n, n, len(r), len(r)))
        inner = np.zeros((len(r), len(r), n, n))  # [y', w, tau, u]
        for y in r:
            P = Q(y - r)[:, None, :, None] * Q(ej + y - r[:, None] + r[None, :])[:, :, None, :]
            inner += P
            B1 += Q(y)[:, None, None, None, None] * P.transpose(2, 3, 0, 1)[None]
        B2 = Q(r).T[:, None, None, :, None] * inner.transpose(2, 3, 0, 1)[None]
        C = Q(cj + diff)[:, :, :, None] * Q(r)[None, :, None, :]  # [y', w, s, t]
        for i, B in enumerate((B1, B2)):
            totals[i] *= np.tensordot(B, C, axes=([3, 4], [0, 1])) ** mult
        del B1, B2, C, inner
    w1 = _weights(t, w, 1)
    return float(sum(np.einsum("abcde,a,b,c,d,e->", T, w1, w1, _weights(t, w, m),
                               _weights(t, w, k), _weights(t, w, l), optimize=True)
                     for T in totals))


def smallterms_identity(d: int, k: int, l: int, m: int, z, a, b, R: int,
                        rhs_radius: int | None = None) -> dict:
    """Both sides of the operator identity
    A F_{k,l,m} = F_{k+1,l+1,m} + F_{k+1,l,m+1},
    the left side truncated to boxes of radius R in y, y' and w."""
    lhs = apply_A_box(d, k, l, m, z, a, b, R)
    Rr = 3 * R if rhs_radius is None else rhs_radius
    f1, t1 = f_klm(d, k + 1, l + 1, m, z, a, b, Rr)
    f2, t2 = f_klm(d, k + 1, l, m + 1, z, a, b, Rr)
    rhs = f1 + f2
    return {"lhs": lhs, "rhs": rhs, "rhs_tail": t1 + t2,
            "relative_gap": (rhs - lhs) / rhs, "R": R}


def domination_ratios(d: int, N: int, k: int, a, b, zs, box_radius: int) -> list[float]:
    """F_{N,N-k,k}(z, a, b) / (G_N(z) G_N(a - b)) along ``zs``."""
    out = []
    for z in zs:
        F, _ = f_klm(d, N, N - k, k, z, a, b, box_radius)
        out.append(F / (green_GN(d, N, z) * green_GN(d, N, np.subtract(a, b))))
    return out
