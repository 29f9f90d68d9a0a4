"""Hitting probability of a critical BGW tree with random-walk labels.

h(y) = P(the tree rooted at y visits A) solves h = 1 on A and
h = 1 - f(1 - P h) elsewhere, with f the offspring pgf and P the walk's
transition operator.  It is solved on a padded box around A by nonlinear
SOR; outside the box h is replaced by kappa * sum_a g(y - a), with kappa
iterated to match the total charge of the solution.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

from ._kernels import table_contains
from .kernels import table_lookup
from .rng import randbelow

GEOM, BINARY, DELTA, POLY = 0, 1, 2, 3


@nb.njit(cache=True, inline="always")
def pgf_tail(code, coef, psic, q):
    """1 - f(1 - q)."""
    if code == GEOM:
        return q / (1.0 + q)
    if code == BINARY:
        return q - 0.5 * q * q
    if code == DELTA:
        return q
    s = 1.0 - q
    acc = 0.0
    for k in range(coef.shape[0] - 1, -1, -1):
        acc = acc * s + coef[k]
    return 1.0 - acc


@nb.njit(cache=True, inline="always")
def psi_at(code, coef, psic, q):
    """psi(1 - q) = (1 - f(1 - q)) / q, evaluated without cancellation."""
    if code == GEOM:
        return 1.0 / (1.0 + q)
    if code == BINARY:
        return 1.0 - 0.5 * q
    if code == DELTA:
        return 1.0
    s = 1.0 - q
    acc = 0.0
    for k in range(psic.shape[0] - 1, -1, -1):
        acc = acc * s + psic[k]
    return acc


@nb.njit(cache=True)
def sor_solve(h, fixed, strides, interior, code, coef, psic, omega, tol, max_sweeps):
    d = strides.shape[0]
    inv = 1.0 / (2 * d)
    sweeps = 0
    delta = 0.0
    for sweeps in range(1, max_sweeps + 1):
        delta = 0.0
        for t in range(interior.shape[0]):
            i = interior[t]
            if fixed[i]:
                continue
            q = 0.0
            for j in range(d):
                q += h[i + strides[j]] + h[i - strides[j]]
            q *= inv
            new = pgf_tail(code, coef, psic, q)
            diff = new - h[i]
            h[i] += omega * diff
            if abs(diff) > delta:
                delta = abs(diff)
        if delta < tol:
            break
    return sweeps, delta


@nb.njit(cache=True)
def _box_index(y, lo, n_pad):
    """Flat index of y in the padded box, or -1 if outside."""
    d = y.shape[0]
    idx = 0
    for j in range(d):
        c = y[j] - lo[j]
        if c < 0 or c >= n_pad:
            return -1
        idx = idx * n_pad + c
    return idx


@nb.njit(cache=True)
def h_value(y, h, lo, n_pad, kappa, A, center, r_mid, gvals, grt, gc, gexpo):
    i = _box_index(y, lo, n_pad)
    if i >= 0:
        return h[i]
    d = y.shape[0]
    s = 0.0
    for j in range(d):
        t = y[j] - center[j]
        s += t * t
    r = math.sqrt(s)
    if r >= r_mid:
        return kappa * A.shape[0] * gc * r ** (-gexpo)
    diff = np.empty(d, dtype=np.int64)
    acc = 0.0
    for a in range(A.shape[0]):
        for j in range(d):
            diff[j] = y[j] - A[a, j]
        acc += table_lookup(gvals, grt, gc, gexpo, diff)
    return kappa * acc


@nb.njit(cache=True)
def ph_value(y, h, lo, n_pad, kappa, A, center, r_mid, gvals, grt, gc, gexpo):
    """(P h)(y): average of h over the neighbours of y."""
    d = y.shape[0]
    s = 0.0
    for j in range(d):
        t = y[j] - center[j]
        s += t * t
    if math.sqrt(s) >= r_mid + 1.0:
        return h_value(y, h, lo, n_pad, kappa, A, center, r_mid, gvals, grt, gc, gexpo)
    z = y.copy()
    acc = 0.0
    for j in range(d):
        z[j] = y[j] + 1
        acc += h_value(z, h, lo, n_pad, kappa, A, center, r_mid, gvals, grt, gc, gexpo)
        z[j] = y[j] - 1
        acc += h_value(z, h, lo, n_pad, kappa, A, center, r_mid, gvals, grt, gc, gexpo)
        z[j] = y[j]
    return acc / (2 * d)


@nb.njit(cache=True)
def fill_boundary(h, fixed, lo, n_pad, kappa, A, gvals, grt, gc, gexpo):
    """Set h on the outer layer of the padded box from the far-field form."""
    d = lo.shape[0]
    total = h.shape[0]
    y = np.empty(d, dtype=np.int64)
    diff = np.empty(d, dtype=np.int64)
    for i in range(total):
        rem = i
        edge = False
        for j in range(d - 1, -1, -1):
            c = rem % n_pad
            rem //= n_pad
            y[j] = lo[j] + c
            if c == 0 or c == n_pad - 1:
                edge = True
        if not edge:
            continue
        acc = 0.0
        for a in range(A.shape[0]):
            for j in range(d):
                diff[j] = y[j] - A[a, j]
            acc += table_lookup(gvals, grt, gc, gexpo, diff)
        h[i] = kappa * acc


@nb.njit(cache=True)
def _member(y, table, bits, half):
    k = np.int64(0)
    for j in range(y.shape[0]):
        if y[j] >= half or y[j] <= -half:
            return False
        k += y[j] << (bits * j)
    return table_contains(table, k)


@nb.njit(cache=True)
def spine_avoid(st, x, spine_len, future, spine_counts, code, coef, psic,
                h, lo, n_pad, kappa, A, center, r_mid, gvals, grt, gc, gexpo,
                table, bits, half, bvals, brt, bc, bexpo, b2vals, b2rt, b2c, b2expo, sig2):
    """Conditional probability, given a sampled spine from x, that the
    future (or past) of the sin-tree avoids A, root excluded.

    Returns (probability, residual bound, spine end)."""
    d = x.shape[0]
    logp = 0.0
    if future:
        q = ph_value(x, h, lo, n_pad, kappa, A, center, r_mid, gvals, grt, gc, gexpo)
        logp += math.log(max(1.0 - pgf_tail(code, coef, psic, q), 1e-300))
    y = x.copy()
    for i in range(spine_len):
        r = randbelow(st, 2 * d)
        if r & 1:
            y[r >> 1] += 1
        else:
            y[r >> 1] -= 1
        if spine_counts and _member(y, table, bits, half):
            return 0.0, 0.0, y
        q = ph_value(y, h, lo, n_pad, kappa, A, center, r_mid, gvals, grt, gc, gexpo)
        logp += math.log(max(psi_at(code, coef, psic, q), 1e-300))
    # residual: expected visits of A by the rest of the spine plus the
    # expected visits by subtrees hanging off it
    diff = np.empty(d, dtype=np.int64)
    res = 0.0
    for a in range(A.shape[0]):
        for j in range(d):
            diff[j] = y[j] - A[a, j]
        if spine_counts:
            res += table_lookup(bvals, brt, bc, bexpo, diff)
        res += 0.5 * sig2 * table_lookup(b2vals, b2rt, b2c, b2expo, diff)
    return math.exp(logp), min(res, 1.0), y


@nb.njit(cache=True)
def spine_avoid_batch(states, x, spine_len, future, spine_counts, code, coef, psic,
                      h, lo, n_pad, kappa, A, center, r_mid, gvals, grt, gc, gexpo,
                      table, bits, half, bvals, brt, bc, bexpo, b2vals, b2rt, b2c,
                      b2expo, sig2):
    m = states.shape[0]
    p = np.empty(m)
    res = np.empty(m)
    for i in range(m):
        pi, ri, _y = spine_avoid(states[i], x, spine_len, future, spine_counts, code,
                                 coef, psic, h, lo, n_pad, kappa, A, center, r_mid,
                                 gvals, grt, gc, gexpo, table, bits, half, bvals, brt,
                                 bc, bexpo, b2vals, b2rt, b2c, b2expo, sig2)
        p[i] = pi
        res[i] = ri
    return p, res
