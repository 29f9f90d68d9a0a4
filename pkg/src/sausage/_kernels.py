"""Low-level numba kernels: packed lattice keys, open-addressing hash sets,
and random-walk drivers.

Lattice points are packed into a signed int64 by a balanced base-2**bits
expansion, ``key(x) = sum_j x_j * 2**(bits*j)``.  The map is linear, so
``key(x + y) == key(x) + key(y)`` as long as every coordinate involved
stays inside ``(-2**(bits-1), 2**(bits-1))``.  Callers check this range;
the kernels assume it.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

from .rng import randbelow, srw_displacement

EMPTY = np.int64(-(2**63))
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def key_bits(d: int) -> int:
    return min(31, 63 // d)


def key_half(d: int) -> int:
    return 1 << (key_bits(d) - 1)


def pack(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.int64)
    d = pts.shape[1]
    bits = key_bits(d)
    weights = np.array([1 << (bits * j) for j in range(d)], dtype=np.int64)
    return pts @ weights


def unpack(keys: np.ndarray, d: int) -> np.ndarray:
    bits = key_bits(d)
    base = 1 << bits
    half = base >> 1
    k = np.asarray(keys, dtype=np.int64).copy()
    out = np.empty((k.shape[0], d), dtype=np.int64)
    for j in range(d):
        r = np.mod(k, base)
        r = np.where(r >= half, r - base, r)
        out[:, j] = r
        k = (k - r) >> bits
    return out


def unit_key(d: int, j: int) -> int:
    return 1 << (key_bits(d) * j)


# --------------------------------------------------------------------------
# hash set


def table_capacity(n: int) -> int:
    cap = 16
    while cap < 2 * n + 2:
        cap <<= 1
    return cap


@nb.njit(cache=True, inline="always")
def _slot(key, mask, shift):
    h = (np.uint64(key) * _GOLDEN) >> shift
    return np.int64(h) & mask


@nb.njit(cache=True)
def table_insert(table, key):
    """Insert key; returns True if it was not present."""
    cap = table.shape[0]
    mask = cap - 1
    shift = np.uint64(64 - int(math.log2(cap)))
    i = _slot(key, mask, shift)
    while True:
        v = table[i]
        if v == EMPTY:
            table[i] = key
            return True
        if v == key:
            return False
        i = (i + 1) & mask


@nb.njit(cache=True)
def table_contains(table, key):
    cap = table.shape[0]
    mask = cap - 1
    shift = np.uint64(64 - int(math.log2(cap)))
    i = _slot(key, mask, shift)
    while True:
        v = table[i]
        if v == key:
            return True
        if v == EMPTY:
            return False
        i = (i + 1) & mask


@nb.njit(cache=True)
def build_table(keys):
    cap = 16
    while cap < 2 * keys.shape[0] + 2:
        cap <<= 1
    table = np.full(cap, EMPTY, dtype=np.int64)
    for k in keys:
        table_insert(table, k)
    return table


@nb.njit(cache=True)
def table_keys(table):
    n = 0
    for v in table:
        if v != EMPTY:
            n += 1
    out = np.empty(n, dtype=np.int64)
    j = 0
    for v in table:
        if v != EMPTY:
            out[j] = v
            j += 1
    return np.sort(out)


@nb.njit(cache=True)
def distinct_sums(a, b, size_hint):
    """Sorted distinct values of a[i] + b[j]."""
    cap = 16
    while cap < 2 * size_hint + 2:
        cap <<= 1
    table = np.full(cap, EMPTY, dtype=np.int64)
    n = 0
    limit = cap // 2
    for i in range(a.shape[0]):
        ai = a[i]
        for j in range(b.shape[0]):
            if table_insert(table, ai + b[j]):
                n += 1
                if n > limit:
                    # grow
                    old = table
                    cap *= 2
                    limit = cap // 2
                    table = np.full(cap, EMPTY, dtype=np.int64)
                    for v in old:
                        if v != EMPTY:
                            table_insert(table, v)
    return table_keys(table)


@nb.njit(cache=True)
def count_distinct_sums(a, b, size_hint):
    return distinct_sums(a, b, size_hint).shape[0]


@nb.njit(cache=True)
def unique_sorted(keys):
    s = np.sort(keys)
    if s.shape[0] == 0:
        return s
    m = 1
    for i in range(1, s.shape[0]):
        if s[i] != s[m - 1]:
            s[m] = s[i]
            m += 1
    return s[:m].copy()


# --------------------------------------------------------------------------
# walks


@nb.njit(cache=True)
def walk_positions(st, d, n, start):
    """Positions X_0..X_n of a simple random walk started at `start`."""
    pos = np.empty((n + 1, d), dtype=np.int64)
    for j in range(d):
        pos[0, j] = start[j]
    for t in range(1, n + 1):
        for j in range(d):
            pos[t, j] = pos[t - 1, j]
        r = randbelow(st, 2 * d)
        j = r >> 1
        if r & 1:
            pos[t, j] += 1
        else:
            pos[t, j] -= 1
    return pos


@nb.njit(cache=True)
def walk_keys(st, d, n, start_key, bits):
    """Packed keys of X_0..X_n; valid while the walk stays in key range."""
    out = np.empty(n + 1, dtype=np.int64)
    k = start_key
    out[0] = k
    for t in range(1, n + 1):
        r = randbelow(st, 2 * d)
        u = np.int64(1) << (bits * (r >> 1))
        if r & 1:
            k += u
        else:
            k -= u
        out[t] = k
    return out


@nb.njit(cache=True)
def _pack_one(y, bits):
    k = np.int64(0)
    for j in range(y.shape[0]):
        k += y[j] << (bits * j)
    return k


@nb.njit(cache=True)
def _in_range(y, half):
    for j in range(y.shape[0]):
        if y[j] >= half or y[j] <= -half:
            return False
    return True


@nb.njit(cache=True)
def _dist_lower_bound(y, center, radius, g_origin, g_cell, g_shape, g_dist, g_cap):
    """Certified lower bound on the Euclidean distance from y to the target set."""
    d = y.shape[0]
    s = 0.0
    for j in range(d):
        t = y[j] - center[j]
        s += t * t
    ball = math.sqrt(s) - radius
    inside = g_dist.shape[0] > 0
    idx = 0
    if inside:
        for j in range(d):
            c = (y[j] - g_origin[j]) // g_cell
            if c < 0 or c >= g_shape[j]:
                inside = False
                break
            idx = idx * g_shape[j] + c
    if inside:
        m = g_dist[idx]
        if m == 0:
            return max(ball, 0.0)
        gb = (m - 1) * g_cell + 1.0
        return max(ball, gb)
    return ball


@nb.njit(cache=True)
def run_walker(st, y, table, bits, half, horizon, check_start,
               center, radius, g_origin, g_cell, g_shape, g_dist, g_cap,
               r_stop, jump_min, disp):
    """Run a simple random walk from y (modified in place) against a target set.

    Returns (status, steps):
      status 0 -- the walk visited the set (at the returned step count),
      status 1 -- horizon exhausted without visiting,
      status 2 -- the walk reached distance r_stop from the set's centre.
    Time 0 counts only if check_start.  Far from the set the walk advances by
    exact multi-step jumps that provably cannot reach it.
    """
    d = y.shape[0]
    t = 0
    if check_start and _in_range(y, half):
        if table_contains(table, _pack_one(y, bits)):
            return 0, 0
    while t < horizon:
        D = _dist_lower_bound(y, center, radius, g_origin, g_cell, g_shape, g_dist, g_cap)
        if D + radius >= r_stop:
            s = 0.0
            for j in range(d):
                s += (y[j] - center[j]) ** 2
            if math.sqrt(s) >= r_stop:
                return 2, t
        if D > jump_min:
            k = np.int64(math.floor(D)) - 1
            if k > horizon - t:
                k = horizon - t
            srw_displacement(st, k, d, disp)
            for j in range(d):
                y[j] += disp[j]
            t += k
            continue
        r = randbelow(st, 2 * d)
        j = r >> 1
        if r & 1:
            y[j] += 1
        else:
            y[j] -= 1
        t += 1
        if _in_range(y, half):
            if table_contains(table, _pack_one(y, bits)):
                return 0, t
    return 1, t


@nb.njit(cache=True)
def run_walker_dense(st, y, table, bits, half, horizon, check_start):
    """Step-by-step variant of run_walker without distance bookkeeping."""
    d = y.shape[0]
    inrange = _in_range(y, half)
    key = _pack_one(y, bits) if inrange else np.int64(0)
    nout = 0
    for j in range(d):
        if y[j] >= half or y[j] <= -half:
            nout += 1
    if check_start and nout == 0 and table_contains(table, key):
        return 0, 0
    for t in range(1, horizon + 1):
        r = randbelow(st, 2 * d)
        j = r >> 1
        old = y[j]
        if r & 1:
            y[j] += 1
        else:
            y[j] -= 1
        was_out = old >= half or old <= -half
        now_out = y[j] >= half or y[j] <= -half
        if was_out and not now_out:
            nout -= 1
        elif now_out and not was_out:
            nout += 1
        if nout == 0:
            key = _pack_one(y, bits)
            if table_contains(table, key):
                return 0, t
    return 1, horizon
