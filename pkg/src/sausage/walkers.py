"""Random walks run against a fixed finite target set.

A :class:`Target` holds a hash set of the target's packed keys, a bounding
ball and a coarse Chebyshev distance grid.  The grid gives a certified
lower bound on the distance from any site to the target, which lets a
walker far from the target advance by an exact multi-step jump that
cannot touch it.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

from . import _kernels as K
from .kernels import green_table, sum_over_set
from .lattice import PointSet
from .rng import new_state

HIT, HORIZON, ESCAPED = 0, 1, 2

_GRID_CELLS = 2_000_000
_GRID_LEVELS = 16


class Target:
    def __init__(self, A: PointSet, grid: bool = True):
        if A.keys is None:
            raise OverflowError("target coordinates exceed the packed-key range")
        self.A = A
        self.d = A.d
        self.points = A.points
        self.bits = K.key_bits(A.d)
        self.half = K.key_half(A.d)
        self.table = K.build_table(A.keys)
        lo = A.points.min(axis=0)
        hi = A.points.max(axis=0)
        self.center = 0.5 * (lo + hi).astype(np.float64)
        diff = A.points - self.center
        self.radius = float(np.sqrt((diff * diff).sum(axis=1)).max())
        self._build_grid(lo, hi, grid and len(A) > 1)

    def _build_grid(self, lo, hi, enabled):
        d = self.d
        if not enabled:
            self.g_origin = np.zeros(d, dtype=np.int64)
            self.g_cell = 1
            self.g_shape = np.ones(d, dtype=np.int64)
            self.g_dist = np.zeros(0, dtype=np.int64)
            return
        per_axis = int(_GRID_CELLS ** (1.0 / d))
        M = max(1, min(_GRID_LEVELS, (per_axis - 2) // 4))
        ext = (hi - lo + 1).astype(np.int64)
        b = 2
        while True:
            shape = -(-ext // b) + 2 * M
            if np.prod(shape.astype(float)) <= _GRID_CELLS:
                break
            b += 1
        origin = lo - M * b
        occ = np.zeros(tuple(shape), dtype=bool)
        cells = (self.points - origin) // b
        occ[tuple(cells.T)] = True
        dist = np.full(occ.shape, M, dtype=np.int64)
        dist[occ] = 0
        cur = occ
        for m in range(1, M):
            nxt = cur.copy()
            for ax in range(d):
                sl_a = [slice(None)] * d
                sl_b = [slice(None)] * d
                sl_a[ax] = slice(1, None)
                sl_b[ax] = slice(None, -1)
                grown = nxt.copy()
                grown[tuple(sl_a)] |= nxt[tuple(sl_b)]
                grown[tuple(sl_b)] |= nxt[tuple(sl_a)]
                nxt = grown
            dist[nxt & ~cur] = m
            cur = nxt
        self.g_origin = origin.astype(np.int64)
        self.g_cell = int(b)
        self.g_shape = shape.astype(np.int64)
        self.g_dist = dist.ravel()

    def args(self):
        return (self.table, self.bits, self.half, self.center, self.radius,
                self.g_origin, self.g_cell, self.g_shape, self.g_dist)

    def contains(self, y) -> bool:
        return np.asarray(y) in self.A


@nb.njit(cache=True)
def _walk_batch(st_seeds, starts, table, bits, half, center, radius,
                g_origin, g_cell, g_shape, g_dist, horizon, check_start, r_stop,
                jump_min):
    """Run one walker per row of `starts`, each on its own stream state.

    Returns status, steps and final positions.
    """
    m = starts.shape[0]
    d = starts.shape[1]
    status = np.empty(m, dtype=np.int64)
    steps = np.empty(m, dtype=np.int64)
    final = np.empty((m, d), dtype=np.int64)
    disp = np.empty(d, dtype=np.int64)
    y = np.empty(d, dtype=np.int64)
    for i in range(m):
        for j in range(d):
            y[j] = starts[i, j]
        s, t = K.run_walker(st_seeds[i], y, table, bits, half, horizon, check_start,
                            center, radius, g_origin, g_cell, g_shape, g_dist, 0,
                            r_stop, jump_min, disp)
        status[i] = s
        steps[i] = t
        for j in range(d):
            final[i, j] = y[j]
    return status, steps, final


def run_walkers(target: Target, starts: np.ndarray, states: np.ndarray, horizon: int,
                check_start: bool, r_stop: float = math.inf, jump_min: float = 4.0):
    """Walk from each start (row) with the matching stream state (row of ``states``)."""
    starts = np.ascontiguousarray(starts, dtype=np.int64).reshape(-1, target.d)
    (table, bits, half, center, radius, g_origin, g_cell, g_shape, g_dist) = target.args()
    return _walk_batch(states, starts, table, bits, half, center, radius, g_origin,
                       g_cell, g_shape, g_dist, int(horizon), bool(check_start),
                       float(r_stop), float(jump_min))


def stream_states(seeds) -> np.ndarray:
    return np.stack([new_state(s) for s in seeds]) if seeds else np.zeros((0, 10), np.uint64)


@nb.njit(cache=True)
def _return_bounds(values, rt, c_hi, expo, g0, finals, status, A, exact_limit):
    out = np.zeros(finals.shape[0])
    d = finals.shape[1]
    for i in range(finals.shape[0]):
        if status[i] == 0:
            continue
        if A.shape[0] <= exact_limit:
            out[i] = sum_over_set(values, rt, c_hi, expo, finals[i], A) / g0
        else:
            # nearest-point bound times |A|
            best = 1e300
            for a in range(A.shape[0]):
                s = 0.0
                for j in range(d):
                    t = finals[i, j] - A[a, j]
                    s += t * t
                if s < best:
                    best = s
            r = math.sqrt(best)
            if r < 1.0:
                r = 1.0
            out[i] = A.shape[0] * min(1.0, c_hi * r ** (-expo) / g0)
        if out[i] > 1.0:
            out[i] = 1.0
    return out


def return_bounds(target: Target, finals, status, exact_limit: int = 4096) -> np.ndarray:
    """Upper bounds on P_y(walk ever visits the target) for survivors at y."""
    tab = green_table(target.d, 1)
    g0 = tab.values[0]
    return _return_bounds(tab.values, tab.rt, tab.c_hi, tab.expo, g0,
                          np.asarray(finals, dtype=np.int64), np.asarray(status),
                          target.points, exact_limit)
