"""Compiled samplers for critical trees with random-walk labels."""
from __future__ import annotations

import numba as nb
import numpy as np

from ._kernels import table_contains
from .rng import randbelow, uniform


@nb.njit(cache=True)
def draw(st, cdf):
    u = uniform(st)
    for k in range(cdf.shape[0]):
        if u < cdf[k]:
            return k
    return cdf.shape[0] - 1


@nb.njit(cache=True)
def step_into(st, src, dst):
    d = src.shape[0]
    for j in range(d):
        dst[j] = src[j]
    r = randbelow(st, 2 * d)
    if r & 1:
        dst[r >> 1] += 1
    else:
        dst[r >> 1] -= 1


@nb.njit(cache=True)
def _grow(a):
    b = np.empty((2 * a.shape[0], a.shape[1]), dtype=a.dtype)
    b[:a.shape[0]] = a
    return b


@nb.njit(cache=True)
def explore(st, cdf, start, out, n, limit):
    """Depth-first BGW tree from `start` (included), appending positions to
    out[n:].  Stops once n reaches limit.  Returns (n, out, complete)."""
    d = start.shape[0]
    stack = np.empty((64, d), dtype=np.int64)
    stack[0] = start
    top = 1
    while top > 0:
        if n >= limit:
            return n, out, False
        top -= 1
        if n >= out.shape[0]:
            out = _grow(out)
        out[n] = stack[top]
        n += 1
        k = draw(st, cdf)
        for _ in range(k):
            if top >= stack.shape[0]:
                stack = _grow(stack)
            step_into(st, out[n - 1], stack[top])
            top += 1
    return n, out, True


@nb.njit(cache=True)
def critical_tree(st, cdf, x, node_cap):
    out = np.empty((256, x.shape[0]), dtype=np.int64)
    n, out, complete = explore(st, cdf, x, out, 0, node_cap)
    return out[:n].copy(), complete


@nb.njit(cache=True)
def future_prefix(st, mu_cdf, sb_cdf, x, n, with_spine):
    """First n nodes of the future DFS of the sin-tree rooted at x:
    root, the root's mu-distributed extra children subtrees, then for each
    spine node (listed if with_spine) the subtrees of its right siblings."""
    d = x.shape[0]
    out = np.empty((n, d), dtype=np.int64)
    out[0] = x
    cnt = 1
    child = np.empty(d, dtype=np.int64)
    k = draw(st, mu_cdf)
    for _ in range(k):
        if cnt >= n:
            return out
        step_into(st, x, child)
        cnt, out, _c = explore(st, mu_cdf, child, out, cnt, n)
    spine = x.copy()
    nxt = np.empty(d, dtype=np.int64)
    while cnt < n:
        step_into(st, spine, nxt)
        spine[:] = nxt
        if with_spine:
            out[cnt] = spine
            cnt += 1
        z = draw(st, sb_cdf)
        j = randbelow(st, z) + 1
        for _ in range(z - j):
            if cnt >= n:
                break
            step_into(st, spine, child)
            cnt, out, _c = explore(st, mu_cdf, child, out, cnt, n)
    return out


@nb.njit(cache=True)
def past_tree(st, mu_cdf, sb_cdf, x, spine_len, node_cap):
    """Truncated past: root x, spine u_1..u_L and the subtrees of the left
    siblings of each spine successor.  Returns positions, per-node left
    counts, spine positions and completeness flag."""
    d = x.shape[0]
    out = np.empty((max(256, 4 * spine_len), d), dtype=np.int64)
    out[0] = x
    cnt = 1
    spine_pos = np.empty((spine_len + 1, d), dtype=np.int64)
    spine_pos[0] = x
    lefts = np.zeros(spine_len, dtype=np.int64)
    child = np.empty(d, dtype=np.int64)
    complete = True
    for i in range(1, spine_len + 1):
        step_into(st, spine_pos[i - 1], spine_pos[i])
        if cnt >= out.shape[0]:
            out = _grow(out)
        out[cnt] = spine_pos[i]
        cnt += 1
        z = draw(st, sb_cdf)
        j = randbelow(st, z) + 1
        lefts[i - 1] = j - 1
        for _ in range(j - 1):
            step_into(st, spine_pos[i], child)
            cnt, out, c = explore(st, mu_cdf, child, out, cnt, node_cap)
            if not c:
                complete = False
                break
        if not complete:
            break
    return out[:cnt].copy(), lefts, spine_pos, complete


@nb.njit(cache=True)
def _in_range(y, half):
    for j in range(y.shape[0]):
        if y[j] >= half or y[j] <= -half:
            return False
    return True


@nb.njit(cache=True)
def _member(y, table, bits, half):
    if not _in_range(y, half):
        return False
    k = np.int64(0)
    for j in range(y.shape[0]):
        k += y[j] << (bits * j)
    return table_contains(table, k)


@nb.njit(cache=True)
def subtree_hits(st, cdf, start, table, bits, half, budget):
    """Explore a BGW tree from start until it visits the set.
    Returns (hit, nodes_used, complete)."""
    d = start.shape[0]
    stack = np.empty((64, d), dtype=np.int64)
    stack[0] = start
    top = 1
    used = 0
    cur = np.empty(d, dtype=np.int64)
    while top > 0:
        if used >= budget:
            return False, used, False
        top -= 1
        cur[:] = stack[top]
        used += 1
        if _member(cur, table, bits, half):
            return True, used, True
        k = draw(st, cdf)
        for _ in range(k):
            if top >= stack.shape[0]:
                stack = _grow(stack)
            step_into(st, cur, stack[top])
            top += 1
    return False, used, True


@nb.njit(cache=True)
def direct_avoid(st, mu_cdf, sb_cdf, x, spine_len, table, bits, half, node_cap,
                 future, spine_counts):
    """One direct sample: does the truncated future (or past) of the sin-tree
    at x avoid the set, the root itself excluded?

    Returns (avoided, complete, spine end position)."""
    d = x.shape[0]
    child = np.empty(d, dtype=np.int64)
    budget = node_cap
    if future:
        k = draw(st, mu_cdf)
        for _ in range(k):
            step_into(st, x, child)
            hit, used, c = subtree_hits(st, mu_cdf, child, table, bits, half, budget)
            budget -= used
            if hit:
                return False, True, x.copy()
            if not c:
                return True, False, x.copy()
    spine = x.copy()
    nxt = np.empty(d, dtype=np.int64)
    for i in range(spine_len):
        step_into(st, spine, nxt)
        spine[:] = nxt
        if spine_counts and _member(spine, table, bits, half):
            return False, True, spine
        z = draw(st, sb_cdf)
        j = randbelow(st, z) + 1
        side = z - j if future else j - 1
        for _ in range(side):
            step_into(st, spine, child)
            hit, used, c = subtree_hits(st, mu_cdf, child, table, bits, half, budget)
            budget -= used
            if hit:
                return False, True, spine
            if not c:
                return True, False, spine
    return True, True, spine
