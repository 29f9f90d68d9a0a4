"""Critical branching random walks: the sin-tree sampler, tree ranges and
branching-capacity estimators.

Labelling convention.  Seen from the root, the invariant sin-tree has a
semi-infinite spine ``u_0 = root, u_1, u_2, ...``.  The root has
``1 + mu`` children (law mu~): the spine child ``u_1`` and ``mu`` ordinary
children.  Spine node ``u_i`` (i >= 1) has ``Z ~ mu_sb`` children, the
spine successor chosen uniformly among them.  Ordinary children carry
independent BGW(mu) subtrees.

* the *past* ``T_-`` is the spine together with the subtrees of the
  siblings on the left of each spine successor;
* the *future* ``T_+`` is the root's ordinary subtrees together with the
  subtrees of the siblings on the right of each spine successor.

The root belongs to both.  With this convention the avoidance
probabilities of the past and of the future agree, and both reduce to the
escape probability of a simple random walk for the degenerate law
``delta_one``.  ``spine_in_future=True`` adds the spine to the future
as well (double assignment) for sensitivity runs.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _hfield as HF
from . import _trees as TR
from .kernels import green_GN, green_table
from .laws import OffspringLaw, make_law, side_count_pmf
from .lattice import PointSet, minkowski_sum
from .rng import SeedSpec, new_state
from .stats import MCEstimate, doubling_bias
from .walkers import Target, return_bounds, run_walkers, stream_states

NODE_CAP = 10**7


def _law(law) -> OffspringLaw:
    return law if isinstance(law, OffspringLaw) else make_law(law)


def _need_d5(d: int) -> None:
    if d < 5:
        raise ValueError(f"branching capacity requires d >= 5 (got d={d})")


@dataclass
class TreeRange:
    positions: PointSet
    node_count: int
    kind: str
    meta: dict = field(default_factory=dict)


def _origin(d, x):
    return np.zeros(d, dtype=np.int64) if x is None else np.asarray(x, dtype=np.int64)


def sample_critical_tree(d: int, law, x, node_cap: int, seed: SeedSpec) -> TreeRange:
    """BGW(mu) tree with walk increments rooted at x; flags cap overflow."""
    if node_cap < 1:
        raise ValueError("node_cap must be >= 1")
    L = _law(law)
    pos, complete = TR.critical_tree(new_state(seed), L.cdf("mu"), _origin(d, x), node_cap)
    return TreeRange(PointSet(pos, d), len(pos), "critical",
                     {"cap_exceeded": not complete, "node_cap": node_cap})


def sample_sin_tree_future(d: int, law, n: int, x, seed: SeedSpec,
                           spine_in_future: bool = True) -> TreeRange:
    """First n nodes of the future depth-first order, root included.

    Spine nodes are listed as the search passes them unless
    ``spine_in_future`` is False; this only moves O(sqrt n) nodes and does
    not change volume limits.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    L = _law(law)
    pos = TR.future_prefix(new_state(seed), L.cdf("mu"), L.cdf("sb"), _origin(d, x), n,
                           spine_in_future)
    return TreeRange(PointSet(pos, d), n, "future_prefix", {"n": n, "law": L.name})


def sample_past_tree(d: int, law, x, spine_len: int, seed: SeedSpec,
                     node_cap: int = NODE_CAP) -> TreeRange:
    """Truncated past: spine of length spine_len plus left subtrees."""
    if spine_len < 1:
        raise ValueError("spine_len must be >= 1")
    L = _law(law)
    x0 = _origin(d, x)
    pos, lefts, spine, complete = TR.past_tree(new_state(seed), L.cdf("mu"), L.cdf("sb"),
                                               x0, spine_len, node_cap)
    end = spine[-1]
    r = max(1.0, float(np.sqrt(((end - x0) ** 2).sum())))
    meta = {
        "spine_len": spine_len,
        "left_counts": lefts,
        "spine_end": end,
        "complete": bool(complete),
        # per target point at the root: visits by what lies beyond the spine end
        "residual_scale": (green_table(d, 1).c_hi * r ** (2 - d)
                           + 0.5 * L.variance * green_table(d, 2).c_hi * r ** (4 - d)),
    }
    return TreeRange(PointSet(pos, d), len(pos), "past_truncated", meta)


# --------------------------------------------------------------------------
# the hitting field h


def _law_code(L: OffspringLaw):
    code = {"geometric_half": HF.GEOM, "binary": HF.BINARY, "delta_one": HF.DELTA}.get(L.name, HF.POLY)
    return code, L.pmf, side_count_pmf(L)


class HitField:
    """h(y) = P(a BGW tree rooted at y visits A), see :mod:`._hfield`."""

    def __init__(self, d: int, law, A: PointSet, box_radius: int | None = None,
                 tol: float = 1e-11):
        L = _law(law)
        self.d, self.law, self.A = d, L, A
        self.code, self.coef, self.psic = _law_code(L)
        pts = A.points
        lo_a, hi_a = pts.min(axis=0), pts.max(axis=0)
        c_int = (lo_a + hi_a) // 2
        span = int((hi_a - lo_a).max())
        if box_radius is None:
            box_radius = {5: 8, 6: 6, 7: 4}.get(d, 4) + (span + 1) // 2
        R = int(box_radius)
        if int(np.abs(pts - c_int).max()) > R - 1:
            raise ValueError("box radius too small for the target set")
        self.R = R
        self.n_pad = 2 * R + 3
        self.lo = (c_int - R - 1).astype(np.int64)
        self.center = pts.mean(axis=0).astype(np.float64)
        diam = A.diameter()
        self.r_mid = float(max(4 * R, 8 * diam))
        gt = green_table(d, 1)
        self.gtab = (gt.values, gt.rt, gt.c_fit, gt.expo)
        shape = (self.n_pad,) * d
        total = self.n_pad ** d
        h = np.zeros(total)
        fixed = np.zeros(total, dtype=np.bool_)
        grid = np.indices(shape).reshape(d, -1).T
        edge = ((grid == 0) | (grid == self.n_pad - 1)).any(axis=1)
        fixed[edge] = True
        a_idx = np.ravel_multi_index(tuple((pts - self.lo).T), shape)
        fixed[a_idx] = True
        h[a_idx] = 1.0
        self.a_idx = a_idx
        self.interior = np.flatnonzero(~edge).astype(np.int64)
        self.strides = np.array([self.n_pad ** (d - 1 - j) for j in range(d)], dtype=np.int64)
        self.h, self.fixed, self.shape = h, fixed, shape
        self.kappa = 0.5
        self.sweeps = 0
        self._solve(tol)

    def _fill(self, kappa):
        vals, rt, c, expo = self.gtab
        HF.fill_boundary(self.h, self.fixed & ~np.isin(np.arange(len(self.h)), self.a_idx),
                         self.lo, self.n_pad, kappa, self.A.points, vals, rt, c, expo)
        self.h[self.a_idx] = 1.0

    def _ph(self) -> np.ndarray:
        d = self.d
        hv = self.h.reshape(self.shape)
        out = np.zeros_like(hv)
        core = tuple(slice(1, -1) for _ in range(d))
        for j in range(d):
            up = list(core)
            dn = list(core)
            up[j] = slice(2, None)
            dn[j] = slice(None, -2)
            out[core] += hv[tuple(up)] + hv[tuple(dn)]
        out /= 2 * d
        return out.ravel()

    def _kappa_estimate(self, kappa_prev: float) -> float:
        """kappa = sum_a (1 - Ph(a)) - sum_{z not in A} F(Ph(z)), the box part
        exact and the outside part from the far-field form."""
        ph = self._ph()
        e = float((1.0 - ph[self.a_idx]).sum())
        mask = np.zeros(len(self.h), dtype=bool)
        mask[self.interior] = True
        mask[self.a_idx] = False
        q = ph[mask]
        F = q - _pgf_tail_np(self.code, self.coef, q)
        d = self.d
        vol_ball = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
        r_eq = (self.R + 0.5) * (2**d / vol_ball) ** (1.0 / d)
        surface = d * vol_ball
        c = self.gtab[2]
        tail = (0.5 * self.law.variance * (kappa_prev * len(self.A) * c) ** 2
                * surface * r_eq ** (4 - d) / (d - 4))
        return e - float(F.sum()) - tail

    def _solve(self, tol):
        kappa = self.kappa
        for _ in range(12):
            self._fill(kappa)
            sw, delta = HF.sor_solve(self.h, self.fixed, self.strides, self.interior,
                                     self.code, self.coef, self.psic, 1.7, tol, 20000)
            self.sweeps += sw
            new = self._kappa_estimate(kappa)
            if abs(new - kappa) < 1e-6 * max(abs(new), 1e-12):
                kappa = new
                break
            kappa = new
        self.kappa = kappa
        self._fill(kappa)

    def args(self):
        vals, rt, c, expo = self.gtab
        return (self.h, self.lo, self.n_pad, self.kappa, self.A.points, self.center,
                self.r_mid, vals, rt, c, expo)

    def value(self, y) -> float:
        return float(HF.h_value(np.asarray(y, dtype=np.int64), *self.args()))

    def ph(self, y) -> float:
        return float(HF.ph_value(np.asarray(y, dtype=np.int64), *self.args()))


def _pgf_tail_np(code, coef, q):
    if code == HF.GEOM:
        return q / (1.0 + q)
    if code == HF.BINARY:
        return q - 0.5 * q * q
    if code == HF.DELTA:
        return q
    return 1.0 - np.polynomial.polynomial.polyval(1.0 - q, coef)


@lru_cache(maxsize=64)
def _cached_field(d, law_name, key, box_radius):
    pts = np.frombuffer(key, dtype=np.int64).reshape(-1, d)
    return HitField(d, law_name, PointSet(pts, d), box_radius)


def hit_field(d: int, law, A: PointSet, box_radius: int | None = None) -> HitField:
    return _cached_field(d, _law(law).name, A.points.tobytes(), box_radius)


def _spine_batch(field: HitField, x, seeds, spine_len, future, spine_counts):
    d = field.d
    L = field.law
    tgt = Target(field.A, grid=False)
    g1 = green_table(d, 1)
    g2 = green_table(d, 2)
    return HF.spine_avoid_batch(
        stream_states(seeds), np.asarray(x, dtype=np.int64), int(spine_len), bool(future),
        bool(spine_counts), field.code, field.coef, field.psic, *field.args(),
        tgt.table, tgt.bits, tgt.half, g1.values, g1.rt, g1.c_hi, g1.expo,
        g2.values, g2.rt, g2.c_hi, g2.expo, float(L.variance))


# --------------------------------------------------------------------------
# estimators


def bcap_lln(d: int, law, A: PointSet, n: int, replicas: int, seed: SeedSpec,
             rate: float = 1 / 6) -> MCEstimate:
    """Mean of |T0_n + A| / n over replicas.

    The bias interval extrapolates from the same replicas' n/2 prefixes,
    assuming the mean decreases to its limit like n^-rate.  The default
    rate matches the decay seen in d = 5 between n = 1e4 and 1e6.
    """
    _need_d5(d)
    L = _law(law)
    if n < 1:
        raise ValueError("n must be >= 1")
    vals = np.empty(replicas)
    half = np.empty(replicas)
    zero = np.zeros(d, dtype=np.int64)
    for r in range(replicas):
        pos = TR.future_prefix(new_state(seed.child(r)), L.cdf("mu"), L.cdf("sb"), zero, n, True)
        vals[r] = len(minkowski_sum(PointSet(pos, d), A)) / n
        m = max(1, n // 2)
        half[r] = len(minkowski_sum(PointSet(pos[:m], d), A)) / m
    bias = doubling_bias(vals, half, rate)
    return MCEstimate.from_samples(vals, seed, bias_bound=bias,
                                   params={"d": d, "law": L.name, "n": n, "size": len(A),
                                           "half_mean": float(half.mean()), "rate": rate})


def bcap_escape(d: int, law, A: PointSet, spine_len: int, replicas: int, seed: SeedSpec,
                side: str = "future", method: str = "conditional",
                spine_in_future: bool = False, node_cap: int = NODE_CAP) -> MCEstimate:
    """sum_{x in A} P(the future (or past) tree from x avoids A, root excluded).

    ``method='conditional'`` averages the exact avoidance probability given
    the sampled spine, with subtrees integrated out through h;
    ``method='direct'`` samples whole subtrees.
    """
    _need_d5(d)
    L = _law(law)
    if side not in ("future", "past"):
        raise ValueError("side must be 'future' or 'past'")
    future = side == "future"
    spine_counts = (not future) or spine_in_future
    per = np.zeros(replicas)
    bias = np.zeros(replicas)
    incomplete = 0
    if L.degenerate and future and not spine_in_future:
        # the root's extra child starts an infinite line: a plain walk
        tgt = Target(A)
        for i, x in enumerate(A.points):
            seeds = [seed.child(r * len(A) + i) for r in range(replicas)]
            starts = np.repeat(x[None, :], replicas, axis=0)
            status, _, finals = run_walkers(tgt, starts, stream_states(seeds), 10**9, False,
                                            _r_stop(d, A, tgt))
            per += status != 0
            bias += return_bounds(tgt, finals, status)
    elif method == "conditional":
        field_ = hit_field(d, L, A)
        for i, x in enumerate(A.points):
            seeds = [seed.child(r * len(A) + i) for r in range(replicas)]
            p, res = _spine_batch(field_, x, seeds, spine_len, future, spine_counts)
            per += p
            bias += res
    elif method == "direct":
        tgt = Target(A, grid=False)
        for i, x in enumerate(A.points):
            for r in range(replicas):
                st = new_state(seed.child(r * len(A) + i))
                ok, complete, end = TR.direct_avoid(st, L.cdf("mu"), L.cdf("sb"), x, spine_len,
                                                    tgt.table, tgt.bits, tgt.half, node_cap,
                                                    future, spine_counts)
                per[r] += ok
                incomplete += not complete
                if not complete:
                    bias[r] += 1.0  # counted as avoiding; may have hit
                elif ok:
                    bias[r] += _residual(d, L, A, end, spine_counts)
    else:
        raise ValueError(f"unknown method {method!r}")
    if incomplete:
        warnings.warn(f"{incomplete} direct samples hit the node cap")
    return MCEstimate.from_samples(
        per, seed, bias_bound=(-float(bias.mean()), 0.0),
        params={"d": d, "law": L.name, "spine_len": spine_len, "side": side,
                "method": method, "size": len(A), "spine_in_future": spine_in_future,
                "incomplete": incomplete})


def _r_stop(d, A, tgt, rel=1e-4):
    from .capacity import escape_r_stop

    return escape_r_stop(d, len(A), rel, tgt.radius)


def _residual(d, L, A, end, spine_counts):
    diff = A.points - end
    g1 = green_table(d, 1)
    g2 = green_table(d, 2)
    r = 0.5 * L.variance * float(g2(diff).sum())
    if spine_counts:
        r += float(g1(diff).sum())
    return min(r, float(len(A)))


def tree_hit_prob(d: int, law, A: PointSet, x, spine_len: int, replicas: int,
                  seed: SeedSpec, method: str = "conditional",
                  node_cap: int = NODE_CAP) -> MCEstimate:
    """P(T_-^x meets A) with the spine truncated at spine_len.

    ``params['normalized']`` holds (2/sigma^2) P / G_2(x) and its error.
    """
    _need_d5(d)
    L = _law(law)
    x = np.asarray(x, dtype=np.int64)
    params = {"d": d, "law": L.name, "x": x.tolist(), "spine_len": spine_len,
              "method": method}
    if x in A:
        return MCEstimate(1.0, 0.0, replicas, seed, (0.0, 0.0),
                          {**params, "normalized": None})
    if method == "conditional":
        p, res = _spine_batch(hit_field(d, L, A), x,
                              [seed.child(r) for r in range(replicas)], spine_len, False, True)
        hits = 1.0 - p
    elif method == "direct":
        tgt = Target(A, grid=False)
        hits = np.empty(replicas)
        res = np.empty(replicas)
        for r in range(replicas):
            ok, complete, end = TR.direct_avoid(new_state(seed.child(r)), L.cdf("mu"),
                                                L.cdf("sb"), x, spine_len, tgt.table,
                                                tgt.bits, tgt.half, node_cap, False, True)
            hits[r] = 0.0 if ok else 1.0
            res[r] = 1.0 if not complete else (_residual(d, L, A, end, True) if ok else 0.0)
    else:
        raise ValueError(f"unknown method {method!r}")
    est = MCEstimate.from_samples(hits, seed, bias_bound=(0.0, float(res.mean())), params=params)
    if L.variance > 0:
        g2 = green_GN(d, 2, x)
        norm = 2.0 / L.variance / g2
        est.params["normalized"] = est.mean * norm
        est.params["normalized_stderr"] = est.stderr * norm
    else:
        est.params["normalized"] = None
    return est
