"""Sausage volumes |R^1_n + ... + R^N_n + A| and the set functions f_N.

Three estimators of f_N(A):

* ``f_N_lln`` normalises the exact volume of the sum of N walk ranges,
* ``f_N_dual`` samples the nested avoidance events of the dual formula,
  with one-sided and two-sided walks truncated at a finite horizon,
* ``sausage_capacity_rate`` looks at Cap_gamma(R_n + A) / n instead.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from . import _trees as TR
from .capacity import CapacityError, cap_escape_mc, cap_gamma
from .kernels import green_table
from .laws import make_law
from .lattice import PointSet, minkowski_sum, walk_range
from .rng import SeedSpec, new_state
from .stats import MCEstimate, doubling_bias, lln_rate, ratio_error

VOLUME_BUDGET = 10**9
QP_BUDGET = 3000


def _need(d: int, N: int) -> None:
    if N < 1:
        raise ValueError("N must be >= 1")
    if d <= 2 * N:
        raise ValueError(f"d > 2N required (got d={d}, N={N})")


def sausage_volume(ranges: list[PointSet], A: PointSet, budget: int = VOLUME_BUDGET) -> int:
    """Exact |S_1 + ... + S_k + A|, folding the smallest set last."""
    sets = list(ranges) + [A]
    d = A.d
    for s in sets:
        if s.d != d:
            raise ValueError("dimension mismatch between ranges and A")
        if len(s) == 0:
            raise ValueError("empty set in a sausage")
    if math.prod(len(s) for s in sets) > budget:
        raise MemoryError(f"product of cardinalities exceeds the budget {budget:g}")
    order = sorted(sets, key=len, reverse=True)
    acc = order[0]
    for s in order[1:]:
        acc = minkowski_sum(acc, s)
    return len(acc)


def _ranges(d: int, N: int, n: int, seed: SeedSpec) -> list[PointSet]:
    return [walk_range(d, n, seed.spawn(i)) for i in range(N)]


def f_N_lln(d: int, N: int, A: PointSet, n: int, replicas: int, seed: SeedSpec,
            rate: float | None = None) -> MCEstimate:
    """Mean of |R^1_n + ... + R^N_n + A| / n^N over independent replicas.

    The bias interval comes from the n/2 prefixes of the same walks.
    """
    _need(d, N)
    if n < 0:
        raise ValueError("n must be >= 0")
    params = {"d": d, "N": N, "n": n, "size": len(A)}
    if n == 0:
        return MCEstimate(float(len(A)), 0.0, replicas, seed, (0.0, 0.0), params)
    rate = lln_rate(d, N) if rate is None else rate
    full = np.empty(replicas)
    half = np.empty(replicas)
    m = max(1, n // 2)
    for r in range(replicas):
        s = seed.spawn(r)
        full[r] = sausage_volume(_ranges(d, N, n, s), A) / n**N
        half[r] = sausage_volume(_ranges(d, N, m, s), A) / m**N
    params.update(half_mean=float(half.mean()), rate=rate)
    return MCEstimate.from_samples(full, seed, doubling_bias(full, half, rate), params)


def dual_horizon(A: PointSet) -> int:
    """(20 diam(A u {0}))^2, with diameter at least 1."""
    pts = np.vstack([A.points, np.zeros((1, A.d), dtype=np.int64)])
    diam = max(1.0, PointSet(pts).diameter())
    return int(math.ceil((20 * diam) ** 2))


def _walk(st, d, T):
    return K.walk_positions(st, d, T, np.zeros(d, dtype=np.int64))


def f_N_dual(d: int, N: int, A: PointSet, trunc: int | None, replicas: int,
             seed: SeedSpec) -> MCEstimate:
    """sum_a P(all N nested avoidance events hold), each walk cut at ``trunc``.

    Walk i contributes its forward range at times 1..T; walks j > i add
    their two-sided range on [-T, T].  All sites of A share the walks of
    a replica.  The bias interval bounds the expected number of
    coincidences missed beyond the horizon.
    """
    _need(d, N)
    T = dual_horizon(A) if trunc is None else int(trunc)
    if T < 1:
        raise ValueError("trunc must be >= 1")
    tabs = {k: green_table(d, k) for k in range(1, N + 1)}
    vals = np.empty(replicas)
    bias = np.empty(replicas)
    for r in range(replicas):
        st = new_state(seed.child(r))
        fwd = [_walk(st, d, T) for _ in range(N)]
        back = [None] + [_walk(st, d, T) for _ in range(1, N)]
        # U[i] = A - sum_{j > i} D_j
        U = [None] * N
        U[N - 1] = A
        for i in range(N - 2, -1, -1):
            D = PointSet(np.vstack([fwd[i + 1], back[i + 1]]), d)
            U[i] = minkowski_sum(U[i + 1], D.negate())
        ok = np.ones(len(A), dtype=bool)
        for i in range(N - 1, -1, -1):
            steps = fwd[i][1:]
            for ia, a in enumerate(A.points):
                if ok[ia] and U[i].member_mask(steps + a).any():
                    ok[ia] = False
        vals[r] = ok.sum()
        bias[r] = _dual_tail(A, fwd, back, tabs, ok)
    return MCEstimate.from_samples(
        vals, seed, (-float(bias.mean()), 0.0),
        {"d": d, "N": N, "trunc": T, "size": len(A)})


def _dual_tail(A, fwd, back, tabs, ok):
    """Expected missed coincidences for the sites still avoiding."""
    N = len(fwd)
    total = 0.0
    for ia, a in enumerate(A.points):
        if not ok[ia]:
            continue
        t = 0.0
        for i in range(N):
            k = N - i
            tab = tabs[k]
            ends = [(fwd[i][-1], 2.0 ** (N - 1 - i))]
            for j in range(i + 1, N):
                w = 2.0 ** (N - 2 - i)
                ends += [(fwd[j][-1], w), (back[j][-1], w)]
            for e, w in ends:
                t += w * float(tab(A.points - a - e).sum())
        total += min(t, 1.0)
    return total


# --------------------------------------------------------------------------
# capacity of the sausage


def sausage_capacity_rate(d: int, gamma: float, A: PointSet, n: int, replicas: int,
                          seed: SeedSpec, mc_fallback: bool = False,
                          mc_replicas: int = 4, tol: float = 1e-8) -> MCEstimate:
    """Mean of Cap_gamma(R_n + A) / n.

    Sausages above ``QP_BUDGET`` sites raise :class:`CapacityError` unless
    ``mc_fallback`` is set and gamma = d - 2, where the Green capacity is
    estimated by walker escapes instead (a comparable, not equal, quantity;
    flagged in ``params['kernel']``).
    """
    if gamma <= 2:
        raise ValueError("gamma > 2 required")
    if d < 3:
        raise ValueError("d >= 3 required")
    params = {"d": d, "gamma": gamma, "n": n, "size": len(A), "kernel": "gamma"}
    if n == 0:
        v = cap_gamma(gamma, A, tol).value
        return MCEstimate(v, 0.0, replicas, seed, (0.0, 0.0), params)
    vals = np.empty(replicas)
    for r in range(replicas):
        S = minkowski_sum(walk_range(d, n, seed.spawn(r)), A)
        if len(S) <= QP_BUDGET:
            vals[r] = cap_gamma(gamma, S, tol).value / n
        elif mc_fallback and gamma == d - 2:
            params["kernel"] = "green_escape"
            vals[r] = cap_escape_mc(d, S, mc_replicas, 10**7, seed.spawn(r, "mc")).mean / n
        else:
            raise CapacityError(f"|R_n + A| = {len(S)} exceeds the QP budget {QP_BUDGET}")
    return MCEstimate.from_samples(vals, seed, None, params)


def capacity_rate_trend(d: int, gamma: float, A: PointSet, ns, replicas: int,
                        seed: SeedSpec) -> list[MCEstimate]:
    """sausage_capacity_rate along ``ns`` with shared walk seeds."""
    return [sausage_capacity_rate(d, gamma, A, n, replicas, seed) for n in ns]


# --------------------------------------------------------------------------
# the tree chain


@dataclass
class ChainReport:
    links: dict[str, MCEstimate]
    ratios: dict[str, tuple[float, float]]
    failures: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "links": {k: v.to_dict() for k, v in self.links.items()},
            "ratios": {k: list(v) for k, v in self.ratios.items()},
            "failures": self.failures,
        }


def _tree_prefix(d, law, n, seed):
    L = make_law(law)
    pos = TR.future_prefix(new_state(seed), L.cdf("mu"), L.cdf("sb"),
                           np.zeros(d, dtype=np.int64), n, True)
    return PointSet(pos, d)


def tree_sausage_chain(d: int, law: str, A: PointSet, n: int, replicas: int,
                       seed: SeedSpec, subsample: float = 0.1,
                       escape_horizon: int = 10**7) -> ChainReport:
    """Estimate the links of the chain

        cap(T0_n + A)/n,  |R_n + T0_n + A|/n^2,  BCap(R_n + A)/n,
        f_2(R_n + A)/n,   f_3(A)

    at a common n.  BCap(R_n + A) uses the volume |T0_m + R_n + A|/m with
    m = 8n and f_2(R_n + A) uses two walks of length 2n.  Each link is
    computed independently; a link that fails its budget is reported in
    ``failures`` and skipped.
    """
    if d < 5:
        raise ValueError("d >= 5 required for the chain")
    links: dict[str, MCEstimate] = {}
    failures: dict[str, str] = {}

    def run(name, fn):
        try:
            links[name] = fn()
        except (MemoryError, CapacityError, ValueError) as exc:
            failures[name] = str(exc)

    def cap_tree():
        v = np.empty(replicas)
        for r in range(replicas):
            S = minkowski_sum(_tree_prefix(d, law, n, seed.spawn("cap", r)), A)
            est = cap_escape_mc(d, S, 1, escape_horizon, seed.spawn("cap-mc", r),
                                subsample=subsample)
            v[r] = est.mean / n
        return MCEstimate.from_samples(v, seed, None, {"link": "cap(T+A)/n"})

    def vol_tree():
        v = np.empty(replicas)
        for r in range(replicas):
            T0 = _tree_prefix(d, law, n, seed.spawn("vol", r, 0))
            R = walk_range(d, n, seed.spawn("vol", r, 1))
            v[r] = sausage_volume([R, T0], A) / n**2
        return MCEstimate.from_samples(v, seed, None, {"link": "|R+T+A|/n^2"})

    def bcap_walk():
        m = 8 * n
        v = np.empty(replicas)
        for r in range(replicas):
            R = walk_range(d, n, seed.spawn("bcap", r, 0))
            T0 = _tree_prefix(d, law, m, seed.spawn("bcap", r, 1))
            v[r] = sausage_volume([T0, R], A) / (m * n)
        return MCEstimate.from_samples(v, seed, None, {"link": "BCap(R+A)/n", "m": m})

    def f2_walk():
        m = 2 * n
        v = np.empty(replicas)
        for r in range(replicas):
            R = walk_range(d, n, seed.spawn("f2", r, 0))
            R1 = walk_range(d, m, seed.spawn("f2", r, 1))
            R2 = walk_range(d, m, seed.spawn("f2", r, 2))
            v[r] = sausage_volume([R1, R2, R], A) / (m * m * n)
        return MCEstimate.from_samples(v, seed, None, {"link": "f2(R+A)/n", "m": m})

    run("cap_tree", cap_tree)
    run("vol_tree", vol_tree)
    run("bcap_walk", bcap_walk)
    run("f2_walk", f2_walk)
    if d > 6:
        run("f3", lambda: f_N_lln(d, 3, A, n, replicas, seed.spawn("f3")))
    else:
        failures["f3"] = "f_3 needs d > 6"
    names = list(links)
    ratios = {}
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            x, y = links[a], links[b]
            if y.mean > 0:
                ratios[f"{a}/{b}"] = ratio_error(x.mean, x.stderr, y.mean, y.stderr)
    if failures:
        warnings.warn(f"chain links skipped: {sorted(failures)}")
    return ChainReport(links, ratios, failures)
