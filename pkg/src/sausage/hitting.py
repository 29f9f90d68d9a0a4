"""Hitting experiments for sums of independent walks and for the sin-tree.

The hit event for N walks is ``(z + R^1 + ... + R^N) meets A``.  It is
decided exactly on truncated ranges by building ``A - z - R^1 - ... -
R^{N-1}`` stage by stage and testing the last walk against it.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from . import _kernels as K
from .branching import tree_hit_prob
from .capacity import cap_escape_mc, cap_gamma
from .fsums import f_klm
from .kernels import green_GN, green_table
from .lattice import PointSet, minkowski_sum, walk_range
from .minkowski import sausage_capacity_rate
from .rng import SeedSpec, new_state, randbelow
from .stats import MCEstimate, ratio_error
from .walkers import stream_states

PI2_8 = math.pi**2 / 8


def default_horizon(z) -> int:
    """(10 |z|)^2 steps."""
    return int(math.ceil((10.0 * float(np.linalg.norm(z))) ** 2))


def _walks(seed: SeedSpec, d: int, N: int, T: int) -> list[np.ndarray]:
    st = new_state(seed)
    zero = np.zeros(d, dtype=np.int64)
    return [K.walk_positions(st, d, T, zero) for _ in range(N)]


@nb.njit(cache=True)
def _max_abs(pos):
    m = 0
    for i in range(pos.shape[0]):
        for j in range(pos.shape[1]):
            v = abs(pos[i, j])
            if v > m:
                m = v
    return m


@nb.njit(cache=True)
def _fast_hit(st, d, N, T, shifted, bits, half, cap):
    """Hit test for N in {1, 2} on packed keys.  Returns (code, ends) with
    code 1 hit, 0 miss, -1 outside key range (caller falls back)."""
    zero = np.zeros(d, dtype=np.int64)
    ends = np.zeros((N, d), dtype=np.int64)
    p1 = K.walk_positions(st, d, T, zero)
    ends[0] = p1[T]
    reach = _max_abs(shifted)
    if N == 1:
        if _max_abs(p1) >= half or reach >= half:
            return -1, ends
        keys = np.empty(shifted.shape[0], dtype=np.int64)
        for a in range(shifted.shape[0]):
            keys[a] = K._pack_one(shifted[a], bits)
        table = K.build_table(keys)
        for i in range(T + 1):
            if K.table_contains(table, K._pack_one(p1[i], bits)):
                return 1, ends
        return 0, ends
    p2 = K.walk_positions(st, d, T, zero)
    ends[1] = p2[T]
    if _max_abs(p1) + reach >= half or _max_abs(p2) >= half:
        return -1, ends
    table = np.full(cap, K.EMPTY, dtype=np.int64)
    for a in range(shifted.shape[0]):
        ka = K._pack_one(shifted[a], bits)
        for i in range(T + 1):
            K.table_insert(table, ka - K._pack_one(p1[i], bits))
    for i in range(T + 1):
        if K.table_contains(table, K._pack_one(p2[i], bits)):
            return 1, ends
    return 0, ends


def _sum_hits(d: int, A: PointSet, z, walks) -> bool:
    """Exact test of (z + R^1 + ... + R^N) meeting A on the given paths."""
    shifted = A.points - z
    S = PointSet(shifted, d)
    for W in walks[:-1]:
        S = minkowski_sum(S, PointSet(-W, d))
    return bool(S.member_mask(walks[-1]).any())


def hit_prob_sum_walks(d: int, N: int, z, A: PointSet, horizon: int | None, replicas: int,
                       seed: SeedSpec, warn: bool = True) -> MCEstimate:
    """P((z + R^1 + ... + R^N) meets A) with every walk cut at ``horizon``.

    Replica r uses stream ``seed.child(r)`` and draws the walks in order,
    so runs sharing a seed are coupled across A, z and N.  The bias
    interval bounds the expected number of coincidences after the horizon
    by sum_i sum_a G_N(a - z - X^i_T).
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if d < 1 + 2 * N:
        raise ValueError(f"d >= 1 + 2N required (got d={d}, N={N})")
    z = np.asarray(z, dtype=np.int64)
    if z in A:
        raise ValueError("z must lie outside A")
    T = default_horizon(z) if horizon is None else int(horizon)
    tab = green_table(d, N)
    hits = np.empty(replicas)
    tail = np.empty(replicas)
    shifted = A.points - z
    cap = K.table_capacity(len(A) * (T + 1))
    for r in range(replicas):
        code = -1
        if N <= 2:
            code, ends = _fast_hit(new_state(seed.child(r)), d, N, T, shifted,
                                   K.key_bits(d), K.key_half(d), cap)
        if code < 0:
            W = _walks(seed.child(r), d, N, T)
            code = int(_sum_hits(d, A, z, W))
            ends = np.array([w[-1] for w in W])
        hits[r] = code
        tail[r] = sum(float(tab(shifted - e).sum()) for e in ends)
    est = MCEstimate.from_samples(
        hits, seed, (0.0, float(tail.mean())),
        {"d": d, "N": N, "z": z.tolist(), "horizon": T, "size": len(A)})
    if warn and replicas >= 2 and est.bias_width > est.stderr / 2:
        warnings.warn(f"horizon {T} leaves a bias bound {est.bias_width:.3g} above "
                      f"half the standard error {est.stderr:.3g}")
    return est


# --------------------------------------------------------------------------
# ratio tables


@dataclass
class RatioRow:
    z: list[int]
    probability: MCEstimate
    normalizer: float
    ratio: float
    error: float
    censored: bool = False
    # rule-of-three upper bound on the ratio when censored
    upper: float | None = None

    def to_dict(self) -> dict:
        return {"z": self.z, "probability": self.probability.to_dict(),
                "normalizer": self.normalizer, "ratio": self.ratio, "error": self.error,
                "censored": self.censored, "upper": self.upper}


@dataclass
class RatioTable:
    rows: list[RatioRow]
    context: dict = field(default_factory=dict)

    def ratios(self) -> np.ndarray:
        return np.array([r.ratio for r in self.rows if not r.censored])

    @property
    def censored(self) -> int:
        return sum(r.censored for r in self.rows)

    def spread(self) -> float:
        """max / min of the uncensored ratios."""
        x = self.ratios()
        if len(x) == 0 or x.min() <= 0:
            return math.inf
        return float(x.max() / x.min())

    def to_dict(self) -> dict:
        return {"rows": [r.to_dict() for r in self.rows], "context": self.context,
                "spread": self.spread(), "censored": self.censored}

    def csv_rows(self) -> list[dict]:
        return [{"norm_z": float(np.linalg.norm(r.z)), "mean": r.probability.mean,
                 "stderr": r.probability.stderr,
                 "bias": r.probability.bias_width, "ratio": r.ratio, "error": r.error,
                 "censored": int(r.censored)} for r in self.rows]


def _row(z, est: MCEstimate, normalizer: float) -> RatioRow:
    if est.mean == 0:
        return RatioRow(list(map(int, z)), est, normalizer, 0.0, math.inf, True,
                        3.0 / est.replicas / normalizer)
    return RatioRow(list(map(int, z)), est, normalizer, est.mean / normalizer,
                    est.stderr / normalizer)


def _shell_point(d: int, rho: float) -> np.ndarray:
    z = np.zeros(d, dtype=np.int64)
    z[0] = int(round(rho))
    return z


def log_slope(radii, probs) -> float:
    """Least-squares slope of log p against log radius."""
    x = np.log(np.asarray(radii, dtype=float))
    y = np.log(np.asarray(probs, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def _shell_job(job):
    d, N, A, rho, horizon_factor, replicas, seed = job
    z = _shell_point(d, rho)
    T = int(math.ceil((horizon_factor * rho) ** 2))
    return z, hit_prob_sum_walks(d, N, z, A, T, replicas, seed, warn=False)


def ks_ratio_experiment(d: int, N: int, A: PointSet, shells, replicas: int, seed: SeedSpec,
                        horizon_factor: float = 10.0, mapper=map) -> RatioTable:
    """|z|^(d-2N) P(hit) / Cap_{d-2N}(A) on shells z = rho e_1.

    ``mapper`` runs the independent shells; any order-preserving map
    (a process pool's, say) gives the same table.
    """
    diam = A.diameter()
    for rho in shells:
        if rho < 2 * diam:
            raise ValueError(f"shell radius {rho} below 2 diam(A) = {2 * diam:g}")
    gamma = d - 2 * N
    cap = cap_gamma(gamma, A).value
    jobs = [(d, N, A, float(rho), horizon_factor, replicas, seed.spawn("shell", i))
            for i, rho in enumerate(shells)]
    rows = [_row(z, est, cap / float(np.linalg.norm(z)) ** gamma)
            for z, est in mapper(_shell_job, jobs)]
    ok = [r for r in rows if not r.censored]
    slope = (log_slope([np.linalg.norm(r.z) for r in ok], [r.probability.mean for r in ok])
             if len(ok) >= 2 else float("nan"))
    return RatioTable(rows, {"d": d, "N": N, "size": len(A), "cap_gamma": cap,
                             "gamma": gamma, "slope": slope,
                             "expected_slope": -float(gamma)})


def _ie_job(job):
    d, law, A, x, spine_len, horizon, replicas, seed, i, method = job
    tree = tree_hit_prob(d, law, A, x, spine_len, replicas, seed.spawn("tree", i), method)
    walk = hit_prob_sum_walks(d, 2, x, A, horizon, replicas, seed.spawn("walk", i), warn=False)
    return tree, walk


def intersection_equivalence(d: int, law: str, A: PointSet, xs, spine_len: int,
                             horizon: int | None, replicas: int, seed: SeedSpec,
                             method: str = "conditional", mapper=map) -> RatioTable:
    """P(T_-^x meets A) / P((x + R + R~) meets A) for each x."""
    if d < 5:
        raise ValueError("d >= 5 required")
    diam = A.diameter()
    xs = [np.asarray(x, dtype=np.int64) for x in xs]
    jobs = []
    for i, x in enumerate(xs):
        if x not in A and np.linalg.norm(x) < 2 * diam:
            raise ValueError(f"x = {x.tolist()} lies within 2 diam(A)")
        if x not in A:
            jobs.append((d, law, A, x, spine_len, horizon, replicas, seed, i, method))
    results = iter(list(mapper(_ie_job, jobs)))
    rows = []
    for x in xs:
        if x in A:
            one = MCEstimate(1.0, 0.0, replicas, seed, (0.0, 0.0), {"x": x.tolist()})
            rows.append(RatioRow(x.tolist(), one, 1.0, 1.0, 0.0))
            continue
        tree, walk = next(results)
        tree.params["walk"] = walk.to_dict()
        if walk.mean == 0:
            rows.append(RatioRow(x.tolist(), tree, 0.0, 0.0, math.inf, True, None))
            continue
        r, e = ratio_error(tree.mean, tree.stderr, walk.mean, walk.stderr)
        rows.append(RatioRow(x.tolist(), tree, walk.mean, r, e))
    return RatioTable(rows, {"d": d, "law": law, "size": len(A), "spine_len": spine_len})


# --------------------------------------------------------------------------
# local times


@nb.njit(cache=True)
def _walk_keys_into(st, d, T, keys, end, bits, half):
    """Packed keys of a T-step walk from 0 into ``keys``; end point into
    ``end``.  False if the walk left the packed range."""
    for j in range(d):
        end[j] = 0
    k = np.int64(0)
    keys[0] = 0
    ok = True
    for t in range(1, T + 1):
        r = randbelow(st, 2 * d)
        j = r >> 1
        u = np.int64(1) << (bits * j)
        if r & 1:
            end[j] += 1
            k += u
        else:
            end[j] -= 1
            k -= u
        if end[j] >= half or end[j] <= -half:
            ok = False
        keys[t] = k
    return ok


@nb.njit(cache=True)
def _local_times(states, d, N, T, ta, tb, bits, half):
    """ell(a), ell(b) per replica for N in {1, 2}; ta, tb are the keys of
    a - z and b - z.  Also returns the walk end points."""
    m = states.shape[0]
    la = np.zeros(m, dtype=np.int64)
    lb = np.zeros(m, dtype=np.int64)
    ends = np.zeros((m, N, d), dtype=np.int64)
    k1 = np.empty(T + 1, dtype=np.int64)
    k2 = np.empty(T + 1, dtype=np.int64)
    ok = True
    for r in range(m):
        st = states[r]
        ok = _walk_keys_into(st, d, T, k1, ends[r, 0], bits, half) and ok
        if N == 1:
            ca = 0
            cb = 0
            for i in range(T + 1):
                ca += k1[i] == ta
                cb += k1[i] == tb
            la[r] = ca
            lb[r] = cb
            continue
        ok = _walk_keys_into(st, d, T, k2, ends[r, 1], bits, half) and ok
        s2 = np.sort(k2)
        ca = 0
        cb = 0
        for i in range(T + 1):
            key = ta - k1[i]
            ca += np.searchsorted(s2, key, side="right") - np.searchsorted(s2, key)
            key = tb - k1[i]
            cb += np.searchsorted(s2, key, side="right") - np.searchsorted(s2, key)
        la[r] = ca
        lb[r] = cb
    return la, lb, ends, ok


@dataclass
class LocalTimeSample:
    counts_a: np.ndarray
    counts_b: np.ndarray
    z: list[int]
    a: list[int]
    b: list[int]
    N: int
    d: int
    horizon: int
    tail_a: np.ndarray = field(repr=False, default=None)
    tail_b: np.ndarray = field(repr=False, default=None)


def sample_local_times(d: int, N: int, z, a, b, horizon: int, replicas: int,
                       seed: SeedSpec) -> LocalTimeSample:
    """Truncated local times of z + X^1 + ... + X^N at a and b (N <= 2)."""
    if N not in (1, 2):
        raise NotImplementedError("local times are sampled for N = 1 and N = 2")
    z, a, b = (np.asarray(v, dtype=np.int64) for v in (z, a, b))
    bits, half = K.key_bits(d), K.key_half(d)
    ta, tb = (K.pack((v - z)[None])[0] if np.abs(v - z).max() < half else None for v in (a, b))
    if ta is None or tb is None:
        raise OverflowError("targets outside the packed-key range")
    states = stream_states([seed.child(r) for r in range(replicas)])
    la, lb, ends, ok = _local_times(states, d, N, int(horizon), ta, tb, bits, half)
    if not ok:
        raise OverflowError("a walk left the packed-key range; lower the horizon")
    tab = green_table(d, N)
    flat = ends.reshape(-1, d)
    tail_a = tab(a - z - flat).reshape(replicas, N).sum(axis=1)
    tail_b = tab(b - z - flat).reshape(replicas, N).sum(axis=1)
    return LocalTimeSample(la, lb, z.tolist(), a.tolist(), b.tolist(), N, d, int(horizon),
                           tail_a, tail_b)


def lemma_bound(d: int, N: int, z, a, b, box_radius: int = 16) -> float:
    """W_N(z, a, b) + W_N(z, b, a), the second-moment upper bound."""
    z, a, b = (np.asarray(v, dtype=np.int64) for v in (z, a, b))
    gab = green_GN(d, N, a - b)

    def W(a_, b_):
        w = green_GN(d, N, z - b_) * gab
        for k in range(1, N):
            F, tail = f_klm(d, N, N - k, k, z, a_, b_, box_radius)
            w += math.comb(N - 1, k - 1) * (F + tail)
        return w
    return W(a, b) + W(b, a)


def local_time_moment_check(d: int, N: int, z, a, b, horizon: int, replicas: int,
                            seed: SeedSpec) -> dict:
    """First and second moments of the truncated local times against G_N."""
    if d <= 2 * N:
        raise ValueError(f"d > 2N required (got d={d}, N={N})")
    z, a, b = (np.asarray(v, dtype=np.int64) for v in (z, a, b))
    if np.linalg.norm(z) < 2 * max(np.linalg.norm(a), np.linalg.norm(b)):
        raise ValueError("|z| >= 2 max(|a|, |b|) required")
    s = sample_local_times(d, N, z, a, b, horizon, replicas, seed)
    ea = MCEstimate.from_samples(s.counts_a, seed, (0.0, float(s.tail_a.mean())))
    eb = MCEstimate.from_samples(s.counts_b, seed, (0.0, float(s.tail_b.mean())))
    prod = MCEstimate.from_samples(s.counts_a.astype(float) * s.counts_b, seed)
    ga, gb = green_GN(d, N, a - z), green_GN(d, N, b - z)
    lead = (green_GN(d, N, z - a) + green_GN(d, N, z - b)) * green_GN(d, N, a - b)
    return {
        "d": d, "N": N, "z": z.tolist(), "a": a.tolist(), "b": b.tolist(),
        "horizon": int(horizon), "replicas": replicas,
        "first_a": ea, "first_b": eb, "G_a": ga, "G_b": gb,
        "second": prod, "leading": lead,
        "implied_constant": prod.mean / lead,
        "implied_constant_stderr": prod.stderr / lead,
        "lemma_bound": lemma_bound(d, N, z, a, b) if N > 1 else lead,
    }


# --------------------------------------------------------------------------
# capacity of sausages


def charact_experiment(d: int, N: int, A: PointSet, shells, n: int, replicas: int,
                       seed: SeedSpec, rate_replicas: int | None = None) -> dict:
    """|z|^(d-2N) P(hit) against lim Cap_{d-2(N-1)}(R_n + A) / n."""
    if N < 2:
        raise ValueError("N >= 2 required")
    if d <= 2 * N:
        raise ValueError(f"d > 2N required (got d={d}, N={N})")
    table = ks_ratio_experiment(d, N, A, shells, replicas, seed.spawn("ks"))
    rate = sausage_capacity_rate(d, d - 2 * (N - 1), A, n, rate_replicas or replicas,
                                 seed.spawn("rate"))
    gamma = d - 2 * N
    scaled, errs = [], []
    for row in table.rows:
        rho = float(np.linalg.norm(row.z))
        v = rho**gamma * row.probability.mean
        r, e = ratio_error(v, rho**gamma * row.probability.stderr, rate.mean, rate.stderr)
        scaled.append(r)
        errs.append(e)
    hit_all = all(not r.censored for r in table.rows)
    return {
        "table": table, "rate": rate, "c_hat": scaled, "c_hat_err": errs,
        "c1": min(scaled) if hit_all else 0.0, "c2": max(scaled),
        "quotient": [c / r.ratio if r.ratio else math.nan for c, r in zip(scaled, table.rows)],
    }


def _d4_job(job):
    A, n, r, subsample, rel_bias, seed = job
    S = minkowski_sum(walk_range(4, n, seed.spawn("walk", n, r)), A)
    est = cap_escape_mc(4, S, 1, 10**12, seed.spawn("escape", n, r),
                        subsample=subsample, rel_bias=rel_bias)
    return est.mean, est.bias_bound[0], len(S)


def d4_capacity_rate(A: PointSet, ns, replicas: int, seed: SeedSpec, subsample: float = 0.1,
                     rel_bias: float = 1e-2, mapper=map) -> dict:
    """(log n / n) E[cap(R_n + A)] for each n, against pi^2 / 8.

    Each sausage capacity is an escape estimate from a uniform random
    ``subsample`` of its sites.  Replicas are independent jobs for ``mapper``.
    """
    if A.d != 4:
        raise ValueError("d = 4 required")
    out = []
    for n in ns:
        n = int(n)
        jobs = [(A, n, r, subsample, rel_bias, seed) for r in range(replicas)]
        res = np.array(list(mapper(_d4_job, jobs)), dtype=float).reshape(-1, 3)
        vals, bias, sizes = res[:, 0], res[:, 1], res[:, 2]
        f = math.log(n) / n
        scaled = MCEstimate.from_samples(vals * f, seed, bias_bound=(float(bias.mean()) * f, 0.0),
                                         params={"n": n, "size": len(A)})
        out.append({"n": n, "estimate": scaled, "ratio": scaled.mean / PI2_8,
                    "mean_size": float(sizes.mean()),
                    "bounded": bool((vals <= sizes + 1e-9).all()
                                    and (sizes <= (n + 1) * len(A)).all())})
    return {"rows": out, "target": PI2_8}
