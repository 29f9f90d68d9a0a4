"""Classical and gamma-capacities of finite lattice sets.

Three routes to a capacity:

* ``cap_green_exact`` solves ``G_A e = 1`` for the equilibrium charge,
* ``simplex_qp`` minimises ``nu' K nu`` over probability vectors with
  away-step Frank-Wolfe and an active-set polish,
* ``cap_escape_mc`` sums escape frequencies of random walks started on A.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .kernels import KernelSpec, green_g, kernel_matrix
from .lattice import PointSet
from .rng import SeedSpec, Stream
from .stats import MCEstimate
from .walkers import Target, return_bounds, run_walkers, stream_states

EXACT_BUDGET = 2000


class CapacityError(RuntimeError):
    pass


@dataclass
class CapacityResult:
    value: float
    measure: np.ndarray
    energy: float
    method: str
    error: float
    sites: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "energy": self.energy,
            "measure": [float(v) for v in self.measure],
            "error": self.error,
            "method": self.method,
            **({"info": self.info} if self.info else {}),
        }


def cap_green_exact(d: int, A: PointSet) -> CapacityResult:
    """cap(A) = 1' G_A^{-1} 1 with G_A the Green's function matrix on A."""
    if len(A) == 0:
        raise ValueError("capacity of an empty set")
    if len(A) > EXACT_BUDGET:
        raise CapacityError(f"|A| = {len(A)} exceeds the dense budget {EXACT_BUDGET}")
    km = kernel_matrix(KernelSpec.green(d), A)
    G = km.entries
    cond = float(np.linalg.cond(G))
    if not np.isfinite(cond) or cond > 1e12:
        raise CapacityError(f"Green matrix is ill-conditioned (condition {cond:.3g})")
    e = np.linalg.solve(G, np.ones(len(A)))
    value = float(e.sum())
    clamped = bool((e < 0).any())
    nu = np.clip(e, 0.0, None)
    nu = nu / nu.sum()
    energy = float(nu @ G @ nu)
    err = value * (cond * np.finfo(float).eps + km.spec.tol)
    info = {"condition": cond}
    if clamped:
        info["clamped_negative_weights"] = int((e < 0).sum())
    return CapacityResult(value, nu, energy, "exact_linear", err, A.points.copy(), info)


# --------------------------------------------------------------------------
# simplex QP


@nb.njit(cache=True)
def _fw_away(K, tol, max_iter):
    m = K.shape[0]
    nu = np.zeros(m)
    # start from the vertex with the smallest diagonal
    s0 = 0
    for i in range(1, m):
        if K[i, i] < K[s0, s0]:
            s0 = i
    nu[s0] = 1.0
    Kn = K[:, s0].copy()
    f = nu @ Kn
    gap = 0.0
    it = 0
    for it in range(max_iter):
        # gradient 2 K nu
        s = 0
        for i in range(1, m):
            if Kn[i] < Kn[s]:
                s = i
        a = -1
        for i in range(m):
            if nu[i] > 0.0 and (a < 0 or Kn[i] > Kn[a]):
                a = i
        gap = 2.0 * (f - Kn[s])
        if gap <= tol * f:
            break
        fw_gain = f - Kn[s]
        away_gain = Kn[a] - f
        if fw_gain >= away_gain:
            # direction e_s - nu
            dKd = K[s, s] - 2.0 * Kn[s] + f
            gmax = 1.0
            num = f - Kn[s]
            step = gmax if dKd <= 0.0 else min(gmax, num / dKd)
            for i in range(m):
                Kn[i] = (1.0 - step) * Kn[i] + step * K[i, s]
                nu[i] *= 1.0 - step
            nu[s] += step
        else:
            # direction nu - e_a
            if nu[a] >= 1.0:
                gmax = 0.0
            else:
                gmax = nu[a] / (1.0 - nu[a])
            dKd = f - 2.0 * Kn[a] + K[a, a]
            num = Kn[a] - f
            step = gmax if dKd <= 0.0 else min(gmax, num / dKd)
            for i in range(m):
                Kn[i] = (1.0 + step) * Kn[i] - step * K[i, a]
                nu[i] *= 1.0 + step
            nu[a] -= step
            if step == gmax:
                nu[a] = 0.0
        f = 0.0
        for i in range(m):
            f += nu[i] * Kn[i]
    return nu, f, gap, it


def _polish(K: np.ndarray, nu: np.ndarray, max_rounds: int = 50) -> np.ndarray:
    """Active-set refinement: solve the KKT system on the support,
    drop negative weights, add violators."""
    m = len(nu)
    S = set(np.flatnonzero(nu > 1e-14).tolist())
    best = nu
    for _ in range(max_rounds):
        idx = np.array(sorted(S))
        try:
            w = np.linalg.solve(K[np.ix_(idx, idx)], np.ones(len(idx)))
        except np.linalg.LinAlgError:
            return best
        if (w <= 0).any():
            S.discard(int(idx[np.argmin(w)]))
            if not S:
                return best
            continue
        cand = np.zeros(m)
        cand[idx] = w / w.sum()
        Kn = K @ cand
        f = cand @ Kn
        viol = np.flatnonzero(Kn < f * (1 - 1e-13))
        best = cand
        if viol.size == 0:
            return cand
        S.add(int(viol[np.argmin(Kn[viol])]))
    return best


def simplex_qp(K: np.ndarray, tol: float = 1e-10, max_iter: int = 100_000):
    """Minimise nu' K nu over the probability simplex.

    Returns ``(nu, energy, gap, iterations)``; ``gap`` bounds
    ``energy - min`` (Frank-Wolfe duality gap).
    """
    K = np.ascontiguousarray(K, dtype=np.float64)
    nu, f, gap, it = _fw_away(K, tol, max_iter)
    pol = _polish(K, nu)
    Kn = K @ pol
    fp = float(pol @ Kn)
    gp = 2.0 * (fp - float(Kn.min()))
    if fp <= f and gp <= gap:
        nu, f, gap = pol, fp, gp
    nu = np.clip(nu, 0.0, None)
    nu = nu / nu.sum()
    return nu, float(f), float(max(gap, 0.0)), int(it)


def _qp_result(km, tol: float, method: str) -> CapacityResult:
    nu, energy, gap, it = simplex_qp(km.entries, tol=tol)
    if gap > tol * energy * 10:
        warnings.warn(f"QP stopped with relative gap {gap / energy:.3g}")
    value = 1.0 / energy
    # energy - E* <= gap  =>  value <= 1/(energy - gap)
    err = value * gap / max(energy - gap, 1e-300)
    return CapacityResult(value, nu, energy, method, err, km.sites,
                          {"iterations": it, "gap": gap})


def cap_gamma(gamma: float, A: PointSet, tol: float = 1e-10) -> CapacityResult:
    """Cap_gamma(A) = 1 / min_nu E_{K_gamma}(nu)."""
    if len(A) == 0:
        raise ValueError("capacity of an empty set")
    return _qp_result(kernel_matrix(KernelSpec.gamma_kernel(A.d, gamma), A), tol, "simplex_qp")


def cap_green_qp(d: int, A: PointSet, tol: float = 1e-12) -> CapacityResult:
    return _qp_result(kernel_matrix(KernelSpec.green(d), A), tol, "simplex_qp")


def grid_search_energy(K: np.ndarray, resolution: int = 200):
    """Minimise nu' K nu over the grid {k/resolution}; lexicographically first
    minimiser wins ties.  Exponential in |A|: intended for |A| <= 5."""
    m = K.shape[0]
    best_e, best_nu = math.inf, None
    for block in _composition_blocks(resolution, m):
        nu = block / resolution
        e = np.einsum("ij,jk,ik->i", nu, K, nu)
        i = int(np.argmin(e))  # first occurrence
        if e[i] < best_e:
            best_e, best_nu = float(e[i]), nu[i]
    return best_nu, best_e


def _all_compositions(n: int, k: int) -> np.ndarray:
    """All k-vectors of non-negative integers summing to n, in lexicographic order."""
    if k == 1:
        return np.array([[n]], dtype=np.int64)
    if k == 2:
        a = np.arange(n + 1)
        return np.stack([a, n - a], axis=1)
    parts = [np.hstack([np.full((len(sub), 1), a), sub])
             for a in range(n + 1) for sub in [_all_compositions(n - a, k - 1)]]
    return np.vstack(parts)


def _composition_blocks(n: int, k: int):
    if k <= 2:
        yield _all_compositions(n, k)
        return
    for a in range(n + 1):
        for sub in _composition_blocks(n - a, k - 1) if k > 4 else [_all_compositions(n - a, k - 1)]:
            yield np.hstack([np.full((len(sub), 1), a), sub])


# --------------------------------------------------------------------------
# escape Monte Carlo


def escape_r_stop(d: int, size: int, rel_bias: float, radius: float) -> float:
    """Distance at which a union bound on returning to a set of ``size``
    points falls to ``rel_bias``."""
    from .kernels import green_table

    tab = green_table(d, 1)
    g0 = tab.values[0]
    r = (size * tab.c_hi / (g0 * rel_bias)) ** (1.0 / (d - 2))
    return radius + r


def cap_escape_mc(d: int, A: PointSet, replicas: int, horizon: int, seed: SeedSpec,
                  subsample: float | None = None, r_stop: float | None = None,
                  rel_bias: float = 1e-3) -> MCEstimate:
    """cap(A) = sum_{x in A} P_x(no return to A), by simulation.

    Each replica walks once from every site of A (or from a uniform random
    subset of ``subsample`` fraction of the sites, rescaled).  Walks
    surviving to the horizon or to ``r_stop`` count as escapes; their
    residual return probability is reported in ``bias_bound``.
    """
    if d < 3:
        raise ValueError("escape capacity needs a transient walk (d >= 3)")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    target = Target(A)
    m = len(A)
    if r_stop is None:
        r_stop = escape_r_stop(d, m, rel_bias, target.radius)
    per_rep = np.empty(replicas)
    bias = np.empty(replicas)
    sub_m = m if subsample is None else max(1, int(round(subsample * m)))
    scale = m / sub_m
    for r in range(replicas):
        if sub_m < m:
            idx = Stream(seed.derive(1).child(r)).choice(m, sub_m)
        else:
            idx = np.arange(m)
        seeds = [seed.child(r * m + int(i)) for i in idx]
        status, _, finals = run_walkers(target, A.points[idx], stream_states(seeds),
                                        horizon, False, r_stop)
        per_rep[r] = scale * float((status != 0).sum())
        bias[r] = scale * float(return_bounds(target, finals, status).sum())
    est = MCEstimate.from_samples(
        per_rep, seed, bias_bound=(-float(bias.mean()), 0.0),
        params={"d": d, "size": m, "replicas": replicas, "horizon": horizon,
                "r_stop": r_stop, "subsample": subsample})
    if est.replicas >= 2 and est.bias_width > est.stderr:
        warnings.warn("escape truncation bias exceeds the standard error; "
                      "increase horizon or r_stop")
    return est


def cap_single_point(d: int) -> float:
    return 1.0 / green_g(d, np.zeros(d, dtype=np.int64))
