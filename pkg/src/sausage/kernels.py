"""Green's functions of the simple random walk, their convolution powers,
and the power-law kernels K_gamma.

``G_N`` (with ``G_1 = g``) is evaluated from the continuous-time heat
kernel.  A rate-one continuous-time walk has independent coordinates,
each a rate-``1/d`` walk on Z, so

    G_N(x) = int_0^inf t^(N-1)/(N-1)! * prod_j ive(|x_j|, t/d) dt

where ``ive`` is the exponentially scaled modified Bessel function.  The
head of the integral is done by Gauss-Legendre panels in ``log t`` and the
tail beyond ``T`` in closed form from the large-argument expansion of
``ive``.  This is equivalent to the Fourier integral of
``(1 - phi(theta))^(-N)`` but one-dimensional, so it reaches high accuracy
without special treatment of the singularity at ``theta = 0``.
"""
from __future__ import annotations

import csv
import math
import threading
from dataclasses import dataclass, field
from functools import lru_cache

import numba as nb
import numpy as np
from scipy.special import ive

from .lattice import PointSet

CROSSOVER_RADIUS = 30.0
DEFAULT_TOL = 1e-8

_U0 = -25.0
_PANEL = 0.5
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def check_green(d: int, N: int = 1) -> None:
    if N < 1:
        raise ValueError("N must be >= 1")
    if d <= 2 * N:
        if N == 1:
            raise ValueError(f"Green's function diverges for d={d} (need d >= 3)")
        raise ValueError(f"G_{N} diverges for d={d} (need d > {2 * N})")


def _horizon(d: int, kmax: int) -> float:
    return max(4000.0, 100.0 * d * max(kmax, 1) ** 2)


def _nodes(T: float) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature nodes t and weights for int_{e^U0}^T f(t) dt."""
    hi = math.log(T)
    npan = int(math.ceil((hi - _U0) / _PANEL))
    edges = np.linspace(_U0, hi, npan + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    u = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    w = (half[:, None] * _GL_W[None, :]).ravel()
    t = np.exp(u)
    return t, w * t


def _tail(d: int, N: int, K: np.ndarray, T: float) -> np.ndarray:
    """Closed-form int_T^inf of the integrand, second order in 1/t."""
    mu = 4.0 * K.astype(np.float64) ** 2
    a1 = -(mu - 1.0) / 8.0
    a2 = (mu - 1.0) * (mu - 9.0) / 128.0
    s1 = a1.sum(axis=1)
    s2 = a2.sum(axis=1) + 0.5 * (s1**2 - (a1**2).sum(axis=1))
    alpha = d / 2.0 - N
    pref = (d / (2.0 * math.pi)) ** (d / 2.0) / math.factorial(N - 1)
    return pref * (T ** -alpha / alpha
                   + s1 * d * T ** (-alpha - 1) / (alpha + 1)
                   + s2 * d * d * T ** (-alpha - 2) / (alpha + 2))


def green_batch(d: int, N: int, points) -> np.ndarray:
    """G_N at each row of ``points`` (no caching, no validation of N)."""
    K = np.sort(np.abs(np.asarray(points, dtype=np.int64)).reshape(-1, d), axis=1)
    if K.shape[0] == 0:
        return np.zeros(0)
    kmax = int(K.max())
    T = _horizon(d, kmax)
    t, w = _nodes(T)
    z = t / d
    table = ive(np.arange(kmax + 1)[:, None], z[None, :])  # (kmax+1, nodes)
    weight = w * t ** (N - 1) / math.factorial(N - 1)
    out = np.empty(K.shape[0])
    step = max(1, 2_000_000 // (len(t) * d))
    for s in range(0, K.shape[0], step):
        blk = K[s:s + step]
        prod = np.prod(table[blk], axis=1)  # (b, nodes)
        out[s:s + step] = prod @ weight
    return out + _tail(d, N, K, T)


class _Memo:
    """Thread-safe memo of G_N keyed by (d, N, sorted |x|)."""

    def __init__(self):
        self._data: dict[tuple, float] = {}
        self._lock = threading.Lock()

    def get_many(self, d: int, N: int, points: np.ndarray) -> np.ndarray:
        K = np.sort(np.abs(np.asarray(points, dtype=np.int64)).reshape(-1, d), axis=1)
        keys = [(d, N) + tuple(int(c) for c in row) for row in K]
        with self._lock:
            missing = sorted({k for k in keys if k not in self._data})
        if missing:
            vals = green_batch(d, N, np.array([k[2:] for k in missing], dtype=np.int64))
            with self._lock:
                for k, v in zip(missing, vals):
                    self._data.setdefault(k, float(v))
        with self._lock:
            return np.array([self._data[k] for k in keys])

    def clear(self):
        with self._lock:
            self._data.clear()

    def __len__(self):
        return len(self._data)


MEMO = _Memo()


def _check_tol(tol: float) -> None:
    if not tol > 0:
        raise ValueError("tolerance must be positive")


def green_GN(d: int, N: int, x, tol: float = DEFAULT_TOL) -> float:
    """N-fold convolution power of the Green's function at x."""
    check_green(d, N)
    _check_tol(tol)
    x = np.asarray(x, dtype=np.int64).reshape(1, d)
    r = math.sqrt(float((x * x).sum()))
    if r > CROSSOVER_RADIUS:
        fit = fit_asymptotic(d, N)
        if fit.max_rel_residual <= tol:
            return fit.constant * r ** (2 * N - d)
    return float(MEMO.get_many(d, N, x)[0])


def green_g(d: int, x, tol: float = DEFAULT_TOL) -> float:
    """Green's function g(x): expected visits to x of a walk from 0."""
    return green_GN(d, 1, x, tol)


def green_many(d: int, N: int, points) -> np.ndarray:
    check_green(d, N)
    return MEMO.get_many(d, N, np.asarray(points, dtype=np.int64))


def asymptotic_constant(d: int, N: int) -> float:
    """Leading constant c with G_N(x) ~ c |x|^(2N-d) (Gaussian approximation)."""
    check_green(d, N)
    beta = d / 2.0 - N
    logc = ((d / 2.0) * math.log(d / (2 * math.pi)) + math.lgamma(beta)
            - math.lgamma(N) - beta * math.log(d / 2.0))
    return math.exp(logc)


@dataclass(frozen=True)
class AsymptoticFit:
    d: int
    N: int
    radius: float
    constant: float
    ci: tuple[float, float]
    max_rel_residual: float
    gaussian_constant: float


def _shell_points(d: int, radius: float) -> np.ndarray:
    """Lattice points near the sphere of given radius along a few directions."""
    dirs = []
    for m in range(1, d + 1):
        v = np.zeros(d)
        v[:m] = 1.0 / math.sqrt(m)
        dirs.append(v)
    v = np.arange(1, d + 1, dtype=float)
    dirs.append(v / np.linalg.norm(v))
    return np.array([np.rint(radius * u) for u in dirs], dtype=np.int64)


@lru_cache(maxsize=None)
def fit_asymptotic(d: int, N: int, radius: float = CROSSOVER_RADIUS) -> AsymptoticFit:
    """Fit c in G_N ~ c r^(2N-d) on a shell; report spread as an interval."""
    check_green(d, N)
    pts = _shell_points(d, radius)
    r = np.sqrt((pts * pts).sum(axis=1).astype(float))
    vals = green_batch(d, N, pts) * r ** (d - 2 * N)
    c = float(vals.mean())
    resid = float(np.max(np.abs(vals / c - 1.0)))
    return AsymptoticFit(d, N, radius, c, (float(vals.min()), float(vals.max())), resid,
                         asymptotic_constant(d, N))


# --------------------------------------------------------------------------
# dense lookup tables for use inside compiled loops


_TABLE_EVAL_BUDGET = 8000
_TABLE_SIZE_BUDGET = 4_000_000


def _table_radius(d: int) -> int:
    r = 1
    while (math.comb(r + 1 + d, d) <= _TABLE_EVAL_BUDGET
           and (r + 2) ** d <= _TABLE_SIZE_BUDGET):
        r += 1
    return r


@dataclass
class GreenTable:
    """G_N on sorted |x| within a box of radius ``rt``, plus an upper
    envelope ``c_hi * r^(2N-d)`` valid outside it."""

    d: int
    N: int
    rt: int
    values: np.ndarray
    c_hi: float
    expo: float
    c_fit: float = 0.0

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.int64).reshape(-1, self.d)
        return _table_lookup_many(self.values, self.rt, self.c_hi, self.expo, pts)


@lru_cache(maxsize=None)
def green_table(d: int, N: int = 1) -> GreenTable:
    check_green(d, N)
    rt = _table_radius(d)
    radix = rt + 1
    # all sorted tuples 0 <= k_1 <= ... <= k_d <= rt
    tuples = _sorted_tuples(d, rt)
    vals = green_batch(d, N, tuples)
    dense = np.zeros(radix ** d)
    idx = np.zeros(len(tuples), dtype=np.int64)
    for j in range(d):
        idx = idx * radix + tuples[:, j]
    dense[idx] = vals
    # envelope: max of G r^(d-2N) over the outer layer, with a safety margin
    outer = tuples[tuples[:, -1] >= rt - 1]
    r = np.sqrt((outer.astype(float) ** 2).sum(axis=1))
    ratio = vals[tuples[:, -1] >= rt - 1] * r ** (d - 2 * N)
    c_hi = float(ratio.max()) * 1.05
    return GreenTable(d, N, rt, dense, c_hi, float(d - 2 * N), fit_asymptotic(d, N).constant)


def _sorted_tuples(d: int, rt: int) -> np.ndarray:
    out = []

    def rec(prefix, lo):
        if len(prefix) == d:
            out.append(tuple(prefix))
            return
        for k in range(lo, rt + 1):
            rec(prefix + [k], k)

    rec([], 0)
    return np.array(out, dtype=np.int64)


@nb.njit(cache=True)
def table_lookup(values, rt, c_hi, expo, y):
    d = y.shape[0]
    a = np.empty(d, dtype=np.int64)
    m = 0
    s = 0.0
    for j in range(d):
        v = abs(y[j])
        a[j] = v
        s += float(v) * v
        if v > m:
            m = v
    if m > rt:
        return c_hi * s ** (-0.5 * expo)
    # insertion sort
    for i in range(1, d):
        v = a[i]
        k = i - 1
        while k >= 0 and a[k] > v:
            a[k + 1] = a[k]
            k -= 1
        a[k + 1] = v
    idx = 0
    for j in range(d):
        idx = idx * (rt + 1) + a[j]
    return values[idx]


@nb.njit(cache=True)
def _table_lookup_many(values, rt, c_hi, expo, pts):
    out = np.empty(pts.shape[0])
    for i in range(pts.shape[0]):
        out[i] = table_lookup(values, rt, c_hi, expo, pts[i])
    return out


@nb.njit(cache=True)
def sum_over_set(values, rt, c_hi, expo, y, A):
    """sum_{a in A} G(y - a) using a lookup table."""
    d = y.shape[0]
    diff = np.empty(d, dtype=np.int64)
    s = 0.0
    for i in range(A.shape[0]):
        for j in range(d):
            diff[j] = y[j] - A[i, j]
        s += table_lookup(values, rt, c_hi, expo, diff)
    return s


# --------------------------------------------------------------------------
# K_gamma and kernel matrices


def kernel_gamma(gamma: float, x, y) -> float:
    """(1 + |x - y|)^(-gamma)."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    diff = np.asarray(x, dtype=np.int64) - np.asarray(y, dtype=np.int64)
    return (1.0 + math.sqrt(int((diff * diff).sum()))) ** (-gamma)


@dataclass(frozen=True)
class KernelSpec:
    """Either ``kind='green'`` with power N, or ``kind='gamma'`` with exponent gamma."""

    kind: str
    d: int
    N: int = 1
    gamma: float = 0.0
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if self.kind == "green":
            check_green(self.d, self.N)
        elif self.kind == "gamma":
            if not self.gamma > 0:
                raise ValueError("gamma must be positive")
        else:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        _check_tol(self.tol)

    @classmethod
    def green(cls, d: int, N: int = 1, tol: float = DEFAULT_TOL) -> "KernelSpec":
        return cls("green", d, N=N, tol=tol)

    @classmethod
    def gamma_kernel(cls, d: int, gamma: float) -> "KernelSpec":
        return cls("gamma", d, gamma=float(gamma))

    @classmethod
    def parse(cls, text: str, d: int) -> "KernelSpec":
        """'green', 'green:N' or 'gamma:<value>'."""
        name, _, arg = text.partition(":")
        if name == "green":
            return cls.green(d, int(arg) if arg else 1)
        if name == "gamma":
            return cls.gamma_kernel(d, float(arg))
        raise ValueError(f"unknown kernel {text!r}")


@dataclass
class KernelMatrix:
    sites: np.ndarray
    entries: np.ndarray
    spec: KernelSpec
    errors: np.ndarray = field(default=None)

    def to_csv(self, path) -> None:
        """Rows: site_i, site_j, value, error bound (upper triangle)."""
        m = len(self.sites)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["site_i", "site_j", "value", "error_bound"])
            for i in range(m):
                si = " ".join(map(str, self.sites[i]))
                for j in range(i, m):
                    sj = " ".join(map(str, self.sites[j]))
                    w.writerow([si, sj, repr(float(self.entries[i, j])),
                                repr(float(self.errors[i, j]))])


def _pairwise_diffs(P: np.ndarray) -> np.ndarray:
    return (P[:, None, :] - P[None, :, :]).reshape(-1, P.shape[1])


def kernel_matrix(spec: KernelSpec, A: PointSet) -> KernelMatrix:
    if len(A) == 0:
        raise ValueError("kernel matrix of an empty set")
    if A.d != spec.d:
        raise ValueError("dimension mismatch between kernel and set")
    P = A.points
    m = len(P)
    if spec.kind == "gamma":
        diff = P[:, None, :] - P[None, :, :]
        r = np.sqrt((diff.astype(float) ** 2).sum(axis=2))
        ent = (1.0 + r) ** (-spec.gamma)
        err = np.zeros_like(ent)
    else:
        vals = MEMO.get_many(spec.d, spec.N, _pairwise_diffs(P))
        ent = vals.reshape(m, m)
        ent = 0.5 * (ent + ent.T)
        err = np.abs(ent) * spec.tol
    return KernelMatrix(P.copy(), ent, spec, err)


# --------------------------------------------------------------------------
# lattice-sum oracles via factorised heat kernels


def heat_table(d: int, nmax: int, T: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nodes t, weights w and q[n, i] = ive(n, t_i/d) for n = 0..nmax."""
    t, w = _nodes(T)
    q = ive(np.arange(nmax + 1)[:, None], (t / d)[None, :])
    return t, w, q


def box_sum_product(d: int, k: int, l: int, x, R: int) -> float:
    """sum over y in [-R, R]^d of G_k(y) G_l(x - y), computed exactly up to
    quadrature error by factorising both heat kernels over coordinates.

    Only the part of each time integral up to the quadrature horizon is
    included; the horizon is chosen so that the dropped part is negligible
    against the box truncation.
    """
    x = np.asarray(x, dtype=np.int64)
    span = R + int(np.abs(x).max()) + 1
    T = _horizon(d, span)
    t, w = _nodes(T)
    n = np.arange(-span - R, span + R + 1)
    q = ive(np.abs(n)[:, None], (t / d)[None, :])  # (len(n), nodes)
    off = span + R
    wk = w * t ** (k - 1) / math.factorial(k - 1)
    wl = w * t ** (l - 1) / math.factorial(l - 1)
    ys = np.arange(-R, R + 1)
    total = np.ones((len(t), len(t)))
    for j in range(d):
        A = q[ys + off]  # (box, nodes) : q(y_j)
        B = q[int(x[j]) - ys + off]  # q(x_j - y_j)
        total *= A.T @ B
    return float(wk @ total @ wl)


def box_tail_bound(d: int, k: int, l: int, R: int) -> float:
    """Upper bound on the sum over |y|_inf > R of G_k(y) G_l(x - y) for
    |x| small against R, from the envelopes c r^(2k-d) and an integral
    comparison over the complement of the ball of radius R."""
    ck = green_table(d, k).c_hi
    cl = green_table(d, l).c_hi
    p = 2 * d - 2 * k - 2 * l  # decay exponent of the summand
    surface = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
    if p <= d:
        return math.inf
    # a lattice point at radius r >= R - 1 owns a unit cube inside r >= R - 1 - sqrt(d)/2
    r0 = max(R - 1 - math.sqrt(d) / 2, 1.0)
    return 2.0 * ck * cl * surface * r0 ** (d - p) / (p - d)
