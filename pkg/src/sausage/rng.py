"""Counter-based random streams.

Every stochastic routine draws from a Philox4x32-10 stream keyed by
``(master_seed, stream_id)``.  The map is injective and explicit:

* key   = (master_seed & 0xffffffff, master_seed >> 32)
* counter = (block & 0xffffffff, block >> 32, stream_id & 0xffffffff, stream_id >> 32)

where ``block`` is the index of the 128-bit output block.  A replica's
numbers therefore depend only on the master seed and its replica index,
never on which worker ran it.

The stream state is a small ``uint64`` array so it can be threaded
through numba kernels::

    [k0, k1, stream_lo, stream_hi, block, pos, b0, b1, b2, b3]
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numba as nb
import numpy as np

MASK32 = 0xFFFFFFFF
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_LO = np.uint64(MASK32)
_S32 = np.uint64(32)

STATE_SIZE = 10


@dataclass(frozen=True)
class SeedSpec:
    """Identifies one independent random stream."""

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if not 0 <= self.stream_id < 2**64:
            raise ValueError("stream_id must be a 64-bit unsigned integer")

    def child(self, stream_id: int) -> "SeedSpec":
        return SeedSpec(self.master_seed, stream_id)

    def spawn(self, *path) -> "SeedSpec":
        """Master seed for a nested sub-experiment, hashed from this seed and ``path``."""
        h = hashlib.blake2b(repr((self.master_seed, self.stream_id) + path).encode(),
                            digest_size=8)
        return SeedSpec(int.from_bytes(h.digest(), "little"), 0)

    def derive(self, salt: int) -> "SeedSpec":
        """A stream for a sub-task; keyed off a salted master seed."""
        ms = (self.master_seed ^ (0x9E3779B97F4A7C15 * (salt + 1))) % 2**64
        return SeedSpec(ms, self.stream_id)


@nb.njit(cache=True, inline="always")
def _mulhilo(a, b):
    p = a * b
    return p >> _S32, p & _LO


@nb.njit(cache=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Philox4x32 with 10 rounds; all arguments are uint64 holding 32-bit words."""
    for _ in range(10):
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = (hi1 ^ c1 ^ k0) & _LO, lo1, (hi0 ^ c3 ^ k1) & _LO, lo0
        k0 = (k0 + _W0) & _LO
        k1 = (k1 + _W1) & _LO
    return c0, c1, c2, c3


def new_state(seed: SeedSpec) -> np.ndarray:
    st = np.zeros(STATE_SIZE, dtype=np.uint64)
    st[0] = seed.master_seed & MASK32
    st[1] = seed.master_seed >> 32
    st[2] = seed.stream_id & MASK32
    st[3] = seed.stream_id >> 32
    st[4] = 0
    st[5] = 4  # buffer empty
    return st


@nb.njit(cache=True)
def next_u32(st):
    pos = np.int64(st[5])
    if pos >= 4:
        blk = st[4]
        r0, r1, r2, r3 = philox4x32(blk & _LO, blk >> _S32, st[2], st[3], st[0], st[1])
        st[6] = r0
        st[7] = r1
        st[8] = r2
        st[9] = r3
        st[4] = blk + np.uint64(1)
        pos = 0
    out = st[6 + pos]
    st[5] = np.uint64(pos + 1)
    return out


@nb.njit(cache=True)
def uniform(st):
    """Uniform double in [0, 1) with 53 random bits."""
    a = next_u32(st) >> np.uint64(5)
    b = next_u32(st) >> np.uint64(6)
    return (float(a) * 67108864.0 + float(b)) / 9007199254740992.0


@nb.njit(cache=True)
def randbelow(st, m):
    """Unbiased integer in [0, m) for 1 <= m < 2**32 (Lemire's method)."""
    mm = np.uint64(m)
    x = next_u32(st)
    prod = x * mm
    low = prod & _LO
    if low < mm:
        thresh = (np.uint64(1 << 32) - mm) % mm
        while low < thresh:
            x = next_u32(st)
            prod = x * mm
            low = prod & _LO
    return np.int64(prod >> _S32)


@nb.njit(cache=True)
def _binom_pmf_log(n, k, p):
    return (math.lgamma(n + 1.0) - math.lgamma(k + 1.0) - math.lgamma(n - k + 1.0)
            + k * math.log(p) + (n - k) * math.log1p(-p))


@nb.njit(cache=True)
def binomial(st, n, p):
    """Binomial(n, p) by chop-down inversion from the mode; O(sd) work."""
    if n <= 0 or p <= 0.0:
        return 0
    if p >= 1.0:
        return n
    if n < 24:
        c = 0
        for _ in range(n):
            if uniform(st) < p:
                c += 1
        return c
    q = 1.0 - p
    mode = int((n + 1) * p)
    if mode > n:
        mode = n
    f_mode = math.exp(_binom_pmf_log(n, mode, p))
    u = uniform(st)
    u -= f_mode
    if u < 0.0:
        return mode
    lo = mode
    hi = mode
    f_lo = f_mode
    f_hi = f_mode
    ratio = p / q
    while True:
        moved = False
        if lo > 0:
            # f(k-1) = f(k) * k / ((n-k+1) * ratio)
            f_lo = f_lo * lo / ((n - lo + 1) * ratio)
            lo -= 1
            u -= f_lo
            moved = True
            if u < 0.0:
                return lo
        if hi < n:
            f_hi = f_hi * (n - hi) * ratio / (hi + 1)
            hi += 1
            u -= f_hi
            moved = True
            if u < 0.0:
                return hi
        if not moved:
            # rounding residue: restart the draw
            u = uniform(st) - f_mode
            if u < 0.0:
                return mode
            lo = mode
            hi = mode
            f_lo = f_mode
            f_hi = f_mode


@nb.njit(cache=True)
def srw_displacement(st, k, d, out):
    """Exact law of the sum of k simple-random-walk steps in Z^d, written into out."""
    remaining = k
    for j in range(d):
        if j == d - 1:
            nj = remaining
        else:
            nj = binomial(st, remaining, 1.0 / (d - j))
        remaining -= nj
        out[j] = 2 * binomial(st, nj, 0.5) - nj


class Stream:
    """Python-side handle on one Philox stream."""

    def __init__(self, seed: SeedSpec):
        self.seed = seed
        self.state = new_state(seed)

    def u32(self, n: int) -> np.ndarray:
        return _fill_u32(self.state, n)

    def uniforms(self, n: int) -> np.ndarray:
        return _fill_uniform(self.state, n)

    def integers(self, m: int, n: int) -> np.ndarray:
        return _fill_randbelow(self.state, m, n)

    def choice(self, m: int, k: int) -> np.ndarray:
        """k distinct indices from range(m) (partial Fisher-Yates)."""
        return _sample_without_replacement(self.state, m, k)


@nb.njit(cache=True)
def _fill_u32(st, n):
    out = np.empty(n, dtype=np.uint64)
    for i in range(n):
        out[i] = next_u32(st)
    return out


@nb.njit(cache=True)
def _fill_uniform(st, n):
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        out[i] = uniform(st)
    return out


@nb.njit(cache=True)
def _fill_randbelow(st, m, n):
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        out[i] = randbelow(st, m)
    return out


@nb.njit(cache=True)
def _sample_without_replacement(st, m, k):
    idx = np.arange(m)
    for i in range(k):
        j = i + randbelow(st, m - i)
        t = idx[i]
        idx[i] = idx[j]
        idx[j] = t
    return np.sort(idx[:k])
