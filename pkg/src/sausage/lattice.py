"""Lattice points, walk paths, ranges and exact Minkowski sums."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels as K
from .rng import SeedSpec, new_state

COORD_LIMIT = 2**31


def norm(x) -> float:
    """Euclidean norm, squared exactly in integers before the root."""
    return math.sqrt(sum(int(c) * int(c) for c in x))


def unit(d: int, j: int) -> np.ndarray:
    e = np.zeros(d, dtype=np.int64)
    e[j] = 1
    return e


def _check_coords(pts: np.ndarray) -> None:
    if pts.size and int(np.abs(pts).max()) >= COORD_LIMIT:
        raise OverflowError("lattice coordinate exceeds the signed 32-bit range")


class PointSet:
    """A finite set of points of Z^d with exact membership.

    Points are kept deduplicated.  When all coordinates fit the packed-key
    range for ``d`` the set also carries sorted int64 keys, which make
    membership and Minkowski sums cheap.
    """

    __slots__ = ("d", "points", "_keys")

    def __init__(self, points, d: int | None = None):
        pts = np.asarray(points, dtype=np.int64)
        if pts.ndim == 1:
            if d is None:
                raise ValueError("dimension required for a flat point list")
            pts = pts.reshape(-1, d)
        if d is None:
            d = pts.shape[1]
        if d < 1 or pts.shape[1] != d:
            raise ValueError(f"points must have dimension {d}")
        _check_coords(pts)
        self.d = d
        if pts.shape[0] and np.abs(pts).max() < K.key_half(d):
            keys = K.unique_sorted(K.pack(pts))
            self._keys = keys
            self.points = K.unpack(keys, d)
        else:
            self._keys = None
            self.points = np.unique(pts, axis=0) if pts.shape[0] else pts.reshape(0, d)

    @classmethod
    def from_keys(cls, keys: np.ndarray, d: int) -> "PointSet":
        ps = cls.__new__(cls)
        ps.d = d
        ps._keys = np.asarray(keys, dtype=np.int64)
        ps.points = K.unpack(ps._keys, d)
        return ps

    @classmethod
    def origin(cls, d: int) -> "PointSet":
        return cls(np.zeros((1, d), dtype=np.int64))

    @property
    def keys(self) -> np.ndarray | None:
        return self._keys

    @property
    def cardinality(self) -> int:
        return int(self.points.shape[0])

    def __len__(self) -> int:
        return self.cardinality

    def __iter__(self):
        return (tuple(int(c) for c in p) for p in self.points)

    def __contains__(self, x) -> bool:
        x = np.asarray(x, dtype=np.int64).reshape(1, self.d)
        if self._keys is not None:
            if np.abs(x).max() >= K.key_half(self.d):
                return False
            k = K.pack(x)[0]
            i = np.searchsorted(self._keys, k)
            return bool(i < self._keys.shape[0] and self._keys[i] == k)
        return bool(np.any(np.all(self.points == x, axis=1)))

    def member_mask(self, pts) -> np.ndarray:
        """Boolean mask of the rows of ``pts`` lying in the set."""
        pts = np.asarray(pts, dtype=np.int64).reshape(-1, self.d)
        if self._keys is not None:
            ok = np.abs(pts).max(axis=1) < K.key_half(self.d) if len(pts) else np.zeros(0, bool)
            out = np.zeros(len(pts), dtype=bool)
            k = K.pack(pts[ok])
            i = np.minimum(np.searchsorted(self._keys, k), len(self._keys) - 1)
            out[ok] = self._keys[i] == k
            return out
        rows = {tuple(p) for p in self.points.tolist()}
        return np.array([tuple(p) in rows for p in pts.tolist()], dtype=bool)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointSet) or other.d != self.d:
            return NotImplemented
        if len(self) != len(other):
            return False
        a = np.unique(self.points, axis=0)
        b = np.unique(other.points, axis=0)
        return bool(np.array_equal(a, b))

    def __hash__(self):
        return hash((self.d, self.points.tobytes()))

    def __repr__(self) -> str:
        return f"PointSet(d={self.d}, cardinality={len(self)})"

    def as_tuples(self) -> set:
        return set(iter(self))

    def translate(self, v) -> "PointSet":
        return PointSet(self.points + np.asarray(v, dtype=np.int64), self.d)

    def negate(self) -> "PointSet":
        return PointSet(-self.points, self.d)

    def union(self, other: "PointSet") -> "PointSet":
        _same_dim(self, other)
        return PointSet(np.vstack([self.points, other.points]), self.d)

    def intersection(self, other: "PointSet") -> "PointSet":
        _same_dim(self, other)
        mask = np.array([p in other for p in self.points], dtype=bool)
        return PointSet(self.points[mask].reshape(-1, self.d), self.d)

    def issubset(self, other: "PointSet") -> bool:
        return all(p in other for p in self.points)

    def diameter(self) -> float:
        p = self.points
        if len(p) < 2:
            return 0.0
        best = 0
        for i in range(len(p)):
            diff = p[i + 1:] - p[i]
            if diff.size:
                best = max(best, int((diff * diff).sum(axis=1).max()))
        return math.sqrt(best)

    def max_abs(self) -> int:
        return int(np.abs(self.points).max()) if len(self) else 0


def _same_dim(a: PointSet, b: PointSet) -> None:
    if a.d != b.d:
        raise ValueError(f"dimension mismatch: {a.d} vs {b.d}")


@dataclass(frozen=True)
class WalkPath:
    """A simple random walk path; ``positions[k]`` is X_k."""

    positions: np.ndarray

    @property
    def start(self) -> np.ndarray:
        return self.positions[0]

    @property
    def length(self) -> int:
        return self.positions.shape[0] - 1

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.positions, axis=0)

    def position(self, k: int) -> np.ndarray:
        return self.positions[k]


def _check_dim(d: int) -> None:
    if d < 1:
        raise ValueError("dimension must be >= 1")


def srw_path(d: int, n: int, seed: SeedSpec, start=None) -> WalkPath:
    """Simple random walk of n steps, a pure function of ``seed``."""
    _check_dim(d)
    if n < 0:
        raise ValueError("step count must be >= 0")
    s = np.zeros(d, dtype=np.int64) if start is None else np.asarray(start, dtype=np.int64)
    pos = K.walk_positions(new_state(seed), d, n, s)
    _check_coords(pos[-1:])
    return WalkPath(pos)


def range_window(path: WalkPath, a: int, b: int) -> PointSet:
    if not 0 <= a <= b <= path.length:
        raise IndexError(f"window [{a}, {b}] outside [0, {path.length}]")
    return PointSet(path.positions[a:b + 1], path.d)


def walk_range(d: int, n: int, seed: SeedSpec) -> PointSet:
    """R[0, n] of a walk from the origin, built on packed keys."""
    _check_dim(d)
    if n < 0:
        raise ValueError("step count must be >= 0")
    if n < K.key_half(d):
        keys = K.walk_keys(new_state(seed), d, n, 0, K.key_bits(d))
        return PointSet.from_keys(K.unique_sorted(keys), d)
    return range_window(srw_path(d, n, seed), 0, n)


def double_sided_range(d: int, n_back: int, n_fwd: int, seed: SeedSpec) -> PointSet:
    """Range of a two-sided walk on [-n_back, n_fwd]: two independent
    walks from the origin drawn sequentially from one stream."""
    _check_dim(d)
    if n_back < 0 or n_fwd < 0:
        raise ValueError("step counts must be >= 0")
    st = new_state(seed)
    zero = np.zeros(d, dtype=np.int64)
    fwd = K.walk_positions(st, d, n_fwd, zero)
    back = K.walk_positions(st, d, n_back, zero)
    return PointSet(np.vstack([fwd, back]), d)


def minkowski_sum(S: PointSet, T: PointSet) -> PointSet:
    """Exact sum set {s + t}."""
    _same_dim(S, T)
    if len(S) == 0 or len(T) == 0:
        raise ValueError("Minkowski sum of an empty set")
    d = S.d
    if S.max_abs() + T.max_abs() < K.key_half(d):
        a, b = (S.keys, T.keys) if len(S) >= len(T) else (T.keys, S.keys)
        hint = min(len(S) * len(T), 4 * (len(S) + len(T)))
        return PointSet.from_keys(K.distinct_sums(a, b, hint), d)
    if len(S) * len(T) > 50_000_000:
        raise MemoryError("Minkowski sum outside packed range is too large")
    sums = (S.points[:, None, :] + T.points[None, :, :]).reshape(-1, d)
    return PointSet(sums, d)


def sum_volume(sets: list[PointSet]) -> int:
    """|S_1 + ... + S_k|, folding larger sets first."""
    order = sorted(sets, key=len, reverse=True)
    acc = order[0]
    for s in order[1:]:
        acc = minkowski_sum(acc, s)
    return len(acc)


# --------------------------------------------------------------------------
# text IO


def write_pointset(ps: PointSet, path) -> None:
    lines = [f"d={ps.d}"] + [" ".join(str(int(c)) for c in p) for p in ps.points]
    Path(path).write_text("\n".join(lines) + "\n")


def read_pointset(path) -> PointSet:
    return parse_pointset(Path(path).read_text())


def parse_pointset(text: str) -> PointSet:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines or not lines[0].startswith("d="):
        raise ValueError("point set text must start with 'd=<dim>'")
    d = int(lines[0][2:])
    rows = [[int(t) for t in ln.split()] for ln in lines[1:]]
    for r in rows:
        if len(r) != d:
            raise ValueError(f"point {r} does not have dimension {d}")
    return PointSet(np.array(rows, dtype=np.int64).reshape(-1, d), d)


def random_set(d: int, size: int, radius: int, seed: SeedSpec) -> PointSet:
    """``size`` distinct points drawn uniformly from the box [-radius, radius]^d."""
    side = 2 * radius + 1
    if side**d < size:
        raise ValueError("box too small for requested size")
    from .rng import Stream

    stream = Stream(seed)
    chosen: dict[tuple, None] = {}
    while len(chosen) < size:
        p = tuple(int(v) - radius for v in stream.integers(side, d))
        chosen.setdefault(p, None)
    return PointSet(np.array(list(chosen), dtype=np.int64), d)
