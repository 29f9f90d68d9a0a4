import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sausage.lattice import (PointSet, WalkPath, double_sided_range, minkowski_sum, norm,
                             parse_pointset, random_set, range_window, read_pointset, srw_path,
                             sum_volume, walk_range, write_pointset)
from sausage.rng import SeedSpec


def brute_sum(S, T):
    return {tuple(int(a + b) for a, b in zip(s, t)) for s in S.points for t in T.points}


def point_sets(d=3, max_size=12, radius=4):
    pts = st.lists(st.tuples(*[st.integers(-radius, radius)] * d), min_size=1,
                   max_size=max_size)
    return pts.map(lambda p: PointSet(np.array(p, dtype=np.int64), d))


def test_norm_is_exact_integer_root():
    assert norm([3, 4]) == 5.0
    assert norm([2**20, 0, 0]) == 2.0**20


def test_dedup_and_membership():
    A = PointSet(np.array([[0, 0], [1, 0], [0, 0]]))
    assert len(A) == 2
    assert (1, 0) in A.as_tuples() and [1, 0] in A and [0, 1] not in A


def test_coordinate_overflow_checked():
    with pytest.raises(OverflowError):
        PointSet(np.array([[2**31, 0]]))


def test_empty_walk():
    p = srw_path(3, 0, SeedSpec(1))
    assert p.length == 0 and np.array_equal(p.positions, np.zeros((1, 3)))


def test_dimension_zero_rejected():
    with pytest.raises(ValueError):
        srw_path(0, 5, SeedSpec(1))


def test_walk_increments_are_unit_steps():
    p = srw_path(4, 500, SeedSpec(2))
    steps = p.steps
    assert np.all(np.abs(steps).sum(axis=1) == 1)
    assert np.array_equal(p.positions[-1], steps.sum(axis=0))


def test_walk_determinism():
    a = srw_path(5, 1000, SeedSpec(9, 1)).positions
    b = srw_path(5, 1000, SeedSpec(9, 1)).positions
    assert np.array_equal(a, b)


def test_range_window_hand_example():
    path = WalkPath(np.array([[0], [1], [2], [1]]))
    R = range_window(path, 0, 3)
    assert R.as_tuples() == {(0,), (1,), (2,)} and len(R) == 3
    assert range_window(path, 0, 0).as_tuples() == {(0,)}
    with pytest.raises(IndexError):
        range_window(path, 2, 4)


def test_range_fraction_d5():
    # |R_n|/n -> 1/g(0) ~ 0.865 in d=5
    R = walk_range(5, 10_000, SeedSpec(4))
    assert 0.5 <= len(R) / 10_000 <= 1.0


def test_walk_range_matches_path():
    seed = SeedSpec(8, 2)
    a = walk_range(3, 300, seed)
    b = range_window(srw_path(3, 300, seed), 0, 300)
    assert a == b


def test_mean_square_displacement():
    # E|X_n|^2 = n, averaged over 100 walks of 10^6 steps
    vals = [float((srw_path(5, 10**6, SeedSpec(7, r)).positions[-1] ** 2).sum()) / 10**6
            for r in range(100)]
    m = np.mean(vals)
    # the ratio has sd about sqrt(2/5)/sqrt(100) per walk; the window is generous
    assert 0.8 <= m <= 1.2


def test_double_sided_range():
    assert double_sided_range(5, 0, 0, SeedSpec(1)).as_tuples() == {(0,) * 5}
    R = double_sided_range(5, 1000, 1000, SeedSpec(1))
    assert len(R) <= 2001
    fwd_only = double_sided_range(5, 0, 200, SeedSpec(3))
    assert fwd_only == range_window(srw_path(5, 200, SeedSpec(3)), 0, 200)


def test_minkowski_examples():
    S = random_set(4, 20, 5, SeedSpec(1))
    assert minkowski_sum(S, PointSet.origin(4)) == S
    P = PointSet(np.array([[0], [1]]))
    assert minkowski_sum(P, P).as_tuples() == {(0,), (1,), (2,)}


def test_minkowski_bruteforce_50():
    S = random_set(3, 50, 6, SeedSpec(10))
    T = random_set(3, 50, 6, SeedSpec(11))
    M = minkowski_sum(S, T)
    assert M.as_tuples() == brute_sum(S, T)
    assert len(M) <= len(S) * len(T)


def test_minkowski_errors():
    with pytest.raises(ValueError):
        minkowski_sum(PointSet.origin(2), PointSet.origin(3))
    with pytest.raises(ValueError):
        minkowski_sum(PointSet.origin(2), PointSet(np.zeros((0, 2), dtype=np.int64), 2))


def test_minkowski_outside_key_range():
    # d=7 keys hold |x| < 256; larger coordinates use the dense fallback
    S = PointSet(np.array([[300, 0, 0, 0, 0, 0, 0], [0, 0, 0, 0, 0, 0, 1]]))
    T = PointSet(np.array([[1, 0, 0, 0, 0, 0, 0], [-300, 0, 0, 0, 0, 0, 0]]))
    assert minkowski_sum(S, T).as_tuples() == brute_sum(S, T)


@given(point_sets(), point_sets())
def test_minkowski_commutative(S, T):
    assert minkowski_sum(S, T) == minkowski_sum(T, S)


@given(point_sets(max_size=6), point_sets(max_size=6), point_sets(max_size=6))
def test_minkowski_associative(S, T, U):
    assert minkowski_sum(minkowski_sum(S, T), U) == minkowski_sum(S, minkowski_sum(T, U))


@given(st.integers(0, 2**32), st.integers(0, 150), point_sets(), point_sets())
def test_strong_subadditivity(seed, n, A, B):
    R = walk_range(3, n, SeedSpec(seed))

    def vol(X):
        return len(minkowski_sum(R, X)) if len(X) else 0
    assert vol(A.union(B)) + vol(A.intersection(B)) <= vol(A) + vol(B)


@given(st.integers(0, 2**32), point_sets(), point_sets())
def test_monotone_in_A(seed, A, B):
    R = walk_range(3, 60, SeedSpec(seed))
    big = A.union(B)
    assert minkowski_sum(R, A).issubset(minkowski_sum(R, big))


def test_sum_volume_fold():
    sets = [random_set(3, k, 4, SeedSpec(k)) for k in (3, 7, 5)]
    brute = {tuple(a + b + c) for a, b, c in itertools.product(*(s.points for s in sets))}
    assert sum_volume(sets) == len(brute)


def test_pointset_text_round_trip(tmp_path):
    A = random_set(5, 12, 9, SeedSpec(3))
    f = tmp_path / "A.txt"
    write_pointset(A, f)
    assert f.read_text().startswith("d=5\n")
    assert read_pointset(f) == A
    with pytest.raises(ValueError):
        parse_pointset("d=2\n1 2 3\n")
    with pytest.raises(ValueError):
        parse_pointset("1 2\n")
