import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sausage.hitting import (PI2_8, _walks, d4_capacity_rate, default_horizon,
                             hit_prob_sum_walks, intersection_equivalence, ks_ratio_experiment,
                             local_time_moment_check, log_slope, sample_local_times)
from sausage.kernels import green_GN, green_g
from sausage.lattice import PointSet, random_set
from sausage.rng import SeedSpec
from sausage.stats import agree_value


def axis(d, k, j=0):
    x = np.zeros(d, dtype=np.int64)
    x[j] = k
    return x


def brute_hit(A, z, walks):
    """Python-set oracle for (z + R^1 + ... + R^N) meeting A."""
    S = {tuple(p) for p in A.points - z}
    for W in walks[:-1]:
        S = {tuple(np.subtract(s, w)) for s in S for w in W}
    return any(tuple(p) in S for p in walks[-1])


def test_default_horizon():
    assert default_horizon([3, 4, 0]) == 2500


def test_single_point_hitting_is_green_ratio():
    # P_z(ever hit 0) = g(z) / g(0)
    d, z = 5, axis(5, 2)
    est = hit_prob_sum_walks(d, 1, z, PointSet.origin(d), 2000, 20000, SeedSpec(1))
    truth = green_g(d, z) / green_g(d, np.zeros(d, int))
    assert agree_value(est, truth)


@pytest.mark.parametrize("N,d", [(1, 5), (2, 5), (2, 6)])
def test_fast_path_matches_set_oracle(N, d):
    A = random_set(d, 3, 1, SeedSpec(7))
    z = axis(d, 4)
    T = 60
    for k in range(25):
        est = hit_prob_sum_walks(d, N, z, A, T, 1, SeedSpec(k), warn=False)
        walks = _walks(SeedSpec(k).child(0), d, N, T)
        assert est.mean == float(brute_hit(A, z, walks))


@given(st.integers(0, 2**31), st.integers(3, 8))
@settings(max_examples=15)
def test_coupled_monotone_in_A(seed, rho):
    A = PointSet.origin(5)
    B = A.union(PointSet(np.array([[0, 1, 0, 0, 0], [0, -1, 0, 0, 0]])))
    z = axis(5, rho)
    pa = hit_prob_sum_walks(5, 2, z, A, 200, 40, SeedSpec(seed), warn=False)
    pb = hit_prob_sum_walks(5, 2, z, B, 200, 40, SeedSpec(seed), warn=False)
    assert pa.mean <= pb.mean


def test_hit_errors():
    with pytest.raises(ValueError):
        hit_prob_sum_walks(4, 2, axis(4, 3), PointSet.origin(4), 10, 2, SeedSpec(0))
    with pytest.raises(ValueError):
        hit_prob_sum_walks(5, 1, np.zeros(5, int), PointSet.origin(5), 10, 2, SeedSpec(0))


def test_log_slope_exact():
    r = np.array([10, 20, 40])
    assert log_slope(r, 3.0 * r**-1.0) == pytest.approx(-1.0)


def test_ratio_table_and_censoring():
    A = PointSet.origin(5)
    tab = ks_ratio_experiment(5, 2, A, [4, 60], 5, SeedSpec(2), horizon_factor=3.0)
    # with 5 replicas the inner shell happens to see no hit for this seed
    near, far = tab.rows
    assert near.censored and not far.censored
    assert near.upper == pytest.approx(3 / 5 / near.normalizer)
    assert near.probability.mean == 0.0
    assert tab.censored == 1 and len(tab.ratios()) == 1 and tab.spread() == 1.0
    assert tab.context["expected_slope"] == -1.0
    assert {"norm_z", "mean", "stderr", "bias", "ratio", "error", "censored"} == \
        set(tab.csv_rows()[0])
    with pytest.raises(ValueError):
        ks_ratio_experiment(5, 2, PointSet(np.array([[0] * 5, [3, 0, 0, 0, 0]])), [4], 2,
                            SeedSpec(0))


def test_ratio_table_is_reproducible():
    A = PointSet.origin(5)
    a = ks_ratio_experiment(5, 2, A, [4, 6], 50, SeedSpec(3), horizon_factor=4.0)
    assert [r.ratio for r in a.rows] == [r.ratio for r in ks_ratio_experiment(
        5, 2, A, [4, 6], 50, SeedSpec(3), horizon_factor=4.0).rows]


def test_intersection_equivalence_point_in_A():
    A = PointSet(np.array([[0] * 5, [1, 0, 0, 0, 0]]))
    tab = intersection_equivalence(5, "binary", A, [[1, 0, 0, 0, 0], [6, 0, 0, 0, 0]], 20,
                                   400, 50, SeedSpec(4))
    assert tab.rows[0].ratio == 1.0 and not tab.rows[0].censored
    assert tab.rows[1].ratio > 0 or tab.rows[1].censored
    with pytest.raises(ValueError):
        intersection_equivalence(5, "binary", A, [[1, 1, 0, 0, 0]], 10, 10, 2, SeedSpec(0))


def test_local_time_first_moment():
    d, z, a, b = 5, axis(5, 2, 1), axis(5, 1), axis(5, -1)
    out = local_time_moment_check(d, 1, z, a, b, 1000, 40000, SeedSpec(5))
    assert agree_value(out["first_a"], out["G_a"])
    assert agree_value(out["first_b"], out["G_b"])
    assert out["G_a"] == pytest.approx(green_GN(d, 1, a - z))
    assert out["implied_constant"] > 0


def test_local_time_sampler_is_pure():
    args = (5, 2, axis(5, 2, 1), axis(5, 1), axis(5, -1), 200, 50, SeedSpec(6))
    s1, s2 = sample_local_times(*args), sample_local_times(*args)
    assert np.array_equal(s1.counts_a, s2.counts_a) and np.array_equal(s1.counts_b, s2.counts_b)
    with pytest.raises(NotImplementedError):
        sample_local_times(7, 3, *args[2:])
    with pytest.raises(ValueError):
        local_time_moment_check(5, 1, axis(5, 1, 1), axis(5, 1), axis(5, -1), 10, 2, SeedSpec(0))


def test_d4_rate_small():
    out = d4_capacity_rate(PointSet.origin(4), [200], 2, SeedSpec(8))
    assert out["target"] == PI2_8
    rows = out["rows"]
    assert len(rows) == 1 and rows[0]["bounded"] and rows[0]["n"] == 200
    assert rows[0]["ratio"] == pytest.approx(rows[0]["estimate"].mean / PI2_8)
    with pytest.raises(ValueError):
        d4_capacity_rate(PointSet.origin(5), [10], 1, SeedSpec(0))
