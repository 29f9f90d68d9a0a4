import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sausage.capacity import CapacityError, cap_gamma, cap_single_point
from sausage.lattice import PointSet, minkowski_sum, random_set, walk_range
from sausage.minkowski import (dual_horizon, f_N_dual, f_N_lln, sausage_capacity_rate,
                               sausage_volume, tree_sausage_chain)
from sausage.rng import SeedSpec
from sausage.stats import agree_value


def brute_volume(sets):
    return len({tuple(np.sum(c, axis=0)) for c in itertools.product(*(s.points for s in sets))})


@given(st.integers(0, 2**32), st.integers(1, 25), st.integers(1, 25))
@settings(max_examples=25)
def test_sausage_volume_bruteforce(seed, n1, n2):
    s = SeedSpec(seed)
    R1, R2 = walk_range(5, n1, s.spawn(1)), walk_range(5, n2, s.spawn(2))
    A = random_set(5, 3, 2, s.spawn(3))
    assert sausage_volume([R1, R2], A) == brute_volume([R1, R2, A])


def test_sausage_volume_budget_and_errors():
    R = walk_range(5, 200, SeedSpec(0))
    with pytest.raises(MemoryError):
        sausage_volume([R, R], PointSet.origin(5), budget=1000)
    with pytest.raises(ValueError):
        sausage_volume([R], PointSet.origin(3))


def test_lln_zero_steps_is_cardinality():
    A = random_set(5, 4, 3, SeedSpec(1))
    assert f_N_lln(5, 2, A, 0, 3, SeedSpec(0)).mean == 4.0


def test_dimension_guard():
    with pytest.raises(ValueError, match="d > 2N"):
        f_N_lln(4, 2, PointSet.origin(4), 10, 2, SeedSpec(0))
    with pytest.raises(ValueError, match="d > 2N"):
        f_N_dual(6, 3, PointSet.origin(6), 10, 2, SeedSpec(0))


def test_lln_one_walk_near_capacity():
    est = f_N_lln(5, 1, PointSet.origin(5), 4000, 10, SeedSpec(2))
    # |R_n|/n decreases to 1/g(0)
    assert abs(est.mean - cap_single_point(5)) <= 3 * est.stderr + 0.05
    assert est.bias_bound[0] <= 0


def test_dual_one_walk_is_escape():
    A = PointSet.origin(5)
    est = f_N_dual(5, 1, A, None, 4000, SeedSpec(3))
    assert est.params["trunc"] == dual_horizon(A) == 400
    assert agree_value(est, cap_single_point(5))


def test_sub_one_bound():
    # f_N(A) <= |A| since every avoidance count is at most |A|
    A = random_set(5, 5, 2, SeedSpec(4))
    est = f_N_dual(5, 2, A, 200, 50, SeedSpec(5))
    assert 0 <= est.mean <= len(A)


def test_dual_rejects_bad_truncation():
    with pytest.raises(ValueError):
        f_N_dual(5, 1, PointSet.origin(5), 0, 2, SeedSpec(0))


def test_capacity_rate():
    A = PointSet.origin(5)
    assert sausage_capacity_rate(5, 3.0, A, 0, 2, SeedSpec(0)).mean == cap_gamma(3.0, A).value
    est = sausage_capacity_rate(5, 3.0, A, 200, 3, SeedSpec(1))
    assert 0 < est.mean < 1
    with pytest.raises(ValueError):
        sausage_capacity_rate(5, 2.0, A, 10, 2, SeedSpec(0))
    with pytest.raises(CapacityError):
        sausage_capacity_rate(5, 3.0, random_set(5, 30, 4, SeedSpec(2)), 400, 1, SeedSpec(0))


def test_tree_chain_reports_every_link():
    with pytest.warns(UserWarning, match="chain links skipped"):
        rep = tree_sausage_chain(5, "binary", PointSet.origin(5), 60, 2, SeedSpec(6),
                                 escape_horizon=10**4)
    assert set(rep.links) == {"cap_tree", "vol_tree", "bcap_walk", "f2_walk"}
    assert "f3" in rep.failures
    assert all(v.mean > 0 for v in rep.links.values())
    d = rep.to_dict()
    assert set(d) == {"links", "ratios", "failures"}
