from fractions import Fraction

import numpy as np
import pytest

from sausage.branching import (bcap_escape, bcap_lln, hit_field, sample_critical_tree,
                               sample_past_tree, sample_sin_tree_future, tree_hit_prob)
from sausage.capacity import cap_green_exact
from sausage.laws import LAW_NAMES, make_law, side_count_pmf
from sausage.lattice import PointSet
from sausage.rng import SeedSpec
from sausage.stats import agree, agree_value


def e1(d, k=1):
    x = np.zeros(d, dtype=np.int64)
    x[0] = k
    return x


@pytest.mark.parametrize("name", LAW_NAMES)
def test_laws_are_critical(name):
    L = make_law(name)
    assert L.total == 1 and L.mean == 1
    assert sum(L.size_biased) == 1 and sum(L.root) == 1
    assert side_count_pmf(L).sum() == pytest.approx(1.0)
    assert L.pgf(1.0) == pytest.approx(1.0)


def test_law_variances():
    assert make_law("binary").exact_variance() == 1
    assert make_law("delta_one").exact_variance() == 0
    assert float(make_law("geometric_half").exact_variance()) == pytest.approx(2.0, abs=1e-12)
    assert make_law("poisson_trunc").variance == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        make_law("cauchy")


def test_psi_identity():
    L = make_law("geometric_half")
    s = np.linspace(0, 0.9, 7)
    assert np.allclose(L.psi(s), (1 - L.pgf(s)) / (1 - s))


def test_binary_tree_sizes():
    # total progeny of a binary BGW tree: P(1) = 1/2, P(3) = 1/8
    trees = [sample_critical_tree(5, "binary", None, 10**5, SeedSpec(1, r)) for r in range(4000)]
    sizes = np.array([t.node_count for t in trees if not t.meta["cap_exceeded"]])
    assert len(sizes) > 3950
    assert abs((sizes == 1).mean() - 0.5) < 4 * np.sqrt(0.25 / 4000)
    assert abs((sizes == 3).mean() - 0.125) < 4 * np.sqrt(0.11 / 4000)
    assert np.all(sizes % 2 == 1)


def test_degenerate_tree_hits_cap():
    t = sample_critical_tree(5, "delta_one", None, 50, SeedSpec(0))
    assert t.meta["cap_exceeded"] and t.node_count == 50


def test_future_prefix_of_a_line_is_a_walk():
    t = sample_sin_tree_future(5, "delta_one", 300, None, SeedSpec(2))
    assert t.node_count == 300 and len(t.positions) <= 300


def test_future_prefix_contains_root():
    for law in ("geometric_half", "binary"):
        t = sample_sin_tree_future(5, law, 100, e1(5, 3), SeedSpec(5))
        assert e1(5, 3) in t.positions
    with pytest.raises(ValueError):
        sample_sin_tree_future(5, "binary", 0, None, SeedSpec(0))


def test_past_tree_spine():
    t = sample_past_tree(5, "binary", None, 40, SeedSpec(3))
    assert len(t.meta["left_counts"]) >= 1 and t.meta["complete"]
    assert t.meta["residual_scale"] > 0


def test_hit_field_fixed_point():
    law = "geometric_half"
    L = make_law(law)
    A = PointSet(np.array([[0] * 5, [1, 0, 0, 0, 0]]))
    f = hit_field(5, law, A)
    for a in A.points:
        assert f.value(a) == 1.0
    for y in ([2, 0, 0, 0, 0], [0, 1, 1, 0, 0], [3, -2, 0, 1, 0]):
        y = np.array(y)
        assert 0 < f.value(y) < 1
        # a tree at y avoids A iff every child subtree does
        assert 1 - f.value(y) == pytest.approx(L.pgf(1 - f.ph(y)), abs=1e-8)


def test_hit_field_against_tree_simulation():
    A = PointSet.origin(5)
    y = e1(5, 2)
    h = hit_field(5, "binary", A).value(y)
    reps = 20000
    hits = sum(A.points[0] in sample_critical_tree(5, "binary", y, 10**5,
                                                   SeedSpec(9, r)).positions
               for r in range(reps))
    se = np.sqrt(h * (1 - h) / reps)
    assert abs(hits / reps - h) < 4 * se + 1e-3


def test_bcap_delta_one_is_classical_capacity():
    A = PointSet(np.array([[0] * 5, [1, 0, 0, 0, 0]]))
    est = bcap_escape(5, "delta_one", A, 10, 3000, SeedSpec(4))
    assert agree_value(est, cap_green_exact(5, A).value)


def test_conditional_and_direct_agree():
    A = PointSet.origin(5)
    x = e1(5, 2)
    c = tree_hit_prob(5, "binary", A, x, 50, 2000, SeedSpec(1), method="conditional")
    d = tree_hit_prob(5, "binary", A, x, 50, 2000, SeedSpec(2), method="direct",
                      node_cap=10**5)
    assert agree(c, d)
    assert tree_hit_prob(5, "binary", A, np.zeros(5, int), 10, 5, SeedSpec(0)).mean == 1.0


def test_past_and_future_avoidance_agree():
    A = PointSet.origin(5)
    fut = bcap_escape(5, "binary", A, 2000, 400, SeedSpec(1), side="future")
    past = bcap_escape(5, "binary", A, 2000, 400, SeedSpec(2), side="past")
    assert agree(fut, past)
    assert 0 < fut.mean < 1


def test_bcap_lln_shape_and_errors():
    est = bcap_lln(5, "binary", PointSet.origin(5), 2000, 4, SeedSpec(0))
    assert 0 < est.mean <= 1 and est.params["half_mean"] >= est.mean - 0.2
    lo, hi = est.bias_bound
    assert lo <= 0 <= hi or lo <= hi
    with pytest.raises(ValueError):
        bcap_lln(4, "binary", PointSet.origin(4), 10, 2, SeedSpec(0))
    with pytest.raises(ValueError):
        bcap_escape(5, "binary", PointSet.origin(5), 10, 2, SeedSpec(0), side="left")
