import numpy as np
import pytest
from hypothesis import given, strategies as st

from sausage.capacity import (cap_escape_mc, cap_gamma, cap_green_exact, cap_green_qp,
                              cap_single_point, grid_search_energy, simplex_qp)
from sausage.kernels import KernelSpec, kernel_matrix
from sausage.lattice import PointSet, random_set
from sausage.rng import SeedSpec
from sausage.stats import agree_value

WATSON_G0_D3 = 1.516386059151978


def small_sets(d, max_size=6, radius=3):
    pts = st.lists(st.tuples(*[st.integers(-radius, radius)] * d), min_size=1,
                   max_size=max_size, unique=True)
    return pts.map(lambda p: PointSet(np.array(p, dtype=np.int64), d))


def test_single_point():
    assert cap_single_point(3) == pytest.approx(1 / WATSON_G0_D3, rel=1e-9)
    assert cap_green_exact(3, PointSet.origin(3)).value == pytest.approx(1 / WATSON_G0_D3)
    assert cap_gamma(1.0, PointSet.origin(4)).value == 1.0


@pytest.mark.parametrize("gamma", [0.5, 1.0, 2.5])
@pytest.mark.parametrize("sep", [[1, 0, 0], [3, 4, 0]])
def test_gamma_pair_closed_form(gamma, sep):
    A = PointSet(np.array([[0, 0, 0], sep]))
    k = (1 + np.linalg.norm(sep)) ** -gamma
    res = cap_gamma(gamma, A)
    assert res.value == pytest.approx(2 / (1 + k), abs=1e-9)
    assert np.allclose(res.measure, [0.5, 0.5], atol=1e-6)


def test_green_pair_closed_form():
    A = PointSet(np.array([[0] * 5, [1, 0, 0, 0, 0]]))
    km = kernel_matrix(KernelSpec.green(5), A).entries
    assert cap_green_exact(5, A).value == pytest.approx(2 / (km[0, 0] + km[0, 1]), rel=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_qp_against_grid_search(seed):
    # grid over {k/120} with |A| <= 4; the grid minimum is an upper bound on the energy
    A = random_set(3, 2 + seed % 3, 3, SeedSpec(seed))
    K = kernel_matrix(KernelSpec.gamma_kernel(3, 1.0 + seed / 3), A).entries
    nu, e, gap, _ = simplex_qp(K)
    _, e_grid = grid_search_energy(K, resolution=120)
    assert e <= e_grid + 1e-12
    assert e_grid - e <= 1e-3 * e
    assert gap <= 1e-9


def test_exact_and_qp_agree():
    for d in (3, 5):
        for s in range(5):
            A = random_set(d, 8, 3, SeedSpec(100 + s))
            ex = cap_green_exact(d, A)
            qp = cap_green_qp(d, A)
            assert qp.value == pytest.approx(ex.value, rel=1e-8)
            assert np.allclose(ex.measure, qp.measure, atol=1e-5)


@given(small_sets(3), small_sets(3))
def test_green_capacity_set_function(A, B):
    def cap(X):
        return cap_green_exact(3, X).value if len(X) else 0.0
    U, I = A.union(B), A.intersection(B)
    tol = 1e-9
    assert cap(A) <= cap(U) + tol
    assert cap(U) + cap(I) <= cap(A) + cap(B) + tol
    assert cap(A) <= len(A) * cap_single_point(3) + tol


@given(small_sets(3), st.tuples(*[st.integers(-20, 20)] * 3))
def test_translation_invariance(A, shift):
    B = PointSet(A.points + np.array(shift), 3)
    assert cap_green_exact(3, B).value == pytest.approx(cap_green_exact(3, A).value, rel=1e-10)


@given(small_sets(4), st.floats(0.2, 4.0))
def test_gamma_capacity_bounds(A, gamma):
    res = cap_gamma(gamma, A)
    K = kernel_matrix(KernelSpec.gamma_kernel(4, gamma), A).entries
    uniform = len(A) ** 2 / K.sum()
    assert uniform <= res.value * (1 + 1e-8)
    assert 1.0 - 1e-9 <= res.value <= len(A) + 1e-9
    assert res.measure.min() >= 0 and res.measure.sum() == pytest.approx(1.0)


def test_escape_mc_single_point():
    est = cap_escape_mc(5, PointSet.origin(5), 4000, 10**6, SeedSpec(3))
    assert agree_value(est, cap_single_point(5))
    assert est.bias_bound[0] <= 0 == est.bias_bound[1]


def test_escape_mc_subsample_and_determinism():
    A = random_set(5, 10, 2, SeedSpec(1))
    a = cap_escape_mc(5, A, 50, 10**5, SeedSpec(2), subsample=0.5)
    b = cap_escape_mc(5, A, 50, 10**5, SeedSpec(2), subsample=0.5)
    assert a.mean == b.mean and a.params["subsample"] == 0.5


def test_errors():
    empty = PointSet(np.zeros((0, 3), dtype=np.int64), 3)
    with pytest.raises(ValueError):
        cap_green_exact(3, empty)
    with pytest.raises(ValueError):
        cap_escape_mc(2, PointSet.origin(2), 10, 10, SeedSpec(0))
    with pytest.raises(ValueError):
        cap_escape_mc(3, PointSet.origin(3), 0, 10, SeedSpec(0))
