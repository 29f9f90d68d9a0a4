import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate
from scipy.special import ive

from sausage.kernels import (KernelSpec, asymptotic_constant, box_sum_product, fit_asymptotic,
                             green_GN, green_g, green_many, green_table, kernel_gamma,
                             kernel_matrix)
from sausage.lattice import PointSet, random_set
from sausage.rng import SeedSpec

WATSON_G0_D3 = 1.516386059151978


def quad_green(d, N, x):
    """Independent oracle: adaptive quadrature of the heat-kernel integral."""
    x = np.abs(np.asarray(x))

    def f(t):
        return t ** (N - 1) / math.factorial(N - 1) * np.prod(ive(x, t / d))
    val, _ = integrate.quad(f, 0, np.inf, limit=500, epsabs=1e-13, epsrel=1e-11)
    return val


def test_watson_constant():
    assert green_g(3, [0, 0, 0]) == pytest.approx(WATSON_G0_D3, rel=1e-8)


@pytest.mark.parametrize("d,g0", [(4, 1.2394671218), (5, 1.1563081248), (6, 1.1169633732)])
def test_origin_values(d, g0):
    assert green_g(d, np.zeros(d, int)) == pytest.approx(g0, abs=1e-9)


@pytest.mark.parametrize("d,N,x", [(3, 1, [1, 0, 0]), (3, 1, [2, 1, 1]), (5, 1, [3, 0, 1, 0, 0]),
                                   (5, 2, [0] * 5), (5, 2, [1, 1, 0, 0, 0]),
                                   (7, 3, [0] * 7), (7, 2, [2, 0, 0, 0, 0, 0, 1])])
def test_against_adaptive_quadrature(d, N, x):
    assert green_GN(d, N, x) == pytest.approx(quad_green(d, N, x), rel=1e-8)


def _neighbours(x):
    d = len(x)
    for j in range(d):
        for s in (1, -1):
            y = list(x)
            y[j] += s
            yield y


@pytest.mark.parametrize("d,N", [(3, 1), (5, 1), (5, 2), (7, 3)])
@pytest.mark.parametrize("x0", [0, 1, 3])
def test_discrete_poisson_equation(d, N, x0):
    # G_N - mean of neighbours = G_{N-1}, with G_0 = delta_0
    x = [x0] + [0] * (d - 1)
    lhs = green_GN(d, N, x) - np.mean([green_GN(d, N, y) for y in _neighbours(x)])
    rhs = (1.0 if x0 == 0 else 0.0) if N == 1 else green_GN(d, N - 1, x)
    assert lhs == pytest.approx(rhs, abs=1e-8)


@given(st.lists(st.integers(-6, 6), min_size=5, max_size=5), st.permutations(range(5)))
def test_lattice_symmetry(x, perm):
    y = [-x[p] if p % 2 else x[p] for p in perm]
    assert green_GN(5, 1, x) == pytest.approx(green_GN(5, 1, y), rel=1e-12)


def test_G2_origin_is_sum_of_squares():
    # G_2(0) = sum_y g(y)^2; box sum plus tail estimate
    d = 5
    R = 10
    head = box_sum_product(d, 1, 1, np.zeros(d, int), R)
    assert head < green_GN(d, 2, np.zeros(d, int))
    assert green_GN(d, 2, np.zeros(d, int)) - head < 0.02 * head


def test_green_decreasing_along_axis():
    vals = green_many(5, 2, [[k, 0, 0, 0, 0] for k in range(12)])
    assert np.all(np.diff(vals) < 0)


@pytest.mark.parametrize("d,N", [(3, 1), (5, 1), (5, 2), (7, 2)])
def test_asymptotic_constant(d, N):
    fit = fit_asymptotic(d, N)
    assert fit.constant == pytest.approx(asymptotic_constant(d, N), rel=0.02)


def test_gaussian_constant_d3():
    assert asymptotic_constant(3, 1) == pytest.approx(3 / (2 * math.pi))


def test_divergent_parameters_rejected():
    with pytest.raises(ValueError):
        green_g(2, [0, 0])
    with pytest.raises(ValueError):
        green_GN(4, 2, [0] * 4)
    with pytest.raises(ValueError):
        green_GN(5, 0, [0] * 5)


def test_table_matches_direct():
    tab = green_table(5, 1)
    pts = np.array([[0, 0, 0, 0, 0], [1, -2, 0, 0, 3], [4, 4, 0, 1, 0]])
    assert np.allclose(tab(pts), green_many(5, 1, pts), rtol=1e-12)
    far = np.array([[60, 0, 0, 0, 0]])
    assert tab(far)[0] >= green_g(5, far[0])


def test_kernel_gamma():
    assert kernel_gamma(2.0, [0, 0], [3, 4]) == pytest.approx(1 / 36)
    assert kernel_gamma(0.5, [1, 1, 1], [1, 1, 1]) == 1.0
    with pytest.raises(ValueError):
        kernel_gamma(0.0, [0], [1])


@given(st.floats(0.1, 5.0), st.integers(0, 2**31))
def test_gamma_kernel_matrix(gamma, seed):
    A = random_set(3, 6, 4, SeedSpec(seed))
    km = kernel_matrix(KernelSpec.gamma_kernel(3, gamma), A)
    assert np.allclose(km.entries, km.entries.T)
    assert np.all(np.diag(km.entries) == 1.0)
    assert np.all(km.entries <= 1.0)


def test_green_matrix_positive_definite_and_csv(tmp_path):
    A = random_set(5, 8, 3, SeedSpec(4))
    km = kernel_matrix(KernelSpec.green(5), A)
    assert np.all(np.linalg.eigvalsh(km.entries) > 0)
    f = tmp_path / "k.csv"
    km.to_csv(f)
    lines = f.read_text().splitlines()
    assert lines[0] == "site_i,site_j,value,error_bound"
    assert len(lines) == 1 + 8 * 9 // 2


def test_kernel_spec_parse():
    assert KernelSpec.parse("gamma:1.5", 3).gamma == 1.5
    assert KernelSpec.parse("green:2", 5).N == 2
    with pytest.raises(ValueError):
        KernelSpec.parse("cauchy", 3)
    with pytest.raises(ValueError):
        kernel_matrix(KernelSpec.green(5), PointSet.origin(3))
