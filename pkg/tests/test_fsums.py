import itertools

import numpy as np
import pytest

from sausage.fsums import (FINE, apply_A_box, domination_ratios, f_klm, f_klm_box,
                           log_nodes, smallterms_identity)
from sausage.kernels import green_many


def box(d, R):
    return np.array(list(itertools.product(range(-R, R + 1), repeat=d)), dtype=np.int64)


def G(d, k, pts):
    return green_many(d, k, np.asarray(pts).reshape(-1, d))


def brute_F(d, k, l, m, z, a, b, R):
    w = box(d, R)
    z, a, b = map(np.asarray, (z, a, b))
    return float((G(d, k, z - b + w) * G(d, l, w) * G(d, m, a - b + w)).sum())


def brute_AF(d, k, l, m, z, a, b, R):
    P = box(d, R)
    z, a, b = map(np.asarray, (z, a, b))
    g = G(d, 1, P)
    lookup = {tuple(p): i for i, p in enumerate(P)}
    total = 0.0
    for iy, y in enumerate(P):
        for iyp, yp in enumerate(P):
            gyy = G(d, 1, y - yp)[0]
            pre = g[iy] * gyy + g[iyp] * gyy
            s = (G(d, k, z - b - yp + P) * G(d, l, P) * G(d, m, a - b + y - yp + P)).sum()
            total += pre * s
    return total


def test_log_nodes_integrate_exponential():
    # the rule starts at t = e^-12, which caps its accuracy near 1e-5
    t, w = log_nodes(*FINE)
    assert (w * np.exp(-t)).sum() == pytest.approx(1.0 - np.exp(-12.0), rel=1e-5)
    assert (w * t * np.exp(-t)).sum() == pytest.approx(1.0, rel=1e-5)


@pytest.mark.parametrize("d,k,l,m", [(5, 1, 1, 1), (7, 2, 1, 1), (7, 1, 2, 2)])
def test_box_sum_matches_bruteforce(d, k, l, m):
    z = [3] + [0] * (d - 1)
    a = [1] + [0] * (d - 1)
    b = [0, 1] + [0] * (d - 2)
    R = 2 if d == 5 else 1
    assert f_klm_box(d, k, l, m, z, a, b, R) == pytest.approx(brute_F(d, k, l, m, z, a, b, R),
                                                             rel=1e-5)


def test_tail_bound_covers_larger_box():
    d, z, a, b = 5, [4, 0, 0, 0, 0], [1, 0, 0, 0, 0], [0] * 5
    small, tail = f_klm(d, 1, 1, 1, z, a, b, 3)
    big, _ = f_klm(d, 1, 1, 1, z, a, b, 10)
    assert 0 < big - small <= tail


def test_operator_box_matches_bruteforce():
    d, z, a, b = 4, [2, 0, 0, 0], [1, 0, 0, 0], [0] * 4
    got = apply_A_box(d, 1, 1, 1, z, a, b, 1)
    assert got == pytest.approx(brute_AF(d, 1, 1, 1, z, a, b, 1), rel=1e-2)


def test_smallterms_identity_trend():
    # the truncated left side approaches the right side as the box grows
    d, z, a, b = 7, [0, 4, 0, 0, 0, 0, 0], [1, 0, 0, 0, 0, 0, 0], [-1, 0, 0, 0, 0, 0, 0]
    gaps = [smallterms_identity(d, 1, 1, 1, z, a, b, R)["relative_gap"] for R in (2, 4)]
    assert gaps[0] > gaps[1] > 0


def test_domination_ratios_finite():
    r = domination_ratios(7, 2, 1, [1, 0, 0, 0, 0, 0, 0], [-1, 0, 0, 0, 0, 0, 0],
                          [[0, 4, 0, 0, 0, 0, 0], [0, 8, 0, 0, 0, 0, 0]], 12)
    assert all(np.isfinite(x) and x > 0 for x in r)


def test_summability_guard():
    with pytest.raises(ValueError):
        f_klm_box(5, 2, 2, 1, [0] * 5, [0] * 5, [0] * 5, 1)
    with pytest.raises(ValueError):
        f_klm(5, 1, 1, 1, [0] * 5, [0] * 5, [0] * 5, -1)
