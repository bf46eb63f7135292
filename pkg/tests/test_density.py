import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import trapezoid
from scipy.stats import norm

from coxflow.density import (
    KernelDensity,
    build_initial_density,
    default_bandwidth,
    log_density,
    loo_log_density,
)
from coxflow.drift import DriftModel

from conftest import records


def test_centers_are_constant_drift_origins(rng):
    Z, T = rng.standard_normal((6, 2)), rng.uniform(0.5, 2, 6)
    kd = build_initial_density(DriftModel("constant", [1.0, -0.5], 2), records(Z, T))
    expected = Z - T[:, None] * np.array([1.0, -0.5])
    expected = expected[np.lexsort(expected.T[::-1])]
    np.testing.assert_allclose(kd.centers, expected, atol=1e-12)
    assert kd.bandwidth == 6 ** -0.25


def test_two_center_mixture_by_hand():
    h = 2 ** -0.25
    kd = KernelDensity(np.array([[-1.0], [1.0]]), h)
    direct = np.exp(-1 / (2 * h * h)) / (h * np.sqrt(2 * np.pi))
    assert abs(np.exp(log_density(kd, [0.0])) - direct) <= 1e-15
    assert abs(np.exp(log_density(kd, [0.0])) - np.mean(norm.pdf(0.0, [-1, 1], h))) <= 1e-15


def test_single_center_mode():
    assert abs(log_density(KernelDensity(np.zeros((1, 1)), 1.0), [0.0]) + 0.5 * np.log(2 * np.pi)) <= 1e-15


def test_far_tail_is_finite():
    kd = KernelDensity(np.zeros((3, 2)), 0.1)
    v = log_density(kd, [50.0, 50.0])
    assert np.isfinite(v) and np.exp(v) >= 0


@pytest.mark.parametrize("p", [1, 2])
def test_normalization_by_quadrature(p, rng):
    h = 0.4
    kd = KernelDensity(rng.standard_normal((5, p)), h)
    lo, hi = kd.centers.min() - 8 * h, kd.centers.max() + 8 * h
    g = np.linspace(lo, hi, 801 if p == 1 else 301)
    if p == 1:
        mass = trapezoid(kd.pdf(g[:, None]), g)
    else:
        X, Y = np.meshgrid(g, g, indexing="ij")
        dens = kd.pdf(np.column_stack([X.ravel(), Y.ravel()])).reshape(X.shape)
        mass = trapezoid(trapezoid(dens, g, axis=1), g)
    assert mass >= 0.99 and abs(mass - 1) <= 1e-2


def test_monte_carlo_normalization(rng):
    kd = KernelDensity(np.array([[-1.0], [0.5], [2.0]]), 0.7)
    lo, hi = -10.0, 12.0
    u = rng.uniform(lo, hi, 200_000)[:, None]
    assert abs(np.mean(kd.pdf(u)) * (hi - lo) - 1) <= 1e-2


@given(st.floats(-5, 5), st.floats(0.1, 3))
@settings(max_examples=50, deadline=None)
def test_symmetric_pair(z, c):
    kd = KernelDensity(np.array([[-c], [c]]), 0.5)
    assert abs(log_density(kd, [z]) - log_density(kd, [-z])) <= 1e-12


@given(arrays(np.float64, (7, 2), elements=st.floats(-3, 3)), st.randoms(use_true_random=False))
@settings(max_examples=40, deadline=None)
def test_permutation_invariance_is_bitwise(C, r):
    perm = list(range(7))
    r.shuffle(perm)
    Q = np.array([[0.1, -0.2], [2.0, 1.0]])
    a = KernelDensity(C, 0.6).log_pdf(Q)
    b = KernelDensity(C[perm], 0.6).log_pdf(Q)
    assert np.array_equal(a, b)


def test_bandwidth_law():
    for n in (10, 400, 1234):
        assert abs(default_bandwidth(2 * n) / default_bandwidth(n) - 2 ** -0.25) <= 1e-15


def test_leave_one_out_by_brute_force(rng):
    X, h = rng.standard_normal((6, 2)), 0.5
    got = loo_log_density(X, h)
    for i in range(6):
        others = np.delete(X, i, axis=0)
        dens = np.mean(np.prod(norm.pdf(X[i], others, h), axis=1))
        assert abs(got[i] - np.log(dens)) <= 1e-12


def test_validation():
    with pytest.raises(ValueError):
        KernelDensity(np.zeros((2, 1)), 0.0)
    with pytest.raises(ValueError):
        build_initial_density(DriftModel("constant", [0.0], 1), records([[1.0]], [1.0]))
    with pytest.raises(ValueError):
        loo_log_density(np.zeros((1, 1)), 1.0)
