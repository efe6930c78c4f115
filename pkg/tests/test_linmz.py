import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from enso_mz.linmz import BlockLinearSystem, integrate_full, matrix_exponential, reduce_and_integrate


def taylor_exp(M, t, terms=30):
    out = np.eye(len(M))
    term = np.eye(len(M))
    for k in range(1, terms + 1):
        term = term @ (M * t) / k
        out = out + term
    return out


def test_expm_trivial_cases():
    assert np.array_equal(matrix_exponential(np.zeros((3, 3))), np.eye(3))
    d = matrix_exponential(np.diag([0.3, -2.0]))
    assert np.allclose(d, np.diag(np.exp([0.3, -2.0])), rtol=1e-14, atol=0)


def test_expm_taylor_oracle():
    M = np.random.default_rng(1).normal(size=(3, 3))
    assert np.allclose(matrix_exponential(M, 0.5), taylor_exp(M, 0.5), rtol=1e-13, atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.01, 30.0))
def test_expm_matches_reference(seed, scale):
    M = np.random.default_rng(seed).normal(size=(4, 4))
    M *= scale / np.linalg.norm(M, 1)
    ref = expm(M)
    # squaring amplifies rounding roughly in proportion to ||M||
    tol = 1e-13 * max(10.0, scale) * max(1.0, np.linalg.norm(ref))
    assert np.linalg.norm(matrix_exponential(M) - ref) <= tol


def test_expm_errors():
    with pytest.raises(ValueError):
        matrix_exponential(np.ones((2, 3)))
    with pytest.raises(ValueError):
        matrix_exponential(np.array([[np.nan]]))


def test_block_shape_validation():
    with pytest.raises(ValueError, match="A12"):
        BlockLinearSystem([[0.0]], np.zeros((1, 3)), np.zeros((2, 1)), np.zeros((2, 2)), [1.0], [0.0, 0.0])


def test_full_trivial_and_decoupled():
    z = BlockLinearSystem(np.zeros((1, 1)), np.zeros((1, 2)), np.zeros((2, 1)), np.zeros((2, 2)), [1.0], [2.0, 3.0])
    _, y = integrate_full(z, 1.0, 0.1)
    assert np.all(y == y[0])
    s = BlockLinearSystem([[-0.7]], np.zeros((1, 2)), np.zeros((2, 1)), -np.eye(2), [1.0], [1.0, 1.0])
    t, y = integrate_full(s, 2.0, 1e-3)
    assert np.max(np.abs(y[:, 0] - np.exp(-0.7 * t))) < 1e-12


def test_reduced_without_coupling_is_markovian():
    s = BlockLinearSystem([[-0.4]], [[1.0, 2.0]], np.zeros((2, 1)), -np.eye(2), [1.5], [0.0, 0.0])
    r = reduce_and_integrate(s, 3.0, 1e-3)
    assert np.max(np.abs(r.phi_hat[:, 0] - 1.5 * np.exp(-0.4 * r.times))) < 1e-12
    assert np.all(r.noise_part == 0) and np.all(r.memory_part == 0)


def test_reduced_noise_closed_form():
    A22 = np.array([[-1.0, 0.3], [0.0, -2.0]])
    A12 = np.array([[1.0, -0.5]])
    xt = np.array([0.7, 1.1])
    s = BlockLinearSystem([[0.0]], A12, np.zeros((2, 1)), A22, [0.0], xt)
    r = reduce_and_integrate(s, 2.0, 1e-3)
    exact = [(A12 @ np.linalg.solve(A22, (expm(A22 * t) - np.eye(2)) @ xt))[0] for t in r.times]
    assert np.max(np.abs(r.phi_hat[:, 0] - exact)) < 1e-10


def test_named_cross_oracle_system():
    s = BlockLinearSystem([[-1.0]], [[1.0, 0.0]], [[1.0], [0.0]], -np.eye(2), [1.0], [0.5, -0.5])
    _, full = integrate_full(s, 10.0, 1e-3)
    red = reduce_and_integrate(s, 10.0, 1e-3)
    assert np.max(np.abs(full[:, 0] - red.phi_hat[:, 0])) < 1e-6
    # x' = -x + y, y' = x - y with x0 = 1, y0 = 0.5 has x + y constant
    assert full[-1, 0] == pytest.approx(0.75, abs=1e-4)


def test_decomposition_matches_derivative():
    s = BlockLinearSystem.random_stable(np.random.default_rng(3))
    r = reduce_and_integrate(s, 4.0, 1e-3)
    deriv = np.gradient(r.phi_hat[:, 0], r.times, edge_order=2)
    assert np.max(np.abs(deriv - r.rhs[:, 0])) < 1e-5


def test_fourth_order_convergence():
    s = BlockLinearSystem.random_stable(np.random.default_rng(11))
    z0 = np.concatenate([s.x_hat0, s.x_tilde0])
    exact = (expm(2.0 * s.A) @ z0)[0]
    errs = [abs(reduce_and_integrate(s, 2.0, dt).phi_hat[-1, 0] - exact) for dt in (0.08, 0.04, 0.02)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 3.8)


def test_noise_decays_with_A22_spectrum():
    s = BlockLinearSystem.random_stable(np.random.default_rng(5))
    r = reduce_and_integrate(s, 8.0, 1e-2)
    lam = np.max(np.linalg.eigvals(s.A22).real)
    bound = np.abs(r.noise_part[:, 0]) / np.exp((lam + 1e-9) * r.times)
    # the ratio stays bounded (polynomial factors only for defective A22)
    assert np.max(bound[len(bound) // 2:]) <= 10 * max(1e-12, np.max(bound[:len(bound) // 2]))


def test_random_cases_agree():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(10):
        s = BlockLinearSystem.random_stable(rng)
        _, full = integrate_full(s, 10.0, 1e-3)
        red = reduce_and_integrate(s, 10.0, 1e-3)
        worst = max(worst, np.max(np.abs(full[:, 0] - red.phi_hat[:, 0])))
    assert worst < 1e-6


def test_bad_step():
    s = BlockLinearSystem.random_stable(np.random.default_rng(0))
    with pytest.raises(ValueError):
        integrate_full(s, 1.0, 0.0)
    with pytest.raises(ValueError):
        reduce_and_integrate(s, 1.0, 0.3)
