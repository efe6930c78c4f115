import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from enso_mz import kernel, pde, pod
from enso_mz.params import PhysicalParams, local_coeffs


def bump(x, c, w, a):
    z = (x - c) / w
    return np.where(np.abs(z) < 1.0, a * np.cos(0.5 * np.pi * z) ** 4, 0.0)


def test_state(N, p=None):
    x = pde.grid(N)
    return pde.PdeState(x, bump(x, 0.4, 0.15, 0.3), bump(x, 0.6, 0.2, -0.2), bump(x, 0.5, 0.3, 0.5))


test_state.__test__ = False

PROBES = (0.3, 0.5, 0.9)


def closed_form_gap(p, N, stride):
    init = test_state(N)
    run = pod.pod_integrate(init, p, 8.0, probes=PROBES)
    err = 0.0
    for x in PROBES:
        m = run.column(x)
        for k in range(0, len(run.times), stride):
            err = max(err, abs(pod.closed_form_TeQ(init, x, run.times[k], p) - run.T_Q[k, m]))
    return err, run


@pytest.fixture(scope="module")
def western_run():
    return closed_form_gap(PhysicalParams(), 2000, 125)


def test_matches_closed_form(western_run):
    assert western_run[0] < 1e-6


def test_closed_form_with_eastern_reflection_converges():
    # the eastern wall squeezes Kelvin pulses by y_n^2 into the Rossby strip,
    # so the grid error is larger there but still shrinks at third order
    p = PhysicalParams(r_E=0.5)
    e1, _ = closed_form_gap(p, 1000, 125)
    e2, _ = closed_form_gap(p, 2000, 250)
    assert e2 < 1e-4
    assert e1 / e2 > 6.0


def test_noise_is_time_derivative(western_run):
    _, run = western_run
    h = run.times[1] - run.times[0]
    for x in PROBES:
        m = run.column(x)
        T = run.T_Q[:, m]
        F = pod.noise_series(run, x)
        simpson = h / 3 * (F[:-2] + 4 * F[1:-1] + F[2:])
        assert np.max(np.abs(T[2:] - T[:-2] - simpson)) < 1e-4 * 2 * h * np.max(np.abs(F))


def test_closed_form_at_zero_is_initial():
    p = PhysicalParams(r_E=0.5)
    init = test_state(400)
    for x in (0.2, 0.5, 0.77):
        assert pod.closed_form_TeQ(init, x, 0.0, p) == pytest.approx(float(bump(x, 0.5, 0.3, 0.5)), abs=1e-6)


def test_hand_example_constant_thermocline():
    p = PhysicalParams()
    x = pde.grid(200)
    init = pde.PdeState(x, np.ones_like(x), np.zeros_like(x), np.zeros_like(x))
    xp, t = 0.9, 0.8
    _, ch = local_coeffs(p, xp)
    S = (1 - math.exp(-p.eps0 * t)) / p.eps0
    rb = math.sqrt(p.beta)
    expect = math.tanh(float(ch) * rb * S) / rb
    assert pod.closed_form_TeQ(init, xp, t, p) == pytest.approx(expect, rel=1e-9)
    assert pod.closed_form_TeQ(init, xp, t, p, as_printed=True) == pytest.approx(expect**2 * rb**2 / p.beta, rel=1e-9)
    assert pod.closed_form_TeQ(init, xp, t, p, as_printed=True) != pytest.approx(expect)


def test_zero_thermocline_keeps_T():
    p = PhysicalParams()
    init = pde.default_state(200, p)
    run = pod.pod_integrate(init, p, 3.0, probes=(p.x_E, 0.5))
    assert np.all(run.T_Q == run.T_Q[0])
    assert np.all(pod.noise_series(run, p.x_E) == 0.0)


def test_linear_growth_without_saturation():
    p = PhysicalParams(c_se=0.0, r_E=0.0)
    assert p.beta == 0.0
    x = pde.grid(400)
    init = pde.PdeState(x, bump(x, 0.5, 0.4, 0.2), np.zeros_like(x), np.full_like(x, 0.1))
    run = pod.pod_integrate(init, p, 0.3, probes=(0.95,))
    _, ch = local_coeffs(p, 0.95)
    # pulse centre passes x = 0.95 after 0.45, so on [0, 0.3] h_c(0.95) = exp(-eps0 t) h_c0(0.95 - t)
    for k in (30, 60):
        t = run.times[k]
        S = pod.thermocline_integral(pod.CharacteristicTracer(p, lambda s: float(bump(s, 0.5, 0.4, 0.2)),
                                                              lambda s: 0.0), 0.95, t)
        assert run.T_Q[k, 0] == pytest.approx(0.1 + float(ch) * S, abs=1e-8)


def test_noise_vanishes_after_flushing():
    p = PhysicalParams(r_E=0.0)
    init = test_state(1000)
    run = pod.pod_integrate(init, p, 1 + p.yn2 + 1.0, probes=PROBES)
    for x in PROBES:
        F = pod.noise_series(run, x)
        late = run.times > 1 + p.yn2 + 0.05
        assert np.max(np.abs(F[late])) < 1e-8 * np.max(np.abs(F))


@settings(max_examples=25, deadline=None)
@given(T0=st.floats(-3.0, 3.0), S=st.floats(-2.0, 2.0))
def test_branch_invariance(T0, S):
    # closed form never crosses |T| = 1/sqrt(beta)
    p = PhysicalParams()
    x = pde.grid(64)
    init = pde.PdeState(x, np.full_like(x, S), np.zeros_like(x), np.full_like(x, T0))
    b0 = pod.branch_of(T0, p.beta)
    T = pod.closed_form_branch(init, 0.99, 0.5, p, reflections=False)
    if b0 == "constant":
        assert T == pytest.approx(T0)
    elif math.isfinite(T):
        assert pod.branch_of(T, p.beta) in (b0, "constant")


def test_branch_error_and_coth():
    p = PhysicalParams()
    x = pde.grid(64)
    big = 1.5 / math.sqrt(p.beta)
    init = pde.PdeState(x, np.full_like(x, 0.1), np.zeros_like(x), np.full_like(x, big))
    with pytest.raises(pod.BranchError):
        pod.closed_form_TeQ(init, 0.99, 0.2, p)
    T = pod.closed_form_branch(init, 0.99, 0.2, p)
    assert abs(T) > 1 / math.sqrt(p.beta)
    assert T < big  # positive forcing drives coth branch toward the bound
    assert pod.branch_of(1 / math.sqrt(p.beta), p.beta) == "constant"


def test_step_mismatch_raises():
    p = PhysicalParams()
    init = test_state(100)
    with pytest.raises(pde.CflError):
        pod.pod_integrate(init, p, 1.0, dt=0.01)
    pod.pod_integrate(init, p, 0.1, dt=0.02)


def test_thermocline_advection_is_unforced_pde():
    p = PhysicalParams(r_E=0.4)
    init = test_state(200)
    run = pod.pod_integrate(init, p, 1.0)
    solver = pde.PdeSolver(p.replace(mu=0.0), pde.WindForcing(), 200, nonlinear=False)
    hc, hn = init.h_c, init.h_n
    for _ in range(200):
        hc, hn = solver.advect(hc, hn)
    assert np.array_equal(hc, run.final.h_c_Q) and np.array_equal(hn, run.final.h_n_Q)


def test_kernel_fd_matches_linear_kernel():
    p = PhysicalParams(c_se=0.0, r_E=0.0)
    f = pde.WindForcing.from_params(p, 0.04)
    res = pod.kernel_fd(p, 12.0, forcing=f, N=1000)
    K = kernel.kernel_eval(res.times, f, p, x_probe=p.x_E)
    assert res.branch_ok
    assert np.max(np.abs(res.extrapolated - K)) < 1e-3 * np.max(np.abs(K))


def test_kernel_fd_epsilon_consistency():
    p = PhysicalParams()
    f = pde.WindForcing.from_params(p, 0.04)
    res = pod.kernel_fd(p, 4.0, epsilon_fd=1e-4, forcing=f, N=400)
    scale = np.max(np.abs(res.raw))
    gap = np.max(np.abs(res.raw - res.half))
    assert gap < 1e-2 * scale
    res2 = pod.kernel_fd(p, 4.0, epsilon_fd=5e-5, forcing=f, N=400)
    gap2 = np.max(np.abs(res2.raw - res2.half))
    assert gap2 == pytest.approx(0.5 * gap, rel=0.2)  # first-order in eps
    with pytest.raises(ValueError):
        pod.kernel_fd(p, 1.0, epsilon_fd=0.0)


def test_error_diagnostic():
    p = PhysicalParams()
    init = test_state(200)
    d = pod.pod_error_diagnostic(p, init)
    _, ch = local_coeffs(p, init.x_grid)
    s = init.h_c + init.h_n / (1 + p.yn2)
    assert d == pytest.approx(np.max(np.abs(2 * p.beta * ch * init.T_e * s)))
    assert pod.pod_error_diagnostic(p, pde.default_state(200, p)) == 0.0
