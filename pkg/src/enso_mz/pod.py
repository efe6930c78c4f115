"""Pseudo-orthogonal dynamics (POD) of the nonlinear two-strip model.

The POD system drops the wind forcing from the thermocline equations and
the damping from the SST equation:

    d/dt h_c^Q = -(eps0 + d/dx) h_c^Q
    d/dt h_n^Q = -(eps0 - y_n^-2 d/dx) h_n^Q
    d/dt T^Q   = c_h*(x) (1 - beta T^Q^2) (h_c^Q + h_n^Q / (1 + y_n^2))

Its SST component is separable and has a closed form through ``tanh``
(``coth`` when ``beta T^2 > 1``).  The noise term is the right-hand side of
the last equation; a directional finite difference of it gives the memory
kernel.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from .params import PhysicalParams, local_coeffs
from .pde import PdeSolver, PdeState, WindForcing, CflError

log = logging.getLogger(__name__)

MAX_HALVINGS = 8


class BranchError(ValueError):
    pass


def branch_of(T, beta: float) -> np.ndarray:
    """``"tanh"`` where ``beta T^2 < 1``, ``"coth"`` where ``> 1``, else ``"constant"``."""
    u = beta * np.asarray(T, dtype=float) ** 2
    return np.where(u < 1.0, "tanh", np.where(u > 1.0, "coth", "constant"))


@dataclass
class PodState:
    x_grid: np.ndarray
    h_c_Q: np.ndarray
    h_n_Q: np.ndarray
    T_e_Q: np.ndarray
    t: float
    branch: np.ndarray


@dataclass
class PodRun:
    """Probe records of a POD integration on its own time grid."""

    times: np.ndarray
    probes: tuple[float, ...]
    T_Q: np.ndarray  # (n_times, n_probes)
    s_Q: np.ndarray  # thermocline sum h_c + h_n / (1 + y_n^2) at the probes
    ch: np.ndarray  # c_h*(x) at the probes
    beta: float
    final: PodState
    halvings: int = 0

    def column(self, x: float) -> int:
        for i, xp in enumerate(self.probes):
            if abs(xp - x) < 1e-12:
                return i
        raise KeyError(f"{x} is not a recorded probe; recorded: {self.probes}")


def _quad_interp(s0, s1, s2, H):
    """Quadratic in time through the thermocline sums at ``0, H/2, H``."""
    def f(tau):
        r = tau / H
        return s0 * (1 - r) * (1 - 2 * r) + s1 * 4 * r * (1 - r) + s2 * r * (2 * r - 1)
    return f


def _rk4(T, ch, beta, s_fn, a, h, tanh_mask, depth, counter):
    def f(T_, s_):
        return ch * (1.0 - beta * T_ * T_) * s_

    s_a, s_m, s_b = s_fn(a), s_fn(a + 0.5 * h), s_fn(a + h)
    k1 = f(T, s_a)
    T2 = T + 0.5 * h * k1
    k2 = f(T2, s_m)
    T3 = T + 0.5 * h * k2
    k3 = f(T3, s_m)
    T4 = T + h * k3
    k4 = f(T4, s_b)
    out = T + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    if beta > 0 and np.any(tanh_mask):
        bad = False
        for stage in (T2, T3, T4, out):
            if np.any(beta * stage[tanh_mask] ** 2 >= 1.0):
                bad = True
                break
        if bad:
            if depth >= MAX_HALVINGS:
                log.warning("tanh-branch bound still violated after %d halvings", depth)
                return out
            counter[0] += 1
            mid = _rk4(T, ch, beta, s_fn, a, 0.5 * h, tanh_mask, depth + 1, counter)
            return _rk4(mid, ch, beta, s_fn, a + 0.5 * h, 0.5 * h, tanh_mask, depth + 1, counter)
    return out


def _solver(p: PhysicalParams, N: int) -> PdeSolver:
    # unforced advection: the POD thermocline equations carry no wind source
    return PdeSolver(p.replace(mu=0.0), WindForcing(), N, nonlinear=False)


def pod_integrate(initial: PdeState, p: PhysicalParams, t_end: float, dt: float | None = None,
                  probes: Sequence[float] | None = None) -> PodRun:
    """Integrate the POD system from ``initial``.

    The thermocline fields use the PDE advection step (``dt = dx``); the SST
    equation is advanced by RK4 with step ``2 dx``, reading the thermocline
    at the step ends and midpoint.  A step whose stages push a tanh-branch
    node to ``beta T^2 >= 1`` is redone as two half steps, with the
    thermocline interpolated quadratically in time.
    """
    N = initial.N
    solver = _solver(p, N)
    if dt is not None and abs(dt - 2.0 * solver.dx) > 1e-12:
        raise CflError(f"POD step must be 2 dx = {2 * solver.dx:g}, got {dt:g}")
    H = 2.0 * solver.dx
    beta = p.beta
    _, ch = local_coeffs(p, solver.x)
    ch = np.asarray(ch, dtype=float)
    q = 1.0 + p.yn2
    probes = (p.x_E,) if probes is None else tuple(probes)
    locs = [solver._locate(xp) for xp in probes]
    n = int(round(t_end / H))
    hc, hn, T = initial.h_c.copy(), initial.h_n.copy(), initial.T_e.copy()
    tanh_mask = beta * T * T < 1.0
    times = initial.t + H * np.arange(n + 1)
    rec_T = np.empty((n + 1, len(probes)))
    rec_s = np.empty((n + 1, len(probes)))

    def at(field_, i, f):
        return field_[i] if f == 0.0 else (1.0 - f) * field_[i] + f * field_[i + 1]

    def record(k, T, s):
        for m, (i, f) in enumerate(locs):
            rec_T[k, m] = at(T, i, f)
            rec_s[k, m] = at(s, i, f)

    s0 = hc + hn / q
    record(0, T, s0)
    counter = [0]
    for k in range(1, n + 1):
        hc1, hn1 = solver.advect(hc, hn)
        hc, hn = solver.advect(hc1, hn1)
        s1, s2 = hc1 + hn1 / q, hc + hn / q
        T = _rk4(T, ch, beta, _quad_interp(s0, s1, s2, H), 0.0, H, tanh_mask, 0, counter)
        if not np.all(np.isfinite(T)):
            raise FloatingPointError(f"non-finite T_Q at t={times[k]:.6g}")
        s0 = s2
        record(k, T, s0)
    ch_probe = np.array([at(ch, i, f) for i, f in locs])
    final = PodState(solver.x, hc, hn, T, float(times[-1]), branch_of(T, beta))
    return PodRun(times, probes, rec_T, rec_s, ch_probe, beta, final, counter[0])


# -- closed form -----------------------------------------------------------------


def _as_function(values: np.ndarray, x_grid: np.ndarray):
    spline = CubicSpline(x_grid, values)
    return lambda x: float(spline(x))


@dataclass
class CharacteristicTracer:
    """Unforced thermocline fields at ``(x, s)`` traced back to ``t = 0``."""

    p: PhysicalParams
    hc0: callable
    hn0: callable
    reflections: bool = True

    def __post_init__(self):
        q = 1.0 + self.p.yn2
        self.a_W = self.p.r_W - 1.0 / q
        self.b_E = self.p.r_E / (1.0 - self.p.r_E / q)

    def hc(self, x: float, s: float) -> float:
        e0 = self.p.eps0
        if x - s >= 0.0:
            return math.exp(-e0 * s) * self.hc0(x - s)
        if not self.reflections:
            return 0.0
        # left the western wall at time s - x
        return math.exp(-e0 * x) * self.a_W * self.hn(0.0, s - x)

    def hn(self, x: float, s: float) -> float:
        e0, y2 = self.p.eps0, self.p.yn2
        foot = x + s / y2
        if foot <= 1.0:
            return math.exp(-e0 * s) * self.hn0(foot)
        if not self.reflections or self.b_E == 0.0:
            return 0.0
        travel = (1.0 - x) * y2
        return math.exp(-e0 * travel) * self.b_E * self.hc(1.0, s - travel)

    def breakpoints(self, x: float, t: float) -> list[float]:
        """Times in ``(0, t)`` where a traced characteristic hits a wall."""
        L = 1.0 + self.p.yn2
        pts = set()
        for base in (x, (1.0 - x) * self.p.yn2):
            s = base
            while s < t:
                if s > 0:
                    pts.add(s)
                s += L
        for base in (x + self.p.yn2, (1.0 - x) * self.p.yn2 + 1.0):
            s = base
            while s < t:
                pts.add(s)
                s += L
        return sorted(pts)


def thermocline_integral(tracer: CharacteristicTracer, x: float, t: float, tol: float = 1e-11) -> float:
    """``int_0^t h_c^Q(x, s) + h_n^Q(x, s) / (1 + y_n^2) ds``."""
    if t == 0:
        return 0.0
    q = 1.0 + tracer.p.yn2
    f = lambda s: tracer.hc(x, s) + tracer.hn(x, s) / q
    edges = [0.0] + [b for b in tracer.breakpoints(x, t) if 0 < b < t] + [t]
    total = 0.0
    for a, b in zip(edges, edges[1:]):
        val, _ = quad(f, a, b, epsabs=tol, epsrel=tol, limit=200)
        total += val
    return total


def closed_form_TeQ(initial: PdeState, x: float, t: float, p: PhysicalParams, as_printed: bool = False,
                    reflections: bool = True) -> float:
    """Closed-form ``T^Q(x, t)`` on the tanh branch.

    ``as_printed`` evaluates ``(1/beta) tanh^2(...)`` instead of
    ``(1/sqrt(beta)) tanh(...)``; the latter solves the separable SST
    equation.  ``reflections=False`` clips characteristics at the walls.
    """
    xs = initial.x_grid
    T0 = _as_function(initial.T_e, xs)(x)
    beta = p.beta
    if beta > 0 and beta * T0 * T0 >= 1.0:
        raise BranchError("beta T^2 >= 1 at the start: use the coth or constant branch (closed_form_branch)")
    return closed_form_branch(initial, x, t, p, as_printed=as_printed, reflections=reflections)


def closed_form_branch(initial: PdeState, x: float, t: float, p: PhysicalParams, as_printed: bool = False,
                       reflections: bool = True) -> float:
    """Closed form on whichever branch the initial value selects."""
    if t < 0:
        raise ValueError("t must be non-negative")
    xs = initial.x_grid
    T0 = _as_function(initial.T_e, xs)(x)
    tracer = CharacteristicTracer(p, _as_function(initial.h_c, xs), _as_function(initial.h_n, xs), reflections)
    S = thermocline_integral(tracer, x, t)
    _, ch = local_coeffs(p, x)
    ch = float(ch)
    beta = p.beta
    if beta == 0.0:
        return T0 + ch * S
    rb = math.sqrt(beta)
    u0 = rb * T0
    if abs(u0) < 1.0:
        arg = math.atanh(u0) + ch * rb * S
        return math.tanh(arg) ** 2 / beta if as_printed else math.tanh(arg) / rb
    if abs(u0) > 1.0:
        arg = math.atanh(1.0 / u0) + ch * rb * S  # arccoth
        return 1.0 / (rb * math.tanh(arg))
    return T0


# -- noise and memory kernel -----------------------------------------------------


def pod_noise(x: float, t, run: PodRun) -> np.ndarray:
    """Noise term ``c_h*(x)(1 - beta T_Q^2)(h_c^Q + h_n^Q/(1+y_n^2))`` at a recorded probe."""
    m = run.column(x)
    T = np.interp(t, run.times, run.T_Q[:, m])
    s = np.interp(t, run.times, run.s_Q[:, m])
    return run.ch[m] * (1.0 - run.beta * T * T) * s


def noise_series(run: PodRun, x: float) -> np.ndarray:
    m = run.column(x)
    T = run.T_Q[:, m]
    return run.ch[m] * (1.0 - run.beta * T * T) * run.s_Q[:, m]


def vector_field(p: PhysicalParams, forcing: WindForcing, x_grid: np.ndarray, T_e: np.ndarray,
                 h_c: np.ndarray | None = None, h_n: np.ndarray | None = None) -> tuple[np.ndarray, ...]:
    """Right-hand side ``R`` of the nonlinear two-strip model on a grid (point-forcing limit excluded)."""
    q = 1.0 + p.yn2
    h_c = np.zeros_like(T_e) if h_c is None else h_c
    h_n = np.zeros_like(T_e) if h_n is None else h_n
    TE = float(np.interp(p.x_E, x_grid, T_e))
    g = forcing.g(x_grid)
    cT, ch = local_coeffs(p, x_grid)
    dx = x_grid[1] - x_grid[0]
    # -(eps0 + d/dx) h_c and -(eps0 - y^-2 d/dx) h_n vanish for h = 0
    R_hc = -p.eps0 * h_c - np.gradient(h_c, dx) + p.mu * (1.0 - p.theta / q) * g * TE
    R_hn = -p.eps0 * h_n + np.gradient(h_n, dx) / p.yn2 - p.mu * p.theta / p.yn2 * g * TE
    R_T = -cT * T_e + ch * (1.0 - p.beta * T_e**2) * (h_c + h_n / q)
    return R_hc, R_hn, R_T


@dataclass
class KernelFD:
    times: np.ndarray
    raw: np.ndarray
    half: np.ndarray
    extrapolated: np.ndarray
    epsilon_fd: float
    direction_norm: float
    branch_ok: bool
    messages: list[str] = field(default_factory=list)
    initial: PdeState | None = None  # perturbed state at ``epsilon_fd``


def kernel_fd(p: PhysicalParams, t_end: float, epsilon_fd: float = 1e-5, forcing: WindForcing | None = None,
              N: int = 1000, T_hat: float | np.ndarray = 1.0, x_probe: float | None = None) -> KernelFD:
    """Memory kernel ``||R|| F(x_hat + eps R/||R||, t) / eps`` along the POD flow.

    The resolved state is ``x_hat = (T_hat, h_c = 0, h_n = 0)``.  The norm is
    the grid l2 norm weighted by ``dx`` (a discrete L2 norm over all three
    fields).  Estimates at ``eps`` and ``eps/2`` are combined by Richardson
    extrapolation ``2 K(eps/2) - K(eps)``.
    """
    if not epsilon_fd > 0:
        raise ValueError("epsilon_fd must be positive")
    forcing = WindForcing.from_params(p) if forcing is None else forcing
    x_probe = p.x_E if x_probe is None else x_probe
    xs = np.linspace(0.0, 1.0, N + 1)
    T_hat = np.broadcast_to(np.asarray(T_hat, dtype=float), xs.shape).copy()
    R_hc, R_hn, R_T = vector_field(p, forcing, xs, T_hat)
    dx = 1.0 / N
    norm = math.sqrt(dx * float(np.sum(R_hc**2) + np.sum(R_hn**2) + np.sum(R_T**2)))
    if norm == 0.0:
        raise ValueError("vector field vanishes at the resolved state; direction undefined")
    out = []
    msgs = []
    ok = True
    first = None
    for eps in (epsilon_fd, 0.5 * epsilon_fd):
        c = eps / norm
        init = PdeState(xs, c * R_hc, c * R_hn, T_hat + c * R_T, 0.0)
        first = init if first is None else first
        if p.beta > 0 and np.any(p.beta * init.T_e**2 >= 1.0):
            ok = False
            msgs.append(f"perturbed state at eps={eps:g} leaves the tanh branch")
        run = pod_integrate(init, p, t_end, probes=(x_probe,))
        out.append(norm * noise_series(run, x_probe) / eps)
    raw, half = out
    return KernelFD(run.times, raw, half, 2.0 * half - raw, epsilon_fd, norm, ok, msgs, first)


def pod_error_diagnostic(p: PhysicalParams, state: PdeState) -> float:
    """Max-norm of ``d R_Q/d state`` at ``x`` minus at ``x_hat`` for the SST component.

    Convention: only the SST row differs, by ``-2 beta c_h* T (h_c + h_n/(1+y_n^2))``
    in its ``T`` entry; the diagnostic is the max over the grid of its
    absolute value.
    """
    _, ch = local_coeffs(p, state.x_grid)
    s = state.h_c + state.h_n / (1.0 + p.yn2)
    return float(np.max(np.abs(2.0 * p.beta * ch * state.T_e * s)))
