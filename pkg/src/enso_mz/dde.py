"""Scalar delay models for eastern-Pacific SST and a method-of-steps integrator.

The integrator is classical RK4 on a uniform grid with cubic Hermite dense
output.  Delayed values at RK stages are read from the Hermite interpolant of
already completed steps, so every delay must be at least one step long; the
step is shrunk until it divides all delays whenever that is possible, which
keeps derivative breakpoints on grid nodes.

Besides the single-trajectory :func:`integrate`, :func:`integrate_scaled_batch`
integrates many single-delay scaled models at once.  It works in time measured
in delay units, where every cell shares the same grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .params import PhysicalParams, scale

SCALED_KINDS = ("SS", "VoC", "MZ")
TWO_DELAY_KINDS = ("LinearTwoDelay", "VoCTwoDelay")
MODEL_KINDS = SCALED_KINDS + TWO_DELAY_KINDS

BLOWUP_LEVEL = 1e6


class DDEError(RuntimeError):
    pass


class DDEBlowUp(DDEError):
    def __init__(self, t_last: float):
        super().__init__(f"|T| exceeded {BLOWUP_LEVEL:g}; last valid time t={t_last:.6g}")
        self.t_last = t_last


@dataclass(frozen=True)
class DelayModel:
    """Right-hand side of one of the scalar delay models.

    Scaled kinds use ``alpha, gamma, delta``; the two-delay kinds use the raw
    coefficients ``cS, cL, cT, beta`` and the lags ``d_short < d``.
    """

    kind: str
    alpha: float = 0.0
    gamma: float = 0.0
    delta: float = 0.0
    cS: float = 0.0
    cL: float = 0.0
    cT: float = 0.0
    beta: float = 0.0
    d: float = 0.0
    d_short: float = 0.0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        if self.kind in SCALED_KINDS and not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.kind in TWO_DELAY_KINDS and not (0 <= self.d_short <= self.d and self.d > 0):
            raise ValueError("need 0 <= d_short <= d and d > 0")

    @classmethod
    def scaled(cls, kind: str, alpha: float, gamma: float, delta: float) -> "DelayModel":
        return cls(kind=kind, alpha=alpha, gamma=gamma, delta=delta)

    @classmethod
    def from_params(cls, kind: str, p: PhysicalParams) -> "DelayModel":
        s = scale(p)
        if kind in SCALED_KINDS:
            return cls(kind=kind, alpha=s.alpha, gamma=s.gamma, delta=s.delta)
        beta = s.beta if kind == "VoCTwoDelay" else 0.0
        return cls(kind=kind, cS=s.cS_star, cL=s.cL_star, cT=s.cT_E, beta=beta, d=s.d, d_short=s.d_short)

    @property
    def delays(self) -> tuple[float, ...]:
        if self.kind in SCALED_KINDS:
            return (self.delta,)
        return (self.d_short, self.d)

    def rhs(self, T, lagged: Sequence):
        return _rhs(self.kind, T, lagged, self.alpha, self.gamma, self.cS, self.cL, self.cT, self.beta)


def _rhs(kind, T, lagged, alpha, gamma, cS, cL, cT, beta):
    if kind == "SS":
        (Td,) = lagged
        return T - T**3 - alpha * Td
    if kind == "VoC":
        (Td,) = lagged
        return T - T**3 - alpha * Td * (1.0 - gamma * T * T)
    if kind == "MZ":
        (Td,) = lagged
        return T - T**3 - alpha * Td * (1.0 - gamma * Td * Td)
    Ts, Tl = lagged
    if kind == "LinearTwoDelay":
        return -cT * T + cS * Ts - cL * Tl
    return -cT * T + (1.0 - beta * T * T) * (cS * Ts - cL * Tl)


# -- dense output ------------------------------------------------------------


def _hermite(y0, y1, f0, f1, h, s):
    """Cubic Hermite interpolant on one step of length ``h`` at fraction ``s``."""
    s2 = s * s
    s3 = s2 * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


def _as_history(history) -> Callable:
    if callable(history):
        return history
    if isinstance(history, tuple) and len(history) == 2:
        th, yh = (np.asarray(a, dtype=float) for a in history)
        return lambda t: np.interp(t, th, yh)
    value = np.asarray(history, dtype=float)
    return lambda t: np.broadcast_to(value, np.broadcast_shapes(np.shape(t), value.shape)).astype(float)


@dataclass(frozen=True)
class Trajectory:
    """Uniform-grid solution with node values ``y`` and node derivatives ``f``.

    Evaluation between nodes uses the cubic Hermite interpolant; before ``t0``
    the history function is used.  ``y`` has shape ``(n + 1,)`` or
    ``(n + 1, batch)``.
    """

    t0: float
    dt: float
    y: np.ndarray
    f: np.ndarray
    history: Callable = field(repr=False)
    max_delay: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.y))

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (len(self.y) - 1)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t > self.t_end + 1e-9 * max(1.0, abs(self.t_end))):
            raise ValueError("evaluation beyond the end of the trajectory")
        if np.any(t < self.t0 - self.max_delay - 1e-12):
            raise ValueError("evaluation before the start of the history interval")
        scalar = t.ndim == 0
        tt = np.atleast_1d(t)
        pos = (tt - self.t0) / self.dt
        i = np.clip(np.floor(pos).astype(int), 0, len(self.y) - 2)
        s = pos - i
        if self.y.ndim > 1:
            s = s[:, None]
        out = _hermite(self.y[i], self.y[i + 1], self.f[i], self.f[i + 1], self.dt, s)
        before = tt < self.t0
        if np.any(before):
            out[before] = self.history(tt[before])
        return out[0] if scalar else out

    def segments(self):
        """Yield ``(t0, t1, coeffs)`` with monomial coefficients in ``(t - t0)``."""
        h = self.dt
        for k in range(len(self.y) - 1):
            y0, y1, f0, f1 = self.y[k], self.y[k + 1], self.f[k], self.f[k + 1]
            c0 = y0
            c1 = f0
            c2 = (3 * (y1 - y0) / h - 2 * f0 - f1) / h
            c3 = (2 * (y0 - y1) / h + f0 + f1) / (h * h)
            ta = self.t0 + k * h
            yield ta, ta + h, (c0, c1, c2, c3)


# -- step selection ----------------------------------------------------------


def choose_step(delays: Sequence[float], dt_requested: float, search: int = 2000) -> float:
    """Largest step ``<= dt_requested`` dividing every positive delay.

    Falls back to ``min(dt_requested, min positive delay)`` when the delays are
    incommensurate within the search budget.
    """
    if dt_requested <= 0:
        raise ValueError("dt must be positive")
    pos = [d for d in delays if d > 0]
    if not pos:
        return dt_requested
    dmax = max(pos)
    n0 = max(1, math.ceil(dmax / dt_requested - 1e-9))
    for n in range(n0, n0 + search):
        dt = dmax / n
        if all(abs(d / dt - round(d / dt)) < 1e-7 * max(1.0, d / dt) for d in pos):
            return dt
    return min(dt_requested, min(pos))


# -- integration core --------------------------------------------------------


def _rk4_core(rhs, y0, history, lags_in_steps, dt, n_steps, *, batch_blowup=False):
    """Integrate with RK4 on ``n_steps`` uniform steps.

    ``rhs(T, [lagged...])`` is vectorised over the trailing batch axis;
    ``lags_in_steps`` are delays divided by ``dt`` (each ``>= 1`` or exactly 0).
    Returns ``(y, f, t_last_valid)``.
    """
    y0 = np.asarray(y0, dtype=float)
    shape = (n_steps + 1,) + y0.shape
    y = np.empty(shape)
    f = np.empty(shape)
    y[0] = y0

    # constant Hermite positions for each lag and stage offset c in {0, 1/2, 1}
    stages = (0.0, 0.5, 1.0)
    plans = []
    for lag in lags_in_steps:
        if lag == 0:
            plans.append(None)
            continue
        if lag < 1 - 1e-9:
            raise DDEError("each nonzero delay must be at least one step")
        per_stage = []
        for c in stages:
            p = c - lag
            pr = round(p)
            if abs(p - pr) < 1e-9:
                p = float(pr)
            i_off = math.floor(p)
            per_stage.append((i_off, p - i_off, p))
        plans.append(per_stage)

    # history values needed while the lagged time is still negative
    hist_cache = {}
    for li, plan in enumerate(plans):
        if plan is None:
            continue
        for ci, (i_off, s, p) in enumerate(plan):
            n_hist = max(0, min(n_steps, math.ceil(-p - 1e-12)))
            ns = np.arange(n_hist)
            times = (ns + p) * dt
            if n_hist:
                vals = np.broadcast_to(np.asarray(history(times), dtype=float), (n_hist,) + y0.shape)
            else:
                vals = np.empty((0,) + y0.shape)
            hist_cache[li, ci] = (n_hist, vals)

    def lagged_value(n, li, ci, stage_state):
        plan = plans[li]
        if plan is None:
            return stage_state
        n_hist, vals = hist_cache[li, ci]
        if n < n_hist:
            return vals[n]
        i_off, s, _ = plan[ci]
        i = n + i_off
        if s == 0.0:
            return y[i]
        return _hermite(y[i], y[i + 1], f[i], f[i + 1], dt, s)

    nlag = len(plans)
    t_valid = 0.0
    for n in range(n_steps):
        Y = y[n]
        k1 = rhs(Y, [lagged_value(n, li, 0, Y) for li in range(nlag)])
        f[n] = k1
        Y2 = Y + 0.5 * dt * k1
        k2 = rhs(Y2, [lagged_value(n, li, 1, Y2) for li in range(nlag)])
        Y3 = Y + 0.5 * dt * k2
        k3 = rhs(Y3, [lagged_value(n, li, 1, Y3) for li in range(nlag)])
        Y4 = Y + dt * k3
        k4 = rhs(Y4, [lagged_value(n, li, 2, Y4) for li in range(nlag)])
        y[n + 1] = Y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        big = np.abs(y[n + 1]) > BLOWUP_LEVEL
        if np.any(big) or not np.all(np.isfinite(y[n + 1])):
            if not batch_blowup:
                raise DDEBlowUp(n * dt)
            y[n + 1] = np.where(big | ~np.isfinite(y[n + 1]), np.nan, y[n + 1])
        t_valid = (n + 1) * dt
    Yl = y[n_steps]
    f[n_steps] = rhs(Yl, [lagged_value(n_steps, li, 0, Yl) for li in range(nlag)])
    return y, f, t_valid


def integrate(model: DelayModel, history=0.1, t_end: float | None = None, dt: float = 0.01) -> Trajectory:
    """Integrate ``model`` from ``t = 0`` with the given history on ``[-max_delay, 0]``.

    ``history`` may be a constant, a callable of time, or a sampled
    ``(times, values)`` pair (linearly interpolated).  ``t_end`` defaults to 40
    times the longest delay.  The step is adjusted downward so that it divides
    every delay when possible.
    """
    delays = model.delays
    max_delay = max(delays)
    if t_end is None:
        t_end = 40.0 * max_delay
    h = choose_step(delays, dt)
    n_steps = max(1, math.ceil(t_end / h - 1e-9))
    hist = _as_history(history)
    y0 = float(np.asarray(hist(np.array([0.0])), dtype=float).reshape(-1)[0])
    lags = [d / h for d in delays]
    y, f, _ = _rk4_core(model.rhs, y0, hist, lags, h, n_steps)
    return Trajectory(0.0, h, y, f, hist, max_delay)


def integrate_scaled_batch(kind: str, alpha, gamma, delta, history=0.1, run_delays: float = 40.0,
                           steps_per_delay: int = 200) -> Trajectory:
    """Integrate a batch of scaled single-delay models in delay units.

    With ``s = t / delta`` every cell has unit delay, so all cells share one
    grid of ``steps_per_delay`` steps per delay.  The returned trajectory is in
    ``s``; multiply times by each cell's ``delta`` to recover model time.
    Cells that blow up are filled with NaN instead of aborting the batch.
    """
    if kind not in SCALED_KINDS:
        raise ValueError(f"batch integration supports {SCALED_KINDS}, not {kind!r}")
    alpha, gamma, delta = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (alpha, gamma, delta)))
    if np.any(delta <= 0):
        raise ValueError("delta must be positive")
    alpha, gamma, delta = (np.atleast_1d(v) for v in (alpha, gamma, delta))
    hist = _as_history(history)

    def rhs(T, lagged):
        return delta * _rhs(kind, T, lagged, alpha, gamma, 0.0, 0.0, 0.0, 0.0)

    def hist_s(s):
        return np.asarray(hist(np.asarray(s, dtype=float)[:, None] * delta), dtype=float)

    h0 = np.broadcast_to(hist_s(np.zeros(1))[0], alpha.shape).astype(float)

    ds = 1.0 / steps_per_delay
    n_steps = int(round(run_delays * steps_per_delay))
    y, f, _ = _rk4_core(rhs, h0, hist_s, [float(steps_per_delay)], ds, n_steps, batch_blowup=True)
    return Trajectory(0.0, ds, y, f, hist_s, 1.0)


# -- diagnostics ---------------------------------------------------------------


@dataclass(frozen=True)
class PeriodEstimate:
    period: float | None
    classification: str  # oscillating | equilibrium | non-periodic | insufficient | blow-up
    n_crossings: int = 0
    spacing_cv: float = float("nan")
    amplitude: float = 0.0

    @property
    def oscillating(self) -> bool:
        return self.classification == "oscillating"


def _window(traj, transient_fraction: float):
    if isinstance(traj, Trajectory):
        t, y = traj.times, traj.y
    else:
        t, y = (np.asarray(a, dtype=float) for a in traj)
    if not 0 <= transient_fraction < 1:
        raise ValueError("transient_fraction must lie in [0, 1)")
    start = int(math.floor(transient_fraction * (len(t) - 1)))
    return t[start:], y[start:]


def measure_period(traj, transient_fraction: float = 0.5, *, amplitude_floor: float = 1e-6,
                   max_cv: float = 0.05, min_crossings: int = 6, decay_ratio: float = 0.8) -> PeriodEstimate:
    """Period from same-direction zero crossings of the mean-removed signal.

    ``traj`` is a scalar :class:`Trajectory` or a ``(times, values)`` pair.
    An oscillation whose last-quarter amplitude has fallen below
    ``decay_ratio`` of its first-quarter amplitude is treated as a slow
    approach to equilibrium.
    """
    t, y = _window(traj, transient_fraction)
    if not np.all(np.isfinite(y)):
        return PeriodEstimate(None, "blow-up")
    amp = 0.5 * float(y.max() - y.min())
    if amp < amplitude_floor:
        return PeriodEstimate(None, "equilibrium", amplitude=amp)
    q = max(2, len(y) // 4)
    a_first = np.ptp(y[:q])
    a_last = np.ptp(y[-q:])
    if a_last < decay_ratio * a_first:
        return PeriodEstimate(None, "equilibrium", amplitude=amp)
    z = y - y.mean()
    sign = z >= 0
    k_all = np.flatnonzero(sign[1:] != sign[:-1])
    k_up = np.flatnonzero(~sign[:-1] & sign[1:])
    if len(k_all) < min_crossings or len(k_up) < 2:
        return PeriodEstimate(None, "insufficient", n_crossings=len(k_all), amplitude=amp)
    # linear refinement between bracketing samples
    z0, z1 = z[k_up], z[k_up + 1]
    tc = t[k_up] + (t[k_up + 1] - t[k_up]) * (-z0) / (z1 - z0)
    spacing = np.diff(tc)
    cv = float(spacing.std() / spacing.mean())
    if cv > max_cv:
        return PeriodEstimate(None, "non-periodic", n_crossings=len(k_all), spacing_cv=cv, amplitude=amp)
    return PeriodEstimate(float(spacing.mean()), "oscillating", n_crossings=len(k_all), spacing_cv=cv, amplitude=amp)


def amplitude(traj, transient_fraction: float = 0.5) -> float:
    """Half the peak-to-peak range after the transient."""
    _, y = _window(traj, transient_fraction)
    return 0.5 * float(np.max(y) - np.min(y))


def batch_periods(traj: Trajectory, time_scale, transient_fraction: float = 0.5, **kw) -> list[PeriodEstimate]:
    """Per-cell :func:`measure_period` on a batch trajectory, rescaled by ``time_scale``."""
    t = traj.times
    scale_ = np.broadcast_to(np.asarray(time_scale, dtype=float), traj.y.shape[1:])
    out = []
    for j in range(traj.y.shape[1]):
        est = measure_period((t * scale_[j], traj.y[:, j]), transient_fraction, **kw)
        out.append(est)
    return out
