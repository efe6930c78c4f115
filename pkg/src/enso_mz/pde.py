"""Two-strip equatorial ocean model on ``x in [0, 1]``.

Variables are the Kelvin-strip combination ``h_c`` (advected east at unit
speed), the off-equatorial thermocline ``h_n`` (advected west at speed
``1/y_n^2``) and the SST anomaly ``T_e``.  Wind forcing ``mu g(x) T_e(x_E, t)``
drives both strips; reflection conditions couple them at the walls.

The scheme is semi-Lagrangian along exact characteristics with ``dt = dx``:
Kelvin feet land on nodes, Rossby feet sit at ``x_j + dx/y_n^2`` and are
interpolated with cubic Lagrange polynomials.  Damping is applied as the exact
factor ``exp(-eps0 dt)``.  Source terms use the exact cumulative integral of
``g`` along each characteristic segment with ``T_e(x_E)`` frozen at its
midpoint predictor, and ``T_e`` advances with the exponential midpoint rule.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

from .params import PhysicalParams, local_coeffs


class PdeError(RuntimeError):
    pass


class CflError(PdeError):
    pass


class TrivialDynamics(ValueError):
    """Raised for ``r_E = 0``, where homogeneous solutions vanish after one round trip."""


# -- wind forcing ----------------------------------------------------------------


@dataclass(frozen=True)
class WindForcing:
    """Zonal wind pattern ``g(x)``.

    ``delta_approx`` is a Gaussian of width ``sigma_w`` and total mass ``A0``
    centred at ``x_w``; ``tabulated`` linearly interpolates ``table = (x, g)``.
    """

    kind: str = "delta_approx"
    x_w: float = 0.6
    A0: float = 0.2
    sigma_w: float = 0.01
    table: tuple | None = None

    def __post_init__(self):
        if self.kind == "delta_approx":
            if not self.sigma_w > 0:
                raise ValueError("sigma_w must be positive")
        elif self.kind == "tabulated":
            if self.table is None:
                raise ValueError("tabulated forcing needs a table")
            x, g = (np.asarray(a, dtype=float) for a in self.table)
            if x.ndim != 1 or x.shape != g.shape or x.size < 2 or np.any(np.diff(x) <= 0):
                raise ValueError("table must be (x, g) with strictly increasing x")
            if not np.all(np.isfinite(g)):
                raise ValueError("tabulated g must be finite")
            cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(x) * (g[1:] + g[:-1]))])
            object.__setattr__(self, "table", (x, g))
            object.__setattr__(self, "_cum", cum)
        else:
            raise ValueError(f"unknown forcing kind {self.kind!r}")

    @classmethod
    def from_params(cls, p: PhysicalParams, sigma_w: float = 0.01) -> "WindForcing":
        return cls("delta_approx", x_w=p.x_w, A0=p.A0, sigma_w=sigma_w)

    @classmethod
    def from_function(cls, fn: Callable, n: int = 2001) -> "WindForcing":
        x = np.linspace(0.0, 1.0, n)
        return cls("tabulated", table=(x, np.asarray(fn(x), dtype=float)))

    def g(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "delta_approx":
            z = (x - self.x_w) / self.sigma_w
            return self.A0 * np.exp(-0.5 * z * z) / (self.sigma_w * math.sqrt(2.0 * math.pi))
        tx, tg = self.table
        return np.interp(x, tx, tg, left=0.0, right=0.0)

    def G(self, x):
        """Exact antiderivative of :meth:`g` with ``G(-inf) = 0``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "delta_approx":
            return 0.5 * self.A0 * (1.0 + erf((x - self.x_w) / (self.sigma_w * math.sqrt(2.0))))
        tx, tg = self.table
        xc = np.clip(x, tx[0], tx[-1])
        i = np.clip(np.searchsorted(tx, xc, side="right") - 1, 0, tx.size - 2)
        h = xc - tx[i]
        slope = (tg[i + 1] - tg[i]) / (tx[i + 1] - tx[i])
        return self._cum[i] + h * tg[i] + 0.5 * slope * h * h

    @property
    def g_max(self) -> float:
        if self.kind == "delta_approx":
            return self.A0 / (self.sigma_w * math.sqrt(2.0 * math.pi))
        return float(np.max(np.abs(self.table[1])))

    def integral(self, a: float = 0.0, b: float = 1.0) -> float:
        return float(self.G(b) - self.G(a))


# -- state and eigenmodes --------------------------------------------------------


@dataclass
class PdeState:
    x_grid: np.ndarray
    h_c: np.ndarray
    h_n: np.ndarray
    T_e: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        n = len(self.x_grid)
        for name in ("h_c", "h_n", "T_e"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have {n} entries")
            setattr(self, name, arr)
        self.x_grid = np.asarray(self.x_grid, dtype=float)

    @property
    def N(self) -> int:
        return len(self.x_grid) - 1

    def copy(self) -> "PdeState":
        return PdeState(self.x_grid.copy(), self.h_c.copy(), self.h_n.copy(), self.T_e.copy(), self.t)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.h_c)) and np.all(np.isfinite(self.h_n)) and np.all(np.isfinite(self.T_e)))


def grid(N: int) -> np.ndarray:
    if N < 4:
        raise ValueError("need at least 4 intervals")
    return np.linspace(0.0, 1.0, N + 1)


def zero_state(N: int) -> PdeState:
    x = grid(N)
    z = np.zeros_like(x)
    return PdeState(x, z, z, z, 0.0)


def default_state(N: int, p: PhysicalParams, amplitude: float = 0.1, width: float = 0.05) -> PdeState:
    """Zero thermocline and a small SST bump centred at ``x_E``."""
    s = zero_state(N)
    s.T_e = amplitude * np.exp(-(((s.x_grid - p.x_E) / width) ** 2))
    return s


def kelvin_pulse_state(N: int, amplitude: float = 0.1, center: float = 0.75, half_width: float = 0.1) -> PdeState:
    """Zero SST and a smooth ``sin^4`` Kelvin pulse on ``h_c``.

    The pulse lies west of the probe, so ``T_e(x_E)`` starts from zero with
    vanishing derivatives and the pulse has left the basin after one
    Kelvin crossing.
    """
    s = zero_state(N)
    z = (s.x_grid - center) / half_width
    s.h_c = np.where(np.abs(z) < 1.0, amplitude * np.cos(0.5 * np.pi * z) ** 4, 0.0)
    return s


@dataclass(frozen=True)
class EigenMode:
    k: int
    sigma_k: complex
    H_n: complex
    H_c: complex
    y_n: float
    eps0: float

    def fields(self, x, t: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        """Complex ``(h_c, h_n)`` of the mode at time ``t``."""
        x = np.asarray(x, dtype=float)
        s = self.sigma_k + self.eps0
        g = np.exp(self.sigma_k * t)
        return (self.H_c * g * np.exp(-s * x), self.H_n * g * np.exp(s * self.y_n**2 * x))


def eigenmode(k: int, p: PhysicalParams, H_n: complex = 1.0) -> EigenMode:
    """Homogeneous mode ``k`` of the thermocline equations with rate ``sigma_k``."""
    q = 1.0 + p.yn2
    if p.r_E == 0:
        raise TrivialDynamics("r_E = 0: homogeneous solutions vanish after one round trip, no eigenmodes")
    if q == p.r_E:
        raise ValueError("(1 + y_n^2) = r_E makes the mode relation singular")
    arg = (p.r_E * p.r_W * q - p.r_E) / (q - p.r_E)
    if arg == 0:
        raise TrivialDynamics("r_W (1 + y_n^2) = 1: zero reflection at the western wall")
    sigma = -p.eps0 + (cmath.log(arg) + 2j * math.pi * k) / q
    H_c = (p.r_W - 1.0 / q) * H_n
    return EigenMode(k, complex(sigma), complex(H_n), complex(H_c), p.y_n, p.eps0)


def eigenmode_state(mode: EigenMode, N: int) -> PdeState:
    s = zero_state(N)
    hc, hn = mode.fields(s.x_grid)
    s.h_c, s.h_n = hc.real.copy(), hn.real.copy()
    return s


# -- solver --------------------------------------------------------------------


def _etd(c: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """``exp(-c h)`` and ``(1 - exp(-c h)) / c``, the latter stable as ``c -> 0``."""
    z = c * h
    return np.exp(-z), h * np.where(np.abs(z) > 1e-8, -np.expm1(-z) / np.where(z == 0, 1.0, z), 1.0 - 0.5 * z)


def _lagrange_weights(nodes: np.ndarray, x: float) -> np.ndarray:
    w = np.ones(len(nodes))
    for i, xi in enumerate(nodes):
        for j, xj in enumerate(nodes):
            if i != j:
                w[i] *= (x - xj) / (xi - xj)
    return w


@dataclass
class PdeRun:
    times: np.ndarray
    probes: dict[float, np.ndarray]
    final: PdeState
    snapshots: list[PdeState] = field(default_factory=list)

    def probe(self, x: float) -> tuple[np.ndarray, np.ndarray]:
        return self.times, self.probes[x]


class PdeSolver:
    """Stepper for the linear or nonlinear two-strip model on ``N`` intervals.

    ``drive`` replaces the coupling value ``T_e(x_E, t)`` by a prescribed
    signal, which turns the thermocline equations into a linear response
    problem (used for kernel checks).
    """

    def __init__(self, p: PhysicalParams, forcing: WindForcing | None = None, N: int = 1024,
                 nonlinear: bool = True, drive: Callable[[float], float] | None = None):
        self.p = p
        self.forcing = WindForcing.from_params(p) if forcing is None else forcing
        self.N = N
        self.x = grid(N)
        self.dx = 1.0 / N
        self.dt = self.dx
        self.nonlinear = nonlinear
        self.drive = drive
        q = 1.0 + p.yn2
        self.q = q
        self.a_W = p.r_W - 1.0 / q
        self.b_E = p.r_E / (1.0 - p.r_E / q)
        self.beta = p.beta if nonlinear else 0.0
        dt, x, G = self.dt, self.x, self.forcing.G
        self.decay = math.exp(-p.eps0 * dt)
        half = math.exp(-0.5 * p.eps0 * dt)
        ac = p.mu * (1.0 - p.theta / q)
        self.src_c = np.zeros(N + 1)
        self.src_c[1:] = ac * half * (G(x[1:]) - G(x[:-1]))
        shift = dt / p.yn2
        self.src_n = np.zeros(N + 1)
        self.src_n[:-1] = -p.mu * p.theta * half * (G(x[:-1] + shift) - G(x[:-1]))
        # cubic Lagrange stencils for the Rossby foot x_j + shift
        self.stencil = np.zeros((N, 4), dtype=int)
        self.weights = np.zeros((N, 4))
        for j in range(N):
            start = min(max(j - 1, 0), N - 3)
            idx = np.arange(start, start + 4)
            self.stencil[j] = idx
            self.weights[j] = _lagrange_weights(x[idx], x[j] + shift)
        self.w_int = self.weights[1]  # identical for all centred nodes
        cT, ch = local_coeffs(p, x)
        self.cT = np.asarray(cT, dtype=float)
        self.ch = np.asarray(ch, dtype=float)
        self.iE, self.fE = self._locate(p.x_E)
        self.e_half, self.phi_half = _etd(self.cT, 0.5 * dt)
        self.e_full, self.phi_full = _etd(self.cT, dt)

    def _locate(self, xp: float) -> tuple[int, float]:
        if not 0.0 <= xp <= 1.0:
            raise ValueError(f"probe position {xp} outside [0, 1]")
        pos = xp * self.N
        i = min(int(math.floor(pos + 1e-9)), self.N - 1)
        frac = pos - i
        if abs(frac) < 1e-9:
            frac = 0.0
        return i, frac

    def value_at(self, field_, xp: float) -> float:
        i, f = self._locate(xp)
        return float(field_[i] if f == 0.0 else (1.0 - f) * field_[i] + f * field_[i + 1])

    def _TE(self, T):
        i, f = self.iE, self.fE
        return T[i] if f == 0.0 else (1.0 - f) * T[i] + f * T[i + 1]

    def rhs_T(self, T, hc, hn):
        return -self.cT * T + self.thermocline_term(T, hc, hn)

    def thermocline_term(self, T, hc, hn):
        ch = self.ch if self.beta == 0.0 else self.ch * (1.0 - self.beta * T * T)
        return ch * (hc + hn / self.q)

    def advect(self, hc, hn, Tstar: float = 0.0):
        """Advance the thermocline fields by one step with source amplitude ``Tstar``."""
        N = self.N
        hc_new = np.empty_like(hc)
        hn_new = np.empty_like(hn)
        hc_new[1:] = self.decay * hc[:-1] + self.src_c[1:] * Tstar
        w = self.w_int
        interp = np.empty(N)
        interp[1:N - 2] = w[0] * hn[0:N - 3] + w[1] * hn[1:N - 2] + w[2] * hn[2:N - 1] + w[3] * hn[3:N]
        for j in (0, N - 2, N - 1):
            interp[j] = self.weights[j] @ hn[self.stencil[j]]
        hn_new[:-1] = self.decay * interp + self.src_n[:-1] * Tstar
        hn_new[N] = self.b_E * hc_new[N]
        hc_new[0] = self.a_W * hn_new[0]
        return hc_new, hn_new

    def step(self, state: PdeState, dt: float | None = None) -> PdeState:
        if state.N != self.N:
            raise ValueError("state grid does not match the solver")
        if dt is not None and abs(dt - self.dt) > 1e-12 * self.dt:
            raise CflError(f"dt={dt:g} must equal dx={self.dx:g} (Kelvin CFL number 1)")
        dt = self.dt
        # exponential midpoint rule: the damping -c_T T is integrated exactly
        T0 = state.T_e
        T_half = self.e_half * T0 + self.phi_half * self.thermocline_term(T0, state.h_c, state.h_n)
        Tstar = self.drive(state.t + 0.5 * dt) if self.drive is not None else self._TE(T_half)
        hc, hn = self.advect(state.h_c, state.h_n, Tstar)
        N_mid = self.thermocline_term(T_half, 0.5 * (state.h_c + hc), 0.5 * (state.h_n + hn))
        T_new = self.e_full * T0 + self.phi_full * N_mid
        new = PdeState.__new__(PdeState)
        new.x_grid, new.h_c, new.h_n, new.T_e, new.t = state.x_grid, hc, hn, T_new, state.t + dt
        if not (np.all(np.isfinite(T_new)) and np.all(np.isfinite(hc)) and np.all(np.isfinite(hn))):
            raise PdeError(
                f"non-finite field at t={new.t:.6g} (N={self.N}); last max|T_e|={np.max(np.abs(state.T_e)):.3g}, "
                f"max|h_c|={np.max(np.abs(state.h_c)):.3g}, max|h_n|={np.max(np.abs(state.h_n)):.3g}"
            )
        return new

    def n_steps(self, t_end: float) -> int:
        n = int(round(t_end / self.dt))
        if n < 0:
            raise ValueError("t_end must be non-negative")
        return n

    def simulate(self, t_end: float, state: PdeState | None = None, probes: Sequence[float] | None = None,
                 snapshot_every: int | None = None) -> PdeRun:
        """Step to ``t_end`` recording probes of ``T_e`` after every step."""
        state = default_state(self.N, self.p) if state is None else state.copy()
        probes = (self.p.x_E,) if probes is None else tuple(probes)
        locs = [self._locate(xp) for xp in probes]
        n = self.n_steps(t_end)
        rec = np.empty((len(probes), n + 1))
        times = state.t + self.dt * np.arange(n + 1)
        snaps = [state.copy()] if snapshot_every else []

        def sample(k, T):
            for m, (i, f) in enumerate(locs):
                rec[m, k] = T[i] if f == 0.0 else (1.0 - f) * T[i] + f * T[i + 1]

        sample(0, state.T_e)
        for k in range(1, n + 1):
            state = self.step(state)
            sample(k, state.T_e)
            if snapshot_every and k % snapshot_every == 0:
                snaps.append(state.copy())
        return PdeRun(times, {xp: rec[m] for m, xp in enumerate(probes)}, state, snaps)


def step(state: PdeState, forcing: WindForcing, p: PhysicalParams, dt: float, nonlinear: bool = True) -> PdeState:
    """One step of the two-strip model; builds a solver for the state's grid."""
    return PdeSolver(p, forcing, state.N, nonlinear).step(state, dt)


def probe(states: Sequence[PdeState], x: float):
    """``(t, T_e(x, t))`` from a sequence of states, linearly interpolated in ``x``."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"probe position {x} outside [0, 1]")
    t = np.array([s.t for s in states])
    vals = np.array([np.interp(x, s.x_grid, s.T_e) for s in states])
    return t, vals


def boundary_residuals(state: PdeState, p: PhysicalParams) -> tuple[float, float]:
    q = 1.0 + p.yn2
    west = state.h_c[0] - (p.r_W - 1.0 / q) * state.h_n[0]
    east = p.r_E * state.h_c[-1] - (1.0 - p.r_E / q) * state.h_n[-1]
    return float(abs(west)), float(abs(east))
