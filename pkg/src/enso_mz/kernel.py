"""Memory kernel of the linear two-strip reduction.

Forcing launched at ``x`` reaches the probe either directly on the Kelvin
strip (``kelvin_first``) or after a westward Rossby leg and a western
reflection (``rossby_first``); every further round trip of length
``1 + y_n^2`` multiplies the signal by ``A_rE A_rW exp(-eps0 (1 + y_n^2))``.

By default the probe sits at the eastern wall (``x_probe = 1``).  For point
forcing, :func:`discrete_delays` returns the long-delay coefficient ``c_L*``
by default; ``exact_transit=True`` multiplies it by ``y_n^2``, the time a
Rossby wave spends crossing the forcing patch, which is what the PDE
actually produces.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import PhysicalParams, local_coeffs
from .pde import WindForcing

TAIL_TOL = 1e-10
K_HARD_MAX = 10_000


@dataclass(frozen=True)
class KernelSample:
    lag: float
    weight: float
    branch: str  # "kelvin_first" or "rossby_first"
    k_reflect: int


@dataclass(frozen=True)
class DiscreteDelaySpec:
    delays: tuple[tuple[float, float], ...]
    k_max: int

    def lags(self) -> np.ndarray:
        return np.array([d[0] for d in self.delays])

    def coefficients(self) -> np.ndarray:
        return np.array([d[1] for d in self.delays])


def round_trip(p: PhysicalParams) -> float:
    return 1.0 + p.yn2


def ratio(p: PhysicalParams) -> float:
    """Amplitude factor per round trip, ``A_rE A_rW exp(-eps0 (1 + y_n^2))``."""
    return p.A_rE * p.A_rW * math.exp(-p.eps0 * round_trip(p))


def kmax_at(t: float, p: PhysicalParams | None = None) -> int:
    """Number of completed reflections of the Kelvin-first branch by time ``t``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    L = round_trip(PhysicalParams() if p is None else p)
    return -1 if t < 1.0 else int(math.floor((t - 1.0) / L))


def tail_bound(p: PhysicalParams, k_max: int) -> float:
    """Relative size of all terms with ``k > k_max`` (geometric tail)."""
    r = abs(ratio(p))
    if r >= 1:
        return math.inf
    return r ** (k_max + 1) / (1.0 - r)


def default_kmax(p: PhysicalParams, tol: float = TAIL_TOL) -> int:
    """Smallest ``k_max`` whose geometric tail is below ``tol``."""
    r = abs(ratio(p))
    if r == 0:
        return 0
    if r >= 1:
        raise ValueError(f"reflection ratio {r:.3g} >= 1: the reflection sum diverges")
    k = 0
    while tail_bound(p, k) >= tol:
        k += 1
        if k > K_HARD_MAX:
            raise ValueError("tail bound not reached")
    return k


def _branch_coeffs(p: PhysicalParams) -> tuple[float, float]:
    _, chE = local_coeffs(p, p.x_E)
    q = round_trip(p)
    kel = p.mu * (1.0 - p.theta / q) * float(chE)
    ros = -p.mu * (p.theta / p.yn2) * (p.A_rW / q) * float(chE)
    return kel, ros


def kernel_eval(tau, forcing: WindForcing, p: PhysicalParams, k_max: int | None = None,
                x_probe: float = 1.0) -> np.ndarray:
    """Kernel density ``K(tau)`` of the memory term at the probe.

    The thermocline feedback coefficient is ``c_h*(x_E)`` for any probe.  As a
    density in ``tau`` the Rossby branch needs no extra transit factor: the
    ``y_n^2`` picked up along the slow characteristic cancels the Jacobian
    ``dx/dtau = 1/y_n^2``.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tau must be non-negative")
    k_max = default_kmax(p) if k_max is None else k_max
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    kel, ros = _branch_coeffs(p)
    L = round_trip(p)
    r = ratio(p)
    out = np.zeros_like(tau)
    # terms with k L > tau + 1 have not arrived for any lag on the grid
    k_top = min(k_max, int(math.floor((float(np.max(tau, initial=0.0)) + 1.0) / L)))
    for k in range(k_top + 1):
        fac = r**k
        if fac == 0.0:
            break
        xk = x_probe + k * L - tau
        m = (xk >= 0) & (xk <= 1)
        out[m] += fac * kel * np.exp(-p.eps0 * (x_probe - xk[m])) * forcing.g(xk[m])
        xr = (tau - x_probe - k * L) / p.yn2
        m = (xr >= 0) & (xr <= 1)
        out[m] += fac * ros * np.exp(-p.eps0 * (x_probe + p.yn2 * xr[m])) * forcing.g(xr[m])
    return out


def kernel_samples(tau, forcing: WindForcing, p: PhysicalParams, k_max: int | None = None,
                   x_probe: float = 1.0) -> list[KernelSample]:
    """Per-branch kernel values on the lag grid ``tau``, one sample per contributing term."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    k_max = default_kmax(p) if k_max is None else k_max
    kel, ros = _branch_coeffs(p)
    L = round_trip(p)
    r = ratio(p)
    out = []
    for t in tau:
        for k in range(k_max + 1):
            fac = r**k
            xk = x_probe + k * L - t
            if 0 <= xk <= 1:
                w = fac * kel * math.exp(-p.eps0 * (x_probe - xk)) * float(forcing.g(xk))
                out.append(KernelSample(float(t), w, "kelvin_first", k))
            xr = (t - x_probe - k * L) / p.yn2
            if 0 <= xr <= 1:
                w = fac * ros * math.exp(-p.eps0 * (x_probe + p.yn2 * xr)) * float(forcing.g(xr))
                out.append(KernelSample(float(t), w, "rossby_first", k))
    return out


def discrete_delays(p: PhysicalParams, k_max: int | None = None, x_probe: float = 1.0,
                    exact_transit: bool = False) -> DiscreteDelaySpec:
    """Lags and coefficients for point forcing of mass ``A0`` at ``x_w``.

    At the default probe and ``r_E = 0`` this is ``{(1 - x_w, c_S*),
    (1 + y_n^2 x_w, -c_L*)}``.
    """
    k_max = (default_kmax(p) if k_max is None else k_max)
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    if p.A_rE == 0:
        k_max = 0
    kel, ros = _branch_coeffs(p)
    jac = p.yn2 if exact_transit else 1.0
    L = round_trip(p)
    r = ratio(p)
    lag_s = x_probe - p.x_w
    lag_l = x_probe + p.yn2 * p.x_w
    if lag_s < 0:
        raise ValueError("probe lies west of the forcing; no direct Kelvin arrival")
    delays = []
    for k in range(k_max + 1):
        fac = r**k
        delays.append((lag_s + k * L, fac * p.A0 * kel * math.exp(-p.eps0 * lag_s)))
        delays.append((lag_l + k * L, fac * p.A0 * jac * ros * math.exp(-p.eps0 * lag_l)))
    return DiscreteDelaySpec(tuple(delays), k_max)


def memory_term(t: float, T_history, forcing: WindForcing, p: PhysicalParams, k_max: int | None = None,
                x_probe: float = 1.0, n_quad: int = 20001) -> float:
    """``int_0^t K(tau) T(t - tau) dtau`` by the composite trapezoid rule."""
    tau = np.linspace(0.0, t, n_quad)
    K = kernel_eval(tau, forcing, p, k_max, x_probe)
    return float(np.trapezoid(K * T_history(t - tau), tau))
