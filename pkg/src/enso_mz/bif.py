"""Equilibria, characteristic roots, Hopf curves and period sweeps for the
scaled delay models ``SS``, ``VoC`` and ``MZ``.

The linearisation about an equilibrium gives the scalar characteristic
equation ``lambda = a + b exp(-lambda delta)``.
"""
from __future__ import annotations

import cmath
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

from . import dde
from .params import PhysicalParams, ScalingError, scale, seconds_to_years

log = logging.getLogger(__name__)

#: Standard sweep ranges over theta, A0 and y_n: (start, stop, step).
TABLE1_RANGES = {
    "theta": (1.0, 4.0, 0.2),
    "A0": (0.1, 0.6, 0.05),
    "y_n": (1.4, 3.4, 0.2),
}

PROBE_HISTORY = 1.5


class BifurcationError(RuntimeError):
    pass


# -- equilibria ----------------------------------------------------------------


@dataclass(frozen=True)
class Equilibria:
    values: tuple[float, ...]
    alpha: float
    gamma: float
    pitchfork: bool = False
    singular: bool = False


def equilibria(alpha: float, gamma: float) -> Equilibria:
    """Equilibria of the scaled VoC/MZ models (``gamma = 0`` gives SS)."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    pitchfork = alpha == 1.0
    singular = gamma > 0 and alpha * gamma == 1.0
    if pitchfork or singular:
        return Equilibria((0.0,), alpha, gamma, pitchfork=pitchfork, singular=singular)
    rad = (1.0 - alpha) / (1.0 - alpha * gamma)
    if rad > 0:
        r = math.sqrt(rad)
        return Equilibria((-r, 0.0, r), alpha, gamma)
    return Equilibria((0.0,), alpha, gamma)


# -- characteristic equation -----------------------------------------------------


@dataclass(frozen=True)
class CharCoeffs:
    """Coefficients of ``lambda = a + b exp(-lambda delta)``."""

    a: float
    b: float
    delta: float

    def residual(self, lam: complex) -> complex:
        return lam - self.a - self.b * cmath.exp(-lam * self.delta)


def char_coeffs(kind: str, alpha: float, gamma: float, delta: float, T0: float = 0.0) -> CharCoeffs:
    """Linearisation of a scaled model about the equilibrium ``T0``."""
    T2 = T0 * T0
    if kind == "SS":
        return CharCoeffs(1.0 - 3.0 * T2, -alpha, delta)
    if kind == "VoC":
        return CharCoeffs(1.0 - 3.0 * T2 + 2.0 * alpha * gamma * T2, -alpha * (1.0 - gamma * T2), delta)
    if kind == "MZ":
        return CharCoeffs(1.0 - 3.0 * T2, -alpha * (1.0 - 3.0 * gamma * T2), delta)
    raise ValueError(f"unknown scaled model kind {kind!r}")


def _newton(c: CharCoeffs, lam: complex, tol: float = 1e-14, maxit: int = 60) -> complex | None:
    for _ in range(maxit):
        try:
            e = cmath.exp(-lam * c.delta)
        except OverflowError:
            return None
        g = lam - c.a - c.b * e
        dg = 1.0 + c.b * c.delta * e
        if dg == 0:
            return None
        step = g / dg
        lam -= step
        if not (math.isfinite(lam.real) and math.isfinite(lam.imag)):
            return None
        if abs(step) <= tol * max(1.0, abs(lam)):
            break
    if abs(c.residual(lam)) > 1e-10 * max(1.0, abs(lam)):
        return None
    return lam


def rightmost_root(c: CharCoeffs, n_re: int = 12, n_im: int = 24) -> complex:
    """Characteristic root with the largest real part.

    Newton iteration from a deterministic grid of seeds covering
    ``Re in [a - |b| - 1, a + |b| + 1]`` and ``Im in [0, 4 pi / delta]``.
    Roots come in conjugate pairs, so only the upper half plane is searched.
    """
    if c.delta < 0:
        raise ValueError("delta must be non-negative")
    if c.b == 0:
        return complex(c.a, 0.0)
    if c.delta == 0:
        return complex(c.a + c.b, 0.0)
    re = np.linspace(c.a - abs(c.b) - 1.0, c.a + abs(c.b) + 1.0, n_re)
    im = np.linspace(0.0, 4.0 * math.pi / max(c.delta, 1e-6), n_im)
    best = None
    for x, y in itertools.product(re, im):
        lam = _newton(c, complex(x, y))
        if lam is None:
            continue
        lam = complex(lam.real, abs(lam.imag))
        if best is None or lam.real > best.real + 1e-12 or (abs(lam.real - best.real) <= 1e-12 and lam.imag < best.imag):
            best = lam
    if best is None:
        raise BifurcationError(f"no characteristic root converged for {c}")
    return best


def is_stable(c: CharCoeffs) -> bool:
    return rightmost_root(c).real < 0


# -- Hopf curves -----------------------------------------------------------------


@dataclass(frozen=True)
class HopfPoint:
    alpha: float
    delta: float
    omega: float


@dataclass
class HopfCurve:
    branch: str  # "trivial" or "nontrivial"
    kind: str
    gamma: float
    points: list[HopfPoint] = field(default_factory=list)

    def as_array(self) -> np.ndarray:
        return np.array([(p.alpha, p.delta, p.omega) for p in self.points]).reshape(-1, 3)


def _nontrivial_ab(kind: str, alpha: float, gamma: float) -> tuple[float, float]:
    T2 = (1.0 - alpha) / (1.0 - alpha * gamma)
    c = char_coeffs(kind, alpha, gamma, 1.0, math.sqrt(T2))
    return c.a, c.b


def hopf_curve(gamma: float, branch: str = "trivial", omega_range: tuple[float, float] = (0.05, 3.0),
               n_points: int = 100, kind: str = "VoC", n_alpha: int = 400) -> HopfCurve:
    """Trace the Hopf locus ``lambda = i omega`` in the ``(alpha, delta)`` plane.

    Trivial branch (``T = 0``, identical for all kinds): closed form
    ``alpha = sqrt(1 + omega^2)``, ``delta = arccos(1/alpha) / omega``.
    Nontrivial branch (``T = T0+-``, ``alpha < 1``): for each ``omega`` the
    modulus condition ``b^2 = a^2 + omega^2`` is solved for ``alpha`` by
    bracketing, then ``delta`` follows from the phase condition.
    """
    lo, hi = omega_range
    if not 0 < lo < hi:
        raise ValueError("omega_range must be positive and increasing")
    omegas = np.linspace(lo, hi, n_points)
    curve = HopfCurve(branch=branch, kind=kind, gamma=gamma)
    if branch == "trivial":
        for w in omegas:
            a = math.sqrt(1.0 + w * w)
            curve.points.append(HopfPoint(a, math.acos(1.0 / a) / w, float(w)))
        return curve
    if branch != "nontrivial":
        raise ValueError("branch must be 'trivial' or 'nontrivial'")

    alphas = np.linspace(1e-6, 1.0 - 1e-9, n_alpha)

    def modulus(al: float, w: float) -> float:
        a, b = _nontrivial_ab(kind, al, gamma)
        return b * b - a * a - w * w

    for w in omegas:
        vals = [modulus(al, w) for al in alphas]
        found = False
        for k in range(len(alphas) - 1):
            if vals[k] == 0 or vals[k] * vals[k + 1] < 0:
                al = brentq(modulus, alphas[k], alphas[k + 1], args=(w,), xtol=1e-15, rtol=1e-15)
                a, b = _nontrivial_ab(kind, al, gamma)
                if b == 0:
                    continue
                phase = math.atan2(-w / b, -a / b) % (2.0 * math.pi)
                if phase == 0:
                    continue
                curve.points.append(HopfPoint(al, phase / w, float(w)))
                found = True
        if not found:
            log.info("no Hopf bracket on the nontrivial branch at omega=%.4g", w)
    curve.points.sort(key=lambda p: p.alpha)
    return curve


def hopf_residual(point: HopfPoint, kind: str, gamma: float, branch: str) -> float:
    T0 = 0.0
    if branch == "nontrivial":
        T0 = math.sqrt((1.0 - point.alpha) / (1.0 - point.alpha * gamma))
    c = char_coeffs(kind, point.alpha, gamma, point.delta, T0)
    return abs(c.residual(1j * point.omega))


# -- oscillation boundary --------------------------------------------------------


def _classify(kind: str, alpha, gamma: float, delta, history: float, run_delays: float,
              steps_per_delay: int) -> np.ndarray:
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    g = 0.0 if kind == "SS" else gamma
    traj = dde.integrate_scaled_batch(kind, alpha, g, delta, history=history, run_delays=run_delays,
                                      steps_per_delay=steps_per_delay)
    return np.array([e.oscillating for e in dde.batch_periods(traj, delta)])


@dataclass
class BoundaryCurve:
    kind: str
    gamma: float
    alpha: np.ndarray
    delta: np.ndarray  # nan where no boundary was bracketed
    flagged: np.ndarray


def oscillation_boundary(kind: str, gamma: float, alphas: Sequence[float], delta_bracket=(0.5, 12.0),
                         tol: float = 1e-2, history: float = PROBE_HISTORY, run_delays: float = 60.0,
                         steps_per_delay: int = 100, max_widen: int = 3) -> BoundaryCurve:
    """Smallest delay with sustained oscillation, for each ``alpha < 1``.

    Simulation bisection on the oscillating/equilibrium outcome, starting from
    a large constant history so that in the multistable region the run lands
    on the large-amplitude periodic orbit.  All alphas are bisected together
    as one batch.
    """
    al = np.asarray(alphas, dtype=float)
    if np.any((al <= 0) | (al >= 1)):
        raise ValueError("alphas must lie in (0, 1)")
    lo = np.full(al.shape, float(delta_bracket[0]))
    hi = np.full(al.shape, float(delta_bracket[1]))
    flagged = np.zeros(al.shape, dtype=bool)

    def osc(d, mask=None):
        return _classify(kind, al, gamma, d, history, run_delays, steps_per_delay)

    for _ in range(max_widen + 1):
        o_lo, o_hi = osc(lo), osc(hi)
        bad_hi = ~o_hi
        bad_lo = o_lo
        if not (bad_hi.any() or bad_lo.any()):
            break
        hi = np.where(bad_hi, hi * 2.0, hi)
        lo = np.where(bad_lo, lo * 0.5, lo)
    valid = ~o_lo & o_hi
    flagged |= ~valid
    while np.any(valid & (hi - lo > tol)):
        mid = 0.5 * (lo + hi)
        o_mid = osc(mid)
        hi = np.where(valid & o_mid, mid, hi)
        lo = np.where(valid & ~o_mid, mid, lo)
    delta = np.where(valid, 0.5 * (lo + hi), np.nan)
    return BoundaryCurve(kind, gamma, al, delta, flagged)


# -- period sweeps ---------------------------------------------------------------


def grid_values(start: float, stop: float, step: float) -> np.ndarray:
    n = int(round((stop - start) / step))
    return np.round(start + step * np.arange(n + 1), 10)


@dataclass
class PeriodGrid:
    axes: dict[str, np.ndarray]
    cells: list[dict]
    kinds: tuple[str, ...]

    def column(self, name: str) -> np.ndarray:
        return np.array([c.get(name, np.nan) if c.get(name) is not None else np.nan for c in self.cells], dtype=float)

    def classification(self, kind: str) -> list[str]:
        return [c[f"class_{kind}"] for c in self.cells]


def _run_groups(kind, alpha, gamma, delta, history, run_delays, dt_max, min_steps, transient_fraction):
    """Integrate cells in groups sharing a steps-per-delay count."""
    n = len(alpha)
    # RK4 stability needs dt * max(1, alpha) bounded
    need = np.ceil(delta * np.maximum(1.0, alpha) / dt_max).astype(int)
    need = np.maximum(need, min_steps)
    # round up to powers-of-two multiples of min_steps to keep the group count small
    groups = min_steps * 2 ** np.ceil(np.log2(need / min_steps)).astype(int)
    out: list = [None] * n
    for spd in np.unique(groups):
        idx = np.flatnonzero(groups == spd)
        g = 0.0 if kind == "SS" else gamma[idx]
        traj = dde.integrate_scaled_batch(kind, alpha[idx], g, delta[idx], history=history,
                                          run_delays=run_delays, steps_per_delay=int(spd))
        ests = dde.batch_periods(traj, delta[idx], transient_fraction)
        amps = np.nanmax(traj.y[len(traj.y) // 2:], axis=0) - np.nanmin(traj.y[len(traj.y) // 2:], axis=0)
        for j, e, a in zip(idx, ests, amps):
            out[j] = (e, 0.5 * float(a))
    return out


def period_sweep(base: PhysicalParams | None = None, ranges: dict[str, tuple[float, float, float]] | None = None,
                 kinds: Iterable[str] = ("SS", "VoC"), history: float = PROBE_HISTORY,
                 run_delays: float = 60.0, dt_max: float = 0.05, min_steps: int = 100,
                 transient_fraction: float = 0.5) -> PeriodGrid:
    """Period of each model over a grid of physical parameters.

    ``ranges`` maps :class:`PhysicalParams` field names to ``(start, stop,
    step)``; the default is the standard grid over ``theta``, ``A0`` and
    ``y_n``.  Each cell is scaled with :func:`params.scale`; cells where the
    scaling is undefined are kept with classification ``"error"``.
    """
    base = PhysicalParams() if base is None else base
    ranges = TABLE1_RANGES if ranges is None else ranges
    kinds = tuple(kinds)
    axes = {k: grid_values(*v) for k, v in ranges.items()}
    names = list(axes)
    cells = []
    ok_idx = []
    al, ga, de = [], [], []
    for combo in itertools.product(*(axes[n] for n in names)):
        cell = dict(zip(names, (float(v) for v in combo)))
        try:
            s = scale(base.replace(**cell))
        except ScalingError as exc:
            cell.update({f"class_{k}": "error" for k in kinds})
            cell["error"] = str(exc)
            cells.append(cell)
            continue
        cell.update(alpha=s.alpha, gamma=s.gamma, delta=s.delta, time_scale_seconds=s.time_scale_seconds)
        ok_idx.append(len(cells))
        cells.append(cell)
        al.append(s.alpha)
        ga.append(s.gamma)
        de.append(s.delta)
    al, ga, de = (np.asarray(v, dtype=float) for v in (al, ga, de))
    for kind in kinds:
        if not ok_idx:
            break
        results = _run_groups(kind, al, ga, de, history, run_delays, dt_max, min_steps, transient_fraction)
        for j, (est, amp) in zip(ok_idx, results):
            cell = cells[j]
            cell[f"class_{kind}"] = est.classification
            cell[f"period_{kind}"] = est.period
            cell[f"amplitude_{kind}"] = amp
            cell[f"period_years_{kind}"] = (
                None if est.period is None else float(seconds_to_years(est.period * cell["time_scale_seconds"]))
            )
    return PeriodGrid(axes=axes, cells=cells, kinds=kinds)


def alpha_delta_sweep(kind: str, gamma: float, alphas: Sequence[float], deltas: Sequence[float],
                      history: float = PROBE_HISTORY, run_delays: float = 60.0, dt_max: float = 0.05,
                      min_steps: int = 100) -> PeriodGrid:
    """Scaled period over an ``(alpha, delta)`` grid at fixed ``gamma``."""
    A, D = np.meshgrid(np.asarray(alphas, float), np.asarray(deltas, float), indexing="ij")
    al, de = A.ravel(), D.ravel()
    ga = np.full(al.shape, float(gamma))
    results = _run_groups(kind, al, ga, de, history, run_delays, dt_max, min_steps, 0.5)
    cells = []
    for a, d, (est, amp) in zip(al, de, results):
        cells.append({"alpha": float(a), "delta": float(d), "gamma": float(gamma),
                      f"class_{kind}": est.classification, f"period_{kind}": est.period,
                      f"amplitude_{kind}": amp})
    return PeriodGrid(axes={"alpha": np.asarray(alphas, float), "delta": np.asarray(deltas, float)},
                      cells=cells, kinds=(kind,))
