"""Command-line front end: ``enso-mz <command> [options]``.

Every command prints its main artifact to stdout, or with ``--out DIR``
writes it to ``DIR`` together with ``config.json`` (the resolved command
and parameters) and ``manifest.json`` (input hash, versions, wall time).

Exit codes: 0 success, 1 usage, 2 numerical failure, 3 validation failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__, bif, dde, kernel, linmz, pde, pod, validate
from .params import ParamError, PhysicalParams, ScalingError, discrepancy_report, load_params, scale

log = logging.getLogger("enso_mz")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_VALIDATION = 0, 1, 2, 3

MODEL_CHOICES = {"ss": "SS", "voc": "VoC", "mz": "MZ", "linear-two-delay": "LinearTwoDelay",
                 "voc-two-delay": "VoCTwoDelay"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- output helpers --------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else format(v, ".12g")
    return str(v)


def to_csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if not math.isfinite(v) else v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def to_json(doc) -> str:
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


class Output:
    """Collects artifacts; flushes them to stdout or to an output directory."""

    def __init__(self, out_dir: str | None):
        self.dir = Path(out_dir) if out_dir else None
        self.files: dict[str, str] = {}

    def add(self, name: str, text: str) -> None:
        self.files[name] = text

    def flush(self, config: dict, wall: float) -> None:
        if self.dir is None:
            for text in self.files.values():
                sys.stdout.write(text)
            return
        self.dir.mkdir(parents=True, exist_ok=True)
        for name, text in self.files.items():
            (self.dir / name).write_text(text, encoding="utf-8")
        cfg_text = to_json(config)
        (self.dir / "config.json").write_text(cfg_text, encoding="utf-8")
        manifest = {
            "input_sha256": hashlib.sha256(cfg_text.encode()).hexdigest(),
            "artifacts": {n: hashlib.sha256(t.encode()).hexdigest() for n, t in sorted(self.files.items())},
            "params": config.get("params"),
            "versions": {"enso_mz": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
            "wall_time_s": wall,
        }
        (self.dir / "manifest.json").write_text(to_json(manifest), encoding="utf-8")


# -- argument parsing ------------------------------------------------------------


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(items: list[str]) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"override {item!r} must look like key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = _parse_value(v.strip())
    return out


def _common() -> argparse.ArgumentParser:
    c = argparse.ArgumentParser(add_help=False)
    c.add_argument("--params", default="default", help="JSON parameter file or 'default'")
    c.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a parameter (dotted keys such as params.theta allowed); repeatable")
    c.add_argument("--out", default=None, help="output directory (default: print to stdout)")
    c.add_argument("-v", "--verbose", action="store_true")
    return c


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = _Parser(prog="enso-mz", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("scale", parents=[common], help="scaled delay-model parameters (JSON)")

    s = sub.add_parser("linmz-demo", parents=[common], help="reduced vs full linear block systems")
    s.add_argument("--cases", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--dt", type=float, default=1e-3)
    s.add_argument("--t-end", type=float, default=10.0)
    s.add_argument("--resolved", type=int, default=1)
    s.add_argument("--unresolved", type=int, default=2)
    s.add_argument("--tol", type=float, default=1e-6)

    s = sub.add_parser("simulate-pde", parents=[common], help="two-strip PDE run, probe CSV")
    s.add_argument("--N", type=int, default=1000)
    s.add_argument("--t-end", type=float, default=20.0)
    s.add_argument("--sigma-w", type=float, default=0.01)
    s.add_argument("--linear", action="store_true")
    s.add_argument("--initial", choices=("sst_bump", "kelvin_pulse"), default="sst_bump")
    s.add_argument("--probe", type=float, action="append", default=None, help="probe position; repeatable")
    s.add_argument("--every", type=int, default=1, help="write every n-th step")
    s.add_argument("--snapshot-every", type=int, default=None,
                   help="with --out, also dump the fields every n steps")

    s = sub.add_parser("simulate-dde", parents=[common], help="delay-model trajectory CSV")
    s.add_argument("--model", choices=sorted(MODEL_CHOICES), default="voc")
    s.add_argument("--alpha", type=float)
    s.add_argument("--gamma", type=float)
    s.add_argument("--delta", type=float)
    s.add_argument("--history", type=float, default=0.1)
    s.add_argument("--t-end", type=float, default=None)
    s.add_argument("--dt", type=float, default=0.01)
    s.add_argument("--every", type=int, default=1)

    s = sub.add_parser("kernel", parents=[common], help="linear memory kernel CSV")
    s.add_argument("--tau-max", type=float, default=12.0)
    s.add_argument("--n-tau", type=int, default=1201)
    s.add_argument("--sigma-w", type=float, default=0.04)
    s.add_argument("--k-max", type=int, default=None)
    s.add_argument("--x-probe", type=float, default=1.0)
    s.add_argument("--discrete", action="store_true", help="emit point-forcing lags and coefficients (JSON)")
    s.add_argument("--exact-transit", action="store_true")

    s = sub.add_parser("pod-kernel", parents=[common], help="finite-difference POD kernel CSV")
    s.add_argument("--t-end", type=float, default=12.0)
    s.add_argument("--eps", type=float, default=1e-5)
    s.add_argument("--N", type=int, default=1000)
    s.add_argument("--sigma-w", type=float, default=0.04)
    s.add_argument("--T-hat", type=float, default=1.0)
    s.add_argument("--x-probe", type=float, default=None)
    s.add_argument("--every", type=int, default=10)
    s.add_argument("--as-printed", action="store_true",
                   help="evaluate the closed-form T^Q column with tanh^2 instead of tanh")

    s = sub.add_parser("hopf", parents=[common], help="Hopf curve CSV")
    s.add_argument("--gamma", type=float, default=None)
    s.add_argument("--branch", choices=("trivial", "nontrivial"), default="trivial")
    s.add_argument("--model", choices=("ss", "voc", "mz"), default="voc")
    s.add_argument("--omega-min", type=float, default=0.05)
    s.add_argument("--omega-max", type=float, default=3.0)
    s.add_argument("--n", type=int, default=100)

    s = sub.add_parser("boundary", parents=[common], help="oscillation boundary CSV")
    s.add_argument("--model", choices=("ss", "voc", "mz"), default="voc")
    s.add_argument("--gamma", type=float, default=None)
    s.add_argument("--alphas", type=float, nargs=3, default=(0.3, 0.95, 0.05), metavar=("START", "STOP", "STEP"))
    s.add_argument("--tol", type=float, default=1e-2)

    s = sub.add_parser("sweep-period", parents=[common], help="period grid CSV")
    s.add_argument("--table1", action="store_true", help="sweep the standard theta, A0, y_n grid")
    s.add_argument("--range", dest="ranges", action="append", nargs=4, default=None,
                   metavar=("NAME", "START", "STOP", "STEP"))
    s.add_argument("--models", nargs="+", choices=("ss", "voc", "mz"), default=["ss", "voc"])
    s.add_argument("--history", type=float, default=bif.PROBE_HISTORY)
    s.add_argument("--run-delays", type=float, default=60.0)

    s = sub.add_parser("validate", parents=[common], help="PDE vs delay-model reduction check (JSON)")
    s.add_argument("--N", type=int, default=2048)
    s.add_argument("--t-end", type=float, default=20.0)
    s.add_argument("--sigmas", type=float, nargs="+", default=list(validate.SIGMAS))
    s.add_argument("--linear", action="store_true")
    s.add_argument("--initial", choices=("kelvin_pulse", "sst_bump"), default="kelvin_pulse")
    s.add_argument("--dt-dde", type=float, default=0.01)
    return ap


# -- commands --------------------------------------------------------------------


def cmd_scale(a, p: PhysicalParams, out: Output) -> int:
    s = scale(p)
    doc = s.to_dict()
    doc["c_S*"], doc["c_L*"] = s.cS_star, s.cL_star
    doc["reference_check"] = discrepancy_report(p)
    out.add("scale.json", to_json(doc))
    return EXIT_OK


def cmd_linmz(a, p, out: Output) -> int:
    rng = np.random.default_rng(a.seed)
    rows = []
    for case in range(a.cases):
        sys_ = linmz.BlockLinearSystem.random_stable(rng, a.resolved, a.unresolved)
        _, full = linmz.integrate_full(sys_, a.t_end, a.dt)
        red = linmz.reduce_and_integrate(sys_, a.t_end, a.dt)
        rows.append((case, float(np.max(np.abs(full[:, :sys_.m] - red.phi_hat)))))
    worst = max(r[1] for r in rows)
    out.add("linmz.csv", to_csv(["case", "max_abs_error"], rows))
    # three-term decomposition of the first resolved component of case 0
    sys0 = linmz.BlockLinearSystem.random_stable(np.random.default_rng(a.seed), a.resolved, a.unresolved)
    red = linmz.reduce_and_integrate(sys0, a.t_end, a.dt)
    out.add("linmz_decomposition.csv", to_csv(
        ["t", "phi_hat", "markov", "noise", "memory"],
        zip(red.times, red.phi_hat[:, 0], red.markov_part[:, 0], red.noise_part[:, 0], red.memory_part[:, 0])))
    out.add("linmz_summary.json", to_json({"cases": a.cases, "max_abs_error": worst, "tol": a.tol,
                                           "pass": worst < a.tol}))
    return EXIT_OK if worst < a.tol else EXIT_VALIDATION


def cmd_simulate_pde(a, p, out: Output) -> int:
    forcing = pde.WindForcing.from_params(p, a.sigma_w)
    solver = pde.PdeSolver(p, forcing, a.N, nonlinear=not a.linear)
    state = validate.initial_state(a.initial, a.N, p)
    probes = tuple(a.probe) if a.probe else (p.x_E,)
    run = solver.simulate(a.t_end, state, probes, snapshot_every=a.snapshot_every)
    k = slice(None, None, max(1, a.every))
    cols = [run.probes[xp][k] for xp in probes]
    rows = zip(run.times[k], *cols)
    out.add("pde.csv", to_csv(["t"] + [f"T_e(x={_fmt(xp)})" for xp in probes], rows))
    for i, snap in enumerate(run.snapshots):
        out.add(f"fields_{i:04d}.csv", to_csv(["x", "h_c", "h_n", "T_e", "t"],
                                             ((x, hc, hn, T, snap.t) for x, hc, hn, T in
                                              zip(snap.x_grid, snap.h_c, snap.h_n, snap.T_e))))
    return EXIT_OK


def cmd_simulate_dde(a, p, out: Output) -> int:
    kind = MODEL_CHOICES[a.model]
    if kind in dde.SCALED_KINDS:
        given = [a.alpha, a.gamma, a.delta]
        if all(v is None for v in given):
            model = dde.DelayModel.from_params(kind, p)
        elif any(v is None for v in given):
            raise UsageError("give all of --alpha, --gamma, --delta or none of them")
        else:
            model = dde.DelayModel.scaled(kind, a.alpha, a.gamma, a.delta)
    else:
        model = dde.DelayModel.from_params(kind, p)
    traj = dde.integrate(model, a.history, a.t_end, a.dt)
    k = slice(None, None, max(1, a.every))
    out.add("dde.csv", to_csv(["t", "T"], zip(traj.times[k], traj.y[k])))
    est = dde.measure_period(traj)
    out.add("dde_summary.json", to_json({
        "model": kind, "alpha": model.alpha, "gamma": model.gamma, "delta": model.delta,
        "delays": model.delays, "dt": traj.dt, "classification": est.classification,
        "period": est.period, "amplitude": dde.amplitude(traj)}))
    return EXIT_OK


def cmd_kernel(a, p, out: Output) -> int:
    if a.discrete:
        spec = kernel.discrete_delays(p, a.k_max, a.x_probe, a.exact_transit)
        out.add("kernel_discrete.json", to_json({
            "k_max": spec.k_max, "x_probe": a.x_probe, "exact_transit": a.exact_transit,
            "delays": [{"lag": lag, "coefficient": c} for lag, c in spec.delays]}))
        return EXIT_OK
    forcing = pde.WindForcing.from_params(p, a.sigma_w)
    tau = np.linspace(0.0, a.tau_max, a.n_tau)
    K = kernel.kernel_eval(tau, forcing, p, a.k_max, a.x_probe)
    # label each lag with its dominant contribution
    label: dict[float, tuple[float, str, int]] = {}
    for smp in kernel.kernel_samples(tau, forcing, p, a.k_max, a.x_probe):
        if abs(smp.weight) > abs(label.get(smp.lag, (0.0,))[0]):
            label[smp.lag] = (smp.weight, smp.branch, smp.k_reflect)
    rows = []
    for t, k in zip(tau, K):
        _, branch, kr = label.get(float(t), (0.0, None, None))
        rows.append((t, k, branch, kr))
    out.add("kernel.csv", to_csv(["tau", "K", "branch", "k"], rows))
    return EXIT_OK


def cmd_pod_kernel(a, p, out: Output) -> int:
    forcing = pde.WindForcing.from_params(p, a.sigma_w)
    x_probe = p.x_E if a.x_probe is None else a.x_probe
    res = pod.kernel_fd(p, a.t_end, a.eps, forcing, a.N, a.T_hat, x_probe)
    ref = kernel.kernel_eval(res.times, forcing, p, x_probe=x_probe)
    idx = np.arange(0, len(res.times), max(1, a.every))
    header = ["lag", "K_fd", "K_fd_raw", "K_linear_reference"]
    cols = [res.times[idx], res.extrapolated[idx], res.raw[idx], ref[idx]]
    # closed-form SST of the POD run started from the perturbed state
    header.append("TeQ_closed_form_tanh2" if a.as_printed else "TeQ_closed_form")
    cols.append([pod.closed_form_branch(res.initial, x_probe, float(t), p, as_printed=a.as_printed)
                 for t in res.times[idx]])
    out.add("pod_kernel.csv", to_csv(header, zip(*cols)))
    out.add("pod_kernel_summary.json", to_json({
        "epsilon_fd": res.epsilon_fd, "direction_norm": res.direction_norm, "branch_ok": res.branch_ok,
        "messages": res.messages, "x_probe": x_probe, "beta": p.beta}))
    for m in res.messages:
        log.warning(m)
    return EXIT_OK


def _gamma(a, p) -> float:
    return scale(p).gamma if a.gamma is None else a.gamma


def cmd_hopf(a, p, out: Output) -> int:
    kind = MODEL_CHOICES[a.model]
    g = _gamma(a, p)
    curve = bif.hopf_curve(g, a.branch, (a.omega_min, a.omega_max), a.n, kind)
    rows = [(pt.alpha, pt.delta, pt.omega, bif.hopf_residual(pt, kind, g, a.branch)) for pt in curve.points]
    out.add("hopf.csv", to_csv(["alpha", "delta", "omega", "residual"], rows))
    return EXIT_OK


def cmd_boundary(a, p, out: Output) -> int:
    kind = MODEL_CHOICES[a.model]
    alphas = bif.grid_values(*a.alphas)
    alphas = alphas[(alphas > 0) & (alphas < 1)]
    bc = bif.oscillation_boundary(kind, _gamma(a, p), alphas, tol=a.tol)
    out.add("boundary.csv", to_csv(["alpha", "delta", "flagged"], zip(bc.alpha, bc.delta, bc.flagged)))
    return EXIT_OK


def cmd_sweep(a, p, out: Output) -> int:
    if a.table1 and a.ranges:
        raise UsageError("--table1 and --range are exclusive")
    ranges = bif.TABLE1_RANGES
    if a.ranges:
        ranges = {}
        for name, *vals in a.ranges:
            if name not in PhysicalParams().to_dict():
                raise UsageError(f"unknown parameter {name!r} in --range")
            try:
                ranges[name] = tuple(float(v) for v in vals)
            except ValueError:
                raise UsageError(f"--range {name}: START STOP STEP must be numbers") from None
    kinds = tuple(MODEL_CHOICES[m] for m in a.models)
    grid = bif.period_sweep(p, ranges, kinds, history=a.history, run_delays=a.run_delays)
    names = list(grid.axes)
    extra = ["alpha", "gamma", "delta"]
    per_kind = [f"{f}_{k}" for k in kinds for f in ("class", "period", "period_years", "amplitude")]
    header = names + extra + per_kind
    rows = [[c.get(h) for h in header] for c in grid.cells]
    out.add("sweep.csv", to_csv(header, rows))
    summary = {"axes": grid.axes, "models": kinds, "cells": len(grid.cells), "period_units": "years",
               "scaled_period_units": "delay-model time"}
    for k in kinds:
        cls = grid.classification(k)
        years = grid.column(f"period_years_{k}")
        summary[k] = {"counts": {c_: cls.count(c_) for c_ in sorted(set(cls))},
                      "period_years_min": np.nanmin(years) if np.isfinite(years).any() else None,
                      "period_years_max": np.nanmax(years) if np.isfinite(years).any() else None}
    out.add("sweep_summary.json", to_json(summary))
    return EXIT_OK


def cmd_validate(a, p, out: Output) -> int:
    if p.r_E != 0:
        raise UsageError("validate needs r_E = 0 (set --set r_E=0)")
    rep = validate.validate_reduction(p, a.sigmas, a.N, a.t_end, nonlinear=not a.linear,
                                      dt_dde=a.dt_dde, initial=a.initial)
    doc = rep.to_dict()
    out.add("validate.json", to_json(doc))
    return EXIT_OK if rep.monotone else EXIT_VALIDATION


COMMANDS = {
    "scale": cmd_scale, "linmz-demo": cmd_linmz, "simulate-pde": cmd_simulate_pde,
    "simulate-dde": cmd_simulate_dde, "kernel": cmd_kernel, "pod-kernel": cmd_pod_kernel,
    "hopf": cmd_hopf, "boundary": cmd_boundary, "sweep-period": cmd_sweep, "validate": cmd_validate,
}


def run(argv: list[str] | None = None) -> int:
    ap = build_parser()
    a = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        overrides = parse_overrides(a.overrides)
        p = load_params(a.params, overrides)
        out = Output(a.out)
        options = {k: v for k, v in vars(a).items() if k not in ("params", "overrides", "out", "verbose")}
        config = {"command": a.command, "options": options, "params_source": a.params,
                  "overrides": overrides, "params": p.to_dict()}
        code = COMMANDS[a.command](a, p, out)
        out.flush(config, time.perf_counter() - t0)
        return code
    except UsageError as exc:
        print(f"enso-mz: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ScalingError as exc:
        print(f"enso-mz: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ParamError, FileNotFoundError, ValueError) as exc:
        print(f"enso-mz: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except validate.ValidationError as exc:
        print(f"enso-mz: validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (pde.PdeError, dde.DDEError, bif.BifurcationError, FloatingPointError, ArithmeticError) as exc:
        print(f"enso-mz: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
