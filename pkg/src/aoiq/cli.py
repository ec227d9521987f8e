"""Command-line front end: config-driven runs and figure-reproduction presets.

Commands
--------
solve-tv           Phi(t, x) for a time-varying system (JSON config).
solve-stationary   steady-state CDF (and optionally PDF) at given x values.
simulate           empirical CDF of Delta(t) from seeded replications.
optimize           piecewise-constant rate plan under AoI constraints.
reproduce-figure   canned parameter sets emitting analytic + simulated columns.

Exit codes: 0 success; 2 configuration/IO error; 3 convergence or inversion
failure; 4 infeasible optimization.  Failures print one JSON record to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from .errors import ConfigError, ConvergenceError, InversionError, UnsupportedServiceError
from .model import (Constant, Sinusoid, PiecewiseConstant, Exponential,
                    Deterministic, Uniform, Gamma, Erlang, SystemConfig,
                    config_from_dict, service_from_dict)
from .tv_solver import SolverSettings, solve_idle_prob, aoi_cdf_tv
from .stationary import StationaryModel, aoi_cdf_stationary, aoi_pdf_stationary
from .simulator import SimRequest, empirical_cdf
from .optimizer import (ConstraintSchedule, OptimizerSettings, choose_theta,
                        optimize_rates, benchmark_constant_rate)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_INFEASIBLE = 4

_FIGURE_IDS = ("fig2a", "fig2b", "fig4a", "fig4b", "fig5", "fig6", "fig7", "fig8")


class _Infeasible(Exception):
    def __init__(self, message, violations):
        super().__init__(message)
        self.violations = violations


# ---------------------------------------------------------------------------
# Config plumbing
# ---------------------------------------------------------------------------

def _load_config(path):
    if path is None:
        raise ConfigError("this command needs --config FILE")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return cfg


def _section(cfg, name):
    sec = cfg.get(name)
    if not isinstance(sec, dict):
        raise ConfigError(f"config needs a {name!r} object section")
    return sec


def _require(sec, key, where):
    if key not in sec:
        raise ConfigError(f"config section {where!r} needs key {key!r}")
    return sec[key]


def _floats(value, where):
    try:
        out = [float(v) for v in value]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where} must be a list of numbers") from exc
    if not out:
        raise ConfigError(f"{where} must be nonempty")
    return out


def _solver_settings(args, sec, horizon):
    grid_n = args.grid_n if args.grid_n is not None else sec.get("grid_n")
    etol = args.etol if args.etol is not None else sec.get("etol", 1e-8)
    return SolverSettings(horizon=horizon, grid_n=grid_n, etol=float(etol),
                          ite_max=int(sec.get("ite_max", 200)))


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _cell(value):
    if isinstance(value, float):
        return f"{value:.12e}"
    return str(value)


def _write_output(payload, out_path, fmt):
    if fmt == "json":
        text = json.dumps(payload, indent=2) + "\n"
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(payload["columns"])
        for row in payload["rows"]:
            writer.writerow([_cell(v) for v in row])
        text = buf.getvalue()
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _cmd_solve_tv(args):
    cfg = _load_config(args.config)
    system = config_from_dict(cfg)
    sec = _section(cfg, "solve_tv")
    t = float(_require(sec, "t", "solve_tv"))
    xs = _floats(_require(sec, "xs", "solve_tv"), "solve_tv.xs")
    settings = _solver_settings(args, sec, horizon=t)
    idle = solve_idle_prob(system, settings)
    rows = [(t, x, aoi_cdf_tv(system, t, x, settings=settings, idle=idle))
            for x in xs]
    return {"command": "solve-tv", "columns": ["t", "x", "phi"], "rows": rows}


def _cmd_solve_stationary(args):
    cfg = _load_config(args.config)
    system = config_from_dict(cfg)
    if not isinstance(system.rate, Constant):
        raise ConfigError("solve-stationary needs a constant-rate profile")
    sec = _section(cfg, "solve_stationary")
    xs = _floats(_require(sec, "xs", "solve_stationary"), "solve_stationary.xs")
    want_pdf = bool(sec.get("pdf", False))
    model = StationaryModel(system.rate.a, system.service, system.theta)
    rows = []
    for x in xs:
        row = [x, aoi_cdf_stationary(model, x)]
        if want_pdf:
            row.append(aoi_pdf_stationary(model, x))
        rows.append(tuple(row))
    columns = ["x", "cdf", "pdf"] if want_pdf else ["x", "cdf"]
    return {"command": "solve-stationary", "columns": columns, "rows": rows}


def _cmd_simulate(args):
    cfg = _load_config(args.config)
    system = config_from_dict(cfg)
    sec = _section(cfg, "simulate")
    t = float(_require(sec, "t", "simulate"))
    xs = _floats(_require(sec, "xs", "simulate"), "simulate.xs")
    reps = args.replications if args.replications is not None \
        else int(sec.get("replications", 20000))
    seed = args.seed if args.seed is not None else int(sec.get("seed", 0))
    request = SimRequest(system, t, reps, seed)
    emp = empirical_cdf(request, xs)
    rows = [(x, float(p), reps, seed) for x, p in zip(xs, emp)]
    return {"command": "simulate",
            "columns": ["x", "empirical", "replications", "seed"],
            "rows": rows}


def _plan_rows(label, plan):
    cost = plan.cost
    return [(label, a, b, r, cost) for a, b, r in
            zip(plan.breakpoints[:-1], plan.breakpoints[1:], plan.rates)]


def _cmd_optimize(args):
    cfg = _load_config(args.config)
    service = service_from_dict(_require(cfg, "service", "config"))
    sec = _section(cfg, "optimize")
    schedule = ConstraintSchedule(
        times=tuple(_floats(_require(sec, "times", "optimize"), "optimize.times")),
        thresholds=tuple(_floats(_require(sec, "thresholds", "optimize"),
                                 "optimize.thresholds")),
        probabilities=tuple(_floats(_require(sec, "probabilities", "optimize"),
                                    "optimize.probabilities")))
    kwargs = {}
    if "rate_grid" in sec:
        kwargs["rate_grid"] = tuple(_floats(sec["rate_grid"], "optimize.rate_grid"))
    for key in ("eps", "eta_spacing"):
        if key in sec:
            kwargs[key] = float(sec[key])
    if "ite_max" in sec:
        kwargs["ite_max"] = int(sec["ite_max"])
    solver_kwargs = {}
    if args.grid_n is not None:
        solver_kwargs["grid_n"] = args.grid_n
    if args.etol is not None:
        solver_kwargs["etol"] = args.etol
    if solver_kwargs:
        kwargs["solver"] = SolverSettings(**solver_kwargs)
    settings = OptimizerSettings(**kwargs)
    theta = sec.get("theta")
    if theta is not None:
        theta = float(theta)
    result = optimize_rates(service, schedule, settings, theta=theta)
    if not result.feasible:
        raise _Infeasible(
            f"no feasible plan within {settings.ite_max} rounds",
            [{"eta": eta, "interval": k, "achieved": phi, "required": req}
             for eta, k, phi, req in result.violations])
    rows = _plan_rows("heuristic", result.plan)
    return {"command": "optimize",
            "columns": ["plan", "t_start", "t_end", "rate", "cost"],
            "rows": rows,
            "cost": result.plan.cost,
            "theta": result.theta,
            "rounds": result.rounds,
            "feasible": True}


# ---------------------------------------------------------------------------
# Figure presets (fixed parameter sets, addressable by id)
# ---------------------------------------------------------------------------

def _fig2_services():
    mu = 1.2
    return [("exp", Exponential(mu)),
            ("uni", Uniform(0.0, 2.0 / mu)),
            ("gam1", Gamma(mu, 1.0 / mu ** 2)),
            ("erlang", Erlang(5, 1.0 / (5 * mu)))]


def _series_rows(rate, services, theta, t, xs, args, default_reps, seed0):
    """analytic + simulated CDF rows (series, x, analytic, simulated)."""
    reps = args.replications if args.replications is not None else default_reps
    seed = args.seed if args.seed is not None else seed0
    rows = []
    for name, svc in services:
        system = SystemConfig(rate, svc, theta)
        settings = _solver_settings(args, {}, horizon=t)
        idle = solve_idle_prob(system, settings)
        analytic = [aoi_cdf_tv(system, t, x, settings=settings, idle=idle)
                    for x in xs]
        emp = empirical_cdf(SimRequest(system, t, reps, seed), xs)
        rows.extend((name, float(x), a, float(e))
                    for x, a, e in zip(xs, analytic, emp))
    return rows


def _fig2(args, t):
    rate = Sinusoid(1.7, 1.0, 1.8)
    xs = np.linspace(0.15 * t / 3.0, t, 20)
    rows = _series_rows(rate, _fig2_services(), 0.6, t, xs, args,
                        default_reps=20000, seed0=1207)
    return {"command": "reproduce-figure",
            "figure": "fig2a" if t == 3.0 else "fig2b",
            "columns": ["series", "x", "analytic", "simulated"], "rows": rows}


def _time_sweep_rows(rate, service, theta, xs_series, ts, args,
                     default_reps, seed0, prefix=""):
    """Phi(t, x) over t for each threshold x, with per-point simulation."""
    reps = args.replications if args.replications is not None else default_reps
    seed = args.seed if args.seed is not None else seed0
    system = SystemConfig(rate, service, theta)
    settings = _solver_settings(args, {}, horizon=float(ts[-1]))
    idle = solve_idle_prob(system, settings)
    rows = []
    for x in xs_series:
        name = f"{prefix}x{x:g}"
        for i, t in enumerate(ts):
            analytic = aoi_cdf_tv(system, float(t), float(x),
                                  settings=settings, idle=idle)
            emp = empirical_cdf(SimRequest(system, float(t), reps,
                                           seed + 1000 * i), [x])
            rows.append((name, float(t), analytic, float(emp[0])))
    return rows


def _fig4(args, variant):
    rate = Sinusoid(1.8, 1.0, 0.8) if variant == "a" else Constant(1.8)
    ts = np.arange(0.5, 20.0 + 1e-9, 0.5)
    rows = _time_sweep_rows(rate, Exponential(1.5), 0.2,
                            (0.5, 1.5, 2.5, 3.5), ts, args,
                            default_reps=1000, seed0=408)
    return {"command": "reproduce-figure", "figure": f"fig4{variant}",
            "columns": ["series", "t", "analytic", "simulated"], "rows": rows}


def _fig5(args):
    mu = 1.5
    square = PiecewiseConstant((0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0, 21.0),
                               (1.5, 0.5, 1.5, 0.5, 1.5, 0.5, 1.5))
    rates = [("sin", Sinusoid(1.0, 1.0, 0.8)), ("square", square)]
    services = [("exp", Exponential(mu)), ("uni", Uniform(0.0, 2.0 / mu))]
    ts = np.arange(0.5, 20.0 + 1e-9, 0.5)
    rows = []
    for rname, rate in rates:
        for sname, svc in services:
            for theta in (0.1, 0.9):
                prefix = f"{rname}-{sname}-th{theta:g}-"
                rows.extend(_time_sweep_rows(rate, svc, theta, (0.8, 3.0),
                                             ts, args, default_reps=300,
                                             seed0=505, prefix=prefix))
    return {"command": "reproduce-figure", "figure": "fig5",
            "columns": ["series", "t", "analytic", "simulated"], "rows": rows}


def _fig6(args):
    system = SystemConfig(Constant(2.0), Erlang(5, 1.0 / 6.0), 0.5)
    t = 50.0
    xs = np.arange(0.25, 8.0 + 1e-9, 0.25)
    settings = _solver_settings(args, {}, horizon=t)
    idle = solve_idle_prob(system, settings)
    reps = args.replications if args.replications is not None else 20000
    seed = args.seed if args.seed is not None else 606
    emp = empirical_cdf(SimRequest(system, t, reps, seed), xs)
    rows = [(float(x),
             aoi_cdf_tv(system, t, float(x), settings=settings, idle=idle),
             float(e)) for x, e in zip(xs, emp)]
    return {"command": "reproduce-figure", "figure": "fig6",
            "columns": ["x", "analytic", "simulated"], "rows": rows}


def _fig7(args):
    lam, mu = 0.8, 1.2
    services = [("exp", Exponential(mu)),
                ("det", Deterministic(1.0 / mu)),
                ("uni", Uniform(0.0, 2.0 / mu)),
                ("gam1", Gamma(mu, 1.0 / mu ** 2)),
                ("gam2", Gamma(1.0 / mu, 1.0)),
                ("erlang", Erlang(5, 1.0 / (5 * mu)))]
    xs = np.arange(0.25, 10.0 + 1e-9, 0.25)
    reps = args.replications if args.replications is not None else 5000
    seed = args.seed if args.seed is not None else 707
    t_sim = 50.0
    rows = []
    for theta in (0.0, 0.3):
        for name, svc in services:
            model = StationaryModel(lam, svc, theta)
            emp = empirical_cdf(
                SimRequest(SystemConfig(Constant(lam), svc, theta),
                           t_sim, reps, seed), xs)
            for x, e in zip(xs, emp):
                rows.append((f"th{theta:g}-{name}", float(x),
                             aoi_cdf_stationary(model, float(x)),
                             aoi_pdf_stationary(model, float(x)), float(e)))
    return {"command": "reproduce-figure", "figure": "fig7",
            "columns": ["series", "x", "cdf", "pdf", "simulated"],
            "rows": rows}


def _fig8(args):
    schedule = ConstraintSchedule(
        times=(0.0, 8.0, 16.0, 24.0, 32.0, 40.0, 48.0, 56.0),
        thresholds=(7.5, 6.5, 4.5, 3.0, 4.5, 6.5, 7.5),
        probabilities=(0.9,) * 7)
    service = Uniform(0.0, 4.0 / 3.0)
    settings = OptimizerSettings()
    heuristic = optimize_rates(service, schedule, settings)
    benchmark = benchmark_constant_rate(service, schedule, settings)
    for label, res in (("heuristic", heuristic), ("benchmark", benchmark)):
        if not res.feasible:
            raise _Infeasible(
                f"fig8 {label} plan infeasible",
                [{"eta": eta, "interval": k, "achieved": phi, "required": req}
                 for eta, k, phi, req in res.violations])
    rows = _plan_rows("heuristic", heuristic.plan) \
        + _plan_rows("benchmark", benchmark.plan)
    return {"command": "reproduce-figure", "figure": "fig8",
            "columns": ["plan", "t_start", "t_end", "rate", "cost"],
            "rows": rows,
            "heuristic_cost": heuristic.plan.cost,
            "benchmark_cost": benchmark.plan.cost,
            "theta": heuristic.theta}


def _cmd_reproduce_figure(args):
    fig = args.figure
    if fig is None:
        raise ConfigError("reproduce-figure needs --figure ID")
    if fig == "fig2a":
        return _fig2(args, 3.0)
    if fig == "fig2b":
        return _fig2(args, 10.0)
    if fig == "fig4a":
        return _fig4(args, "a")
    if fig == "fig4b":
        return _fig4(args, "b")
    if fig == "fig5":
        return _fig5(args)
    if fig == "fig6":
        return _fig6(args)
    if fig == "fig7":
        return _fig7(args)
    if fig == "fig8":
        return _fig8(args)
    raise ConfigError(f"unknown figure id {fig!r}")


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="aoiq",
        description="Age-of-Information distribution toolkit "
                    "(time-varying solver, stationary transforms, simulator, "
                    "rate optimizer)")
    sub = parser.add_subparsers(dest="command", required=True)
    handlers = {
        "solve-tv": _cmd_solve_tv,
        "solve-stationary": _cmd_solve_stationary,
        "simulate": _cmd_simulate,
        "optimize": _cmd_optimize,
        "reproduce-figure": _cmd_reproduce_figure,
    }
    for name, handler in handlers.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON experiment file")
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--replications", type=int, default=None)
        p.add_argument("--grid-n", type=int, default=None, dest="grid_n")
        p.add_argument("--etol", type=float, default=None)
        if name == "reproduce-figure":
            p.add_argument("--figure", choices=_FIGURE_IDS, default=None)
        p.set_defaults(handler=handler)
    return parser


def _error_record(exc, **extra):
    record = {"error": type(exc).__name__, "message": str(exc)}
    record.update({k: v for k, v in extra.items() if v is not None})
    sys.stderr.write(json.dumps(record) + "\n")


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        payload = args.handler(args)
        _write_output(payload, args.out, args.format)
    except _Infeasible as exc:
        _error_record(exc, violations=exc.violations)
        return EXIT_INFEASIBLE
    except ConvergenceError as exc:
        _error_record(exc, residual=exc.residual, iterations=exc.iterations)
        return EXIT_NUMERIC
    except InversionError as exc:
        _error_record(exc, diagnostics=exc.diagnostics)
        return EXIT_NUMERIC
    except (ConfigError, UnsupportedServiceError, ValueError, OSError) as exc:
        _error_record(exc)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
