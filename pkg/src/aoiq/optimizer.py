"""Heuristic rate planning under time-varying AoI constraints.

Given checkpoints t_0 < ... < t_n with a threshold/probability pair
(x_i, p_i) per interval, the planner picks a preemption policy from the
service law, splits every non-final interval into a cruising and a
preparation window, assigns each window the cheapest grid rate whose
*stationary* AoI law meets the window's targets, and then audits the
resulting piecewise-constant profile with the exact finite-time solver.
Audit violations raise the offending interval's internal target by eps and
the loop repeats, up to ite_max rounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .model import Exponential, Deterministic, Uniform, Gamma, PiecewiseConstant, SystemConfig
from .stationary import StationaryModel, InversionSettings, aoi_cdf_stationary
from .tv_solver import SolverSettings, solve_idle_prob, aoi_cdf_tv

__all__ = [
    "ConstraintSchedule", "PiecewiseRatePlan", "OptimizerSettings",
    "OptimizeResult", "choose_theta", "split_windows",
    "stationary_rate_search", "evaluate_plan", "optimize_rates",
    "benchmark_constant_rate",
]


@dataclass(frozen=True)
class ConstraintSchedule:
    """Checkpoints t_0..t_n with one (threshold, probability) requirement
    active on each interval [t_i, t_{i+1})."""

    times: tuple
    thresholds: tuple
    probabilities: tuple

    def __post_init__(self):
        times = tuple(float(v) for v in self.times)
        xs = tuple(float(v) for v in self.thresholds)
        ps = tuple(float(v) for v in self.probabilities)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "thresholds", xs)
        object.__setattr__(self, "probabilities", ps)
        if len(times) < 2:
            raise ConfigError("schedule needs at least two time points")
        if len(xs) != len(times) - 1 or len(ps) != len(xs):
            raise ConfigError(
                f"schedule needs n+1 times, n thresholds, n probabilities; "
                f"got {len(times)}, {len(xs)}, {len(ps)}")
        if any(b <= a for a, b in zip(times[:-1], times[1:])):
            raise ConfigError("schedule times must be strictly increasing")
        if any(x <= 0 for x in xs):
            raise ConfigError("thresholds must be > 0")
        if any(not 0.0 < p < 1.0 for p in ps):
            raise ConfigError("probabilities must lie in (0, 1)")
        for i, x in enumerate(xs):
            if x >= times[i + 1] - times[i]:
                raise ConfigError(
                    f"threshold x_{i}={x} must be smaller than the interval "
                    f"width {times[i + 1] - times[i]} (a preparation window "
                    "must fit)")

    @property
    def n(self):
        return len(self.thresholds)

    def interval_of(self, t):
        """Index i with t_i <= t < t_{i+1} (clamped at the ends)."""
        i = int(np.searchsorted(np.asarray(self.times), t, side="right")) - 1
        return min(max(i, 0), self.n - 1)


@dataclass(frozen=True)
class PiecewiseRatePlan:
    """A piecewise-constant rate answer: rates[k] on [breakpoints[k],
    breakpoints[k+1]); cost is the exact objective integral."""

    breakpoints: tuple
    rates: tuple

    def __post_init__(self):
        bps = tuple(float(v) for v in self.breakpoints)
        rates = tuple(float(v) for v in self.rates)
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "rates", rates)
        if len(bps) != len(rates) + 1:
            raise ConfigError(
                f"plan needs len(breakpoints) == len(rates)+1, got "
                f"{len(bps)} and {len(rates)}")
        if any(b <= a for a, b in zip(bps[:-1], bps[1:])):
            raise ConfigError("plan breakpoints must be strictly increasing")
        if any(r < 0 for r in rates):
            raise ConfigError("plan rates must be >= 0")

    @property
    def cost(self):
        return float(sum(r * (b - a) for r, a, b in
                         zip(self.rates, self.breakpoints[:-1], self.breakpoints[1:])))

    def profile(self):
        """The plan as a RateProfile (rate 0 before the first breakpoint;
        the last rate extends past the final breakpoint, but the cost and
        audit only ever look inside [t_0, t_n])."""
        if self.breakpoints[0] > 0.0:
            return PiecewiseConstant((0.0,) + self.breakpoints,
                                     (0.0,) + self.rates)
        return PiecewiseConstant(self.breakpoints, self.rates)


def _default_rate_grid():
    return tuple(np.geomspace(0.05, 20.0, 60))


@dataclass(frozen=True)
class OptimizerSettings:
    """Knobs for the search loop; the method itself fixes none of
    these, so they are explicit artifact choices."""

    rate_grid: tuple = field(default_factory=_default_rate_grid)
    eps: float = 0.01
    ite_max: int = 30
    eta_spacing: float = 0.5
    solver: SolverSettings = field(default_factory=SolverSettings)
    inversion: InversionSettings = field(default_factory=InversionSettings)

    def __post_init__(self):
        grid = tuple(float(v) for v in self.rate_grid)
        object.__setattr__(self, "rate_grid", grid)
        if not grid:
            raise ConfigError("rate_grid must be nonempty")
        if any(b <= a for a, b in zip(grid[:-1], grid[1:])):
            raise ConfigError("rate_grid must be strictly ascending")
        if grid[0] <= 0:
            raise ConfigError("rate_grid entries must be > 0")
        if self.eps <= 0:
            raise ConfigError(f"eps must be > 0, got {self.eps}")
        if self.ite_max < 1:
            raise ConfigError(f"ite_max must be >= 1, got {self.ite_max}")
        if self.eta_spacing <= 0:
            raise ConfigError(f"eta_spacing must be > 0, got {self.eta_spacing}")


@dataclass(frozen=True)
class OptimizeResult:
    """Outcome of the refinement loop. `plan` is the last profile built;
    when feasible is False, `violations` lists the audit failures
    (eta, interval, achieved, required) of the final round."""

    feasible: bool
    plan: PiecewiseRatePlan
    theta: float
    rounds: int
    targets: tuple
    violations: tuple


def choose_theta(service):
    """Preemption policy from the service law: preempt (1) exactly when a
    fresh draw is never worse than the elapsed one (memoryless or
    decreasing-hazard laws); otherwise finish what was started (0)."""
    if isinstance(service, Exponential):
        return 1.0
    if isinstance(service, (Deterministic, Uniform)):
        return 0.0
    if isinstance(service, Gamma):
        return 0.0 if service.shape >= 1.0 else 1.0
    raise ConfigError(f"no preemption policy for service kind {service.kind!r}")


def split_windows(schedule):
    """Sub-interval grid: every non-final [t_i, t_{i+1}) splits at
    t_{i+1} - x_{i+1} into cruising + preparation; the final interval stays
    whole (nothing upcoming to prepare for). Returns 2n breakpoints."""
    times, xs = schedule.times, schedule.thresholds
    n = schedule.n
    pts = [times[0]]
    for i in range(n - 1):
        split = times[i + 1] - xs[i + 1]
        if split <= times[i]:
            raise ConfigError(
                f"no room for a cruising window on [{times[i]}, {times[i + 1]}): "
                f"next threshold {xs[i + 1]} eats the whole interval")
        pts.extend((split, times[i + 1]))
    pts.append(times[n])
    return tuple(pts)


def _window_targets(schedule, targets):
    """Active (threshold, target) pairs per window, in split_windows order:
    cruising i -> [(x_i, q_i)]; preparation i -> [(x_i, q_i), (x_{i+1}, q_{i+1})];
    final window n-1 -> [(x_{n-1}, q_{n-1})]."""
    xs = schedule.thresholds
    n = schedule.n
    out = []
    for i in range(n - 1):
        out.append([(xs[i], targets[i])])
        out.append([(xs[i], targets[i]), (xs[i + 1], targets[i + 1])])
    out.append([(xs[n - 1], targets[n - 1])])
    return out


def stationary_rate_search(service, theta, active, settings, _cache=None):
    """Smallest rate_grid entry whose stationary AoI law satisfies
    Phi(x) >= p for every (x, p) in `active`; None when no entry does."""
    if not active:
        raise ConfigError("stationary_rate_search needs at least one constraint")
    if any(p >= 1.0 for _, p in active):
        return None
    cache = _cache if _cache is not None else {}
    for lam in settings.rate_grid:
        ok = True
        for x, p in active:
            key = (lam, x)
            phi = cache.get(key)
            if phi is None:
                model = StationaryModel(lam, service, theta)
                phi = aoi_cdf_stationary(model, x, inv=settings.inversion)
                cache[key] = phi
            if phi < p:
                ok = False
                break
        if ok:
            return float(lam)
    return None


def _eta_nodes(schedule, spacing):
    """Audit nodes: spacing-stepped over (t_0, t_n], skipping nodes where
    eta <= x_k (there Phi = 1 from the empty start, nothing to check)."""
    t0, tn = schedule.times[0], schedule.times[-1]
    count = int(round((tn - t0) / spacing))
    etas = t0 + spacing * np.arange(1, count + 1)
    etas = etas[etas <= tn + 1e-12]
    out = []
    for eta in etas:
        k = schedule.interval_of(float(eta))
        if eta > schedule.thresholds[k]:
            out.append((float(eta), k))
    return out


def evaluate_plan(plan, schedule, service, theta, settings):
    """Post-hoc audit with the finite-time solver: returns
    [(eta, k, achieved, required, ok)] for every audit node. Independent of
    the search loop, so a feasibility claim can be re-checked from scratch."""
    config = SystemConfig(plan.profile(), service, theta)
    horizon = schedule.times[-1]
    solver = SolverSettings(horizon=horizon, grid_n=settings.solver.grid_n,
                            etol=settings.solver.etol,
                            ite_max=settings.solver.ite_max,
                            quadrature=settings.solver.quadrature)
    idle = solve_idle_prob(config, solver)
    rows = []
    for eta, k in _eta_nodes(schedule, settings.eta_spacing):
        phi = aoi_cdf_tv(config, eta, schedule.thresholds[k], settings=solver,
                         idle=idle)
        req = schedule.probabilities[k]
        rows.append((eta, k, phi, req, phi >= req))
    return rows


def _refine(schedule, service, theta, settings, build_plan):
    """Shared search-audit-escalate loop. build_plan(targets, cache) returns
    a PiecewiseRatePlan or None (infeasible at the current targets)."""
    targets = list(schedule.probabilities)
    cache = {}
    plan = None
    rounds = 0
    for _ in range(settings.ite_max):
        rounds += 1
        plan = build_plan(targets, cache)
        if plan is None:
            return OptimizeResult(False, None, theta, rounds, tuple(targets), ())
        audit = evaluate_plan(plan, schedule, service, theta, settings)
        bad = [row for row in audit if not row[4]]
        if not bad:
            return OptimizeResult(True, plan, theta, rounds, tuple(targets), ())
        # one bump per violating node, aimed at that node's interval
        for _, k, _, _, _ in bad:
            targets[k] = min(targets[k] + settings.eps, 1.0)
    violations = tuple((eta, k, phi, req) for eta, k, phi, req, ok in audit if not ok)
    return OptimizeResult(False, plan, theta, rounds, tuple(targets), violations)


def optimize_rates(service, schedule, settings=None, theta=None):
    """Full heuristic: policy choice, window split, per-window stationary
    grid search, finite-time audit, eps-escalation. Returns an
    OptimizeResult; result.feasible=False carries the last violations."""
    settings = settings or OptimizerSettings()
    if theta is None:
        theta = choose_theta(service)
    bps = split_windows(schedule)

    def build(targets, cache):
        rates = []
        for active in _window_targets(schedule, targets):
            lam = stationary_rate_search(service, theta, active, settings,
                                         _cache=cache)
            if lam is None:
                return None
            rates.append(lam)
        return PiecewiseRatePlan(bps, tuple(rates))

    return _refine(schedule, service, theta, settings, build)


def benchmark_constant_rate(service, schedule, settings=None, theta=None):
    """Reference point: one rate over the whole horizon meeting every
    requirement in steady state, audited and escalated the same way."""
    settings = settings or OptimizerSettings()
    if theta is None:
        theta = choose_theta(service)
    xs = schedule.thresholds
    span = (schedule.times[0], schedule.times[-1])

    def build(targets, cache):
        active = list(zip(xs, targets))
        lam = stationary_rate_search(service, theta, active, settings,
                                     _cache=cache)
        if lam is None:
            return None
        return PiecewiseRatePlan(span, (lam,))

    return _refine(schedule, service, theta, settings, build)
