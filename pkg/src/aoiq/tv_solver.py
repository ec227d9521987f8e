"""Finite-time AoI distribution for the time-varying system.

Solves the Volterra equations of the second kind behind Phi(t, x):

* the idle-probability curve M(t, inf) by Picard sweeps over an equally
  spaced grid (composite trapezoid, successive approximation),
* the completion-flux kernel G_z(t, y, 0) and the joint block M(t, x) by
  trapezoid passes along the diagonal r = (t - x) + tau, and
* the fixed-u equation for Phi-hat(u, x) (u = t - x held fixed), again by
  Picard sweeps, returning the terminal node.

Plus the negligible-processing closed forms where service time is ~0.

Picard sweeps amplify before they contract when lambda*(1-theta)*E[S] > 1;
in that case the solver falls back to marching over windows narrow enough
to be locally contractive, then certifies the fixed point with a full-grid
residual check, so the returned curve meets the residual contract either way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._quad import composite_gauss
from .errors import ConfigError, ConvergenceError, UnsupportedServiceError
from .model import GridFunction, SystemConfig, rate_at

__all__ = [
    "SolverSettings", "IdleProbabilityCurve",
    "solve_idle_prob", "kernel_gz", "m_tx", "aoi_cdf_tv",
    "aoi_cdf_negligible", "mean_aoi_negligible",
]

_DIVERGENCE_BLOWUP = 1e8


@dataclass(frozen=True)
class SolverSettings:
    """Grid and iteration control for the Volterra solvers.

    horizon: right end T of the idle-curve grid; None lets aoi_cdf_tv use
        its evaluation time t.
    grid_n: number of steps on [0, T]; None derives n from the step rule
        h <= min(0.01, mean_service / 20).
    """

    horizon: float | None = None
    grid_n: int | None = None
    etol: float = 1e-8
    ite_max: int = 200
    quadrature: str = "trapezoid"

    def __post_init__(self):
        if self.horizon is not None and self.horizon <= 0:
            raise ConfigError(f"horizon must be > 0, got {self.horizon}")
        if self.grid_n is not None and self.grid_n < 2:
            raise ConfigError(f"grid_n must be >= 2, got {self.grid_n}")
        if self.etol <= 0:
            raise ConfigError(f"etol must be > 0, got {self.etol}")
        if self.ite_max < 1:
            raise ConfigError(f"ite_max must be >= 1, got {self.ite_max}")
        if self.quadrature != "trapezoid":
            raise ConfigError(f"unsupported quadrature {self.quadrature!r}")


class IdleProbabilityCurve:
    """M(t, inf) = B(t, 0) on [0, T]: probability the system is empty."""

    def __init__(self, grid, iterations, residual):
        self.grid = grid
        self.iterations = iterations
        self.residual = residual

    def __call__(self, t):
        return self.grid(t)

    @property
    def horizon(self):
        return self.grid.t1


def _default_step(service):
    return min(0.01, service.mean / 20.0)


def _grid_count(settings, service, T):
    if settings is not None and settings.grid_n is not None:
        return settings.grid_n
    step = _default_step(service)
    return max(2, math.ceil(T / step - 1e-12))


def _step_integrals(profile, ts):
    """Exact per-step rate integrals (closed antiderivatives, no nested
    quadrature in the exponent terms)."""
    return np.array([profile.integral(ts[i], ts[i + 1]) for i in range(ts.size - 1)])


def _exp_factors(dLam, weight):
    """q[0]=1, q[k] = exp(-weight * dLambda_k); suffix products of q carry the
    exponential kernel between any two nodes without forming large exponents."""
    q = np.empty(dLam.size + 1)
    q[0] = 1.0
    np.exp(-weight * dLam, out=q[1:])
    return q


def _require_density(service, where):
    if not service.has_density:
        raise UnsupportedServiceError(
            f"{where} needs the service density; {service.kind} has none "
            "(approximate a deterministic time with a narrow uniform band)")
    if not service.bounded_density:
        raise UnsupportedServiceError(
            f"{where} needs a bounded service density; {service.kind} with "
            "shape < 1 is unbounded at 0")


def _window_nodes(lam_max, weight, h, n):
    """Window width keeping the local Picard contraction <= 1/2."""
    if lam_max * weight <= 0:
        return n
    width = 0.5 / (lam_max * weight)
    return max(4, int(width / h))


def _picard(sweep, w0, base0, n, h, etol, ite_max, window_nodes, label):
    """Successive approximation with a causal windowed fallback.

    sweep(w, rhs, i0, i1) writes the fixed-point map of w into rhs[i0:i1].
    Returns (w, sweeps, residual) with sup-norm residual <= etol.
    """
    w = w0.copy()
    w[0] = base0
    rhs = np.empty_like(w)
    rhs[0] = base0
    sweeps = 0
    errs = []
    err = math.inf
    for _ in range(ite_max):
        sweep(w, rhs, 1, n + 1)
        sweeps += 1
        err = float(np.max(np.abs(rhs - w)))
        w[:] = rhs
        if err <= etol:
            return w, sweeps, err
        errs.append(err)
        if not math.isfinite(err) or err > _DIVERGENCE_BLOWUP:
            break
        if len(errs) >= 4 and errs[-1] > errs[-2] > errs[-3] > errs[-4]:
            break

    # Marching fallback: windows are narrow enough to contract locally, and
    # Volterra causality keeps converged prefixes converged.
    if window_nodes >= n and math.isfinite(err):
        raise ConvergenceError(
            f"{label}: no convergence within {ite_max} sweeps (residual {err:.3e})",
            residual=err, iterations=sweeps)
    w = w0.copy()
    rhs[:] = w
    rhs[0] = base0
    w[0] = base0
    for attempt in range(3):
        start = 1
        converged = True
        while start <= n:
            stop = min(n + 1, start + window_nodes)
            for _ in range(ite_max):
                sweep(w, rhs, start, stop)
                sweeps += 1
                werr = float(np.max(np.abs(rhs[start:stop] - w[start:stop])))
                w[start:stop] = rhs[start:stop]
                if werr <= 0.5 * etol:
                    break
            else:
                raise ConvergenceError(
                    f"{label}: window [{start}, {stop}) stuck at residual {werr:.3e}",
                    residual=werr, iterations=sweeps)
            start = stop
        # full-grid residual certificate
        sweep(w, rhs, 1, n + 1)
        sweeps += 1
        err = float(np.max(np.abs(rhs[1:] - w[1:])))
        if err <= etol:
            return w, sweeps, err
    raise ConvergenceError(
        f"{label}: windowed march left residual {err:.3e} > etol {etol:.1e}",
        residual=err, iterations=sweeps)


# ---------------------------------------------------------------------------
# The idle-probability curve M(t, inf)
# ---------------------------------------------------------------------------

def solve_idle_prob(config, settings):
    """Solve the M(t, inf) fixed point on [0, T] to sup-norm residual <= etol.

    The returned curve includes the never-updated term exp(-int_0^t lambda*theta)
    and interpolates linearly between nodes; M(0, inf) = 1 (empty start).
    """
    if settings.horizon is None:
        raise ConfigError("solve_idle_prob needs settings.horizon")
    T = settings.horizon
    n = _grid_count(settings, config.service, T)
    h = T / n
    ts = np.linspace(0.0, T, n + 1)
    lam = np.asarray(rate_at(config.rate, ts), dtype=float)
    dLam = _step_integrals(config.rate, ts)
    theta = config.theta
    q = _exp_factors(dLam, theta)
    Fk = np.asarray(config.service.cdf(ts), dtype=float)

    def sweep(w, rhs, i0, i1):
        _kernels.idle_sweep(lam, Fk, q, theta, h, w, rhs, i0, i1)

    window = _window_nodes(config.rate.max_rate(0.0, T), 1.0 - theta, h, n)
    w0 = np.ones(n + 1)
    w, sweeps, resid = _picard(sweep, w0, 1.0, n, h, settings.etol,
                               settings.ite_max, window, "idle curve")
    grid = GridFunction(0.0, h, np.clip(w, 0.0, 1.0))
    return IdleProbabilityCurve(grid, sweeps, resid)


# ---------------------------------------------------------------------------
# kernel G_z and the joint block M(t, x)
# ---------------------------------------------------------------------------

def _diagonal_arrays(config, idle, u, x, m):
    """Shared grids for the diagonal slice r = u + tau, tau in [0, x]."""
    tau = np.linspace(0.0, x, m + 1)
    h = x / m
    r = u + tau
    lam = np.asarray(rate_at(config.rate, r), dtype=float)
    dLam = _step_integrals(config.rate, r)
    q_theta = _exp_factors(dLam, config.theta)
    q_full = _exp_factors(dLam, 1.0)
    fx = np.asarray(config.service.pdf(tau), dtype=float)
    Fx = np.asarray(config.service.cdf(tau), dtype=float)
    c = lam * (config.theta + (1.0 - config.theta) * np.asarray(idle(r), dtype=float))
    return tau, h, lam, q_theta, q_full, fx, Fx, c


def kernel_gz(config, idle, t, y, grid_n=None):
    """G_z(t, y, 0): completion flux of informative packets with age <= y.

    Trapezoid evaluation of
    int_{t-y}^{t} lambda(r) (theta + (1-theta) M(r, inf)) f(t-r)
        exp(-theta int_r^t lambda) dr.
    """
    if y < 0 or t < y:
        raise ValueError(f"kernel_gz needs t >= y >= 0, got t={t}, y={y}")
    _require_density(config.service, "kernel_gz")
    if y == 0:
        return 0.0
    m = grid_n or max(2, math.ceil(y / _default_step(config.service) - 1e-12))
    _, h, _, q_theta, _, fx, _, c = _diagonal_arrays(config, idle, t - y, y, m)
    out = np.zeros(m + 1)
    _kernels.conv_slice(c, fx, q_theta, h, out, 1, m + 1)
    return max(float(out[m]), 0.0)


def m_tx(config, idle, t, x, grid_n=None):
    """M(t, x): probability the system is idle at t with AoI <= x.

    Piecewise: equals the idle value for 0 <= t < x, else the trapezoid
    evaluation of int_{t-x}^{t} G_z(r, x-t+r, 0) exp(-int_r^t lambda) dr.
    """
    if t < 0 or x < 0:
        raise ValueError(f"m_tx needs t, x >= 0, got t={t}, x={x}")
    if t < x:
        return float(idle(t))
    if x == 0:
        return 0.0
    _require_density(config.service, "m_tx")
    m = grid_n or max(2, math.ceil(x / _default_step(config.service) - 1e-12))
    _, h, _, q_theta, q_full, fx, _, c = _diagonal_arrays(config, idle, t - x, x, m)
    gz = np.zeros(m + 1)
    _kernels.conv_slice(c, fx, q_theta, h, gz, 1, m + 1)
    ones = np.ones(m + 1)
    mx = np.zeros(m + 1)
    _kernels.conv_slice(gz, ones, q_full, h, mx, 1, m + 1)
    return float(min(max(mx[m], 0.0), 1.0))


# ---------------------------------------------------------------------------
# The AoI distribution Phi(t, x)
# ---------------------------------------------------------------------------

def aoi_cdf_tv(config, t, x, settings=None, idle=None):
    """P(Delta(t) <= x) for the time-varying system.

    Returns 1 when x >= t (the AoI cannot exceed the system age under the
    empty start). Otherwise solves the fixed-u Volterra equation on a grid
    over [0, x] and returns the terminal node, clipped into [0, 1].

    A precomputed IdleProbabilityCurve covering [0, t] can be shared across
    (t, x) queries via `idle`.
    """
    if t < 0 or x < 0:
        raise ValueError(f"aoi_cdf_tv needs t, x >= 0, got t={t}, x={x}")
    if x >= t:
        return 1.0
    if x == 0:
        return 0.0
    _require_density(config.service, "aoi_cdf_tv")
    if settings is None:
        settings = SolverSettings()
    if settings.horizon is not None and settings.horizon < t:
        raise ConfigError(
            f"settings.horizon {settings.horizon} is below the evaluation time {t}")
    if idle is None:
        horizon = settings.horizon if settings.horizon is not None else t
        idle_settings = SolverSettings(horizon=horizon, grid_n=settings.grid_n,
                                       etol=settings.etol, ite_max=settings.ite_max)
        idle = solve_idle_prob(config, idle_settings)
    elif idle.horizon < t - 1e-9 * max(1.0, t):
        raise ConfigError(
            f"idle curve horizon {idle.horizon} does not cover t={t}")

    u = t - x
    h_target = idle.grid.h
    m = max(2, math.ceil(x / h_target - 1e-12))
    _, h, lam, q_theta, q_full, fx, Fx, c = _diagonal_arrays(config, idle, u, x, m)

    gz = np.zeros(m + 1)
    _kernels.conv_slice(c, fx, q_theta, h, gz, 1, m + 1)
    ones = np.ones(m + 1)
    mx = np.zeros(m + 1)
    _kernels.conv_slice(gz, ones, q_full, h, mx, 1, m + 1)

    theta = config.theta

    def sweep(w, rhs, i0, i1):
        _kernels.phi_sweep(lam, mx, Fx, q_theta, theta, h, w, rhs, i0, i1)

    window = _window_nodes(config.rate.max_rate(u, t), theta, h, m)
    w0 = np.ones(m + 1)
    w, _, _ = _picard(sweep, w0, float(mx[0]), m, h, settings.etol,
                      settings.ite_max, window, f"Phi(t={t}, x={x})")
    return float(min(max(w[m], 0.0), 1.0))


# ---------------------------------------------------------------------------
# Negligible processing time
# ---------------------------------------------------------------------------

def aoi_cdf_negligible(profile, t, x):
    """P(Delta(t) <= x) when processing is instantaneous:
    1 - exp(-int_{t-x}^{t} lambda) for t > x, else 1."""
    if t < 0 or x < 0:
        raise ValueError(f"aoi_cdf_negligible needs t, x >= 0, got t={t}, x={x}")
    if t <= x:
        return 1.0
    return float(-np.expm1(-profile.integral(t - x, t)))


def mean_aoi_negligible(profile, t):
    """E[Delta(t)] with instantaneous processing:
    int_0^t exp(-int_{t-x}^{t} lambda) dx by composite quadrature."""
    if t < 0:
        raise ValueError(f"mean_aoi_negligible needs t >= 0, got {t}")
    if t == 0:
        return 0.0
    # the integrand kinks where t - x crosses a profile breakpoint
    kinks = [t - b for b in profile.breakpoints_in(0.0, t)]

    def integrand(xs):
        return np.array([math.exp(-profile.integral(t - xi, t)) for xi in np.atleast_1d(xs)])

    return composite_gauss(integrand, 0.0, t, kinks)
