"""Domain types: arrival-rate profiles, service-time laws, system config.

Everything here is immutable after construction and safe to share between
threads; evaluators accept scalars or numpy arrays and are vectorized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammainc, gammaln

from .errors import ConfigError, UnsupportedServiceError

__all__ = [
    "RateProfile", "Constant", "Sinusoid", "PiecewiseConstant", "Tabulated",
    "ServiceDistribution", "Exponential", "Deterministic", "Uniform",
    "Gamma", "Erlang",
    "SystemConfig", "GridFunction",
    "rate_at", "rate_integral",
    "service_cdf", "service_pdf", "service_lst", "sample_service", "is_nbu",
    "config_from_dict",
]


# ---------------------------------------------------------------------------
# Arrival-rate profiles
# ---------------------------------------------------------------------------

class RateProfile:
    """Time-varying Poisson arrival rate lambda(t) with an exact cumulative
    integral. Subclasses implement rate/integral/max_rate/breakpoints_in."""

    kind = "abstract"

    def rate(self, t):
        raise NotImplementedError

    def integral(self, t0, t1):
        """Integral of lambda over [t0, t1]. Requires t0 <= t1."""
        raise NotImplementedError

    def max_rate(self, t0, t1):
        """A finite upper bound for lambda on [t0, t1] (used by thinning
        and by the solver's windowed fallback)."""
        raise NotImplementedError

    def breakpoints_in(self, t0, t1):
        """Interior points where the profile is not smooth, for quadrature
        splitting and per-piece thinning bounds."""
        return ()

    def _check_interval(self, t0, t1):
        if t0 > t1:
            raise ValueError(f"rate_integral needs t0 <= t1, got [{t0}, {t1}]")


@dataclass(frozen=True)
class Constant(RateProfile):
    a: float
    kind = "constant"

    def __post_init__(self):
        if self.a < 0:
            raise ConfigError(f"constant rate must be >= 0, got {self.a}")

    def rate(self, t):
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, self.a)
        return out if out.ndim else float(out)

    def integral(self, t0, t1):
        self._check_interval(t0, t1)
        return self.a * (t1 - t0)

    def max_rate(self, t0, t1):
        return self.a


@dataclass(frozen=True)
class Sinusoid(RateProfile):
    """lambda(t) = a + b*sin(omega*t). Requires a >= |b| so the rate stays
    nonnegative."""

    a: float
    b: float
    omega: float
    kind = "sinusoid"

    def __post_init__(self):
        if self.a < abs(self.b):
            raise ConfigError(
                f"sinusoid needs a >= |b| to stay nonnegative, got a={self.a}, b={self.b}")
        if self.omega == 0:
            raise ConfigError("sinusoid omega must be nonzero; use a constant profile")

    def rate(self, t):
        t = np.asarray(t, dtype=float)
        out = self.a + self.b * np.sin(self.omega * t)
        return out if out.ndim else float(out)

    def integral(self, t0, t1):
        self._check_interval(t0, t1)
        # closed antiderivative: a*t - (b/omega) cos(omega t)
        return self.a * (t1 - t0) + (self.b / self.omega) * (
            math.cos(self.omega * t0) - math.cos(self.omega * t1))

    def max_rate(self, t0, t1):
        return self.a + abs(self.b)


@dataclass(frozen=True)
class PiecewiseConstant(RateProfile):
    """rates[i] on [breakpoints[i], breakpoints[i+1]); the last rate extends
    beyond the final breakpoint so closed horizons can be evaluated at their
    right endpoint."""

    breakpoints: tuple
    rates: tuple
    kind = "piecewise_constant"

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        rt = tuple(float(r) for r in self.rates)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "rates", rt)
        if len(bp) != len(rt) + 1:
            raise ConfigError(
                f"piecewise profile needs len(breakpoints) == len(rates)+1, "
                f"got {len(bp)} and {len(rt)}")
        if any(b1 <= b0 for b0, b1 in zip(bp, bp[1:])):
            raise ConfigError("breakpoints must be strictly increasing")
        if any(r < 0 for r in rt):
            raise ConfigError("rates must be >= 0")

    def rate(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.breakpoints[0]):
            raise ValueError(
                f"time before profile start {self.breakpoints[0]}")
        idx = np.clip(np.searchsorted(self.breakpoints, t, side="right") - 1,
                      0, len(self.rates) - 1)
        out = np.asarray(self.rates)[idx]
        return out if out.ndim else float(out)

    def integral(self, t0, t1):
        self._check_interval(t0, t1)
        bp = np.asarray(self.breakpoints)
        rt = np.asarray(self.rates)
        # accumulate rate * overlap for every piece, last piece open-ended
        lo = np.concatenate([bp[:-1], [bp[-1]]])
        hi = np.concatenate([bp[1:], [np.inf]])
        r = np.concatenate([rt, [rt[-1]]])
        overlap = np.clip(np.minimum(hi, t1) - np.maximum(lo, t0), 0.0, None)
        return float(np.sum(r * overlap))

    def max_rate(self, t0, t1):
        bp = self.breakpoints
        rates = self.rates + (self.rates[-1],)
        m = 0.0
        for i, r in enumerate(rates):
            lo = bp[i]
            hi = bp[i + 1] if i + 1 < len(bp) else math.inf
            if lo < t1 and hi > t0:
                m = max(m, r)
        return m

    def breakpoints_in(self, t0, t1):
        return tuple(b for b in self.breakpoints if t0 < b < t1)


@dataclass(frozen=True)
class Tabulated(RateProfile):
    """Linear interpolation through (grid, values); cumulative integral is the
    trapezoid cumsum, which is exact for the interpolant. Evaluation outside
    the grid is an error."""

    grid: tuple
    values: tuple
    kind = "tabulated"
    _cum: tuple = field(default=(), compare=False, repr=False, init=False)

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "grid", tuple(g))
        object.__setattr__(self, "values", tuple(v))
        if g.size != v.size or g.size < 2:
            raise ConfigError("tabulated profile needs matching grid/values, len >= 2")
        if np.any(np.diff(g) <= 0):
            raise ConfigError("tabulated grid must be strictly increasing")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ConfigError("tabulated values must be finite and >= 0")
        cum = np.concatenate([[0.0], np.cumsum(np.diff(g) * (v[:-1] + v[1:]) / 2.0)])
        object.__setattr__(self, "_cum", tuple(cum))

    def _check_domain(self, t):
        g0, g1 = self.grid[0], self.grid[-1]
        if np.any(np.asarray(t) < g0) or np.any(np.asarray(t) > g1):
            raise ValueError(f"time outside tabulated domain [{g0}, {g1}]")

    def rate(self, t):
        self._check_domain(t)
        t = np.asarray(t, dtype=float)
        out = np.interp(t, self.grid, self.values)
        return out if out.ndim else float(out)

    def integral(self, t0, t1):
        self._check_interval(t0, t1)
        self._check_domain([t0, t1])
        g = np.asarray(self.grid)
        cum = np.asarray(self._cum)

        def cum_at(t):
            i = np.clip(np.searchsorted(g, t, side="right") - 1, 0, g.size - 2)
            # integrate the linear piece from g[i] to t exactly
            v0 = self.values[i]
            slope = (self.values[i + 1] - v0) / (g[i + 1] - g[i])
            dt = t - g[i]
            return cum[i] + v0 * dt + 0.5 * slope * dt * dt

        return float(cum_at(t1) - cum_at(t0))

    def max_rate(self, t0, t1):
        self._check_domain([t0, t1])
        g = np.asarray(self.grid)
        inside = (g >= t0) & (g <= t1)
        cands = [np.interp(t0, g, self.values), np.interp(t1, g, self.values)]
        if np.any(inside):
            cands.append(float(np.max(np.asarray(self.values)[inside])))
        return float(max(cands))

    def breakpoints_in(self, t0, t1):
        return tuple(g for g in self.grid if t0 < g < t1)


# ---------------------------------------------------------------------------
# Service-time distributions
# ---------------------------------------------------------------------------

class ServiceDistribution:
    """Processing-time law: CDF F, density f (where it exists), LST
    F~(s) = E[e^{-sS}], mean, and a sampler."""

    kind = "abstract"
    has_density = True
    # density stays bounded near 0 (required by the time-varying kernel)
    bounded_density = True

    @property
    def mean(self):
        raise NotImplementedError

    def cdf(self, z):
        raise NotImplementedError

    def pdf(self, z):
        raise NotImplementedError

    def lst(self, s):
        raise NotImplementedError

    def sample(self, rng, size=None):
        raise NotImplementedError

    def breakpoints(self):
        """Points where F or f is not smooth, for quadrature splitting."""
        return ()

    def _no_density(self):
        raise UnsupportedServiceError(
            f"{self.kind} service has no density; this operation needs f")


@dataclass(frozen=True)
class Exponential(ServiceDistribution):
    mu: float
    kind = "exponential"

    def __post_init__(self):
        if self.mu <= 0:
            raise ConfigError(f"exponential rate must be > 0, got {self.mu}")

    @property
    def mean(self):
        return 1.0 / self.mu

    def cdf(self, z):
        z = np.asarray(z, dtype=float)
        out = np.where(z > 0, -np.expm1(-self.mu * np.maximum(z, 0.0)), 0.0)
        return out if out.ndim else float(out)

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        out = np.where(z >= 0, self.mu * np.exp(-self.mu * np.maximum(z, 0.0)), 0.0)
        return out if out.ndim else float(out)

    def lst(self, s):
        return self.mu / (self.mu + s)

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.mu, size)


@dataclass(frozen=True)
class Deterministic(ServiceDistribution):
    d: float
    kind = "deterministic"
    has_density = False
    bounded_density = False

    def __post_init__(self):
        if self.d <= 0:
            raise ConfigError(f"deterministic service time must be > 0, got {self.d}")

    @property
    def mean(self):
        return self.d

    def cdf(self, z):
        z = np.asarray(z, dtype=float)
        out = np.where(z >= self.d, 1.0, 0.0)
        return out if out.ndim else float(out)

    def pdf(self, z):
        self._no_density()

    def lst(self, s):
        return np.exp(-self.d * s)

    def sample(self, rng, size=None):
        if size is None:
            return self.d
        return np.full(size, self.d)

    def breakpoints(self):
        return (self.d,)


@dataclass(frozen=True)
class Uniform(ServiceDistribution):
    """Uniform on [low, high]. low defaults to 0; a narrow band around d
    approximates a deterministic service for the time-varying solver."""

    low: float
    high: float
    kind = "uniform"

    def __init__(self, low=None, high=None):
        # a single value names the upper endpoint: Uniform(2) == Uniform(0, 2)
        if high is None:
            if low is None:
                raise ConfigError("uniform needs at least an upper endpoint")
            low, high = 0.0, low
        elif low is None:
            low = 0.0
        object.__setattr__(self, "low", float(low))
        object.__setattr__(self, "high", float(high))
        if not (0 <= self.low < self.high):
            raise ConfigError(f"uniform needs 0 <= low < high, got [{low}, {high}]")

    @property
    def mean(self):
        return 0.5 * (self.low + self.high)

    def cdf(self, z):
        z = np.asarray(z, dtype=float)
        out = np.clip((z - self.low) / (self.high - self.low), 0.0, 1.0)
        return out if out.ndim else float(out)

    def pdf(self, z):
        # midpoint convention at the jump points: quadrature rules sampling
        # a node exactly on the edge stay second-order instead of O(h)
        z = np.asarray(z, dtype=float)
        d = 1.0 / (self.high - self.low)
        out = np.where((z > self.low) & (z < self.high), d, 0.0)
        out = np.where(z == self.high, 0.5 * d, out)
        out = np.where(z == self.low, d if self.low == 0.0 else 0.5 * d, out)
        return out if out.ndim else float(out)

    def lst(self, s):
        s = np.asarray(s)
        w = self.high - self.low
        small = np.abs(s) * w < 1e-8
        s_safe = np.where(small, 1.0, s)
        exact = (np.exp(-s_safe * self.low) - np.exp(-s_safe * self.high)) / (s_safe * w)
        lo, hi = self.low, self.high
        series = 1.0 - s * (lo + hi) / 2.0 + s * s * (lo * lo + lo * hi + hi * hi) / 6.0
        out = np.where(small, series, exact)
        return out if out.ndim else complex(out) if np.iscomplexobj(out) else float(out)

    def sample(self, rng, size=None):
        return rng.uniform(self.low, self.high, size)

    def breakpoints(self):
        return (self.low, self.high) if self.low > 0 else (self.high,)


@dataclass(frozen=True)
class Gamma(ServiceDistribution):
    shape: float
    scale: float
    kind = "gamma"

    def __post_init__(self):
        if self.shape <= 0 or self.scale <= 0:
            raise ConfigError(
                f"gamma needs shape > 0 and scale > 0, got ({self.shape}, {self.scale})")
        # shape < 1 has an unbounded density at 0+
        object.__setattr__(self, "bounded_density", self.shape >= 1)

    @property
    def mean(self):
        return self.shape * self.scale

    def cdf(self, z):
        z = np.asarray(z, dtype=float)
        out = gammainc(self.shape, np.maximum(z, 0.0) / self.scale)
        out = np.where(z > 0, out, 0.0)
        return out if out.ndim else float(out)

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        zpos = np.maximum(z, 1e-300)
        logpdf = ((self.shape - 1.0) * np.log(zpos / self.scale)
                  - zpos / self.scale - gammaln(self.shape)) - np.log(self.scale)
        out = np.where(z > 0, np.exp(logpdf), 0.0)
        if self.shape == 1:
            out = np.where(z == 0, 1.0 / self.scale, out)
        return out if out.ndim else float(out)

    def lst(self, s):
        # principal branch; 1 + scale*s stays in the right half-plane for Re(s) >= 0
        return (1.0 + self.scale * np.asarray(s)) ** (-self.shape)

    def sample(self, rng, size=None):
        return rng.gamma(self.shape, self.scale, size)


class Erlang(Gamma):
    """Gamma with integer shape n >= 1."""

    kind = "erlang"

    def __init__(self, n, scale):
        if int(n) != n or n < 1:
            raise ConfigError(f"erlang shape must be a positive integer, got {n}")
        super().__init__(shape=int(n), scale=float(scale))


# ---------------------------------------------------------------------------
# System configuration and grid carrier
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SystemConfig:
    """M_t/G/1/1 instance: arrival profile, service law, preemption
    probability theta. Initial condition is the empty system at t=0."""

    rate: RateProfile
    service: ServiceDistribution
    theta: float

    def __post_init__(self):
        if not (0.0 <= self.theta <= 1.0):
            raise ConfigError(f"theta must be in [0, 1], got {self.theta}")


class GridFunction:
    """Equally spaced grid with linear interpolation between nodes.
    Evaluation outside [t0, t0 + n*h] raises."""

    def __init__(self, t0, h, values):
        if h <= 0:
            raise ConfigError(f"grid step must be > 0, got {h}")
        self.t0 = float(t0)
        self.h = float(h)
        self.values = np.asarray(values, dtype=float)
        if self.values.ndim != 1 or self.values.size < 2:
            raise ConfigError("grid values must be a 1-d array with >= 2 nodes")

    @property
    def t1(self):
        return self.t0 + (self.values.size - 1) * self.h

    @property
    def ts(self):
        return self.t0 + self.h * np.arange(self.values.size)

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        tol = 1e-9 * max(1.0, abs(self.t1))
        if np.any(t_arr < self.t0 - tol) or np.any(t_arr > self.t1 + tol):
            raise ValueError(
                f"evaluation outside grid domain [{self.t0}, {self.t1}]")
        out = np.interp(np.clip(t_arr, self.t0, self.t1), self.ts, self.values)
        return out if out.ndim else float(out)

    def __len__(self):
        return self.values.size


# ---------------------------------------------------------------------------
# Operation-style wrappers
# ---------------------------------------------------------------------------

def rate_at(profile, t):
    """lambda(t); raises ConfigError if the profile evaluates negative."""
    v = profile.rate(t)
    if np.any(np.asarray(v) < 0):
        raise ConfigError(f"profile produced a negative rate at t={t}")
    return v


def rate_integral(profile, t0, t1):
    """Integral of lambda over [t0, t1] (closed form where one exists)."""
    return profile.integral(t0, t1)


def service_cdf(dist, z):
    return dist.cdf(z)


def service_pdf(dist, z):
    return dist.pdf(z)


def service_lst(dist, s):
    return dist.lst(s)


def sample_service(dist, rng, size=None):
    return dist.sample(rng, size)


def is_nbu(dist, grid_points=100, tol=1e-9):
    """New-Better-than-Used check: Fbar(z+tau) <= Fbar(z)*Fbar(tau) + tol on a
    grid over [0, 5*mean]^2. Note the optimizer's preemption policy table is
    intentionally separate from this predicate."""
    span = 5.0 * dist.mean
    g = np.linspace(0.0, span, grid_points)
    sf = 1.0 - np.asarray(dist.cdf(g))
    sum_sf = 1.0 - np.asarray(dist.cdf(g[:, None] + g[None, :]))
    return bool(np.all(sum_sf <= sf[:, None] * sf[None, :] + tol))


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------

_RATE_KINDS = {
    "constant": (Constant, ("a",)),
    "sinusoid": (Sinusoid, ("a", "b", "omega")),
    "piecewise_constant": (PiecewiseConstant, ("breakpoints", "rates")),
    "tabulated": (Tabulated, ("grid", "values")),
}

_SERVICE_KINDS = {
    "exponential": (Exponential, ("mu",)),
    "deterministic": (Deterministic, ("d",)),
    "uniform": (Uniform, ("low", "high")),
    "gamma": (Gamma, ("shape", "scale")),
    "erlang": (Erlang, ("n", "scale")),
}


def _build(table, section, what):
    if not isinstance(section, dict) or "kind" not in section:
        raise ConfigError(f"{what} section needs a 'kind' key")
    kind = section["kind"]
    if kind not in table:
        raise ConfigError(f"unknown {what} kind {kind!r}; choices: {sorted(table)}")
    cls, fields = table[kind]
    if "params" in section:
        params = dict(section["params"])
    else:
        params = {k: v for k, v in section.items() if k != "kind"}
    unknown = set(params) - set(fields)
    if unknown:
        raise ConfigError(f"unknown {what} params for {kind!r}: {sorted(unknown)}")
    # tuple-ify list params so the dataclasses stay hashable
    for k, v in params.items():
        if isinstance(v, list):
            params[k] = tuple(v)
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigError(f"bad {what} params for {kind!r}: {exc}") from exc


def rate_from_dict(section):
    return _build(_RATE_KINDS, section, "rate")


def service_from_dict(section):
    return _build(_SERVICE_KINDS, section, "service")


def config_from_dict(doc):
    """Build a SystemConfig from the structured-config keys rate / service /
    theta; each sub-object holds 'kind' plus that kind's fields (either flat
    or under an explicit 'params' sub-object)."""
    if "rate" not in doc or "service" not in doc or "theta" not in doc:
        raise ConfigError("config needs 'rate', 'service' and 'theta' keys")
    theta = doc["theta"]
    if not isinstance(theta, (int, float)):
        raise ConfigError(f"theta must be a number, got {theta!r}")
    return SystemConfig(rate=rate_from_dict(doc["rate"]),
                        service=service_from_dict(doc["service"]),
                        theta=float(theta))
