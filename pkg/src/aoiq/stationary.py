"""Steady-state AoI distribution for constant arrival rate.

Two routes, deliberately independent of the time-varying solver:

* theta > 0: the AoI Laplace-Stieltjes transform (evaluated in cancelled
  form, so s=0 is regular) inverted numerically with Euler-summation
  acceleration of the Bromwich series.
* theta = 0: the explicit convolution representation
  Phi(x) = M(x) + lambda * int_0^x M(s) (1 - F(x-s)) ds,
  which needs only the CDF and therefore covers deterministic service too.

Closed forms for M/M/1/1, M/D/1/1 and M/M/1/1-preemptive serve as oracles,
each with an analytic limit branch for lambda ~ mu.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._quad import composite_gauss, geometric_ladder
from .errors import ConfigError, InversionError, UnsupportedServiceError

__all__ = [
    "StationaryModel", "InversionSettings",
    "m_infinity", "m_x_stationary", "aoi_lst",
    "aoi_cdf_stationary", "aoi_pdf_stationary",
    "closed_form_mm11", "closed_form_md11", "closed_form_mm11_preemptive",
    "check_dominance",
]

# Euler-summation inversion constants: discretization error ~ exp(-A),
# roundoff amplification ~ exp(A/2) * eps. A = 18.4 balances both near 1e-8.
_EULER_A = 18.4
_EULER_STAGES = 12
# relative threshold for the lambda ~ mu limit branches
_EQ_RATE_DELTA = 1e-6


@dataclass(frozen=True)
class StationaryModel:
    """Constant-rate M/G/1/1 instance."""

    lam: float
    service: object
    theta: float

    def __post_init__(self):
        if self.lam <= 0:
            raise ConfigError(f"stationary model needs lambda > 0, got {self.lam}")
        if not (0.0 <= self.theta <= 1.0):
            raise ConfigError(f"theta must be in [0, 1], got {self.theta}")


@dataclass(frozen=True)
class InversionSettings:
    """Bromwich inversion control. gamma is the contour-abscissa floor
    (any gamma > 0 is valid: the transform's singularities sit in
    Re(s) <= 0 for a proper AoI law); terms is the series truncation."""

    gamma: float = 1.0
    terms: int = 40
    method: str = "euler"

    def __post_init__(self):
        if self.gamma <= 0:
            raise ConfigError(f"gamma must be > 0, got {self.gamma}")
        if self.terms < 10:
            raise ConfigError(f"terms must be >= 10, got {self.terms}")
        if self.method != "euler":
            raise ConfigError(f"unsupported inversion method {self.method!r}")


# ---------------------------------------------------------------------------
# M(inf) and M(x)
# ---------------------------------------------------------------------------

def m_infinity(model):
    """Stationary idle probability. theta > 0:
    theta*F~(lam*theta) / (1 - (1-theta)*F~(lam*theta)); theta = 0 is the
    L'Hospital limit 1 / (1 + lam * mean)."""
    th = model.theta
    if th == 0.0:
        return 1.0 / (1.0 + model.lam * model.service.mean)
    fl = float(np.real(model.service.lst(model.lam * th)))
    return th * fl / (1.0 - (1.0 - th) * fl)


def _service_splits(service, upper, near=None):
    """Quadrature split points: service kinks plus, for an unbounded density
    (gamma shape < 1), a geometric ladder toward the singular endpoint."""
    pts = [b for b in service.breakpoints() if 0.0 < b < upper]
    if near is not None and not getattr(service, "bounded_density", True) \
            and service.has_density:
        at, span = near
        pts.extend(at + u if at == 0.0 else at - u for u in geometric_ladder(span))
    return pts


def m_x_stationary(model, x):
    """Stationary M(x) = P(idle, AoI <= x)."""
    if x <= 0:
        return 0.0
    lam, th = model.lam, model.theta
    minf = m_infinity(model)
    if th == 0.0:
        # M(x) = M(inf) * lam * int_0^x F(s) e^{-lam (x-s)} ds (CDF only)
        def integrand(s):
            s = np.atleast_1d(s)
            return np.asarray(model.service.cdf(s)) * np.exp(-lam * (x - s))

        val = minf * lam * composite_gauss(integrand, 0.0, x,
                                           _service_splits(model.service, x))
        return float(min(max(val, 0.0), 1.0))

    if not model.service.has_density:
        raise UnsupportedServiceError(
            "m_x_stationary with theta > 0 needs the service density; "
            f"{model.service.kind} has none")

    coeff = th + (1.0 - th) * minf

    def integrand(s):
        s = np.atleast_1d(s)
        return np.asarray(model.service.pdf(s)) * (
            np.exp(-lam * th * s) - np.exp(lam * (s - th * s - x)))

    splits = _service_splits(model.service, x, near=(0.0, x))
    val = coeff * composite_gauss(integrand, 0.0, x, splits)
    return float(min(max(val, 0.0), 1.0))


# ---------------------------------------------------------------------------
# The AoI LST (theta > 0) and its numerical inversion
# ---------------------------------------------------------------------------

def aoi_lst(model, s):
    """LST of the stationary AoI for theta > 0, in cancelled form:

        Phi~(s) = [lam/(lam+s)] * theta*F~(lam*theta+s) /
                  (1 - (1-theta)*F~(lam*theta)) * (1 + (1-theta)K(s)) /
                  (1 - theta*K(s)),
        K(s) = lam (1 - F~(lam*theta+s)) / (lam*theta + s).

    The textbook form carries s * M*(s) with a 1/s inside M*; the s cancels
    analytically, and evaluating the cancelled product keeps s = 0 regular.
    """
    th = model.theta
    if th == 0.0:
        raise ConfigError(
            "theta = 0 has no LST route here; aoi_cdf_stationary uses the "
            "convolution path instead")
    lam = model.lam
    s = np.asarray(s)
    ftl = model.service.lst(lam * th + s)
    f0 = np.real(model.service.lst(lam * th))
    s_m = lam / (lam + s) * th * ftl / (1.0 - (1.0 - th) * f0)
    k = lam * (1.0 - ftl) / (lam * th + s)
    out = s_m * (1.0 + (1.0 - th) * k) / (1.0 - th * k)
    return out if out.ndim else complex(out)


def _euler_invert(fhat, x, settings):
    """Abate-Whitt Euler summation of the Bromwich series at time x."""
    a = max(_EULER_A, 2.0 * settings.gamma * x)
    n, mst = settings.terms, _EULER_STAGES
    k = np.arange(n + mst + 1)
    s = (a + 2j * np.pi * k) / (2.0 * x)
    with np.errstate(over="raise", invalid="raise"):
        try:
            vals = np.asarray(fhat(s), dtype=complex)
            terms = 2.0 * np.real(vals) * (-1.0) ** k
            terms[0] *= 0.5
            partial = np.cumsum(terms)
            weights = np.array([math.comb(mst, j) for j in range(mst + 1)]) / 2.0 ** mst
            scale = math.exp(a / 2.0) / (2.0 * x)
            value = scale * float(np.dot(weights, partial[n:n + mst + 1]))
            # successive Euler-averaged estimates agree to ~1e-9 when the
            # series is healthy; a large gap means roundoff has taken over
            drift = abs(value - scale * float(np.dot(weights, partial[n - 1:n + mst])))
        except (FloatingPointError, OverflowError) as exc:
            raise InversionError(
                f"inversion overflowed at x={x} (abscissa {a / (2 * x):.3g})",
                diagnostics={"x": x, "A": a, "cause": str(exc)}) from exc
    if not math.isfinite(value):
        raise InversionError(
            f"inversion produced a non-finite value at x={x}",
            diagnostics={"x": x, "A": a})
    if drift > 0.1:
        raise InversionError(
            f"inversion estimates disagree at x={x} (drift {drift:.3g})",
            diagnostics={"x": x, "A": a, "drift": drift})
    return value


# ---------------------------------------------------------------------------
# CDF / PDF
# ---------------------------------------------------------------------------

def _m_theta0_sorted(model, pts):
    """theta=0 M(.) at sorted points, built cumulatively:
    M(b) = M(a) e^{-lam (b-a)} + M(inf) lam int_a^b F(v) e^{-lam (b-v)} dv,
    so a whole node set costs one pass."""
    lam = model.lam
    minf = m_infinity(model)
    out = np.empty(pts.size)
    prev_t = 0.0
    prev_m = 0.0
    for i, b in enumerate(pts):
        if b <= 0:
            out[i] = 0.0
            continue

        def integrand(v, b=b):
            v = np.atleast_1d(v)
            return np.asarray(model.service.cdf(v)) * np.exp(-lam * (b - v))

        splits = _service_splits(model.service, b)
        piece = composite_gauss(integrand, prev_t, b,
                                [p for p in splits if p > prev_t])
        prev_m = prev_m * math.exp(-lam * (b - prev_t)) + minf * lam * piece
        prev_t = b
        out[i] = prev_m
    return out


def _cdf_theta0(model, x):
    lam = model.lam
    bps = list(model.service.breakpoints())
    splits = sorted({b for b in bps if 0 < b < x}
                    | {x - b for b in bps if 0 < x - b < x})

    def integrand(s):
        s = np.atleast_1d(s)
        order = np.argsort(s)
        m_sorted = _m_theta0_sorted(model, s[order])
        m = np.empty_like(m_sorted)
        m[order] = m_sorted
        return m * (1.0 - np.asarray(model.service.cdf(x - s)))

    mx = _m_theta0_sorted(model, np.array([x]))[0]
    return mx + lam * composite_gauss(integrand, 0.0, x, splits)


def _pdf_theta0(model, x):
    """Derivative of the convolution form:
    phi(x) = M(inf) lam F(x) - lam int_0^x M(s) dF(x-s)."""
    lam = model.lam
    minf = m_infinity(model)
    lead = minf * lam * float(model.service.cdf(x))
    if not model.service.has_density:
        # deterministic atom at d: the Stieltjes convolution collapses
        d = model.service.breakpoints()[0]
        tail = lam * _m_theta0_sorted(model, np.array([x - d]))[0] if x > d else 0.0
        return lead - tail
    bps = list(model.service.breakpoints())
    splits = sorted({b for b in bps if 0 < b < x}
                    | {x - b for b in bps if 0 < x - b < x})
    if not getattr(model.service, "bounded_density", True):
        # f(x - s) is singular as s -> x
        splits = sorted(set(splits) | {x - u for u in geometric_ladder(x)})

    def integrand(s):
        s = np.atleast_1d(s)
        order = np.argsort(s)
        m_sorted = _m_theta0_sorted(model, s[order])
        m = np.empty_like(m_sorted)
        m[order] = m_sorted
        return m * np.asarray(model.service.pdf(x - s))

    return lead - lam * composite_gauss(integrand, 0.0, x, splits)


def aoi_cdf_stationary(model, x, inv=None):
    """P(AoI <= x) in steady state. theta = 0 goes through the convolution
    quadrature (deterministic service allowed); theta > 0 inverts
    Phi~(s)/s."""
    if x <= 0:
        return 0.0
    if model.theta == 0.0:
        val = float(_cdf_theta0(model, x))
    else:
        inv = inv or InversionSettings()
        val = _euler_invert(lambda s: aoi_lst(model, s) / s, x, inv)
    return min(max(val, 0.0), 1.0)


def aoi_pdf_stationary(model, x, inv=None):
    """AoI density in steady state (inversion of Phi~(s) for theta > 0).
    Known to lose accuracy near x = 0 when the true density does not
    vanish there; the CDF route is the primary contract."""
    if x <= 0:
        return 0.0
    if model.theta == 0.0:
        return float(_pdf_theta0(model, x))
    inv = inv or InversionSettings()
    return _euler_invert(lambda s: aoi_lst(model, s), x, inv)


# ---------------------------------------------------------------------------
# Closed-form oracles
# ---------------------------------------------------------------------------

def _rates_close(lam, mu):
    return abs(lam - mu) < _EQ_RATE_DELTA * max(lam, mu)


def closed_form_mm11(lam, mu, x):
    """M/M/1/1 without preemption (theta = 0), exponential service rate mu."""
    if lam <= 0 or mu <= 0:
        raise ConfigError("closed_form_mm11 needs lam, mu > 0")
    if x <= 0:
        return 0.0
    if _rates_close(lam, mu):
        # limit lam -> mu of the expression below
        mx = mu * x
        return 1.0 - math.exp(-mx) * (1.0 + mx + 0.25 * mx * mx)
    d = lam - mu
    term_lam = mu ** 3 / ((lam + mu) * d * d) * math.exp(-lam * x)
    bracket = (lam * lam - lam * mu - mu * mu) / (d * d) + lam * mu * x / d
    term_mu = lam / (lam + mu) * bracket * math.exp(-mu * x)
    return 1.0 - term_lam - term_mu


def closed_form_md11(lam, mu, x):
    """M/D/1/1 without preemption; deterministic service time 1/mu."""
    if lam <= 0 or mu <= 0:
        raise ConfigError("closed_form_md11 needs lam, mu > 0")
    if x < 0:
        return 0.0
    if x < 1.0 / mu:
        return 0.0
    if x < 2.0 / mu:
        return lam * mu * x / (lam + mu) - lam / (lam + mu)
    return 1.0 - mu / (lam + mu) * math.exp(-lam * x + 2.0 * lam / mu)


def closed_form_mm11_preemptive(lam, mu, x):
    """M/M/1/1 with full preemption (theta = 1)."""
    if lam <= 0 or mu <= 0:
        raise ConfigError("closed_form_mm11_preemptive needs lam, mu > 0")
    if x <= 0:
        return 0.0
    if _rates_close(lam, mu):
        mx = mu * x
        return 1.0 - (1.0 + mx) * math.exp(-mx)
    return 1.0 - lam / (lam - mu) * math.exp(-mu * x) \
        + mu / (lam - mu) * math.exp(-lam * x)


def check_dominance(lam, mu, xs):
    """Dominance check: the full-preemption CDF dominates the
    non-preemptive one at every point of xs (vacuously true when empty)."""
    for x in np.atleast_1d(np.asarray(xs, dtype=float)):
        if closed_form_mm11_preemptive(lam, mu, float(x)) \
                < closed_form_mm11(lam, mu, float(x)) - 1e-12:
            return False
    return True
