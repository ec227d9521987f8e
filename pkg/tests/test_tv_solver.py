import math

import numpy as np
import pytest

from aoiq import (Constant, Sinusoid, PiecewiseConstant, Exponential,
                  Deterministic, Gamma, Erlang, SystemConfig,
                  SolverSettings, solve_idle_prob, kernel_gz, m_tx,
                  aoi_cdf_tv, aoi_cdf_negligible, mean_aoi_negligible,
                  StationaryModel, m_infinity, m_x_stationary, closed_form_mm11,
                  closed_form_mm11_preemptive, ConfigError,
                  ConvergenceError, UnsupportedServiceError)

MM_CFG = SystemConfig(Constant(0.8), Exponential(1.2), 0.0)


def idle_for(config, horizon, **kw):
    return solve_idle_prob(config, SolverSettings(horizon=horizon, **kw))


# ---------------------------------------------------------------------------
# settings / validation
# ---------------------------------------------------------------------------

def test_settings_validation():
    with pytest.raises(ConfigError):
        SolverSettings(horizon=-1.0)
    with pytest.raises(ConfigError):
        SolverSettings(grid_n=1)
    with pytest.raises(ConfigError):
        SolverSettings(etol=0.0)
    with pytest.raises(ConfigError):
        SolverSettings(ite_max=0)
    with pytest.raises(ConfigError):
        SolverSettings(quadrature="simpson")


def test_idle_requires_horizon():
    with pytest.raises(ConfigError):
        solve_idle_prob(MM_CFG, SolverSettings())


def test_density_required():
    det = SystemConfig(Constant(1.0), Deterministic(1.0), 0.5)
    with pytest.raises(UnsupportedServiceError):
        aoi_cdf_tv(det, 5.0, 2.0)
    heavy = SystemConfig(Constant(1.0), Gamma(0.8, 1.0), 0.5)
    with pytest.raises(UnsupportedServiceError):
        aoi_cdf_tv(heavy, 5.0, 2.0)


# ---------------------------------------------------------------------------
# idle-probability curve
# ---------------------------------------------------------------------------

def test_idle_starts_at_one_and_stays_in_unit_interval():
    idle = idle_for(SystemConfig(Sinusoid(1.7, 1.0, 1.8), Erlang(5, 1 / 6), 0.6), 10.0)
    assert idle(0.0) == 1.0
    ts = np.linspace(0.0, 10.0, 400)
    vals = np.array([idle(t) for t in ts])
    assert np.all(vals >= 0.0) and np.all(vals <= 1.0)
    assert idle.residual <= 1e-8


def test_idle_full_preemption_solves_in_one_sweep():
    # theta = 1 removes the implicit term: the first sweep is already exact
    idle = idle_for(SystemConfig(Constant(2.0), Exponential(1.0), 1.0), 5.0)
    assert idle.residual == 0.0


def test_idle_matches_stationary_level():
    idle = idle_for(MM_CFG, 40.0)
    assert idle(40.0) == pytest.approx(m_infinity(StationaryModel(0.8, Exponential(1.2), 0.0)), abs=1e-5)
    cfg = SystemConfig(Constant(2.0), Erlang(5, 1 / 6), 0.5)
    idle = idle_for(cfg, 50.0)
    assert idle(50.0) == pytest.approx(m_infinity(StationaryModel(2.0, Erlang(5, 1 / 6), 0.5)), abs=1e-5)


def test_idle_windowed_fallback_when_sweeps_diverge():
    # lambda (1 - theta) E[S] = 2: global Picard sweeps amplify, the
    # windowed march has to take over and still certify the residual.
    cfg = SystemConfig(Constant(2.0), Exponential(1.0), 0.0)
    idle = idle_for(cfg, 30.0)
    assert idle.residual <= 1e-8
    assert idle(30.0) == pytest.approx(m_infinity(StationaryModel(2.0, Exponential(1.0), 0.0)), abs=1e-5)


def test_idle_iteration_budget_enforced():
    cfg = SystemConfig(Constant(2.0), Exponential(1.0), 0.0)
    with pytest.raises(ConvergenceError) as exc:
        idle_for(cfg, 30.0, ite_max=2)
    assert exc.value.residual > 1e-8


# ---------------------------------------------------------------------------
# kernel and joint block
# ---------------------------------------------------------------------------

def test_kernel_flux_reaches_stationary_form():
    # constant-rate exponential service: after burn-in the flux equals
    # lam*(theta+(1-theta)*Minf) * mu * (1 - exp(-(mu+lam*theta) y)) / (mu+lam*theta)
    lam, mu, theta = 0.8, 1.2, 0.3
    cfg = SystemConfig(Constant(lam), Exponential(mu), theta)
    idle = idle_for(cfg, 40.0)
    minf = m_infinity(StationaryModel(lam, Exponential(mu), theta))
    c = lam * (theta + (1.0 - theta) * minf)
    for y in (0.5, 1.0, 2.0, 4.0):
        want = c * mu * -math.expm1(-(mu + lam * theta) * y) / (mu + lam * theta)
        assert kernel_gz(cfg, idle, 40.0, y) == pytest.approx(want, abs=1e-4)
    assert kernel_gz(cfg, idle, 40.0, 0.0) == 0.0


def test_m_tx_before_age_x_is_the_idle_probability():
    idle = idle_for(MM_CFG, 10.0)
    assert m_tx(MM_CFG, idle, 2.0, 5.0) == float(idle(2.0))
    assert m_tx(MM_CFG, idle, 2.0, 2.5) == float(idle(2.0))


def test_m_tx_reaches_stationary_curve():
    idle = idle_for(MM_CFG, 40.0)
    for x in (0.5, 1.0, 2.0, 4.0):
        want = m_x_stationary(StationaryModel(0.8, Exponential(1.2), 0.0), x)
        assert m_tx(MM_CFG, idle, 40.0, x) == pytest.approx(want, abs=1e-4)


# ---------------------------------------------------------------------------
# the AoI distribution itself
# ---------------------------------------------------------------------------

def test_cdf_trivial_regions():
    assert aoi_cdf_tv(MM_CFG, 3.0, 3.0) == 1.0
    assert aoi_cdf_tv(MM_CFG, 3.0, 7.0) == 1.0
    assert aoi_cdf_tv(MM_CFG, 3.0, 0.0) == 0.0


def test_cdf_rejects_negative_arguments():
    with pytest.raises(ValueError):
        aoi_cdf_tv(MM_CFG, -1.0, 0.5)
    with pytest.raises(ValueError):
        aoi_cdf_tv(MM_CFG, 1.0, -0.5)


def test_cdf_rejects_short_idle_curve():
    idle = idle_for(MM_CFG, 5.0)
    with pytest.raises(ConfigError):
        aoi_cdf_tv(MM_CFG, 8.0, 1.0, idle=idle)


def test_cdf_converges_to_stationary_no_preemption():
    idle = idle_for(MM_CFG, 40.0)
    for x in (0.5, 1.0, 2.5, 4.0):
        want = closed_form_mm11(0.8, 1.2, x)
        got = aoi_cdf_tv(MM_CFG, 40.0, x, idle=idle)
        assert got == pytest.approx(want, abs=1e-3)


def test_cdf_converges_to_stationary_full_preemption():
    cfg = SystemConfig(Constant(2.0), Exponential(1.0), 1.0)
    idle = idle_for(cfg, 40.0)
    for x in (0.5, 1.0, 2.5, 4.0):
        want = closed_form_mm11_preemptive(2.0, 1.0, x)
        got = aoi_cdf_tv(cfg, 40.0, x, idle=idle)
        assert got == pytest.approx(want, abs=1e-3)


def test_cdf_monotone_in_x():
    cfg = SystemConfig(Sinusoid(1.7, 1.0, 1.8), Erlang(5, 1 / 6), 0.6)
    idle = idle_for(cfg, 10.0)
    xs = np.linspace(0.2, 9.0, 12)
    vals = [aoi_cdf_tv(cfg, 10.0, x, idle=idle) for x in xs]
    assert all(b >= a - 1e-6 for a, b in zip(vals, vals[1:]))
    assert all(0.0 <= v <= 1.0 for v in vals)


def test_cdf_shared_idle_matches_fresh_solve():
    cfg = SystemConfig(Sinusoid(1.8, 1.0, 0.8), Exponential(1.5), 0.2)
    idle = idle_for(cfg, 12.0)
    a = aoi_cdf_tv(cfg, 9.0, 2.5, idle=idle)
    b = aoi_cdf_tv(cfg, 9.0, 2.5)
    assert a == pytest.approx(b, abs=1e-9)


# ---------------------------------------------------------------------------
# negligible processing time
# ---------------------------------------------------------------------------

def test_negligible_cdf_constant_rate():
    lam = 1.3
    prof = Constant(lam)
    for x in (0.1, 0.7, 2.0):
        assert aoi_cdf_negligible(prof, 10.0, x) == pytest.approx(-math.expm1(-lam * x), abs=1e-14)
    assert aoi_cdf_negligible(prof, 2.0, 2.0) == 1.0
    assert aoi_cdf_negligible(prof, 2.0, 5.0) == 1.0


def test_negligible_cdf_piecewise_rate():
    prof = PiecewiseConstant((0.0, 3.0, 6.0), (1.5, 0.5))
    # window (2, 5]: one unit at 1.5 then two at 0.5
    want = -math.expm1(-(1.5 * 1.0 + 0.5 * 2.0))
    assert aoi_cdf_negligible(prof, 5.0, 3.0) == pytest.approx(want, abs=1e-14)


def test_negligible_mean_constant_rate():
    lam, t = 1.3, 10.0
    want = -math.expm1(-lam * t) / lam
    assert mean_aoi_negligible(Constant(lam), t) == pytest.approx(want, abs=1e-10)
    assert mean_aoi_negligible(Constant(lam), 0.0) == 0.0


def test_negligible_mean_piecewise_rate():
    prof = PiecewiseConstant((0.0, 3.0, 6.0), (1.5, 0.5))
    t = 5.0
    grid = np.linspace(0.0, t, 200_001)
    vals = np.array([math.exp(-prof.integral(t - xi, t)) for xi in grid])
    want = np.trapezoid(vals, grid)
    assert mean_aoi_negligible(prof, t) == pytest.approx(want, abs=1e-8)


def test_negligible_validation():
    with pytest.raises(ValueError):
        aoi_cdf_negligible(Constant(1.0), -1.0, 0.5)
    with pytest.raises(ValueError):
        mean_aoi_negligible(Constant(1.0), -2.0)
