"""Inner loops of the Volterra solvers.

Every kernel evaluates lower-triangular composite-trapezoid sums of the form

    out[i] = base[i] + h * sum_{j=0..i}'' k(j, i-j) * e(j, i)

where e(j, i) = prod_{m=j+1..i} q[m] carries the exponential factor
exp(-theta * (Lambda_i - Lambda_j)) as a running product of per-step
factors q[m] = exp(-theta * dLambda_m), so no large exponent is ever formed.
The double-prime marks trapezoid end weights (first and last terms halved).

Two interchangeable implementations are provided: numba-jitted loops
(default when numba imports) and vectorized numpy rows using reversed
cumulative products. Select with AOIQ_BACKEND=numba|numpy; results agree to
machine rounding.
"""

import os
import warnings

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _suffix_products(q, i):
    """e[j] = prod_{m=j+1..i} q[m] for j=0..i (e[i]=1)."""
    e = np.empty(i + 1)
    e[i] = 1.0
    if i:
        e[:i] = np.cumprod(q[i:0:-1])[::-1]
    return e


def _idle_sweep_numpy(lam, Fk, q, theta, h, w, rhs, i0, i1):
    for i in range(i0, i1):
        e = _suffix_products(q, i)
        g = lam[:i + 1] * (theta * Fk[i::-1]
                           + (1.0 - theta) * w[:i + 1] * (Fk[i::-1] - 1.0)) * e
        rhs[i] = h * (g.sum() - 0.5 * (g[0] + g[i])) + e[0]


def _conv_slice_numpy(c, fx, q, h, out, i0, i1):
    for i in range(i0, i1):
        e = _suffix_products(q, i)
        g = c[:i + 1] * fx[i::-1] * e
        out[i] = h * (g.sum() - 0.5 * (g[0] + g[i]))


def _phi_sweep_numpy(lam, mx, Fx, q, theta, h, w, rhs, i0, i1):
    for i in range(i0, i1):
        e = _suffix_products(q, i)
        g = lam[:i + 1] * (theta * w[:i + 1] + (1.0 - theta) * mx[:i + 1]) \
            * (Fx[i::-1] - 1.0) * e
        rhs[i] = mx[i] - h * (g.sum() - 0.5 * (g[0] + g[i]))


# ---------------------------------------------------------------------------
# numba implementations (same arithmetic, explicit loops)
# ---------------------------------------------------------------------------

if njit is not None:

    @njit(cache=True)
    def _idle_sweep_numba(lam, Fk, q, theta, h, w, rhs, i0, i1):
        for i in range(i0, i1):
            e = 1.0
            g_i = lam[i] * (theta * Fk[0] + (1.0 - theta) * w[i] * (Fk[0] - 1.0))
            total = 0.5 * g_i
            for j in range(i - 1, 0, -1):
                e *= q[j + 1]
                total += lam[j] * (theta * Fk[i - j]
                                   + (1.0 - theta) * w[j] * (Fk[i - j] - 1.0)) * e
            e *= q[1]
            g0 = lam[0] * (theta * Fk[i] + (1.0 - theta) * w[0] * (Fk[i] - 1.0)) * e
            total += 0.5 * g0
            rhs[i] = h * total + e

    @njit(cache=True)
    def _conv_slice_numba(c, fx, q, h, out, i0, i1):
        for i in range(i0, i1):
            e = 1.0
            total = 0.5 * c[i] * fx[0]
            for j in range(i - 1, 0, -1):
                e *= q[j + 1]
                total += c[j] * fx[i - j] * e
            e *= q[1]
            total += 0.5 * c[0] * fx[i] * e
            out[i] = h * total

    @njit(cache=True)
    def _phi_sweep_numba(lam, mx, Fx, q, theta, h, w, rhs, i0, i1):
        for i in range(i0, i1):
            e = 1.0
            g_i = lam[i] * (theta * w[i] + (1.0 - theta) * mx[i]) * (Fx[0] - 1.0)
            total = 0.5 * g_i
            for j in range(i - 1, 0, -1):
                e *= q[j + 1]
                total += lam[j] * (theta * w[j] + (1.0 - theta) * mx[j]) \
                    * (Fx[i - j] - 1.0) * e
            e *= q[1]
            g0 = lam[0] * (theta * w[0] + (1.0 - theta) * mx[0]) * (Fx[i] - 1.0) * e
            total += 0.5 * g0
            rhs[i] = mx[i] - h * total


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------

def _pick_backend():
    requested = os.environ.get("AOIQ_BACKEND", "").strip().lower()
    if requested not in ("", "numba", "numpy"):
        warnings.warn(f"unknown AOIQ_BACKEND={requested!r}; falling back to numpy")
        requested = "numpy"
    if requested == "numpy":
        return "numpy"
    if njit is None:
        if requested == "numba":
            warnings.warn("AOIQ_BACKEND=numba but numba is not importable; using numpy")
        return "numpy"
    return "numba"


BACKEND = _pick_backend()

if BACKEND == "numba":
    idle_sweep = _idle_sweep_numba
    conv_slice = _conv_slice_numba
    phi_sweep = _phi_sweep_numba
else:
    idle_sweep = _idle_sweep_numpy
    conv_slice = _conv_slice_numpy
    phi_sweep = _phi_sweep_numpy
