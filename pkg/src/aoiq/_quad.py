"""Composite Gauss-Legendre quadrature with kink splitting.

Used by the stationary convolution path and the negligible-processing mean.
The Volterra solvers march with the trapezoid rule on equally spaced grids
and do not go through here.
"""

from functools import lru_cache

import numpy as np

_NPTS = 64


@lru_cache(maxsize=8)
def _nodes(npts):
    x, w = np.polynomial.legendre.leggauss(npts)
    return x, w


def split_points(a, b, breakpoints):
    """Sorted segment boundaries of [a, b] split at the interior breakpoints."""
    pts = [a, b]
    for p in breakpoints:
        if a < p < b:
            pts.append(float(p))
    return np.array(sorted(set(pts)))


def composite_gauss(f, a, b, breakpoints=(), npts=_NPTS):
    """Integral of a vectorized f over [a, b], one Gauss panel per smooth
    segment between breakpoints."""
    if b <= a:
        return 0.0
    edges = split_points(a, b, breakpoints)
    x, w = _nodes(npts)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        total += half * float(np.dot(w, np.asarray(f(mid + half * x), dtype=float)))
    return total


def geometric_ladder(b, levels=(1e-8, 1e-6, 1e-4, 1e-2, 1e-1)):
    """Extra split points clustered toward 0 for integrable endpoint
    singularities (Gamma shape < 1)."""
    return tuple(b * u for u in levels)
