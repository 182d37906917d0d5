"""Bracketed root finding for monotone branch inversions.

All branch maps handled here are strictly monotone on a known bracket, so a
bisection-safeguarded Newton iteration is both robust and fast: Newton steps
are accepted only while they stay inside the current sign-change bracket,
otherwise the step falls back to the midpoint.  Residuals are measured in
function space (|f(x)|), which is what the inversion contracts promise.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ConvergenceError

#: residual target for branch inversion
FTOL = 1e-14
#: residual that must be met even when the bracket collapses to rounding width
FTOL_HARD = 1e-13
MAXITER = 200


def solve_monotone(f, df, lo, hi, *, ftol=FTOL, maxiter=MAXITER):
    """Solve f(x) = 0 for increasing f on the bracket [lo, hi], elementwise.

    ``lo``, ``hi`` are scalars or arrays (broadcast together); ``f`` and ``df``
    must accept arrays.  Requires f(lo) <= 0 <= f(hi).  Returns an array of the
    broadcast shape (or a scalar if both ends were scalars).
    """
    lo_a, hi_a = np.broadcast_arrays(np.asarray(lo, float), np.asarray(hi, float))
    scalar = lo_a.ndim == 0
    lo_a = np.atleast_1d(lo_a).copy()
    hi_a = np.atleast_1d(hi_a).copy()
    if np.any(hi_a < lo_a):
        raise ConvergenceError("invalid bracket: hi < lo")

    x = 0.5 * (lo_a + hi_a)
    fx = np.asarray(f(x), float)
    done = np.abs(fx) <= ftol

    for _ in range(maxiter):
        if done.all():
            break
        # keep the sign change inside [lo, hi]
        neg = (fx < 0.0) & ~done
        pos = (fx > 0.0) & ~done
        lo_a[neg] = x[neg]
        hi_a[pos] = x[pos]

        d = np.asarray(df(x), float)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = fx / d
        cand = x - step
        bad = ~np.isfinite(cand) | (cand <= lo_a) | (cand >= hi_a)
        mid = 0.5 * (lo_a + hi_a)
        cand = np.where(bad, mid, cand)

        x = np.where(done, x, cand)
        fx = np.where(done, fx, np.asarray(f(x), float))
        width = hi_a - lo_a
        done = (np.abs(fx) <= ftol) | (width <= 4.0 * np.finfo(float).eps * np.maximum(1.0, np.abs(x)))

    worst = float(np.max(np.abs(fx)))
    if worst > FTOL_HARD:
        raise ConvergenceError(
            f"branch inversion did not converge: max residual {worst:.3e} after {maxiter} iterations"
        )
    return float(x[0]) if scalar and x.size == 1 else x


def invert_increasing(g, dg, y, lo, hi, *, ftol=FTOL, maxiter=MAXITER):
    """Return x in [lo, hi] with g(x) = y for increasing g (vectorized in y)."""
    y_a = np.asarray(y, float)
    return solve_monotone(lambda x: g(x) - y_a, dg, lo, hi, ftol=ftol, maxiter=maxiter)
