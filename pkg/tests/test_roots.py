import numpy as np
import pytest

from parabolic_escape.exceptions import ConvergenceError
from parabolic_escape.roots import invert_increasing, solve_monotone


def test_scalar_cubic():
    x = solve_monotone(lambda t: t**3 - 0.3, lambda t: 3 * t**2, 0.0, 1.0)
    assert abs(x**3 - 0.3) <= 1e-13


def test_vectorized_targets():
    y = np.linspace(0.0, 1.0, 101)
    x = invert_increasing(lambda t: t + t**2, lambda t: 1 + 2 * t, y, np.zeros_like(y), np.ones_like(y))
    assert np.max(np.abs(x + x**2 - y)) <= 1e-13


def test_endpoint_roots():
    # degenerate bracket at an exact root
    assert solve_monotone(lambda t: t, lambda t: np.ones_like(t), 0.0, 0.0) == 0.0


def test_flat_region_near_zero():
    # nearly flat derivative at the left end exercises the bisection fallback
    y = np.array([1e-12, 1e-8, 1e-4])
    x = invert_increasing(lambda t: t + t**3, lambda t: 1 + 3 * t**2, y, np.zeros(3), np.ones(3))
    assert np.max(np.abs(x + x**3 - y)) <= 1e-13


def test_unsolvable_raises():
    with pytest.raises(ConvergenceError):
        # no sign change: f > 0 on the whole bracket
        solve_monotone(lambda t: t + 1.0, lambda t: np.ones_like(t), 0.0, 1.0, maxiter=30)
