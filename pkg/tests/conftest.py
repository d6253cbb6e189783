"""Shared fixtures and numerical helpers for the test suite."""

import numpy as np
import pytest

from mvreg.core import ScaleFamily, validate_dataset
from mvreg.scale import scale_eval


def make_design(rng, n, k):
    """Intercept plus k-1 standard lognormal regressors."""
    x = np.column_stack([np.ones(n), np.exp(rng.standard_normal((n, k - 1)))])
    return x


def feasible_gamma(rng, x, family):
    """Draw a gamma whose scale is well defined on every row of x.

    For the linear family the index is kept safely positive by centering
    the draw on a positive intercept and shrinking the slopes.
    """
    k = x.shape[1]
    if family is ScaleFamily.LINEAR:
        for _ in range(100):
            gamma = np.concatenate([[0.5 + rng.uniform(0.5, 1.5)],
                                    rng.uniform(0.0, 0.3, size=k - 1)])
            if (x @ gamma).min() > 0.05:
                return gamma
        raise AssertionError("could not draw a feasible gamma")
    return np.concatenate([[rng.uniform(-0.5, 0.5)],
                           rng.uniform(-0.2, 0.2, size=k - 1)])


def make_dataset(rng, n=120, k=4, family=ScaleFamily.LINEAR):
    """Random heteroskedastic sample with a valid mean/scale pair."""
    x = make_design(rng, n, k)
    beta = rng.uniform(-1.0, 1.0, size=k)
    gamma = feasible_gamma(rng, x, family)
    s = scale_eval(family, x @ gamma).s
    y = x @ beta + s * rng.standard_normal(n)
    return validate_dataset(y, x), beta, gamma


def fd_gradient(fun, point, step=1e-6):
    """Central finite-difference gradient of a scalar function."""
    point = np.asarray(point, dtype=float)
    grad = np.zeros_like(point)
    for j in range(point.size):
        hi = point.copy()
        lo = point.copy()
        hi[j] += step
        lo[j] -= step
        grad[j] = (fun(hi) - fun(lo)) / (2.0 * step)
    return grad


@pytest.fixture
def rng():
    return np.random.default_rng(20260822)
