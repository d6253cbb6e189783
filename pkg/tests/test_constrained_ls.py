"""Inequality-constrained least squares against an SLSQP oracle."""

import numpy as np
import pytest
import scipy.optimize

from mvreg.constrained_ls import ldp, lsi
from mvreg.core import QPInfeasible


def slsqp_lsi(a, y, g, h, x0=None):
    """Independent solution of min ||ax-y|| s.t. gx >= h."""
    if x0 is None:
        x0 = np.linalg.lstsq(a, y, rcond=None)[0]
    res = scipy.optimize.minimize(
        lambda x: 0.5 * np.sum((a @ x - y) ** 2),
        x0,
        jac=lambda x: a.T @ (a @ x - y),
        method="SLSQP",
        constraints={"type": "ineq", "fun": lambda x: g @ x - h, "jac": lambda x: g},
        options={"maxiter": 500, "ftol": 1e-12},
    )
    # status 8 is a line-search stall at the solver's own precision floor
    assert res.success or res.status == 8, res.message
    assert (g @ res.x - h).min() >= -1e-8
    return res.x


def test_lsi_inactive_constraints_reduce_to_lstsq(rng):
    a = np.column_stack([np.ones(40), rng.standard_normal((40, 2))])
    y = rng.standard_normal(40)
    unconstrained = np.linalg.lstsq(a, y, rcond=None)[0]
    # constraints far below the unconstrained fit stay slack
    g = np.eye(3)
    h = unconstrained - 10.0
    np.testing.assert_allclose(lsi(a, y, g, h), unconstrained, atol=1e-8)


def test_lsi_matches_slsqp_on_random_problems(rng):
    for trial in range(20):
        m = rng.integers(3, 6)
        n_rows = rng.integers(20, 60)
        a = np.column_stack(
            [np.ones(n_rows), rng.standard_normal((n_rows, m - 1))]
        )
        y = rng.standard_normal(n_rows)
        n_con = rng.integers(2, 10)
        g = rng.standard_normal((n_con, m))
        # pick h so the problem is feasible but constraints bite sometimes
        x_ref = rng.standard_normal(m)
        h = g @ x_ref - rng.uniform(0.0, 0.5, size=n_con)
        got = lsi(a, y, g, h)
        want = slsqp_lsi(a, y, g, h, x0=x_ref)
        assert (g @ got - h).min() >= -1e-8
        obj_got = 0.5 * np.sum((a @ got - y) ** 2)
        obj_want = 0.5 * np.sum((a @ want - y) ** 2)
        assert obj_got <= obj_want + 1e-7 * max(1.0, obj_want)


def test_lsi_active_floor_constraints(rng):
    """Weight-model shape: fitted values forced at or above a floor."""
    n = 80
    a = np.column_stack([np.ones(n), np.abs(rng.standard_normal((n, 2)))])
    y = rng.uniform(-3.0, -1.0, size=n)  # response far below the floor
    floor = 0.1
    coef = lsi(a, y, a, np.full(n, floor))
    fitted = a @ coef
    assert fitted.min() >= floor - 1e-9
    want = slsqp_lsi(a, y, a, np.full(n, floor), x0=np.array([floor + 1.0, 0.0, 0.0]))
    obj_got = 0.5 * np.sum((fitted - y) ** 2)
    obj_want = 0.5 * np.sum((a @ want - y) ** 2)
    assert obj_got <= obj_want + 1e-6 * max(1.0, obj_want)


def test_ldp_simple_geometry():
    # distance from origin to the half-plane x0 + x1 >= 2 is along (1,1)
    g = np.array([[1.0, 1.0]])
    h = np.array([2.0])
    np.testing.assert_allclose(ldp(g, h), [1.0, 1.0], atol=1e-10)


def test_ldp_slack_constraints_give_zero():
    g = np.array([[1.0, 0.0], [0.0, 1.0]])
    h = np.array([-1.0, -2.0])
    np.testing.assert_allclose(ldp(g, h), [0.0, 0.0], atol=1e-12)


def test_infeasible_constraints_raise():
    g = np.array([[1.0], [-1.0]])
    h = np.array([1.0, 1.0])  # x >= 1 and x <= -1
    with pytest.raises(QPInfeasible):
        ldp(g, h)
    a = np.ones((5, 1))
    y = np.zeros(5)
    with pytest.raises(QPInfeasible):
        lsi(a, y, g, h)
