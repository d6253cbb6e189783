"""Loss, moments, and Hessian against brute-force and finite-difference oracles."""

import numpy as np
import pytest

from mvreg.core import Infeasible, RankDeficient, ScaleFamily, ThetaEstimate
from mvreg.objective import (
    concentrated_beta,
    concentrated_loss,
    hessian,
    loss,
    moments,
    weighted_lstsq,
)
from mvreg.scale import scale_eval

from conftest import fd_gradient, feasible_gamma, make_dataset


def brute_force_loss(data, theta):
    """Scalar loop version of the sample objective."""
    total = 0.0
    for i in range(data.n):
        t_i = float(data.x[i] @ theta.gamma)
        s_i = t_i if theta.scale is ScaleFamily.LINEAR else np.exp(t_i)
        e_i = (data.y[i] - float(data.x[i] @ theta.beta)) / s_i
        total += 0.5 * (e_i * e_i + 1.0) * s_i
    return total / data.n


def random_theta(rng, data, family):
    beta = rng.uniform(-1.0, 1.0, size=data.k)
    gamma = feasible_gamma(rng, data.x, family)
    return ThetaEstimate(beta=beta, gamma=gamma, scale=family)


def stacked_loss(data, family):
    k = data.k

    def fun(v):
        theta = ThetaEstimate(beta=v[:k], gamma=v[k:], scale=family)
        return loss(data, theta)

    return fun


def test_loss_matches_brute_force(rng):
    for family in ScaleFamily:
        for _ in range(10):
            data, _, _ = make_dataset(rng, n=60, k=3, family=family)
            theta = random_theta(rng, data, family)
            np.testing.assert_allclose(
                loss(data, theta), brute_force_loss(data, theta), rtol=1e-12
            )


def test_loss_raises_when_linear_scale_infeasible(rng):
    data, _, _ = make_dataset(rng, n=50, k=3, family=ScaleFamily.LINEAR)
    bad = ThetaEstimate(
        beta=np.zeros(3), gamma=np.array([-1.0, 0.0, 0.0]), scale=ScaleFamily.LINEAR
    )
    with pytest.raises(Infeasible):
        loss(data, bad)


def test_moments_are_negative_gradient(rng):
    """Gradient check: grad Q = (-m1, -m2), 40 random points per family."""
    for family in ScaleFamily:
        for _ in range(40):
            data, _, _ = make_dataset(rng, n=70, k=3, family=family)
            theta = random_theta(rng, data, family)
            m = moments(data, theta)
            fd = fd_gradient(stacked_loss(data, family), theta.stacked())
            analytic = -m.stacked()
            scale = max(1.0, float(np.abs(fd).max()))
            np.testing.assert_allclose(analytic, fd, atol=2e-6 * scale)


def test_hessian_matches_finite_differences(rng):
    for family in ScaleFamily:
        for _ in range(8):
            data, _, _ = make_dataset(rng, n=60, k=3, family=family)
            theta = random_theta(rng, data, family)
            h = hessian(data, theta).total
            fun = stacked_loss(data, family)
            v0 = theta.stacked()
            fd = np.zeros_like(h)
            for j in range(v0.size):
                step = 1e-5 * max(1.0, abs(v0[j]))
                hi = v0.copy()
                lo = v0.copy()
                hi[j] += step
                lo[j] -= step
                fd[:, j] = (
                    fd_gradient(fun, hi) - fd_gradient(fun, lo)
                ) / (2.0 * step)
            scale = max(1.0, float(np.abs(fd).max()))
            np.testing.assert_allclose(h, fd, atol=5e-4 * scale)


def test_hessian_is_symmetric_and_h1_positive_definite(rng):
    for family in ScaleFamily:
        for _ in range(10):
            data, _, _ = make_dataset(rng, n=80, k=4, family=family)
            theta = random_theta(rng, data, family)
            split = hessian(data, theta)
            np.testing.assert_allclose(split.h1, split.h1.T, atol=1e-12)
            np.testing.assert_allclose(split.total, split.total.T, atol=1e-12)
            eigs = np.linalg.eigvalsh(split.h1)
            assert eigs.min() > 0.0


def test_weighted_lstsq_matches_normal_equations(rng):
    x = np.column_stack([np.ones(50), rng.standard_normal((50, 3))])
    y = rng.standard_normal(50)
    v = rng.uniform(0.2, 3.0, size=50)
    beta = weighted_lstsq(x, y, v)
    xtw = x.T / v
    expected = np.linalg.solve(xtw @ x, xtw @ y)
    np.testing.assert_allclose(beta, expected, rtol=1e-10)


def test_weighted_lstsq_rank_deficient(rng):
    z = rng.standard_normal(30)
    x = np.column_stack([np.ones(30), z, z])
    with pytest.raises(RankDeficient):
        weighted_lstsq(x, rng.standard_normal(30), np.ones(30))


def test_concentrated_beta_minimizes_over_beta(rng):
    for family in ScaleFamily:
        data, _, _ = make_dataset(rng, n=80, k=3, family=family)
        gamma = feasible_gamma(rng, data.x, family)
        beta_c = concentrated_beta(data, gamma, family)
        base = loss(data, ThetaEstimate(beta=beta_c, gamma=gamma, scale=family))
        for _ in range(25):
            other = beta_c + rng.uniform(-0.5, 0.5, size=3)
            trial = loss(data, ThetaEstimate(beta=other, gamma=gamma, scale=family))
            assert trial >= base - 1e-12


def test_concentrated_loss_consistency(rng):
    for family in ScaleFamily:
        data, _, _ = make_dataset(rng, n=60, k=3, family=family)
        gamma = feasible_gamma(rng, data.x, family)
        beta_c = concentrated_beta(data, gamma, family)
        direct = loss(data, ThetaEstimate(beta=beta_c, gamma=gamma, scale=family))
        np.testing.assert_allclose(
            concentrated_loss(data, gamma, family), direct, rtol=1e-14
        )


def test_concentrated_beta_rejects_infeasible_gamma(rng):
    data, _, _ = make_dataset(rng, n=50, k=3, family=ScaleFamily.LINEAR)
    with pytest.raises(Infeasible):
        concentrated_beta(data, np.array([-2.0, 0.0, 0.0]), ScaleFamily.LINEAR)
