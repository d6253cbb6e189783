"""Sample objective for joint mean/scale estimation.

The sample criterion at theta = (beta, gamma) is

    Q_n(theta) = n^-1 sum_i 0.5 * {e_i^2 + 1} * s(x_i'gamma),
    e_i = (y_i - x_i'beta) / s(x_i'gamma),

jointly convex in (beta, gamma) for scale families with s1 > 0, s2 >= 0.
This module evaluates Q_n, its gradient through the two moment functions

    m1 = n^-1 sum_i x_i e_i
    m2 = n^-1 sum_i 0.5 * x_i s1(x_i'gamma) (e_i^2 - 1),

(grad Q_n = -(m1, m2) stacked), the analytic Hessian split into a positive
definite part and the s2 correction, and the closed-form concentration of
beta at fixed gamma.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import Dataset, Infeasible, RankDeficient, ScaleFamily, ThetaEstimate
from .scale import ScaleEval, scale_eval

# Relative pivot floor below which the normal-equations Cholesky is abandoned
# for a QR solve of the whitened system.
CHOL_PIVOT_RTOL = 1e-12


@dataclass(frozen=True)
class MomentVector:
    """Sample moment blocks; the loss gradient is -(m1, m2) stacked."""

    m1: np.ndarray
    m2: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.m1, self.m2])


@dataclass(frozen=True)
class HessianSplit:
    """Analytic Hessian h1 + h2.

    h1 collects the blocks xx'/s, (xx'/s) s1 e, (xx'/s)(s1 e)^2 and is
    positive definite whenever x has full column rank; h2 carries only the
    gamma-gamma correction -0.5 xx' s2 (e^2 - 1), identically zero for the
    linear family.
    """

    h1: np.ndarray
    h2: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.h1 + self.h2


def weighted_lstsq(x: np.ndarray, y: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Minimize sum_i (y_i - x_i'b)^2 / v_i over b for strictly positive v.

    Solves the normal equations by Cholesky, falling back to a QR solve of
    the whitened system when the smallest Cholesky pivot drops below
    1e-12 (relative) or the factorization fails outright.
    """
    rw = 1.0 / np.sqrt(v)
    u = x * rw[:, None]
    w = y * rw
    a = u.T @ u
    b = u.T @ w
    try:
        c = np.linalg.cholesky(a)
        d = np.diagonal(c)
        if d.min() ** 2 <= CHOL_PIVOT_RTOL * d.max() ** 2:
            raise np.linalg.LinAlgError("pivot underflow")
        return scipy.linalg.cho_solve((c, True), b)
    except np.linalg.LinAlgError:
        coef, _, rank, _ = np.linalg.lstsq(u, w, rcond=None)
        if rank < x.shape[1]:
            raise RankDeficient("weighted design matrix is rank deficient") from None
        return coef


def _require_feasible(data: Dataset, theta: ThetaEstimate) -> np.ndarray:
    t = data.x @ theta.gamma
    if theta.scale is ScaleFamily.LINEAR and t.min() <= 0.0:
        raise Infeasible("s(x'gamma) <= 0 at some sample point")
    return t


def _residuals(data: Dataset, theta: ThetaEstimate, se: ScaleEval) -> np.ndarray:
    return (data.y - data.x @ theta.beta) / se.s


def loss(data: Dataset, theta: ThetaEstimate) -> float:
    """Q_n(theta); raises Infeasible when the scale is not positive on the sample."""
    t = _require_feasible(data, theta)
    se = scale_eval(theta.scale, t, validate=False)
    e = _residuals(data, theta, se)
    return float(np.mean(0.5 * (e * e + 1.0) * se.s))


def moments(data: Dataset, theta: ThetaEstimate) -> MomentVector:
    """Sample means of the two moment functions at theta."""
    t = _require_feasible(data, theta)
    se = scale_eval(theta.scale, t, validate=False)
    e = _residuals(data, theta, se)
    m1 = data.x.T @ e / data.n
    m2 = 0.5 * (data.x.T @ (se.s1 * (e * e - 1.0))) / data.n
    return MomentVector(m1=m1, m2=m2)


def _hessian_blocks(x: np.ndarray, e: np.ndarray, se: ScaleEval):
    """The three h1 blocks and the gamma-gamma h2 block, as k x k arrays."""
    n = x.shape[0]
    inv_s = 1.0 / se.s
    s1e = se.s1 * e
    h_bb = x.T @ (x * inv_s[:, None]) / n
    h_bg = x.T @ (x * (inv_s * s1e)[:, None]) / n
    h_gg1 = x.T @ (x * (inv_s * s1e * s1e)[:, None]) / n
    h_gg2 = -0.5 * (x.T @ (x * (se.s2 * (e * e - 1.0))[:, None])) / n
    return h_bb, h_bg, h_gg1, h_gg2


def hessian(data: Dataset, theta: ThetaEstimate) -> HessianSplit:
    """Analytic Hessian of Q_n at theta, split as h1 + h2."""
    t = _require_feasible(data, theta)
    se = scale_eval(theta.scale, t, validate=False)
    e = _residuals(data, theta, se)
    h_bb, h_bg, h_gg1, h_gg2 = _hessian_blocks(data.x, e, se)
    k = data.k
    h1 = np.zeros((2 * k, 2 * k))
    h1[:k, :k] = h_bb
    h1[:k, k:] = h_bg
    h1[k:, :k] = h_bg.T
    h1[k:, k:] = h_gg1
    h2 = np.zeros_like(h1)
    h2[k:, k:] = h_gg2
    return HessianSplit(h1=h1, h2=h2)


def concentrated_beta(data: Dataset, gamma, family) -> np.ndarray:
    """The beta minimizing Q_n at fixed gamma: weighted least squares with
    weights 1/s(x_i'gamma)."""
    gamma = np.asarray(gamma, dtype=float)
    t = data.x @ gamma
    if family is ScaleFamily.LINEAR and t.min() <= 0.0:
        raise Infeasible("s(x'gamma) <= 0 at some sample point")
    se = scale_eval(family, t, validate=False)
    return weighted_lstsq(data.x, data.y, se.s)


def concentrated_loss(data: Dataset, gamma, family) -> float:
    """Q_n at (concentrated_beta(gamma), gamma)."""
    beta = concentrated_beta(data, gamma, family)
    theta = ThetaEstimate(beta=beta, gamma=np.asarray(gamma, float), scale=family)
    return loss(data, theta)
