"""User-facing fitting routines.

fit_mvr       joint mean/scale fit by the damped Newton solver
fit_ols       ordinary least squares as the constant-scale special case
fit_wls       two-stage weighted least squares, linear or exponential
              first-stage variance model with weight floor delta
              (the flexible specifications of Romano and Wolf, 2017)
gls_oracle    known-variance weighted least squares (test benchmark)
sequential_oracle
              infeasible two-step estimator: weighted OLS for beta, then
              weighted nonlinear least squares of squared residuals on the
              squared scale (test oracle for the joint fit)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    BadArgument,
    Dataset,
    EstimatorTag,
    MvregError,
    NonPositiveSigma,
    LogOfZeroRegressor,
    ScaleFamily,
    ThetaEstimate,
    as_family,
)
from .constrained_ls import lsi
from .objective import moments, weighted_lstsq
from .scale import scale_eval, scale_inverse
from .solver import SolverOptions, SolverStatus, initialize, minimize
from .core import FitResult

__all__ = [
    "WlsVariant",
    "fit_mvr",
    "fit_ols",
    "fit_wls",
    "gls_oracle",
    "sequential_oracle",
    "gaussian_pseudo_loglik",
]

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class WlsVariant:
    """First-stage weight model for fit_wls.

    LINEAR regresses log(max(delta^2, u_i^2)) on |x_i| (non-intercept
    columns) imposing the n constraints nu + pi'|x_i| >= delta, and uses the
    fitted linear index as the weight.  EXPONENTIAL regresses the same
    response on log|x_i| without constraints and exponentiates the fit.
    """

    kind: ScaleFamily
    delta: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "kind", as_family(self.kind))
        if not self.delta > 0:
            raise BadArgument("delta must be positive")


def _mvr_loss_at(resid: np.ndarray, w: np.ndarray) -> float:
    """The joint objective evaluated at a (residual, per-row scale) pair."""
    e = resid / w
    return float(np.mean(0.5 * (e * e + 1.0) * w))


def fit_mvr(data: Dataset, family, opts: SolverOptions | None = None) -> FitResult:
    """Joint mean/scale fit; converged=False is reported, never silent."""
    family = as_family(family)
    report = minimize(data, family, opts)
    theta = report.theta
    se = scale_eval(family, data.x @ theta.gamma, validate=False)
    resid = data.y - data.x @ theta.beta
    return FitResult(
        theta=theta,
        residuals_std=resid / se.s,
        fitted_scale=se.s,
        loss=report.loss,
        estimator_tag=EstimatorTag.MVR,
        converged=report.status is SolverStatus.CONVERGED,
        iterations=report.iterations,
        grad_norm=report.grad_inf_norm,
    )


def fit_ols(data: Dataset) -> FitResult:
    """Least squares by the normal equations, packaged as a constant-scale fit.

    The fitted scale is the residual root mean square and the recorded loss
    equals it, which is the restricted (gamma-intercept-only) minimum of the
    joint objective.
    """
    theta = initialize(data, ScaleFamily.LINEAR)
    resid = data.y - data.x @ theta.beta
    rms = theta.gamma[0]
    scale = np.full(data.n, rms)
    mom = moments(data, theta)
    grad_norm = float(max(np.abs(mom.m1).max(), abs(mom.m2[0])))
    return FitResult(
        theta=theta,
        residuals_std=resid / rms,
        fitted_scale=scale,
        loss=_mvr_loss_at(resid, scale),
        estimator_tag=EstimatorTag.OLS,
        converged=True,
        iterations=0,
        grad_norm=grad_norm,
    )


def fit_wls(data: Dataset, variant: WlsVariant) -> FitResult:
    """Two-stage weighted least squares with estimated variance weights.

    Stage one fits the weight model on the least-squares residuals; stage
    two solves the weighted normal equations with weight matrix diag(w_hat).
    theta.gamma stores the first-stage coefficients (nu, pi).
    """
    delta = variant.delta
    ols = fit_ols(data)
    u = data.y - data.x @ ols.theta.beta
    proxy = np.maximum(delta**2, u * u)
    xt = data.x[:, 1:]
    if variant.kind is ScaleFamily.LINEAR:
        # The linear weight model is fit on the variance scale; the log
        # transform only linearizes the exponential model below.
        design = np.column_stack([np.ones(data.n), np.abs(xt)])
        coef = lsi(design, proxy, design, np.full(data.n, delta))
        w = design @ coef
        # The constraints hold the fitted index at or above delta up to
        # active-set round-off; clip the dust so weights stay >= delta.
        w = np.maximum(w, delta)
        tag = EstimatorTag.WLS_L
    else:
        if np.any(xt == 0.0):
            raise LogOfZeroRegressor(
                "exponential weight model needs non-zero regressor values"
            )
        design = np.column_stack([np.ones(data.n), np.log(np.abs(xt))])
        coef = weighted_lstsq(design, np.log(proxy), np.ones(data.n))
        w = np.exp(design @ coef)
        tag = EstimatorTag.WLS_E
    beta = weighted_lstsq(data.x, data.y, w)
    resid = data.y - data.x @ beta
    theta = ThetaEstimate(beta=beta, gamma=coef, scale=variant.kind)
    return FitResult(
        theta=theta,
        residuals_std=resid / w,
        fitted_scale=w,
        loss=_mvr_loss_at(resid, w),
        estimator_tag=tag,
        converged=True,
        iterations=0,
        grad_norm=np.nan,
    )


def gls_oracle(data: Dataset, sigma) -> FitResult:
    """Weighted least squares with known standard deviations (weights 1/sigma^2)."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (data.n,):
        raise BadArgument(f"sigma must have length n={data.n}")
    if np.any(sigma <= 0.0):
        raise NonPositiveSigma("sigma must be strictly positive")
    beta = weighted_lstsq(data.x, data.y, sigma * sigma)
    resid = data.y - data.x @ beta
    theta = ThetaEstimate(beta=beta, gamma=np.zeros(data.k), scale=ScaleFamily.LINEAR)
    return FitResult(
        theta=theta,
        residuals_std=resid / sigma,
        fitted_scale=sigma,
        loss=_mvr_loss_at(resid, sigma),
        estimator_tag=EstimatorTag.GLS_ORACLE,
        converged=True,
        iterations=0,
        grad_norm=np.nan,
    )


def sequential_oracle(data: Dataset, family, sigma,
                      opts: SolverOptions | None = None):
    """Infeasible two-step estimator with known sigma.

    Step one regresses y on x with weights 1/sigma.  Step two fits gamma by
    Gauss-Newton on the weighted nonlinear least squares problem

        min_gamma sum_i {(y_i - x_i'beta)^2 - s(x_i'gamma)^2}^2 / sigma_i^3,

    with the same feasibility safeguards as the joint solver.  Returns the
    pair (beta, gamma).
    """
    family = as_family(family)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0.0):
        raise NonPositiveSigma("sigma must be strictly positive")
    opts = opts or SolverOptions()
    beta = weighted_lstsq(data.x, data.y, sigma)
    u2 = (data.y - data.x @ beta) ** 2
    w3 = sigma**1.5

    rms = float(np.sqrt(np.mean(u2)))
    if rms <= 0.0:
        raise NonPositiveSigma("squared residuals are identically zero")
    gamma = np.zeros(data.k)
    gamma[0] = scale_inverse(family, rms)

    def residual_vec(g):
        se = scale_eval(family, data.x @ g)
        return (u2 - se.s**2) / w3, se

    r, se = residual_vec(gamma)
    obj = float(r @ r)
    for _ in range(opts.max_iter):
        jac = -2.0 * (data.x * (se.s * se.s1 / w3)[:, None])
        grad = jac.T @ r
        if np.abs(grad).max() <= opts.grad_tol * max(1.0, obj):
            break
        jtj = jac.T @ jac
        tau = 0.0
        for _ in range(60):
            try:
                step = np.linalg.solve(jtj + tau * np.eye(data.k), -grad)
                break
            except np.linalg.LinAlgError:
                tau = 1e-8 if tau == 0.0 else 2.0 * tau
        t = 1.0
        if family is ScaleFamily.LINEAR:
            lo = data.x @ gamma
            dt = data.x @ step
            shrinking = dt < 0.0
            if shrinking.any():
                t = min(1.0, 0.99 * float(np.min(lo[shrinking] / -dt[shrinking])))
        improved = False
        while t >= 1e-14:
            trial = gamma + t * step
            try:
                r_trial, se_trial = residual_vec(trial)
            except MvregError:
                t *= 0.5
                continue
            obj_trial = float(r_trial @ r_trial)
            if obj_trial < obj:
                improved = True
                break
            t *= 0.5
        if not improved:
            break
        gamma, r, se, obj = trial, r_trial, se_trial, obj_trial
    return beta, gamma


def gaussian_pseudo_loglik(fit: FitResult) -> float:
    """Average Gaussian location-scale log density at the fitted pair:
    mean of -log(scale_i) - e_i^2/2 - log(2*pi)/2."""
    e = fit.residuals_std
    return float(np.mean(-np.log(fit.fitted_scale) - 0.5 * e * e) - 0.5 * LOG_2PI)
