"""Misspecification-robust variance estimation and tests.

Covariance matrices for the joint estimator have the sandwich form
G^-1 S G^-1, where G is the expected Hessian of the objective and S the
second moment of its score.  Three regimes are supported:

GENERAL
    no assumption on the conditional mean or scale functions; every block
    is estimated from the fitted residuals.
CORRECT_MEAN
    the conditional mean is linear, so the cross blocks of G vanish and
    the score cross moment reduces to a third-moment term.
CORRECT_MEAN_VARIANCE
    mean and scale are both correctly specified and the standardized
    error is independent of the regressors with unit variance; the
    remaining blocks collapse to conditional moments of that error.

The parameter covariance is v_hat / n throughout.  The chi-square survival
function and normal quantile are implemented here (regularized incomplete
gamma; rational quantile approximation with one refinement step) so that
the inference path has no dependency beyond numpy.

References
----------
P. J. Acklam, "An algorithm for computing the inverse normal cumulative
distribution function" (2003), for the quantile approximation.
W. H. Press et al., Numerical Recipes, ch. 6.2, for the incomplete gamma
series/continued-fraction split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import (
    BadArgument,
    BadLevel,
    Dataset,
    EstimatorTag,
    FitResult,
    InterceptOnly,
    NegativeDiagonal,
    RankDeficientR,
    SingularG,
    SingularMiddleMatrix,
)
from .scale import scale_eval

__all__ = [
    "VcovRegime",
    "SandwichVcov",
    "WaldResult",
    "sandwich",
    "std_errors",
    "conf_interval",
    "wald_test",
    "het_test",
    "closed_form_beta_vcov",
    "hc0_vcov",
    "chi2_sf",
    "normal_quantile",
]

EIG_CUTOFF_RTOL = 1e-12
SVD_CUTOFF_RTOL = 1e-12


class VcovRegime(Enum):
    GENERAL = "general"
    CORRECT_MEAN = "correct-mean"
    CORRECT_MEAN_VARIANCE = "correct-spec"


def as_regime(regime) -> VcovRegime:
    if isinstance(regime, VcovRegime):
        return regime
    try:
        return VcovRegime(str(regime))
    except ValueError:
        raise BadArgument(f"unknown vcov regime: {regime!r}") from None


@dataclass(frozen=True)
class SandwichVcov:
    """Bread, meat, and assembled sandwich; parameter covariance is v_hat/n."""

    g_hat: np.ndarray
    s_hat: np.ndarray
    v_hat: np.ndarray
    regime: VcovRegime


@dataclass(frozen=True)
class WaldResult:
    statistic: float
    df: int
    p_value: float


def _xtwx(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """n^-1 sum_i w_i x_i x_i' as a k-by-k matrix."""
    return x.T @ (x * w[:, None]) / x.shape[0]


def _stable_inverse(a: np.ndarray, context: str) -> np.ndarray:
    """Invert a symmetric matrix by eigendecomposition with a relative cutoff."""
    a = 0.5 * (a + a.T)
    w, v = np.linalg.eigh(a)
    scale = np.abs(w).max()
    if scale <= 0.0 or w.min() <= EIG_CUTOFF_RTOL * scale:
        raise SingularG(f"{context} is numerically singular")
    return (v / w) @ v.T


def sandwich(data: Dataset, fit: FitResult, regime=VcovRegime.GENERAL,
             small_sample: bool = False) -> SandwichVcov:
    """Sandwich covariance of the stacked (beta, gamma) estimate.

    Accepts joint fits and plain least-squares fits (whose gamma is the
    constant-scale parameterization); two-stage weighted fits carry
    first-stage coefficients in gamma and are rejected.
    """
    if small_sample:
        raise NotImplementedError("small-sample degrees-of-freedom corrections")
    regime = as_regime(regime)
    if fit.estimator_tag not in (EstimatorTag.MVR, EstimatorTag.OLS):
        raise BadArgument(
            f"sandwich requires an mvr or ols fit, got {fit.estimator_tag.value!r}"
        )
    x = data.x
    n, k = data.n, data.k
    theta = fit.theta
    se = scale_eval(theta.scale, x @ theta.gamma, validate=False)
    s, s1, s2 = se.s, se.s1, se.s2
    e = fit.residuals_std

    g11 = _xtwx(x, 1.0 / s)
    s11 = _xtwx(x, e * e)
    if regime is VcovRegime.GENERAL:
        g12 = _xtwx(x, s1 * e / s)
        g22 = _xtwx(x, (s1 * e) ** 2 / s - 0.5 * s2 * (e * e - 1.0))
        s12 = _xtwx(x, 0.5 * s1 * e * (e * e - 1.0))
        s22 = _xtwx(x, 0.25 * (s1 * (e * e - 1.0)) ** 2)
    elif regime is VcovRegime.CORRECT_MEAN:
        g12 = np.zeros((k, k))
        g22 = _xtwx(x, (s1 * e) ** 2 / s - 0.5 * s2 * (e * e - 1.0))
        s12 = _xtwx(x, 0.5 * s1 * e**3)
        s22 = _xtwx(x, 0.25 * (s1 * (e * e - 1.0)) ** 2)
    else:
        g12 = np.zeros((k, k))
        g22 = _xtwx(x, s1 * s1 / s)
        s11 = _xtwx(x, np.ones(n))
        s12 = _xtwx(x, 0.5 * s1 * e**3)
        s22 = _xtwx(x, 0.25 * s1 * s1 * (e**4 - 1.0))

    g_hat = np.block([[g11, g12], [g12.T, g22]])
    s_hat = np.block([[s11, s12], [s12.T, s22]])
    g_hat = 0.5 * (g_hat + g_hat.T)
    s_hat = 0.5 * (s_hat + s_hat.T)
    g_inv = _stable_inverse(g_hat, "g_hat")
    v_hat = g_inv @ s_hat @ g_inv
    v_hat = 0.5 * (v_hat + v_hat.T)
    return SandwichVcov(g_hat=g_hat, s_hat=s_hat, v_hat=v_hat, regime=regime)


def std_errors(vcov: SandwichVcov, n: int):
    """(se_beta, se_gamma) from the diagonal of v_hat/n."""
    if n < 1:
        raise BadArgument("n must be a positive count")
    diag = np.diag(vcov.v_hat) / n
    if np.any(diag < 0.0):
        raise NegativeDiagonal("v_hat has a negative diagonal entry")
    se = np.sqrt(diag)
    k = se.shape[0] // 2
    return se[:k], se[k:]


def conf_interval(estimate: float, se: float, level: float):
    """Two-sided normal interval: estimate -/+ z*se with z the (1+level)/2 quantile."""
    if not 0.0 < level < 1.0:
        raise BadLevel(f"level must be in (0, 1), got {level}")
    if se < 0.0:
        raise BadArgument("se must be nonnegative")
    z = normal_quantile(0.5 * (1.0 + level))
    return estimate - z * se, estimate + z * se


def wald_test(fit: FitResult, vcov: SandwichVcov, r_mat, r_vec, n: int | None = None) -> WaldResult:
    """Wald test of R theta = r against the chi-square with h degrees of freedom.

    n is taken from the residual vector of the fit when not given.
    """
    r_mat = np.atleast_2d(np.asarray(r_mat, dtype=float))
    r_vec = np.atleast_1d(np.asarray(r_vec, dtype=float))
    h, p = r_mat.shape
    if p != vcov.v_hat.shape[0]:
        raise BadArgument("R must have one column per stacked parameter")
    if r_vec.shape != (h,):
        raise BadArgument("r must have one entry per restriction")
    if h > p:
        raise RankDeficientR("more restrictions than parameters")
    sv = np.linalg.svd(r_mat, compute_uv=False)
    if sv[-1] <= SVD_CUTOFF_RTOL * sv[0]:
        raise RankDeficientR("R is not of full row rank")
    if n is None:
        n = fit.residuals_std.shape[0]
    theta = fit.theta.stacked()
    d = r_mat @ theta - r_vec
    middle = r_mat @ (vcov.v_hat / n) @ r_mat.T
    middle = 0.5 * (middle + middle.T)
    sv = np.linalg.svd(middle, compute_uv=False)
    if sv[0] <= 0.0 or sv[-1] <= SVD_CUTOFF_RTOL * sv[0]:
        raise SingularMiddleMatrix("R (v_hat/n) R' is numerically singular")
    stat = float(max(0.0, d @ np.linalg.solve(middle, d)))
    return WaldResult(statistic=stat, df=h, p_value=chi2_sf(stat, h))


def het_test(fit: FitResult, vcov: SandwichVcov) -> WaldResult:
    """Wald test that every non-intercept scale coefficient is zero."""
    k = fit.theta.beta.shape[0]
    if k < 2:
        raise InterceptOnly("the test needs at least one non-intercept regressor")
    r_mat = np.zeros((k - 1, 2 * k))
    r_mat[:, k + 1:] = np.eye(k - 1)
    return wald_test(fit, vcov, r_mat, np.zeros(k - 1))


def closed_form_beta_vcov(data: Dataset, fit: FitResult) -> np.ndarray:
    """(X'O^-1 X)^-1 (X' Psi X) (X'O^-1 X)^-1 with O = diag(fitted scale)
    and Psi = diag(standardized residual squared).

    Equals the beta block of sandwich(..., CORRECT_MEAN).v_hat / n exactly.
    """
    x = data.x
    s = fit.fitted_scale
    e = fit.residuals_std
    a_inv = _stable_inverse(x.T @ (x / s[:, None]), "X'O^-1X")
    b = x.T @ (x * (e * e)[:, None])
    return a_inv @ b @ a_inv


def hc0_vcov(x: np.ndarray, resid: np.ndarray, variance_weights=None) -> np.ndarray:
    """Heteroskedasticity-robust covariance of a (weighted) least-squares fit.

    With weight matrix W = diag(variance_weights) the estimator solves
    X'W^-1 X b = X'W^-1 y and its HC0 covariance is
    (X'W^-1X)^-1 (X'W^-2 diag(u^2) X) (X'W^-1X)^-1.  Unit weights give the
    ordinary HC0 matrix; any constant weight cancels.
    """
    x = np.asarray(x, dtype=float)
    resid = np.asarray(resid, dtype=float)
    n = x.shape[0]
    w = np.ones(n) if variance_weights is None else np.asarray(variance_weights, dtype=float)
    if w.shape != (n,) or np.any(w <= 0.0):
        raise BadArgument("variance weights must be positive and length n")
    a_inv = _stable_inverse(x.T @ (x / w[:, None]), "X'W^-1X")
    b = x.T @ (x * (resid * resid / (w * w))[:, None])
    return a_inv @ b @ a_inv


def _gamma_p_series(a: float, x: float) -> float:
    """Lower regularized incomplete gamma P(a, x) by its power series."""
    term = 1.0 / a
    total = term
    den = a
    for _ in range(1000):
        den += 1.0
        term *= x / den
        total += term
        if abs(term) < abs(total) * 1e-16:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_contfrac(a: float, x: float) -> float:
    """Upper regularized incomplete gamma Q(a, x) by a Lentz continued fraction."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b if b != 0.0 else 1.0 / tiny
    h = d
    for i in range(1, 1000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def chi2_sf(x: float, df) -> float:
    """Survival function of the chi-square distribution with df > 0."""
    df = float(df)
    if not df > 0.0:
        raise BadArgument("df must be positive")
    x = float(x)
    if math.isnan(x):
        raise BadArgument("x must not be NaN")
    if x <= 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    a = 0.5 * df
    half = 0.5 * x
    if half < a + 1.0:
        return 1.0 - _gamma_p_series(a, half)
    return _gamma_q_contfrac(a, half)


_ACKLAM_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
             1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_ACKLAM_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
             6.680131188771972e+01, -1.328068155288572e+01)
_ACKLAM_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
             -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_ACKLAM_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
             3.754408661907416e+00)


def _quantile_lower_half(p: float) -> float:
    """Quantile for p in (0, 0.5]: rational approximation plus one Halley step.

    Restricting to the lower half keeps the CDF evaluation in the refinement
    free of cancellation (erfc of a nonnegative argument).
    """
    a, b, c, d = _ACKLAM_A, _ACKLAM_B, _ACKLAM_C, _ACKLAM_D
    if p < 0.02425:
        q = math.sqrt(-2.0 * math.log(p))
        z = ((((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
             / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0))
    else:
        q = p - 0.5
        r = q * q
        z = ((((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
             / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0))
    err = 0.5 * math.erfc(-z / math.sqrt(2.0)) - p
    u = err * math.sqrt(2.0 * math.pi) * math.exp(0.5 * z * z)
    return z - u / (1.0 + 0.5 * z * u)


def normal_quantile(p: float) -> float:
    """Standard normal quantile; the upper half is reflected into the lower."""
    p = float(p)
    if not 0.0 < p < 1.0:
        raise BadArgument(f"p must be in (0, 1), got {p}")
    if p > 0.5:
        return -_quantile_lower_half(1.0 - p)
    return _quantile_lower_half(p)
