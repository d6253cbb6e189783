"""Shared domain types, input validation, and the package error hierarchy."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg

# Relative pivot tolerance for the full-column-rank check.
RANK_RTOL = 1e-10


class MvregError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(MvregError):
    """Invalid input data."""


class NonFinite(ValidationError):
    pass


class NoIntercept(ValidationError):
    pass


class RankDeficient(ValidationError):
    pass


class TooFewRows(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class DomainViolation(MvregError):
    pass


class Overflow(MvregError):
    pass


class NonPositive(MvregError):
    pass


class Infeasible(MvregError):
    pass


class NonPositiveSigma(MvregError):
    pass


class LogOfZeroRegressor(MvregError):
    pass


class QPInfeasible(MvregError):
    pass


class SingularG(MvregError):
    pass


class NegativeDiagonal(MvregError):
    pass


class BadLevel(MvregError):
    pass


class RankDeficientR(MvregError):
    pass


class SingularMiddleMatrix(MvregError):
    pass


class BadArgument(MvregError):
    pass


class InterceptOnly(MvregError):
    pass


class ConfigError(MvregError):
    pass


class IncompleteGrid(MvregError):
    pass


class ScaleFamily(enum.Enum):
    """Parametric family for the conditional scale s(x'gamma).

    LINEAR uses s(t) = t on (0, inf); the scale parameters must keep
    s(x_i'gamma) > 0 at every sample point.  EXPONENTIAL uses
    s(t) = exp(t) on the whole real line, which is positive everywhere.
    """

    LINEAR = "linear"
    EXPONENTIAL = "exp"


def as_family(family) -> ScaleFamily:
    """Coerce a string ('linear' | 'exp') or ScaleFamily to ScaleFamily."""
    if isinstance(family, ScaleFamily):
        return family
    try:
        return ScaleFamily(family)
    except ValueError:
        raise BadArgument(f"unknown scale family: {family!r}") from None


class EstimatorTag(enum.Enum):
    MVR = "mvr"
    OLS = "ols"
    WLS_L = "wls-l"
    WLS_E = "wls-e"
    GLS_ORACLE = "gls-oracle"


@dataclass(frozen=True)
class Dataset:
    """Outcome vector and design matrix with a leading intercept column.

    Construct through :func:`validate_dataset`; the fields are treated as
    immutable after construction.
    """

    y: np.ndarray
    x: np.ndarray
    column_names: tuple

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def k(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class ThetaEstimate:
    """Stacked mean/scale parameter vector (beta, gamma) with its family tag."""

    beta: np.ndarray
    gamma: np.ndarray
    scale: ScaleFamily

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", gamma)
        if beta.ndim != 1 or gamma.ndim != 1 or beta.shape != gamma.shape:
            raise DimensionMismatch(
                f"beta and gamma must be 1-d with equal length, "
                f"got {beta.shape} and {gamma.shape}"
            )
        if not (np.isfinite(beta).all() and np.isfinite(gamma).all()):
            raise NonFinite("non-finite parameter entries")

    def stacked(self) -> np.ndarray:
        """The 2k vector (beta, gamma)."""
        return np.concatenate([self.beta, self.gamma])


@dataclass(frozen=True)
class FitResult:
    """Output of a fitting routine.

    ``loss`` is the joint mean/scale objective evaluated at the fitted
    (coefficients, per-observation scale) pair, which for OLS reduces to the
    residual root mean square.  For WLS tags ``theta.gamma`` holds the
    first-stage weight-model coefficients rather than a scale-family
    parameter, and for the GLS oracle it is all zeros; ``fitted_scale`` is
    authoritative for those estimators.
    """

    theta: ThetaEstimate
    residuals_std: np.ndarray
    fitted_scale: np.ndarray
    loss: float
    estimator_tag: EstimatorTag
    converged: bool
    iterations: int
    grad_norm: float


def validate_dataset(y, x, names=None) -> Dataset:
    """Validate raw (y, x) input and return a Dataset.

    Checks, in order: consistent dimensions, all entries finite, n >= k >= 1,
    an all-ones column 0, and full column rank (pivoted QR, relative pivot
    tolerance 1e-10).

    Raises
    ------
    DimensionMismatch, NonFinite, TooFewRows, NoIntercept, RankDeficient
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.ndim != 1 or x.ndim != 2 or y.shape[0] != x.shape[0]:
        raise DimensionMismatch(
            f"need 1-d y and 2-d x with matching rows, got y {y.shape}, x {x.shape}"
        )
    if not (np.isfinite(y).all() and np.isfinite(x).all()):
        raise NonFinite("y and x must contain only finite values")
    n, k = x.shape
    if k < 1 or n < k:
        raise TooFewRows(f"need n >= k >= 1, got n={n}, k={k}")
    if not np.all(x[:, 0] == 1.0):
        raise NoIntercept("column 0 of x must be identically 1")
    r = scipy.linalg.qr(x, mode="r", pivoting=True)[0]
    d = np.abs(np.diagonal(r))
    if d.size and d.min() <= RANK_RTOL * d.max():
        raise RankDeficient("design matrix is rank deficient")
    if names is None:
        names = ("intercept",) + tuple(f"x{j}" for j in range(1, k))
    else:
        names = tuple(str(c) for c in names)
        if len(names) != k:
            raise DimensionMismatch(f"{len(names)} names for {k} columns")
    return Dataset(y=y, x=x, column_names=names)


def is_feasible(theta: ThetaEstimate, data: Dataset) -> bool:
    """True iff min_i s(x_i'gamma) > 0 on the sample."""
    if theta.gamma.shape[0] != data.k:
        raise DimensionMismatch(
            f"gamma has length {theta.gamma.shape[0]}, design has k={data.k}"
        )
    if theta.scale is ScaleFamily.EXPONENTIAL:
        return True
    t = data.x @ theta.gamma
    return bool(t.min() > 0.0)
