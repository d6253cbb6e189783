"""Monte Carlo harness for the lognormal location-scale design.

The data generating process is

    y_i = x_i'beta + sigma_i * eps_i,
    sigma_i = z(alpha) * (gamma_0 + sum_j gamma_j X_ij)^alpha,

with the non-intercept regressors drawn iid standard lognormal and
eps iid standard normal.  z(alpha) normalizes E[sigma^2] to one; for
integer 2*alpha it has a closed form in lognormal moments (E X^r =
exp(r^2/2)) computed by `index_power_moment`, and `calibrate_z` provides
the Monte Carlo estimate for everything else.

`run_experiment` draws the design once per experiment (replications
share the regressors and the true scale, and redraw only the errors),
fits the requested estimators replication by replication, and
aggregates RMSE, t-test rejection frequency, mean confidence interval
length, and coverage for one target coefficient.  The design and the
replications are driven by per-index RNG substreams, so results are
bitwise reproducible for a given seed regardless of the parallelism
degree.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import (
    BadArgument,
    ConfigError,
    Dataset,
    IncompleteGrid,
    MvregError,
    ScaleFamily,
    validate_dataset,
)
from .estimators import WlsVariant, fit_mvr, fit_ols, fit_wls, gls_oracle
from .inference import VcovRegime, hc0_vcov, normal_quantile, sandwich
from .rng import substream

__all__ = [
    "ESTIMATOR_LABELS",
    "DgpConfig",
    "ExperimentConfig",
    "EstimatorMetrics",
    "ExperimentResult",
    "RatioMetric",
    "RatioTable",
    "RejectionCurves",
    "index_power_moment",
    "exact_z",
    "calibrate_z",
    "gen_sample",
    "run_experiment",
    "ratio_table",
    "rejection_curve",
]

ESTIMATOR_LABELS = ("mvr-l", "mvr-e", "ols", "wls-l", "wls-e", "gls-oracle")

CALIBRATION_CHUNK = 1_000_000


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in _compositions(total - head, parts - 1):
            yield (head,) + tail


def index_power_moment(gamma0: float, gammas, m: int) -> float:
    """E[(gamma0 + sum_j gamma_j X_j)^m] for X_j iid standard lognormal.

    Multinomial expansion with E[X^r] = exp(r^2/2); exact for integer m >= 0.
    """
    if m < 0 or m != int(m):
        raise BadArgument("m must be a nonnegative integer")
    m = int(m)
    gammas = tuple(float(g) for g in gammas)
    total = 0.0
    for combo in _compositions(m, len(gammas) + 1):
        term = float(math.factorial(m))
        for j in combo:
            term /= math.factorial(j)
        term *= float(gamma0) ** combo[0]
        for g, j in zip(gammas, combo[1:]):
            term *= g**j * math.exp(0.5 * j * j)
        total += term
    return total


def exact_z(alpha: float, gamma0: float = 1.0, gammas=(1.0, 1.0, 1.0, 1.0)) -> float:
    """z(alpha) = E[(gamma'X)^(2 alpha)]^(-1/2), closed form for integer 2*alpha."""
    two_alpha = 2.0 * float(alpha)
    if abs(two_alpha - round(two_alpha)) > 1e-12:
        raise ConfigError(
            "no closed form for non-integer 2*alpha; pass z_alpha or use calibrate_z"
        )
    return index_power_moment(gamma0, gammas, int(round(two_alpha))) ** -0.5


def calibrate_z(alpha: float, draws: int, rng) -> tuple[float, float]:
    """Monte Carlo z(alpha) for the all-ones design, with a delta-method s.e."""
    if alpha < 0.0:
        raise BadArgument("alpha must be nonnegative")
    if draws < 10**6:
        raise BadArgument("draws must be at least 1e6")
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < draws:
        size = min(CALIBRATION_CHUNK, draws - done)
        x = np.exp(rng.standard_normal((size, 4)))
        v = (1.0 + x.sum(axis=1)) ** (2.0 * alpha)
        total += float(v.sum())
        total_sq += float(v @ v)
        done += size
    mean = total / draws
    var_mean = (total_sq / draws - mean * mean) / draws
    z = mean**-0.5
    se = 0.5 * mean**-1.5 * math.sqrt(max(var_mean, 0.0))
    return z, se


@dataclass(frozen=True)
class DgpConfig:
    """Lognormal-regressor location-scale design; defaults follow the
    five-regressor, all-ones benchmark."""

    n: int
    alpha: float
    k_minus_1: int = 4
    beta: tuple = ()
    gamma: tuple = ()
    z_alpha: float | None = None

    def __post_init__(self):
        k = self.k_minus_1 + 1
        if self.n < k + 1:
            raise ConfigError(f"n={self.n} is too small for k={k} regressors")
        if self.k_minus_1 < 1:
            raise ConfigError("needs at least one non-intercept regressor")
        if self.alpha < 0.0:
            raise ConfigError("alpha must be nonnegative")
        beta = tuple(float(b) for b in self.beta) if self.beta else (1.0,) * k
        gamma = tuple(float(g) for g in self.gamma) if self.gamma else (1.0,) * k
        if len(beta) != k or len(gamma) != k:
            raise ConfigError(f"beta and gamma must have length k={k}")
        if gamma[0] <= 0.0 or any(g < 0.0 for g in gamma):
            raise ConfigError("gamma must be nonnegative with positive intercept")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", gamma)
        if self.z_alpha is None:
            object.__setattr__(
                self, "z_alpha", exact_z(self.alpha, gamma[0], gamma[1:])
            )
        if not self.z_alpha > 0.0:
            raise ConfigError("z_alpha must be positive")

    @property
    def k(self) -> int:
        return self.k_minus_1 + 1


def gen_design(cfg: DgpConfig, rng) -> tuple[np.ndarray, np.ndarray]:
    """One draw of the regressors and the true scale they induce.

    Returns the n x k design (intercept plus standard lognormal columns) and
    the vector sigma_i = z(alpha) * (x_i'gamma)^alpha.
    """
    xt = np.exp(rng.standard_normal((cfg.n, cfg.k_minus_1)))
    x = np.column_stack([np.ones(cfg.n), xt])
    index = x @ np.asarray(cfg.gamma)
    sigma = cfg.z_alpha * index**cfg.alpha
    return x, sigma


def gen_sample(cfg: DgpConfig, rng) -> tuple[Dataset, np.ndarray]:
    """One full draw (regressors and errors): the dataset and true sigma.

    Draw order (regressors first, then errors) is part of the contract so
    that a (seed, replication index) pair pins the sample bitwise.
    """
    x, sigma = gen_design(cfg, rng)
    eps = rng.standard_normal(cfg.n)
    y = x @ np.asarray(cfg.beta) + sigma * eps
    return validate_dataset(y, x), sigma


@dataclass(frozen=True)
class ExperimentConfig:
    dgp: DgpConfig
    replications: int
    seed: int
    estimators: tuple = ("mvr-l", "mvr-e", "ols")
    nominal_level: float = 0.05
    target_coefficient: int | None = None
    null_value: float = 1.0
    use_t_crit: bool = False
    n_jobs: int = 1

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if not 0.0 < self.nominal_level < 1.0:
            raise ConfigError("nominal_level must be in (0, 1)")
        estimators = tuple(self.estimators)
        unknown = [e for e in estimators if e not in ESTIMATOR_LABELS]
        if unknown:
            raise ConfigError(f"unknown estimator labels: {unknown}")
        if len(set(estimators)) != len(estimators):
            raise ConfigError("estimator labels must be distinct")
        object.__setattr__(self, "estimators", estimators)
        if self.target_coefficient is None:
            object.__setattr__(self, "target_coefficient", self.dgp.k - 1)
        if not 0 <= self.target_coefficient < self.dgp.k:
            raise ConfigError("target_coefficient out of range")
        if self.n_jobs < 1:
            raise ConfigError("n_jobs must be at least 1")


@dataclass(frozen=True)
class EstimatorMetrics:
    rmse: float
    rejection_rate: float
    mean_ci_length: float
    coverage: float
    failure_count: int


@dataclass(frozen=True)
class ExperimentResult:
    n: int
    alpha: float
    replications: int
    replications_used: int
    nominal_level: float
    metrics: dict = field(default_factory=dict)


def _fit_for_label(label: str, data: Dataset, sigma: np.ndarray, target: int):
    """(target estimate, target robust s.e.) for one estimator on one sample."""
    x = data.x
    if label in ("mvr-l", "mvr-e"):
        family = ScaleFamily.LINEAR if label == "mvr-l" else ScaleFamily.EXPONENTIAL
        # A fit whose scale is pinned on the feasibility boundary reports
        # converged=False but still carries the constrained minimizer; it is
        # used like any other draw.  Only hard errors drop the replication.
        fit = fit_mvr(data, family)
        vc = sandwich(data, fit, VcovRegime.GENERAL)
        se = math.sqrt(vc.v_hat[target, target] / data.n)
        return fit.theta.beta[target], se
    if label == "ols":
        fit = fit_ols(data)
        vc = hc0_vcov(x, fit.residuals_std * fit.fitted_scale)
    elif label == "wls-l":
        fit = fit_wls(data, WlsVariant(ScaleFamily.LINEAR))
        vc = hc0_vcov(x, fit.residuals_std * fit.fitted_scale, fit.fitted_scale)
    elif label == "wls-e":
        fit = fit_wls(data, WlsVariant(ScaleFamily.EXPONENTIAL))
        vc = hc0_vcov(x, fit.residuals_std * fit.fitted_scale, fit.fitted_scale)
    elif label == "gls-oracle":
        fit = gls_oracle(data, sigma)
        vc = hc0_vcov(x, fit.residuals_std * sigma, sigma * sigma)
    else:
        raise BadArgument(f"unknown estimator label: {label!r}")
    return fit.theta.beta[target], math.sqrt(vc[target, target])


def _run_chunk(cfg: ExperimentConfig, base: Dataset, sigma: np.ndarray,
               lo: int, hi: int):
    """Replications [lo, hi): per-replication target estimates, s.e.s, failures.

    The design (and hence sigma) is shared by every replication; replication
    i redraws only the errors, from substream(seed, i + 1).
    """
    m = len(cfg.estimators)
    est = np.full((hi - lo, m), np.nan)
    se = np.full((hi - lo, m), np.nan)
    fail = np.zeros((hi - lo, m), dtype=bool)
    mean = base.x @ np.asarray(cfg.dgp.beta)
    for i in range(lo, hi):
        eps = substream(cfg.seed, i + 1).standard_normal(cfg.dgp.n)
        data = Dataset(
            y=mean + sigma * eps, x=base.x, column_names=base.column_names
        )
        for j, label in enumerate(cfg.estimators):
            try:
                b, s = _fit_for_label(label, data, sigma, cfg.target_coefficient)
            except (MvregError, np.linalg.LinAlgError):
                fail[i - lo, j] = True
                continue
            est[i - lo, j] = b
            se[i - lo, j] = s
    return lo, est, se, fail


def _critical_value(cfg: ExperimentConfig) -> float:
    p = 1.0 - 0.5 * cfg.nominal_level
    if cfg.use_t_crit:
        from scipy.stats import t as student_t

        return float(student_t.ppf(p, cfg.dgp.n - cfg.dgp.k))
    return normal_quantile(p)


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run all replications and aggregate per-estimator metrics.

    The regressors and true scale are drawn once per experiment, from the
    seed's design substream (index 0); each replication then redraws only
    the errors from its own substream (index i + 1).  A replication where
    any requested estimator fails is dropped for every estimator, keeping
    the cross-estimator comparisons paired; the drops are attributed in
    each estimator's failure_count.
    """
    x, sigma = gen_design(cfg.dgp, substream(cfg.seed, 0))
    base = validate_dataset(np.zeros(cfg.dgp.n), x)
    s_total = cfg.replications
    m = len(cfg.estimators)
    est = np.full((s_total, m), np.nan)
    se = np.full((s_total, m), np.nan)
    fail = np.zeros((s_total, m), dtype=bool)
    if cfg.n_jobs == 1 or s_total == 1:
        _, est, se, fail = _run_chunk(cfg, base, sigma, 0, s_total)
    else:
        chunk = max(1, -(-s_total // (cfg.n_jobs * 4)))
        spans = [(lo, min(lo + chunk, s_total)) for lo in range(0, s_total, chunk)]
        with ProcessPoolExecutor(max_workers=cfg.n_jobs) as pool:
            futures = [
                pool.submit(_run_chunk, cfg, base, sigma, lo, hi)
                for lo, hi in spans
            ]
            for fut in futures:
                lo, e_c, s_c, f_c = fut.result()
                est[lo:lo + e_c.shape[0]] = e_c
                se[lo:lo + e_c.shape[0]] = s_c
                fail[lo:lo + e_c.shape[0]] = f_c

    keep = ~fail.any(axis=1)
    used = int(keep.sum())
    if used == 0:
        raise ConfigError("every replication failed; nothing to aggregate")
    crit = _critical_value(cfg)
    truth = cfg.dgp.beta[cfg.target_coefficient]
    metrics = {}
    for j, label in enumerate(cfg.estimators):
        b = est[keep, j]
        s = se[keep, j]
        err = b - truth
        tstat = (b - cfg.null_value) / s
        metrics[label] = EstimatorMetrics(
            rmse=float(np.sqrt(np.mean(err * err))),
            rejection_rate=float(np.mean(np.abs(tstat) > crit)),
            mean_ci_length=float(np.mean(2.0 * crit * s)),
            coverage=float(np.mean(np.abs(err) <= crit * s)),
            failure_count=int(fail[:, j].sum()),
        )
    return ExperimentResult(
        n=cfg.dgp.n,
        alpha=cfg.dgp.alpha,
        replications=s_total,
        replications_used=used,
        nominal_level=cfg.nominal_level,
        metrics=metrics,
    )


class RatioMetric:
    RMSE = "rmse"
    CI_LENGTH = "ci-length"


@dataclass(frozen=True)
class RatioTable:
    """100 * metric(numerator) / metric(baseline), one panel per numerator;
    rows indexed by n, columns by alpha."""

    metric: str
    baseline: str
    ns: tuple
    alphas: tuple
    panels: dict


@dataclass(frozen=True)
class RejectionCurves:
    """Rejection frequency against alpha, one series per sample size."""

    estimator: str
    ns: tuple
    alphas: tuple
    rates: np.ndarray


def _grid_index(results) -> tuple[tuple, tuple, dict]:
    cells = {}
    for res in results:
        key = (res.n, res.alpha)
        if key in cells:
            raise IncompleteGrid(f"duplicate cell {key}")
        cells[key] = res
    ns = tuple(sorted({n for n, _ in cells}))
    alphas = tuple(sorted({a for _, a in cells}))
    for n in ns:
        for a in alphas:
            if (n, a) not in cells:
                raise IncompleteGrid(f"missing cell (n={n}, alpha={a})")
    return ns, alphas, cells


def _metric_value(res: ExperimentResult, label: str, metric: str) -> float:
    if label not in res.metrics:
        raise IncompleteGrid(
            f"cell (n={res.n}, alpha={res.alpha}) has no estimator {label!r}"
        )
    em = res.metrics[label]
    if metric == RatioMetric.RMSE:
        return em.rmse
    if metric == RatioMetric.CI_LENGTH:
        return em.mean_ci_length
    raise BadArgument(f"unknown metric: {metric!r}")


def ratio_table(results, metric: str, baseline: str,
                numerators=("mvr-l", "mvr-e")) -> RatioTable:
    ns, alphas, cells = _grid_index(results)
    panels = {}
    for label in numerators:
        grid = np.empty((len(ns), len(alphas)))
        for i, n in enumerate(ns):
            for j, a in enumerate(alphas):
                res = cells[(n, a)]
                num = _metric_value(res, label, metric)
                den = _metric_value(res, baseline, metric)
                grid[i, j] = 100.0 * num / den
        # table cells carry one decimal, like the reports they feed
        panels[label] = np.round(grid, 1)
    return RatioTable(metric=metric, baseline=baseline, ns=ns, alphas=alphas,
                      panels=panels)


def rejection_curve(results, estimator: str) -> RejectionCurves:
    ns, alphas, cells = _grid_index(results)
    rates = np.empty((len(ns), len(alphas)))
    for i, n in enumerate(ns):
        for j, a in enumerate(alphas):
            res = cells[(n, a)]
            if estimator not in res.metrics:
                raise IncompleteGrid(
                    f"cell (n={n}, alpha={a}) has no estimator {estimator!r}"
                )
            rates[i, j] = res.metrics[estimator].rejection_rate
    return RejectionCurves(estimator=estimator, ns=ns, alphas=alphas, rates=rates)
