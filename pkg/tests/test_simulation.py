"""Benchmark data generation, the experiment driver, and table helpers."""

import math

import numpy as np
import pytest

from mvreg.core import BadArgument
from mvreg.rng import substream
from mvreg.simulation import (
    ConfigError,
    DgpConfig,
    ExperimentConfig,
    IncompleteGrid,
    RatioMetric,
    calibrate_z,
    exact_z,
    gen_design,
    gen_sample,
    ratio_table,
    rejection_curve,
    run_experiment,
)

E = math.e

# E[(1 + sum of four iid standard lognormals)^(2 alpha)] in closed form
Z_FROZEN = {
    0.0: 1.0,
    0.5: (1.0 + 4.0 * E**0.5) ** -0.5,
    1.0: (1.0 + 8.0 * E**0.5 + 12.0 * E + 4.0 * E**2) ** -0.5,
    2.0: 0.0059646424,
}


def test_exact_z_frozen_values():
    np.testing.assert_allclose(exact_z(0.0), 1.0, rtol=1e-12)
    np.testing.assert_allclose(exact_z(0.5), Z_FROZEN[0.5], rtol=1e-10)
    np.testing.assert_allclose(exact_z(0.5), 0.3628602509, atol=1e-9)
    np.testing.assert_allclose(exact_z(1.0), Z_FROZEN[1.0], rtol=1e-10)
    np.testing.assert_allclose(exact_z(1.0), 0.1144331232, atol=1e-9)
    np.testing.assert_allclose(exact_z(1.5), 0.0299676630, atol=1e-9)
    np.testing.assert_allclose(exact_z(2.0), 0.0059646424, atol=1e-9)


def test_exact_z_rejects_non_half_integer():
    with pytest.raises(ConfigError):
        exact_z(0.3)


def test_calibrate_z_agrees_with_exact():
    for alpha in (0.5, 1.0):
        z, se = calibrate_z(alpha, 10**6, substream(101, 0))
        assert abs(z - exact_z(alpha)) <= 3.0 * se
    with pytest.raises(BadArgument):
        calibrate_z(1.0, 10**5, substream(101, 0))
    with pytest.raises(BadArgument):
        calibrate_z(-1.0, 10**6, substream(101, 0))


def test_gen_design_shapes_and_moments():
    cfg = DgpConfig(n=40_000, alpha=1.0)
    x, sigma = gen_design(cfg, substream(7, 0))
    assert x.shape == (40_000, 5)
    assert sigma.shape == (40_000,)
    np.testing.assert_allclose(x[:, 0], 1.0)
    # lognormal regressor mean is e^(1/2); its sd is about 2.16 per draw
    mean_se = math.sqrt((E**2 - E) / x.shape[0])
    assert abs(x[:, 1:].mean() - E**0.5) <= 3.0 * mean_se * 2.0
    # sigma is normalized so that E[sigma^2] = 1
    assert abs(np.mean(sigma**2) - 1.0) < 0.1


def test_gen_design_alpha_zero_is_homoskedastic():
    cfg = DgpConfig(n=200, alpha=0.0)
    _, sigma = gen_design(cfg, substream(7, 0))
    np.testing.assert_allclose(sigma, 1.0, rtol=1e-12)


def test_gen_sample_is_design_then_errors():
    cfg = DgpConfig(n=60, alpha=1.0)
    data, sigma = gen_sample(cfg, substream(7, 0))
    x, sigma2 = gen_design(cfg, substream(7, 0))
    np.testing.assert_array_equal(data.x, x)
    np.testing.assert_array_equal(sigma, sigma2)
    eps = (data.y - x @ np.asarray(cfg.beta)) / sigma
    assert np.isfinite(eps).all()


def test_dgp_config_validation():
    with pytest.raises(ConfigError):
        DgpConfig(n=5, alpha=0.0)  # n < k + 1
    with pytest.raises(ConfigError):
        DgpConfig(n=100, alpha=-0.5)
    with pytest.raises(ConfigError):
        DgpConfig(n=100, alpha=0.0, k_minus_1=0)
    with pytest.raises(ConfigError):
        DgpConfig(n=100, alpha=1.0, beta=(1.0, 2.0))
    with pytest.raises(ConfigError):
        DgpConfig(n=100, alpha=1.0, gamma=(0.0, 1.0, 1.0, 1.0, 1.0))
    cfg = DgpConfig(n=100, alpha=0.7, z_alpha=0.5)
    assert cfg.z_alpha == 0.5  # bypasses the closed form


def test_experiment_config_validation():
    dgp = DgpConfig(n=30, alpha=0.0)
    with pytest.raises(ConfigError):
        ExperimentConfig(dgp=dgp, replications=0, seed=1)
    with pytest.raises(ConfigError):
        ExperimentConfig(dgp=dgp, replications=5, seed=1, estimators=("nope",))
    with pytest.raises(ConfigError):
        ExperimentConfig(dgp=dgp, replications=5, seed=1, estimators=("ols", "ols"))
    with pytest.raises(ConfigError):
        ExperimentConfig(dgp=dgp, replications=5, seed=1, nominal_level=0.0)
    with pytest.raises(ConfigError):
        ExperimentConfig(dgp=dgp, replications=5, seed=1, target_coefficient=9)
    with pytest.raises(ConfigError):
        ExperimentConfig(dgp=dgp, replications=5, seed=1, n_jobs=0)
    cfg = ExperimentConfig(dgp=dgp, replications=5, seed=1)
    assert cfg.target_coefficient == 4


def _small_cfg(**kw):
    base = dict(
        dgp=DgpConfig(n=40, alpha=1.0),
        replications=30,
        seed=3,
        estimators=("mvr-e", "ols", "gls-oracle"),
    )
    base.update(kw)
    return ExperimentConfig(**base)


def test_run_experiment_deterministic_and_parallel_identical():
    res1 = run_experiment(_small_cfg())
    res2 = run_experiment(_small_cfg())
    res3 = run_experiment(_small_cfg(n_jobs=2))
    for label in res1.metrics:
        for field in ("rmse", "rejection_rate", "mean_ci_length", "coverage"):
            v1 = getattr(res1.metrics[label], field)
            assert v1 == getattr(res2.metrics[label], field)
            assert v1 == getattr(res3.metrics[label], field)
    assert res1.replications_used <= res1.replications
    assert res1.n == 40 and res1.alpha == 1.0


def test_run_experiment_gls_oracle_dominates():
    cfg = ExperimentConfig(
        dgp=DgpConfig(n=160, alpha=2.0),
        replications=400,
        seed=5,
        estimators=("mvr-l", "mvr-e", "ols", "wls-l", "wls-e", "gls-oracle"),
    )
    res = run_experiment(cfg)
    gls = res.metrics["gls-oracle"].rmse
    for label in ("mvr-l", "mvr-e", "ols", "wls-l", "wls-e"):
        assert gls <= res.metrics[label].rmse * 1.05


def test_ratio_table_self_ratio_and_rounding():
    results = [
        run_experiment(_small_cfg(dgp=DgpConfig(n=40, alpha=a), replications=10))
        for a in (0.0, 1.0)
    ]
    table = ratio_table(results, RatioMetric.RMSE, "ols", numerators=("ols",))
    np.testing.assert_array_equal(table.panels["ols"], 100.0)
    table = ratio_table(results, RatioMetric.CI_LENGTH, "ols", numerators=("mvr-e",))
    grid = table.panels["mvr-e"]
    np.testing.assert_array_equal(grid, np.round(grid, 1))
    assert table.ns == (40,) and table.alphas == (0.0, 1.0)


def test_ratio_table_incomplete_grid():
    r00 = run_experiment(_small_cfg(dgp=DgpConfig(n=40, alpha=0.0), replications=5))
    r11 = run_experiment(
        _small_cfg(dgp=DgpConfig(n=48, alpha=1.0), replications=5)
    )
    with pytest.raises(IncompleteGrid):
        ratio_table([r00, r11], RatioMetric.RMSE, "ols")
    with pytest.raises(IncompleteGrid):
        ratio_table([r00, r00], RatioMetric.RMSE, "ols")
    with pytest.raises(IncompleteGrid):
        ratio_table([r00], RatioMetric.RMSE, "wls-l")  # estimator not in results


def test_rejection_curve_layout_and_degenerate_s():
    results = [
        run_experiment(_small_cfg(dgp=DgpConfig(n=40, alpha=a), replications=1))
        for a in (0.0, 2.0)
    ]
    curves = rejection_curve(results, "mvr-e")
    assert curves.rates.shape == (1, 2)
    assert set(np.unique(curves.rates)).issubset({0.0, 1.0})
    with pytest.raises(IncompleteGrid):
        rejection_curve(results, "wls-l")
