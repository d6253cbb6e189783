"""Damped Newton minimization of the concentrated objective in gamma.

Beta is concentrated out in closed form at every step (weighted least
squares with weights 1/s), so the Newton system lives in the k gamma
coordinates only.  The direction comes from the gamma block Schur
complement of the full analytic Hessian, which equals the Hessian of the
concentrated objective.  Non-positive-definite Newton systems get a
Levenberg shift tau*I with tau doubling from 1e-8 until the
factorization succeeds, and steps are accepted by Armijo backtracking.

The linear scale family lives on the open polytope {gamma : min_i
x_i'gamma > 0}, and its sample minimizer regularly presses against that
boundary (small samples, strongly misspecified scale).  A bare
fraction-to-boundary rule stalls there: the Newton direction keeps
pointing into the blocking constraint and the feasible step shrinks
geometrically.  The linear path therefore follows a standard log-barrier
continuation: minimize Q(gamma) - mu * mean(log x_i'gamma) for a
decreasing sequence of mu, warm-starting each stage, then polishes with
mu = 0.  The polish decides the reported status, so CONVERGED still
certifies the first-order conditions of the original problem; an optimum
with an active constraint ends as LINE_SEARCH_FAILED or MAX_ITER with
the boundary point as the returned iterate, never silently.

Convergence is declared on the gradient of the FULL problem (both moment
blocks), so a converged report certifies the stationarity conditions of
the joint minimization, not merely the concentrated one.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import (
    BadArgument,
    Dataset,
    NonPositive,
    Overflow,
    RankDeficient,
    ScaleFamily,
    ThetaEstimate,
    TooFewRows,
    as_family,
)
from .objective import _hessian_blocks, weighted_lstsq
from .scale import scale_eval, scale_inverse

# Smallest admitted line-search step before giving up.
MIN_STEP = 1e-14
# Fraction-to-boundary coefficient for linear-scale feasibility.
BOUNDARY_FRACTION = 0.99
# Log-barrier continuation: initial weight (relative to max(1, |loss|)),
# reduction factor per stage, and stopping weight (relative).  The stopping
# weight bounds the duality gap of a boundary-pinned solution at about
# 1e-8 in loss units; pushing further runs into 1/t^2 conditioning limits
# of double precision without moving any reported metric.
BARRIER_MU0 = 1e-1
BARRIER_SHRINK = 0.1
BARRIER_MU_MIN = 1e-8
# Inner stages stop once the barrier gradient drops below this multiple of mu.
BARRIER_INNER_FORCING = 0.1


class SolverStatus(enum.Enum):
    CONVERGED = "converged"
    MAX_ITER = "max-iter"
    LINE_SEARCH_FAILED = "line-search-failed"
    INFEASIBLE_START = "infeasible-start"


@dataclass(frozen=True)
class SolverOptions:
    grad_tol: float = 1e-8
    max_iter: int = 200
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    feasibility_margin: float = 1e-10

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise BadArgument("grad_tol must be positive")
        if self.max_iter < 1:
            raise BadArgument("max_iter must be at least 1")
        if not 0 < self.backtrack_factor < 1:
            raise BadArgument("backtrack_factor must be in (0, 1)")
        if not 0 < self.armijo_c < 1:
            raise BadArgument("armijo_c must be in (0, 1)")
        if not self.feasibility_margin > 0:
            raise BadArgument("feasibility_margin must be positive")


@dataclass(frozen=True)
class SolverReport:
    theta: ThetaEstimate
    loss: float
    grad_inf_norm: float
    iterations: int
    status: SolverStatus


def initialize(data: Dataset, family) -> ThetaEstimate:
    """Feasible start: OLS coefficients and a constant scale equal to the
    OLS residual root mean square."""
    family = as_family(family)
    if data.n <= data.k:
        raise TooFewRows(
            "scale estimation needs more rows than columns; the mean fit "
            "interpolates otherwise"
        )
    beta = weighted_lstsq(data.x, data.y, np.ones(data.n))
    resid = data.y - data.x @ beta
    rms = float(np.sqrt(np.mean(resid * resid)))
    floor = (
        np.finfo(float).eps
        * max(data.n, data.k)
        * max(1.0, float(np.sqrt(np.mean(data.y**2))))
    )
    if rms <= floor:
        raise NonPositive(
            "OLS residuals are numerically zero; a scale fit is degenerate"
        )
    gamma = np.zeros(data.k)
    gamma[0] = scale_inverse(family, rms)
    return ThetaEstimate(beta=beta, gamma=gamma, scale=family)


def _eval_state(data, gamma, family, free):
    """Loss, full moment blocks, and Schur direction ingredients at
    (concentrated beta, gamma).  Returns None when the point is unusable
    (exp index overflow, or the weighted system degenerates)."""
    x, y, n = data.x, data.y, data.n
    t = x @ gamma
    try:
        se = scale_eval(family, t, validate=False)
        beta = weighted_lstsq(x, y, se.s)
    except (Overflow, RankDeficient):
        return None
    e = (y - x @ beta) / se.s
    value = float(np.mean(0.5 * (e * e + 1.0) * se.s))
    m1 = x.T @ e / n
    m2 = 0.5 * (x.T @ (se.s1 * (e * e - 1.0))) / n
    return beta, se, e, value, m1, m2


def _newton_direction(data, e, se, rhs, free, h_extra=None):
    """Solve the (masked) gamma-block Schur system for direction d with

        (Schur + h_extra)[free, free] d[free] = rhs[free].

    Levenberg shift: when the system is not numerically positive definite,
    add tau*I with tau doubling from 1e-8 until the Cholesky factorization
    succeeds.
    """
    h_bb, h_bg, h_gg1, h_gg2 = _hessian_blocks(data.x, e, se)
    h_gg = h_gg1 + h_gg2
    # Schur complement of the beta block: the concentrated Hessian in gamma.
    try:
        c = np.linalg.cholesky(h_bb)
        w = scipy.linalg.cho_solve((c, True), h_bg)
    except np.linalg.LinAlgError:
        w = np.linalg.lstsq(h_bb, h_bg, rcond=None)[0]
    schur = h_gg - h_bg.T @ w
    if h_extra is not None:
        schur = schur + h_extra
    schur = 0.5 * (schur + schur.T)
    a = schur[np.ix_(free, free)]
    g = rhs[free]
    tau = 0.0
    tau_unit = 1e-8 * max(1.0, float(np.abs(np.diag(a)).max()))
    for _ in range(40):
        try:
            c = np.linalg.cholesky(a + tau * np.eye(a.shape[0]))
            step = scipy.linalg.cho_solve((c, True), g)
            break
        except np.linalg.LinAlgError:
            tau = tau_unit if tau == 0.0 else 10.0 * tau
    else:
        raise np.linalg.LinAlgError("Newton system could not be stabilized")
    direction = np.zeros_like(rhs)
    direction[free] = step
    return direction


def _max_feasible_step(x, gamma, direction, margin):
    """Largest step multiple keeping min_i x_i'(gamma + t*d) above the margin."""
    t0 = x @ gamma
    dt = x @ direction
    shrinking = dt < 0.0
    if not shrinking.any():
        return np.inf
    return float(np.min((t0[shrinking] - margin) / -dt[shrinking]))


class _Budget:
    """Accepted-step counter shared across barrier stages and the polish."""

    def __init__(self, limit: int):
        self.limit = limit
        self.used = 0

    @property
    def exhausted(self) -> bool:
        return self.used >= self.limit


def _newton_phase(data, family, opts, free, gamma, state, mu, budget,
                  max_steps=None):
    """Damped Newton on Q - mu*mean(log s) from (gamma, state).

    Returns (gamma, state, status) where status reflects this phase:
    CONVERGED (phase tolerance met), MAX_ITER (budget or max_steps
    exhausted), or LINE_SEARCH_FAILED.  state is the _eval_state tuple at
    the returned gamma.  mu = 0 is the plain problem.
    """
    x, n = data.x, data.n
    barrier = mu > 0.0
    steps_taken = 0

    def barrier_value(se, value):
        if not barrier:
            return value
        return value - mu * float(np.mean(np.log(se.s)))

    while True:
        beta, se, e, value, m1, m2 = state
        # Gradient of the phase objective in gamma; m2 enters with sign
        # flipped (the concentrated gradient is -m2).
        rhs = m2.copy()
        h_extra = None
        if barrier:
            rhs += mu * (x.T @ (1.0 / se.s)) / n
            h_extra = mu * (x.T @ (x / (se.s * se.s)[:, None])) / n
        gnorm = float(np.abs(rhs[free]).max())
        if barrier:
            tol = max(BARRIER_INNER_FORCING * mu, opts.grad_tol * max(1.0, abs(value)))
        else:
            tol = opts.grad_tol * max(1.0, abs(value))
        if gnorm <= tol:
            return gamma, state, SolverStatus.CONVERGED
        if budget.exhausted or (max_steps is not None and steps_taken >= max_steps):
            return gamma, state, SolverStatus.MAX_ITER

        direction = _newton_direction(data, e, se, rhs, free, h_extra)
        slope = float(-rhs @ direction)
        if slope >= 0.0:
            # Not a descent direction even after stabilization; fall back to
            # steepest descent for the phase objective.
            direction = np.zeros_like(rhs)
            direction[free] = rhs[free]
            slope = float(-rhs @ direction)

        step = 1.0
        if family is ScaleFamily.LINEAR:
            t_max = _max_feasible_step(x, gamma, direction, opts.feasibility_margin)
            step = min(1.0, BOUNDARY_FRACTION * t_max)
            if step < 1e-10:
                # The feasible room along the direction is microscopic: the
                # iterate is pinned on the boundary and no useful step exists.
                return gamma, state, SolverStatus.LINE_SEARCH_FAILED
        phase_value = barrier_value(se, value)
        accepted = False
        while step >= MIN_STEP:
            trial = gamma + step * direction
            trial_state = _eval_state(data, trial, family, free)
            if trial_state is not None:
                trial_phase = barrier_value(trial_state[1], trial_state[3])
                if trial_phase <= phase_value + opts.armijo_c * step * slope:
                    accepted = True
                    break
            step *= opts.backtrack_factor
        if not accepted:
            return gamma, state, SolverStatus.LINE_SEARCH_FAILED
        gamma = trial
        state = trial_state
        budget.used += 1
        steps_taken += 1


def _minimize_masked(data, family, opts, free, theta0=None):
    family = as_family(family)
    opts = opts or SolverOptions()
    theta = theta0 if theta0 is not None else initialize(data, family)
    if theta.scale is not family:
        raise BadArgument("starting point family does not match requested family")
    gamma = theta.gamma.copy()

    if family is ScaleFamily.LINEAR and (data.x @ gamma).min() <= 0.0:
        return SolverReport(
            theta=theta,
            loss=np.nan,
            grad_inf_norm=np.inf,
            iterations=0,
            status=SolverStatus.INFEASIBLE_START,
        )

    state = _eval_state(data, gamma, family, free)
    if state is None:
        raise Overflow("the scale model cannot be evaluated at the starting point")

    budget = _Budget(opts.max_iter)
    # Plain damped Newton handles every interior optimum in a handful of
    # steps; give it a short leash first.
    gamma, state, status = _newton_phase(
        data, family, opts, free, gamma, state, 0.0, budget, max_steps=15
    )
    if status is not SolverStatus.CONVERGED:
        if family is ScaleFamily.LINEAR:
            # The minimizer presses against the feasibility boundary (or the
            # route there passes close by): follow the log-barrier central
            # path, then polish.  Stages stop once the smallest scale index
            # reaches the resolution of the feasibility margin; pushing the
            # path further would fight the margin without moving the loss.
            scale0 = max(1.0, abs(state[3]))
            mu = BARRIER_MU0 * scale0
            while mu > BARRIER_MU_MIN * scale0 and not budget.exhausted:
                gamma, state, _ = _newton_phase(
                    data, family, opts, free, gamma, state, mu, budget,
                    max_steps=25,
                )
                if float(state[1].s.min()) < 100.0 * opts.feasibility_margin:
                    break
                mu *= BARRIER_SHRINK
        # The final plain phase decides the reported status; for the linear
        # family its step cap keeps a boundary-pinned problem from spinning
        # through the whole budget in vanishing steps.
        cap = 40 if family is ScaleFamily.LINEAR else None
        gamma, state, status = _newton_phase(
            data, family, opts, free, gamma, state, 0.0, budget, max_steps=cap
        )

    beta, se, e, value, m1, m2 = state
    grad = np.concatenate([m1, m2[free]])
    gnorm = float(np.abs(grad).max())
    if gnorm <= opts.grad_tol * max(1.0, abs(value)):
        status = SolverStatus.CONVERGED
    theta = ThetaEstimate(beta=beta, gamma=gamma, scale=family)
    return SolverReport(
        theta=theta,
        loss=value,
        grad_inf_norm=gnorm,
        iterations=budget.used,
        status=status,
    )


def minimize(data: Dataset, family, opts: SolverOptions | None = None,
             theta0: ThetaEstimate | None = None) -> SolverReport:
    """Minimize the sample objective over (beta, gamma).

    theta0 optionally overrides the default start (used for multi-start
    uniqueness checks); it must be feasible for the linear family.
    """
    free = np.ones(data.k, dtype=bool)
    return _minimize_masked(data, family, opts, free, theta0)


def restricted_minimize(data: Dataset, family, free_gamma_mask,
                        opts: SolverOptions | None = None) -> SolverReport:
    """Minimize with gamma restricted to the masked coordinates.

    The mask must keep the gamma intercept free.  With only the intercept
    free the solution is ordinary least squares with a constant fitted scale
    equal to the residual root mean square.  The reported gradient norm is
    the stationarity residual of the restricted problem (m1 and the free
    components of m2).
    """
    free = np.asarray(free_gamma_mask, dtype=bool)
    if free.shape != (data.k,):
        raise BadArgument(f"mask must have length k={data.k}")
    if not free[0]:
        raise BadArgument("the gamma intercept must stay free")
    return _minimize_masked(data, family, opts, free)
