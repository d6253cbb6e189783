"""Least squares with linear inequality constraints.

Solves min_b ||a b - y||^2 subject to g b >= h by the classical reduction
chain: QR of the objective matrix turns the problem into least distance
programming (LDP), and LDP is solved through its non-negative least squares
dual (Lawson and Hanson's construction).  scipy's active-set NNLS does the
combinatorial work.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.optimize

from .core import QPInfeasible, RankDeficient

# Feasibility slack for the NNLS residual test; an LDP residual this close
# to zero means the constraint polytope is empty.
LDP_RTOL = 1e-10


def ldp(g: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Least distance programming: min ||z|| subject to g z >= h."""
    p, m = g.shape
    e = np.vstack([g.T, h[None, :]])  # (m + 1) x p
    f = np.zeros(m + 1)
    f[-1] = 1.0
    u, rnorm = scipy.optimize.nnls(e, f)
    if rnorm <= LDP_RTOL:
        raise QPInfeasible("constraint set is empty")
    r = e @ u - f
    return -r[:m] / r[m]


def lsi(a: np.ndarray, y: np.ndarray, g: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Inequality-constrained least squares via QR reduction to LDP.

    a must have full column rank; g holds one row per constraint g_i'b >= h_i.
    """
    n, m = a.shape
    q, r = np.linalg.qr(a)
    d = np.abs(np.diagonal(r))
    if d.min() <= 1e-12 * d.max():
        raise RankDeficient("constrained least squares needs full column rank")
    qty = q.T @ y
    # With b = r^-1 (z + qty), the objective is ||z||^2 + const and the
    # constraints become (g r^-1) z >= h - (g r^-1) qty.
    g_tilde = scipy.linalg.solve_triangular(r, g.T, trans="T").T
    z = ldp(g_tilde, h - g_tilde @ qty)
    return scipy.linalg.solve_triangular(r, z + qty)
