"""ADMM for the column-constrained dictionary subproblem.

Solves::

    min_D ||X - D C||_F^2   s.t.  ||d_i||_2 <= 1 for every column i

by splitting D = R, where R carries the unit-ball constraint, and running
scaled-dual ADMM.  The D-step solves the normal equations

    D (C C^T + rho I) = X C^T + rho (R - U)

and the R-step is a column-wise projection onto the unit ball.

When no penalty is given, rho is fixed for the whole call from the problem
scale: a tenth of the mean eigenvalue of C C^T (curvature) plus a fifth of
the mean column norm of X C^T (size of the constraint multipliers when the
unit-ball constraint is active).  The penalty is never adapted mid-run.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

logger = logging.getLogger(__name__)


@dataclass
class AdmmState:
    D: np.ndarray
    R: np.ndarray
    U: np.ndarray
    rho: float
    iter: int = 0
    primal_res: float = np.inf
    dual_res: float = np.inf
    converged: bool = False
    objective_history: list = field(default_factory=list)
    best: np.ndarray | None = None
    best_objective: float = np.inf


def project_unit_ball(R) -> np.ndarray:
    """Scale every column with l2 norm above one back onto the unit sphere."""
    R = np.asarray(R, dtype=np.float64)
    norms = np.linalg.norm(R, axis=0)
    return R / np.maximum(1.0, norms)


def reconstruction_error(X, D, C) -> float:
    resid = X - D @ C
    return float(np.sum(resid * resid))


def default_rho(X, C) -> float:
    XCt = np.asarray(X) @ np.asarray(C).T
    curvature = float(np.sum(np.asarray(C) ** 2)) / C.shape[0]
    multiplier = float(np.mean(np.linalg.norm(XCt, axis=0)))
    rho = 0.1 * curvature + 0.2 * multiplier
    return rho if rho > 0 else 1.0


def admm_dictionary(X, C, D_init, rho: float | None = None, tol: float = 1e-6,
                    max_iters: int = 100) -> AdmmState:
    """Run ADMM and return the full final state.

    ``primal_res`` is ``||D - R||_F`` and ``dual_res`` is ``||R - R_prev||_F``,
    both divided by ``sqrt(p d)`` so the tolerance is a per-entry RMS value in
    dictionary units.
    The iterate with the lowest objective among the projected warm start and
    every R iterate is kept in ``best``.
    """
    X = np.asarray(X, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    D_init = np.asarray(D_init, dtype=np.float64)
    p, d = D_init.shape
    if X.shape[0] != p or C.shape[0] != d or X.shape[1] != C.shape[1]:
        raise ValueError(f"inconsistent shapes X{X.shape} C{C.shape} D{D_init.shape}")
    if rho is None:
        rho = default_rho(X, C)
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")

    G = C @ C.T + rho * np.eye(d)
    factor = cho_factor(G, lower=True, check_finite=False)
    XCt = X @ C.T
    scale = np.sqrt(p * d)

    R = project_unit_ball(D_init)
    state = AdmmState(D=D_init.copy(), R=R, U=np.zeros_like(R), rho=rho)
    state.best = R.copy()
    state.best_objective = reconstruction_error(X, R, C)
    state.objective_history.append(state.best_objective)

    for it in range(1, max_iters + 1):
        # D G = XC^T + rho(R - U); G symmetric, so solve G D^T = (...)^T
        rhs = XCt + rho * (state.R - state.U)
        state.D = cho_solve(factor, rhs.T, check_finite=False).T
        R_prev = state.R
        state.R = project_unit_ball(state.D + state.U)
        state.U = state.U + state.D - state.R
        state.iter = it
        state.primal_res = float(np.linalg.norm(state.D - state.R)) / scale
        state.dual_res = float(np.linalg.norm(state.R - R_prev)) / scale

        obj = reconstruction_error(X, state.R, C)
        if obj > state.objective_history[-1] * (1 + 1e-6) + 1e-300:
            logger.debug("ADMM objective rose at iteration %d: %.6g -> %.6g",
                         it, state.objective_history[-1], obj)
        state.objective_history.append(obj)
        if obj <= state.best_objective:
            state.best_objective = obj
            state.best = state.R.copy()

        if max(state.primal_res, state.dual_res) < tol:
            state.converged = True
            break

    if not state.converged:
        logger.info("ADMM stopped after %d iterations (primal %.3g, dual %.3g)",
                    state.iter, state.primal_res, state.dual_res)
    return state


def solve_dictionary(X, C, D_init, rho: float | None = None, tol: float = 1e-6,
                     max_iters: int = 100) -> np.ndarray:
    """Feasible dictionary minimising ``||X - D C||_F^2`` over unit-ball columns."""
    return admm_dictionary(X, C, D_init, rho=rho, tol=tol, max_iters=max_iters).best
