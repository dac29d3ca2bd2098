"""Joint embedding dictionary model trained on labelled seen classes.

Minimises, over dictionary ``D`` (p x d, unit-ball columns), codes ``C``
(d x m) and compatibility ``V`` (d x q)::

    ||X - D C||_F^2 + alpha ||C^T V A - Y||_F^2 + beta ||V A||_F^2

by block-coordinate descent: codes and compatibility have closed forms,
the dictionary step is delegated to :mod:`zsldict.dict_admm`.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .core_types import (
    Hyperparams, JedmModel, SeenDataset, ShapeError, SolverError, dense,
    rng_stream, validate_seen,
)
from .dict_admm import project_unit_ball, solve_dictionary

logger = logging.getLogger(__name__)


@dataclass
class TrainState:
    D: np.ndarray
    C: Optional[np.ndarray]
    V: np.ndarray
    iter: int = 0
    objective: float = np.inf
    substeps: list = field(default_factory=list)   # (iter, step, objective)


def ridge(G: np.ndarray, eps: float) -> np.ndarray:
    """``G + eps * s * I`` with ``s`` the mean absolute diagonal of ``G``."""
    scale = float(np.mean(np.abs(np.diag(G))))
    if scale == 0.0:
        scale = 1.0
    return G + eps * scale * np.eye(G.shape[0])


def ridge_solve(G: np.ndarray, B: np.ndarray, eps: float, what: str) -> np.ndarray:
    """Solve ``G Z = B``, adding :func:`ridge` only when ``G`` is numerically rank deficient.

    A well-conditioned system (condition number at most ``1 / eps``) is solved
    exactly, so the guard never biases a closed form that needs no help.
    """
    cond = np.linalg.cond(G)
    if np.isfinite(cond) and cond * eps <= 1.0:
        return spd_solve(G, B, what)
    return spd_solve(ridge(G, eps), B, what)


def spd_solve(G: np.ndarray, B: np.ndarray, what: str) -> np.ndarray:
    """Solve ``G Z = B`` for symmetric positive (semi)definite ``G``."""
    with warnings.catch_warnings():
        # an ill-conditioned warning is treated like a failed factorisation
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            return scipy.linalg.solve(G, B, assume_a="pos", check_finite=False)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, scipy.linalg.LinAlgWarning):
            pass
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > 1e15:
        raise SolverError(f"{what}: system is singular after regularisation (condition estimate {cond:.3g})")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        return scipy.linalg.solve(G, B, check_finite=False)


def _check_shapes(D, C, V, ds: SeenDataset):
    p, m = ds.X.shape
    q, M = ds.A.shape
    if D is not None and D.shape[0] != p:
        raise ShapeError(f"dictionary has {D.shape[0]} rows, features have p={p}", "p")
    d = D.shape[1] if D is not None else V.shape[0]
    if C is not None and C.shape != (d, m):
        raise ShapeError(f"codes have shape {C.shape}, expected ({d}, {m})", "d")
    if V is not None and V.shape != (d, q):
        raise ShapeError(f"compatibility has shape {V.shape}, expected ({d}, {q})", "q")
    if ds.Y.shape != (m, M):
        raise ShapeError(f"labels have shape {ds.Y.shape}, expected ({m}, {M})", "m")


def jedm_objective(D, C, V, ds: SeenDataset, h: Hyperparams) -> float:
    """Value of the three-term objective; the column constraint is not included."""
    D, C, V = np.asarray(D), np.asarray(C), np.asarray(V)
    _check_shapes(D, C, V, ds)
    recon = ds.X - D @ C
    VA = V @ ds.A
    fit = C.T @ VA - ds.Y
    return float(np.sum(recon * recon) + h.alpha * np.sum(fit * fit) + h.beta * np.sum(VA * VA))


def update_codes(D, V, ds: SeenDataset, h: Hyperparams) -> np.ndarray:
    """C = (D^T D + alpha V A A^T V^T)^-1 (D^T X + alpha V A Y^T)."""
    D, V = np.asarray(D), np.asarray(V)
    _check_shapes(D, None, V, ds)
    VA = V @ ds.A
    G = D.T @ D + h.alpha * (VA @ VA.T)
    B = D.T @ ds.X + h.alpha * (VA @ ds.Y.T)
    return ridge_solve(G, B, h.ridge_eps, "code update")


def update_compat(C, ds: SeenDataset, h: Hyperparams) -> np.ndarray:
    """V = (C C^T + gamma I)^-1 (C Y A^T) (A A^T)^-1 with gamma = beta / alpha."""
    C = np.asarray(C)
    if C.shape[1] != ds.X.shape[1]:
        raise ShapeError(f"codes have {C.shape[1]} columns, expected m={ds.X.shape[1]}", "m")
    d = C.shape[0]
    left = C @ C.T + h.gamma * np.eye(d)
    AAt = ds.A @ ds.A.T
    middle = C @ ds.Y @ ds.A.T
    W = ridge_solve(left, middle, h.ridge_eps, "compatibility update (codes)")
    try:
        # W (A A^T)^-1 computed as the transpose of a solve against the symmetric factor
        return ridge_solve(AAt, W.T, h.ridge_eps, "compatibility update").T
    except SolverError as exc:
        rank = np.linalg.matrix_rank(ds.A)
        raise SolverError(f"{exc}; label embeddings have rank {rank} of q={ds.A.shape[0]}") from exc


def initial_dictionary(p: int, d: int, seed: int) -> np.ndarray:
    rng = rng_stream(seed, "init")
    return project_unit_ball(rng.standard_normal((p, d)))


def train_jedm(ds: SeenDataset, h: Hyperparams, seed: int = 42,
               callback: Optional[Callable[[int, str, TrainState], None]] = None,
               return_state: bool = False):
    """Alternate code, compatibility and dictionary updates until the objective settles.

    Stops when the relative objective change between outer iterations drops
    below ``h.outer_tol`` or after ``h.max_outer_iters`` iterations.  If
    ``callback`` is given it is called after each sub-step with the step name
    (``"codes"``, ``"compat"`` or ``"dict"``).
    """
    problems = validate_seen(ds)
    if problems:
        raise ValueError("invalid seen dataset: " + "; ".join(problems))
    p, m = ds.X.shape
    q = ds.A.shape[0]
    d = h.resolve_latent_dim(p, m)
    if d > p:
        raise ValueError(f"latent_dim d={d} exceeds feature dimension p={p}")

    state = TrainState(D=initial_dictionary(p, d, seed), C=None, V=np.zeros((d, q)))
    trace = []
    prev = None
    for it in range(1, h.max_outer_iters + 1):
        state.iter = it
        try:
            state.C = update_codes(state.D, state.V, ds, h)
            _record(state, ds, h, "codes", callback)
            state.V = update_compat(state.C, ds, h)
            _record(state, ds, h, "compat", callback)
            state.D = solve_dictionary(ds.X, state.C, state.D, rho=h.admm_rho,
                                       tol=h.admm_tol, max_iters=h.admm_max_iters)
            _record(state, ds, h, "dict", callback)
        except SolverError as exc:
            raise SolverError(f"outer iteration {it}: {exc}") from exc
        trace.append(state.objective)
        logger.debug("iteration %d objective %.10g", it, state.objective)
        if prev is not None and abs(prev - state.objective) <= h.outer_tol * max(abs(prev), 1e-300):
            break
        prev = state.objective

    model = JedmModel(D=dense(state.D, "D_s"), V=dense(state.V, "V"), hyper=h,
                      objective_trace=tuple(trace), seed=seed)
    if return_state:
        return model, state
    return model


def _record(state: TrainState, ds, h, step: str, callback):
    state.objective = jedm_objective(state.D, state.C, state.V, ds, h)
    state.substeps.append((state.iter, step, state.objective))
    if callback is not None:
        callback(state.iter, step, state)
