"""Transductive self-training of the unseen-domain dictionary.

Each round predicts every unseen instance with the current dictionary,
promotes the top-scored fraction ``delta`` of each predicted class to
pseudo-labels, and refits the dictionary on those instances by minimising::

    ||X - D C||_F^2 + lambda ||V A - C||_F^2 + mu ||D - D_prev||_F^2

where ``A`` holds the embeddings of the assigned classes, ``V`` is frozen
from the seen-class model and ``D_prev`` is the previous round's dictionary.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core_types import Hyperparams, JedmModel, ShapeError, SolverError, UnseenDataset
from .inference import ScoreTable, score_all
from .jedm import spd_solve

logger = logging.getLogger(__name__)

DEFAULT_SCHEDULE = (0.4, 0.6, 0.8, 1.0)


@dataclass(frozen=True)
class SelfLabeledSet:
    instance_indices: np.ndarray
    assigned_labels: np.ndarray
    scores: np.ndarray
    X: Optional[np.ndarray] = None
    A: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.instance_indices)


@dataclass
class TstdState:
    D_t: np.ndarray
    D_prev: np.ndarray
    V: np.ndarray
    round: int
    delta: float
    predictions: np.ndarray          # predictions that drove this round's selection
    selected: SelfLabeledSet
    refine_objective_trace: list = field(default_factory=list)


def n_selected(n: int, delta: float) -> int:
    """Half-up rounding of ``n * delta``, at least one for a non-empty class."""
    if n <= 0:
        return 0
    # the 1e-9 guard keeps exact halves (e.g. 5 * 0.3) from rounding down in binary
    return min(n, max(1, math.floor(n * delta + 0.5 + 1e-9)))


def select_self_labeled(table: ScoreTable, delta: float, X_t=None, A_t=None) -> SelfLabeledSet:
    """Top ``n_selected(n_c, delta)`` instances of each predicted class, ranked by that class's score."""
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    preds = np.asarray(table.predictions)
    chosen = []
    for c in np.unique(preds):
        members = np.flatnonzero(preds == c)
        # stable sort on negated scores keeps lower instance index first among ties
        order = np.argsort(-table.scores[members, c], kind="stable")
        chosen.append(members[order[:n_selected(len(members), delta)]])
    idx = np.sort(np.concatenate(chosen)) if chosen else np.zeros(0, dtype=int)
    labels = preds[idx]
    scores = table.scores[idx, labels]
    X = A = None
    if X_t is not None:
        X = np.asarray(X_t)[:, idx]
    if A_t is not None:
        A = np.asarray(A_t)[:, labels]
    return SelfLabeledSet(idx, labels, scores, X, A)


def refine_codes(D_t, X, A, V, lam: float) -> np.ndarray:
    """C = (D^T D + lambda I)^-1 (D^T X + lambda V A)."""
    D_t, X, A, V = map(np.asarray, (D_t, X, A, V))
    if D_t.shape[0] != X.shape[0]:
        raise ShapeError(f"dictionary rows {D_t.shape[0]} vs feature rows {X.shape[0]}", "p")
    if V.shape[1] != A.shape[0] or V.shape[0] != D_t.shape[1]:
        raise ShapeError(f"compatibility {V.shape} does not chain with D {D_t.shape} and A {A.shape}", "d")
    d = D_t.shape[1]
    return spd_solve(D_t.T @ D_t + lam * np.eye(d), D_t.T @ X + lam * (V @ A), "refine codes")


def refine_dictionary(X, C, D_prev, mu: float) -> np.ndarray:
    """D = (X C^T + mu D_prev)(C C^T + mu I)^-1."""
    X, C, D_prev = map(np.asarray, (X, C, D_prev))
    d = C.shape[0]
    rhs = X @ C.T + mu * D_prev
    return spd_solve(C @ C.T + mu * np.eye(d), rhs.T, "refine dictionary").T


def refine_objective(D, C, X, A, V, D_prev, lam: float, mu: float) -> float:
    recon = X - D @ C
    pull = V @ A - C
    anchor = D - D_prev
    return float(np.sum(recon * recon) + lam * np.sum(pull * pull) + mu * np.sum(anchor * anchor))


def refit(D_prev, X, A, V, h: Hyperparams) -> tuple[np.ndarray, list]:
    """Alternate the two closed forms from ``D_prev`` until the objective settles."""
    D = np.array(D_prev, dtype=np.float64)
    trace = []
    prev = None
    for _ in range(h.inner_max_iters):
        C = refine_codes(D, X, A, V, h.lam)
        D = refine_dictionary(X, C, D_prev, h.mu)
        obj = refine_objective(D, C, X, A, V, D_prev, h.lam, h.mu)
        trace.append(obj)
        if prev is not None and abs(prev - obj) <= h.inner_tol * max(abs(prev), 1e-300):
            break
        prev = obj
    return D, trace


def validate_schedule(schedule: Sequence[float]) -> tuple:
    schedule = tuple(float(s) for s in schedule)
    if not schedule:
        raise ValueError("schedule is empty")
    if any(not 0 < s <= 1 for s in schedule):
        raise ValueError(f"every delta must lie in (0, 1]: {schedule}")
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError(f"schedule must be strictly increasing: {schedule}")
    return schedule


def run_tstd(model: JedmModel, ut: UnseenDataset, h: Optional[Hyperparams] = None,
             schedule: Sequence[float] = DEFAULT_SCHEDULE):
    """Run every round of the schedule; returns ``(final_predictions, states)``.

    The last round refits on the selection at its delta, then all instances
    are predicted once more with the refitted dictionary.
    """
    h = h or model.hyper
    schedule = validate_schedule(schedule)
    if ut.X.shape[0] != model.p:
        raise ShapeError(f"unseen features have p={ut.X.shape[0]}, model expects p={model.p}", "p")
    if ut.A.shape[0] != model.q:
        raise ShapeError(f"unseen embeddings have q={ut.A.shape[0]}, model expects q={model.q}", "q")

    V = model.V
    D_t = np.array(model.D, dtype=np.float64)
    states = []
    for k, delta in enumerate(schedule):
        table = score_all(D_t, V, ut.X, ut.A)
        chosen = select_self_labeled(table, delta, ut.X, ut.A)
        try:
            D_new, trace = refit(D_t, chosen.X, chosen.A, V, h)
        except SolverError as exc:
            raise SolverError(f"round {k}: {exc}") from exc
        logger.info("round %d delta=%.3g selected %d/%d, %d inner steps",
                    k, delta, len(chosen), ut.X.shape[1], len(trace))
        states.append(TstdState(D_t=D_new, D_prev=D_t, V=V, round=k, delta=delta,
                                predictions=table.predictions, selected=chosen,
                                refine_objective_trace=trace))
        D_t = D_new
    final = score_all(D_t, V, ut.X, ut.A)
    return final.predictions, states
