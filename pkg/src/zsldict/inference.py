"""Compatibility scoring ``x^T D V a`` and latent-space exports."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_types import ShapeError


@dataclass(frozen=True)
class ScoreTable:
    scores: np.ndarray        # n x N
    predictions: np.ndarray   # n class indices
    margins: np.ndarray       # best minus runner-up score, 0 when N == 1


def table_from_scores(scores) -> ScoreTable:
    """Argmax with lowest-index tie-break (``np.argmax`` returns the first maximum)."""
    scores = np.asarray(scores, dtype=np.float64)
    preds = np.argmax(scores, axis=1)
    if scores.shape[1] > 1:
        top2 = -np.partition(-scores, 1, axis=1)[:, :2]
        margins = top2[:, 0] - top2[:, 1]
    else:
        margins = np.zeros(scores.shape[0])
    return ScoreTable(scores=scores, predictions=preds, margins=margins)


def embed_instances(D, X) -> np.ndarray:
    """Latent image ``D^T X`` of the instances (d x n)."""
    D, X = np.asarray(D), np.asarray(X)
    if D.shape[0] != X.shape[0]:
        raise ShapeError(f"dictionary rows p={D.shape[0]} vs feature rows p={X.shape[0]}", "p")
    return D.T @ X


def embed_prototypes(V, A) -> np.ndarray:
    """Class prototypes ``V A`` in the latent space (d x N)."""
    V, A = np.asarray(V), np.asarray(A)
    if V.shape[1] != A.shape[0]:
        raise ShapeError(f"compatibility columns q={V.shape[1]} vs embedding rows q={A.shape[0]}", "q")
    return V @ A


def score_all(D, V, X, A) -> ScoreTable:
    D, V = np.asarray(D), np.asarray(V)
    if D.shape[1] != V.shape[0]:
        raise ShapeError(f"dictionary columns d={D.shape[1]} vs compatibility rows d={V.shape[0]}", "d")
    latent = embed_instances(D, X)
    protos = embed_prototypes(V, A)
    return table_from_scores(latent.T @ protos)
