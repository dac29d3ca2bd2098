"""Matrix carrier, dataset bundles, hyperparameters and model containers.

Matrices are plain ``numpy.ndarray`` objects (float64, C-contiguous,
read-only once wrapped by :func:`dense`).  Column ``j`` of a feature
matrix is instance ``j``; column ``c`` of an embedding matrix is class ``c``.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

DenseMatrix = np.ndarray


class ShapeError(ValueError):
    """Raised when two operands disagree on a shared dimension."""

    def __init__(self, message: str, axis: str = ""):
        super().__init__(message)
        self.axis = axis


class SolverError(RuntimeError):
    """A linear system could not be solved even after regularisation."""


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named consumer (``"init"``, ``"synth"``, ``"cv-shuffle"``...).

    Streams are keyed by name, so adding a consumer never shifts another's draws.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(zlib.crc32(name.encode()),)))


def dense(values, name: str = "matrix") -> DenseMatrix:
    """Validate ``values`` as a finite 2-D real matrix and freeze a copy."""
    arr = np.array(values, dtype=np.float64, order="C", copy=True)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"{name}: expected a 2-D matrix, got {arr.ndim} dimensions")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name}: empty matrix of shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise ValueError(f"{name}: non-finite entry at ({bad[0]}, {bad[1]})")
    arr.setflags(write=False)
    return arr


def one_hot_pm(labels: Sequence[int], M: int) -> DenseMatrix:
    """Label matrix with +1 at the true class and -1 elsewhere.

    >>> one_hot_pm([0, 1], 2).tolist()
    [[1.0, -1.0], [-1.0, 1.0]]
    """
    labels = [int(v) for v in labels]
    for pos, lab in enumerate(labels):
        if lab < 0 or lab >= M:
            raise ValueError(f"label {lab} ≥ M={M} at position {pos}" if lab >= M
                             else f"label {lab} < 0 at position {pos}")
    Y = -np.ones((len(labels), M))
    Y[np.arange(len(labels)), labels] = 1.0
    return dense(Y, "Y")


@dataclass(frozen=True)
class SeenDataset:
    X: DenseMatrix          # p x m features
    Y: DenseMatrix          # m x M, entries in {-1, +1}
    A: DenseMatrix          # q x M label embeddings
    class_names: tuple

    @classmethod
    def from_labels(cls, X, labels, A, class_names=None) -> "SeenDataset":
        A = dense(A, "A_s")
        names = tuple(class_names) if class_names is not None else tuple(
            f"seen{c}" for c in range(A.shape[1]))
        return cls(dense(X, "X_s"), one_hot_pm(labels, A.shape[1]), A, names)

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.Y, axis=1)

    @property
    def shape_info(self) -> dict:
        return {"p": self.X.shape[0], "m": self.X.shape[1],
                "q": self.A.shape[0], "M": self.A.shape[1]}

    def subset_classes(self, classes: Sequence[int]) -> "SeenDataset":
        """Restrict to instances of ``classes``; classes are re-indexed in the given order."""
        classes = list(classes)
        remap = {c: k for k, c in enumerate(classes)}
        labels = self.labels
        keep = np.array([lab in remap for lab in labels])
        new_labels = [remap[lab] for lab in labels[keep]]
        return SeenDataset.from_labels(
            self.X[:, keep], new_labels, self.A[:, classes],
            [self.class_names[c] for c in classes])


@dataclass(frozen=True)
class UnseenDataset:
    X: DenseMatrix          # p x n features
    A: DenseMatrix          # q x N label embeddings
    class_names: tuple
    truth_labels: Optional[tuple] = None

    @classmethod
    def build(cls, X, A, class_names=None, truth_labels=None) -> "UnseenDataset":
        X = dense(X, "X_t")
        A = dense(A, "A_t")
        names = tuple(class_names) if class_names is not None else tuple(
            f"unseen{c}" for c in range(A.shape[1]))
        if len(names) != A.shape[1]:
            raise ValueError(f"{len(names)} class names for {A.shape[1]} embedding columns")
        truth = None
        if truth_labels is not None:
            truth = tuple(int(t) for t in truth_labels)
            if len(truth) != X.shape[1]:
                raise ValueError(f"{len(truth)} truth labels for {X.shape[1]} instances")
            if any(t < 0 or t >= A.shape[1] for t in truth):
                raise ValueError("truth label out of range")
        return cls(X, A, names, truth)

    def without_truth(self) -> "UnseenDataset":
        return replace(self, truth_labels=None)


def validate_seen(ds: SeenDataset) -> list[str]:
    """Return every invariant violation of ``ds`` as a readable string."""
    problems = []
    X, Y, A = np.asarray(ds.X), np.asarray(ds.Y), np.asarray(ds.A)
    for name, mat in (("X_s", X), ("Y_s", Y), ("A_s", A)):
        if mat.ndim != 2 or min(mat.shape) < 1:
            problems.append(f"{name} must be a non-empty 2-D matrix, got shape {mat.shape}")
        elif not np.all(np.isfinite(mat)):
            problems.append(f"{name} contains non-finite entries")
    if problems:
        return problems
    if X.shape[1] != Y.shape[0]:
        problems.append(f"shape mismatch: X_s has {X.shape[1]} columns but Y_s has {Y.shape[0]} rows")
    if A.shape[1] != Y.shape[1]:
        problems.append(f"shape mismatch: A_s has {A.shape[1]} columns but Y_s has {Y.shape[1]} classes")
    if len(ds.class_names) != A.shape[1]:
        problems.append(f"{len(ds.class_names)} class names for {A.shape[1]} seen classes")
    if len(set(ds.class_names)) != len(ds.class_names):
        problems.append("duplicate seen class names")
    for i, row in enumerate(Y):
        if not np.all((row == 1.0) | (row == -1.0)):
            problems.append(f"Y_s row {i} has entries outside {{-1, +1}}")
        elif int(np.sum(row == 1.0)) != 1:
            problems.append(f"Y_s row {i} has {int(np.sum(row == 1.0))} entries equal to +1 (expected exactly one)")
    return problems


@dataclass(frozen=True)
class Hyperparams:
    alpha: float = 1.0
    beta: float = 1.0
    lam: float = 1.0
    mu: float = 1.0
    latent_dim: Optional[int] = None     # None -> min(p, m) at training time
    ridge_eps: float = 1e-8
    max_outer_iters: int = 100
    outer_tol: float = 1e-5
    admm_rho: Optional[float] = None    # None -> scaled from the subproblem
    admm_tol: float = 1e-6
    admm_max_iters: int = 100
    inner_max_iters: int = 100
    inner_tol: float = 1e-5

    def __post_init__(self):
        for name in ("alpha", "beta", "lam", "mu", "ridge_eps", "outer_tol",
                     "admm_rho", "admm_tol", "inner_tol"):
            value = getattr(self, name)
            if value is None and name == "admm_rho":
                continue
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a finite positive real, got {value!r}")
        if self.latent_dim is not None and self.latent_dim < 1:
            raise ValueError(f"latent_dim must be >= 1, got {self.latent_dim}")
        for name in ("max_outer_iters", "admm_max_iters", "inner_max_iters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def gamma(self) -> float:
        return self.beta / self.alpha

    def resolve_latent_dim(self, p: int, m: int) -> int:
        return self.latent_dim if self.latent_dim is not None else min(p, m)

    def grid_key(self) -> tuple:
        return (self.alpha, self.beta, self.lam, self.mu)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha, "beta": self.beta, "lambda": self.lam, "mu": self.mu,
            "latent_dim": self.latent_dim, "ridge_eps": self.ridge_eps,
            "max_outer_iters": self.max_outer_iters, "outer_tol": self.outer_tol,
            "admm_rho": self.admm_rho, "admm_tol": self.admm_tol,
            "admm_max_iters": self.admm_max_iters,
            "inner_max_iters": self.inner_max_iters, "inner_tol": self.inner_tol,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown hyperparameter keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class JedmModel:
    D: DenseMatrix          # p x d dictionary, columns in the unit ball
    V: DenseMatrix          # d x q compatibility matrix
    hyper: Hyperparams
    objective_trace: tuple = field(default_factory=tuple)
    seed: int = 0

    @property
    def p(self) -> int:
        return self.D.shape[0]

    @property
    def d(self) -> int:
        return self.D.shape[1]

    @property
    def q(self) -> int:
        return self.V.shape[1]


def l2_normalize_columns(X) -> DenseMatrix:
    """Optional preprocessing: scale every instance (column) to unit l2 norm."""
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=0)
    norms[norms == 0] = 1.0
    return dense(X / norms, "X")
