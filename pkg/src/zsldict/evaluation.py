"""Per-class top-1 accuracy and class-wise cross-validated grid search."""

from __future__ import annotations

import itertools
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .core_types import Hyperparams, SeenDataset, UnseenDataset, rng_stream
from .inference import score_all
from .jedm import train_jedm
from .tstd import DEFAULT_SCHEDULE, run_tstd

logger = logging.getLogger(__name__)

PAPER_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)


@dataclass(frozen=True)
class EvalReport:
    per_class_accuracy: tuple      # (class index, accuracy or nan when empty)
    mean_per_class_accuracy: float
    confusion: np.ndarray          # N x N counts, rows = truth
    n_instances: int

    def to_dict(self, class_names: Optional[Sequence[str]] = None) -> dict:
        def name(c):
            return class_names[c] if class_names is not None else c
        return {
            "mean_per_class_accuracy": self.mean_per_class_accuracy,
            "n_instances": self.n_instances,
            "per_class_accuracy": [
                {"class": name(c), "accuracy": None if np.isnan(a) else a,
                 "count": int(self.confusion[c].sum())}
                for c, a in self.per_class_accuracy
            ],
        }

    def to_json(self, class_names=None) -> str:
        return json.dumps(self.to_dict(class_names), indent=2) + "\n"

    def to_text(self, class_names=None) -> str:
        rows = [("class", "count", "accuracy")]
        for c, a in self.per_class_accuracy:
            label = str(class_names[c]) if class_names is not None else str(c)
            rows.append((label, str(int(self.confusion[c].sum())), "-" if np.isnan(a) else f"{a:.4f}"))
        rows.append(("mean", str(self.n_instances), f"{self.mean_per_class_accuracy:.4f}"))
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        return "".join(f"{r[0]:<{widths[0]}}  {r[1]:>{widths[1]}}  {r[2]:>{widths[2]}}\n" for r in rows)


def per_class_top1(predictions, truth, N: int) -> EvalReport:
    predictions = np.asarray(predictions, dtype=int)
    truth = np.asarray(truth, dtype=int)
    if predictions.shape != truth.shape:
        raise ValueError(f"{predictions.size} predictions for {truth.size} truth labels")
    for arr, what in ((predictions, "prediction"), (truth, "truth label")):
        if arr.size and (arr.min() < 0 or arr.max() >= N):
            raise ValueError(f"{what} out of range [0, {N})")
    confusion = np.zeros((N, N))
    np.add.at(confusion, (truth, predictions), 1)
    counts = confusion.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        acc = np.where(counts > 0, np.diag(confusion) / counts, np.nan)
    present = counts > 0
    mean = float(np.mean(acc[present])) if present.any() else float("nan")
    return EvalReport(tuple((c, float(acc[c])) for c in range(N)), mean, confusion, int(truth.size))


def evaluate_unseen(D, V, ut: UnseenDataset, truth=None) -> EvalReport:
    truth = ut.truth_labels if truth is None else truth
    if truth is None:
        raise ValueError("unseen dataset carries no truth labels")
    return per_class_top1(score_all(D, V, ut.X, ut.A).predictions, truth, ut.A.shape[1])


def class_folds(M: int, folds: int, holdout_frac: float, seed: int) -> list[np.ndarray]:
    """Held-out class sets, one per fold.

    Classes are shuffled once and cut into ``folds`` consecutive blocks of
    ``round(M * holdout_frac)`` classes.  When ``folds * block == M`` every
    class is held out exactly once.
    """
    if folds < 2:
        raise ValueError("need at least 2 folds")
    block = int(round(M * holdout_frac))
    if block < 2:
        raise ValueError(f"holding out {M} x {holdout_frac} classes leaves fewer than 2 per fold")
    if block >= M:
        raise ValueError("held-out block would leave no training classes")
    order = rng_stream(seed, "cv-shuffle").permutation(M)
    out = []
    for f in range(folds):
        start = (f * block) % M
        idx = np.take(order, np.arange(start, start + block), mode="wrap")
        out.append(np.sort(idx))
    return out


def _jedm_key(h: Hyperparams) -> Hyperparams:
    # lambda and mu never reach JEDM training; share one model across them
    return replace(h, lam=1.0, mu=1.0)


def cv_score(ds: SeenDataset, h: Hyperparams, held_out: Sequence[np.ndarray], seed: int,
             schedule: Optional[Sequence[float]] = None, threads: int = 1,
             cache: Optional[dict] = None) -> list[float]:
    """Zero-shot accuracy on each held-out class set after training on the rest.

    With a ``schedule`` the held-out instances are treated as an unlabelled
    unseen batch and predicted by the self-training loop instead of the
    inductive model, which is what makes lambda and mu observable.
    """
    M = ds.A.shape[1]
    cache = {} if cache is None else cache

    def one_fold(k):
        val = [int(c) for c in held_out[k]]
        train_classes = [c for c in range(M) if c not in set(val)]
        if set(train_classes) & set(val):
            raise AssertionError("held-out class leaked into training")
        valid = ds.subset_classes(val)
        key = (k, _jedm_key(h))
        if key not in cache:
            cache[key] = train_jedm(ds.subset_classes(train_classes), h, seed=seed)
        model = cache[key]
        if schedule is None:
            preds = score_all(model.D, model.V, valid.X, valid.A).predictions
        else:
            batch = UnseenDataset.build(valid.X, valid.A, valid.class_names)
            preds, _ = run_tstd(model, batch, h, schedule)
        return per_class_top1(preds, valid.labels, len(val)).mean_per_class_accuracy

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one_fold, range(len(held_out))))
    return [one_fold(k) for k in range(len(held_out))]


def _best(table: list) -> dict:
    # highest mean; ties go to the lexicographically smaller (alpha, beta, lambda, mu)
    return min(table, key=lambda row: (-row["mean"], row["hyper"].grid_key()))


def cv_grid_search(ds: SeenDataset, grid: Iterable[Hyperparams], folds: int = 5,
                   holdout_frac: float = 0.2, seed: int = 42,
                   schedule: Optional[Sequence[float]] = None, threads: int = 1,
                   cache: Optional[dict] = None):
    """Return ``(best_hyperparams, table)``; ``table`` rows hold per-fold scores and their mean."""
    grid = list(grid)
    if not grid:
        raise ValueError("empty hyperparameter grid")
    held_out = class_folds(ds.A.shape[1], folds, holdout_frac, seed)
    cache = {} if cache is None else cache
    table = []
    for h in grid:
        scores = cv_score(ds, h, held_out, seed, schedule, threads, cache)
        table.append({"hyper": h, "folds": scores, "mean": float(np.mean(scores)),
                      "transductive": schedule is not None})
        logger.info("cv %s -> %.4f", h.grid_key(), table[-1]["mean"])
    return _best(table)["hyper"], table


def product_grid(base: Hyperparams, alphas=PAPER_GRID, betas=PAPER_GRID,
                 lams=None, mus=None) -> list[Hyperparams]:
    lams = (base.lam,) if lams is None else lams
    mus = (base.mu,) if mus is None else mus
    return [replace(base, alpha=a, beta=b, lam=l, mu=m)
            for a, b, l, m in itertools.product(alphas, betas, lams, mus)]


def staged_grid_search(ds: SeenDataset, base: Hyperparams, values=PAPER_GRID,
                       lam_mu_values=None, folds: int = 5, holdout_frac: float = 0.2,
                       seed: int = 42, schedule: Sequence[float] = DEFAULT_SCHEDULE,
                       threads: int = 1):
    """Pick (alpha, beta) by inductive cross-validation, then (lambda, mu) with them frozen.

    The second stage scores each (lambda, mu) pair by running self-training
    on the held-out classes.  Returns ``(best, table)`` with rows from both stages.
    """
    cache: dict = {}
    best_ab, table1 = cv_grid_search(ds, product_grid(base, values, values), folds,
                                     holdout_frac, seed, None, threads, cache)
    lam_mu_values = values if lam_mu_values is None else lam_mu_values
    stage2 = product_grid(best_ab, (best_ab.alpha,), (best_ab.beta,), lam_mu_values, lam_mu_values)
    best, table2 = cv_grid_search(ds, stage2, folds, holdout_frac, seed, schedule, threads, cache)
    return best, table1 + table2


def full_grid_search(ds: SeenDataset, base: Hyperparams, values=PAPER_GRID,
                     lam_mu_values=None, folds: int = 5, holdout_frac: float = 0.2,
                     seed: int = 42, schedule: Sequence[float] = DEFAULT_SCHEDULE,
                     threads: int = 1):
    """Score the whole (alpha, beta, lambda, mu) product with transductive cross-validation."""
    lam_mu_values = values if lam_mu_values is None else lam_mu_values
    grid = product_grid(base, values, values, lam_mu_values, lam_mu_values)
    return cv_grid_search(ds, grid, folds, holdout_frac, seed, schedule, threads)
