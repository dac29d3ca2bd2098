import json
from dataclasses import replace

import numpy as np
import pytest

from zsldict.core_types import Hyperparams
from zsldict.evaluation import (
    class_folds, cv_grid_search, cv_score, per_class_top1, full_grid_search, product_grid,
    staged_grid_search,
)
from zsldict.synth import SynthSpec, generate_synthetic


def test_per_class_examples():
    r = per_class_top1([0, 1, 1, 1], [0, 0, 1, 1], 2)
    assert [a for _, a in r.per_class_accuracy] == [0.5, 1.0]
    assert r.mean_per_class_accuracy == 0.75
    assert per_class_top1([0, 1, 2], [0, 1, 2], 3).mean_per_class_accuracy == 1.0
    assert per_class_top1([0, 0, 0, 0], [0, 0, 0, 1], 2).mean_per_class_accuracy == 0.5


def test_empty_class_excluded_and_confusion_rows():
    r = per_class_top1([0, 2, 2], [0, 2, 0], 3)
    assert np.isnan(r.per_class_accuracy[1][1])
    assert r.mean_per_class_accuracy == pytest.approx((0.5 + 1.0) / 2)
    assert r.confusion.sum(axis=1).tolist() == [2, 0, 1]
    assert r.n_instances == 3


def test_per_class_rejects_bad_input():
    with pytest.raises(ValueError, match="predictions"):
        per_class_top1([0, 1], [0], 2)
    with pytest.raises(ValueError, match="range"):
        per_class_top1([0, 2], [0, 1], 2)
    with pytest.raises(ValueError, match="range"):
        per_class_top1([0, 1], [-1, 1], 2)


def test_report_serialisations():
    r = per_class_top1([0, 1, 1], [0, 0, 1], 3)
    data = json.loads(r.to_json(["cat", "dog", "eel"]))
    assert data["per_class_accuracy"][2] == {"class": "eel", "accuracy": None, "count": 0}
    text = r.to_text(["cat", "dog", "eel"]).splitlines()
    assert text[0].split() == ["class", "count", "accuracy"]
    assert text[-1].split() == ["mean", "3", "0.7500"]
    assert len({len(line) for line in text}) == 1


def test_folds_partition_ten_classes():
    folds = class_folds(10, 5, 0.2, seed=42)
    assert [len(f) for f in folds] == [2] * 5
    assert sorted(np.concatenate(folds).tolist()) == list(range(10))
    assert all(np.array_equal(a, b) for a, b in zip(folds, class_folds(10, 5, 0.2, seed=42)))


def test_folds_reject_degenerate_splits():
    with pytest.raises(ValueError, match="fewer than 2"):
        class_folds(5, 5, 0.2, seed=0)
    with pytest.raises(ValueError):
        class_folds(10, 1, 0.2, seed=0)
    with pytest.raises(ValueError):
        class_folds(4, 2, 1.0, seed=0)


@pytest.fixture(scope="module")
def cv_data():
    spec = SynthSpec(M=20, N=2, p=32, q=8, d=8, seed=3)
    spacing = generate_synthetic(spec)[2].spacing
    seen, _, _ = generate_synthetic(replace(spec, noise_sigma=0.3 * spacing))
    return seen


def test_singleton_grid_returns_its_point(cv_data):
    h = Hyperparams(latent_dim=8, max_outer_iters=20)
    best, table = cv_grid_search(cv_data, [h])
    assert best == h and len(table) == 1
    assert 0.0 <= table[0]["mean"] <= 1.0 and len(table[0]["folds"]) == 5


def test_dominating_point_is_selected(cv_data):
    weak = Hyperparams(alpha=0.1, latent_dim=2)
    strong = Hyperparams(alpha=1.0, latent_dim=8)
    folds = class_folds(20, 5, 0.2, seed=42)
    sw, ss = cv_score(cv_data, weak, folds, 42), cv_score(cv_data, strong, folds, 42)
    assert all(b > a for a, b in zip(sw, ss))      # precondition of the scenario
    best, _ = cv_grid_search(cv_data, [weak, strong], seed=42)
    assert best == strong


def test_ties_go_to_smaller_grid_key(cv_data):
    a = Hyperparams(alpha=1.0, lam=0.1, latent_dim=8, max_outer_iters=10)
    b = replace(a, lam=10.0)
    # lambda does not enter inductive scoring, so both rows tie exactly
    best, table = cv_grid_search(cv_data, [b, a])
    assert table[0]["mean"] == table[1]["mean"]
    assert best == a


def test_cv_threads_match_sequential(cv_data):
    h = Hyperparams(latent_dim=8, max_outer_iters=15)
    folds = class_folds(20, 5, 0.2, seed=1)
    assert cv_score(cv_data, h, folds, 1, threads=3) == cv_score(cv_data, h, folds, 1)


def test_cv_never_trains_on_held_out_classes(cv_data, monkeypatch):
    import zsldict.evaluation as ev
    seen_names = []
    real = ev.train_jedm

    def spy(ds, h, seed=42):
        seen_names.append(set(ds.class_names))
        return real(ds, h, seed=seed)

    monkeypatch.setattr(ev, "train_jedm", spy)
    folds = class_folds(20, 5, 0.2, seed=42)
    cv_score(cv_data, Hyperparams(latent_dim=8, max_outer_iters=5), folds, 42)
    for names, held in zip(seen_names, folds):
        assert not names & {cv_data.class_names[c] for c in held}
        assert len(names) == 16


def test_staged_search_scores_lambda_mu_transductively(cv_data):
    base = Hyperparams(latent_dim=8, max_outer_iters=15)
    best, table = staged_grid_search(cv_data, base, values=(0.1, 1.0), lam_mu_values=(0.01, 1.0))
    stage1 = [r for r in table if not r["transductive"]]
    stage2 = [r for r in table if r["transductive"]]
    assert len(stage1) == 4 and len(stage2) == 4
    ab = {r["hyper"].grid_key()[:2] for r in stage2}
    assert len(ab) == 1
    assert best.grid_key()[:2] in ab
    assert best in [r["hyper"] for r in stage2]


def test_product_grid_size():
    assert len(product_grid(Hyperparams(), lams=(1, 2), mus=(3,))) == 50


@pytest.fixture(scope="module")
def staged_and_full():
    """Both searches on the default synthetic fixture over the default grid.

    The fixture was fixed before either search was run on it.
    """
    spec = SynthSpec(seed=42)
    spacing = generate_synthetic(spec)[2].spacing
    seen, _, _ = generate_synthetic(replace(spec, noise_sigma=0.1 * spacing))
    base = Hyperparams(latent_dim=16)
    staged, _ = staged_grid_search(seen, base)
    full, table = full_grid_search(seen, base)
    return staged, full, {row["hyper"]: row["mean"] for row in table}


def test_staged_default_grid_matches_full_product(staged_and_full):
    staged, full, _ = staged_and_full
    assert staged.grid_key() == full.grid_key()


def test_staged_choice_attains_full_product_maximum(staged_and_full):
    staged, full, means = staged_and_full
    assert means[staged] == max(means.values()) == means[full]
