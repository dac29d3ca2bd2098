from dataclasses import replace

import numpy as np
import pytest

from zsldict.core_types import Hyperparams, validate_seen
from zsldict.evaluation import evaluate_unseen
from zsldict.inference import score_all
from zsldict.jedm import train_jedm
from zsldict.synth import SynthSpec, generate_synthetic, prototype_spacing


def test_same_seed_is_bitwise_identical():
    spec = SynthSpec(noise_sigma=0.2, shift_magnitude=0.5, seed=9)
    a, b = generate_synthetic(spec), generate_synthetic(spec)
    for x, y in ((a[0].X, b[0].X), (a[0].A, b[0].A), (a[1].X, b[1].X), (a[1].A, b[1].A)):
        assert x.tobytes() == y.tobytes()
    other = generate_synthetic(replace(spec, seed=10))
    assert a[0].X.tobytes() != other[0].X.tobytes()


def test_shapes_and_validity():
    spec = SynthSpec(M=6, N=3, m_per_class=4, n_per_class=5, p=12, q=4, d=5)
    seen, unseen, truth = generate_synthetic(spec)
    assert seen.X.shape == (12, 24) and seen.A.shape == (4, 6)
    assert unseen.X.shape == (12, 15) and unseen.A.shape == (4, 3)
    assert unseen.truth_labels is None and len(truth.unseen_labels) == 15
    assert validate_seen(seen) == []
    assert not set(seen.class_names) & set(unseen.class_names)


def test_infeasible_dimensions_rejected():
    with pytest.raises(ValueError, match="d=9 > p=8"):
        SynthSpec(p=8, d=9)
    with pytest.raises(ValueError):
        SynthSpec(q=20, d=16)
    with pytest.raises(ValueError):
        SynthSpec(M=0)
    with pytest.raises(ValueError):
        SynthSpec(noise_sigma=-1.0)


def test_generating_model_recovers_truth_exactly():
    seen, unseen, truth = generate_synthetic(SynthSpec(seed=4))
    # every prototype has the same norm, so the bilinear score picks the nearest one
    preds = score_all(truth.D, truth.V, unseen.X, unseen.A).predictions
    assert np.array_equal(preds, truth.unseen_labels)
    preds = score_all(truth.D, truth.V, seen.X, seen.A).predictions
    assert np.array_equal(preds, truth.seen_labels)


def test_spacing_of_a_square():
    P = np.array([[0.0, 1.0, 0.0, 1.0], [0.0, 0.0, 1.0, 1.0]])
    assert prototype_spacing(P) == 1.0


def test_noise_free_fixture_is_recovered_by_jedm():
    seen, unseen, truth = generate_synthetic(SynthSpec(seed=42))
    model = train_jedm(seen, Hyperparams(latent_dim=16), seed=42)
    assert evaluate_unseen(model.D, model.V, unseen, truth.unseen_labels).mean_per_class_accuracy >= 0.99


def test_large_shift_costs_at_least_ten_points():
    spec = SynthSpec(seed=42)
    spacing = generate_synthetic(spec)[2].spacing
    spec = replace(spec, noise_sigma=0.1 * spacing)
    seen, unseen, truth = generate_synthetic(spec)
    model = train_jedm(seen, Hyperparams(latent_dim=16), seed=42)
    base = evaluate_unseen(model.D, model.V, unseen, truth.unseen_labels).mean_per_class_accuracy
    _, shifted, truth2 = generate_synthetic(replace(spec, shift_magnitude=3 * spacing))
    dropped = evaluate_unseen(model.D, model.V, shifted, truth2.unseen_labels).mean_per_class_accuracy
    assert dropped <= base - 0.10
