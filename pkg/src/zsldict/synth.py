"""Seeded synthetic zero-shot problems with a controllable domain shift.

Generative model (latent dimension d, features p >= d, embeddings q):

* ``D_true`` (p x d) has orthonormal columns, ``V_true`` (d x q) orthonormal
  columns, so both maps are perfectly conditioned.
* Each class draws a latent prototype ``z_c = V_true u_c`` with ``u_c`` on a
  sphere of radius ``prototype_radius``; its label embedding is recovered
  through the pseudo-inverse, ``a_c = pinv(V_true) z_c``.
* Instances are ``x = D_true (z_c + noise)``; unseen instances are further
  translated by ``shift_magnitude`` along one random unit latent direction.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .core_types import SeenDataset, UnseenDataset, rng_stream


@dataclass(frozen=True)
class SynthSpec:
    M: int = 40
    N: int = 10
    m_per_class: int = 10
    n_per_class: int = 50
    p: int = 64
    q: int = 16
    d: int = 16
    noise_sigma: float = 0.0
    shift_magnitude: float = 0.0
    seed: int = 42
    prototype_radius: float = 1.0
    prototype_offset: float = 1.0

    def __post_init__(self):
        for name in ("M", "N", "m_per_class", "n_per_class", "p", "q", "d"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.noise_sigma < 0 or self.shift_magnitude < 0:
            raise ValueError("noise_sigma and shift_magnitude must be non-negative")
        if self.prototype_radius <= 0:
            raise ValueError("prototype_radius must be positive")
        if self.d > self.p:
            raise ValueError(f"infeasible dimensions: d={self.d} > p={self.p}")
        if self.q > self.d:
            raise ValueError(f"infeasible dimensions: q={self.q} > d={self.d}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SynthTruth:
    D: np.ndarray
    V: np.ndarray
    prototypes: np.ndarray        # d x (M + N), seen classes first
    seen_labels: np.ndarray
    unseen_labels: np.ndarray
    shift_direction: np.ndarray
    spacing: float


def _orthonormal(rng, rows: int, cols: int) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((rows, cols)))
    return Q * np.sign(np.diag(R))


def prototype_spacing(P: np.ndarray) -> float:
    """Mean nearest-neighbour distance between prototype columns."""
    diff = P[:, :, None] - P[:, None, :]
    dist = np.sqrt(np.sum(diff * diff, axis=0))
    np.fill_diagonal(dist, np.inf)
    return float(np.mean(np.min(dist, axis=1)))


def generate_synthetic(spec: SynthSpec):
    """Return ``(seen, unseen, truth)``; unseen truth labels are kept out of ``unseen``."""
    rng = rng_stream(spec.seed, "synth")
    D_true = _orthonormal(rng, spec.p, spec.d)
    V_true = _orthonormal(rng, spec.d, spec.q)
    K = spec.M + spec.N
    U = rng.standard_normal((spec.q, K))
    if spec.q > 1:
        U[-1] = 0.0
    U *= spec.prototype_radius / np.linalg.norm(U, axis=0)
    if spec.q > 1:
        U[-1] = spec.prototype_offset
    P = V_true @ U
    A = np.linalg.pinv(V_true) @ P
    direction = rng.standard_normal(spec.d)
    direction /= np.linalg.norm(direction)

    seen_labels = np.repeat(np.arange(spec.M), spec.m_per_class)
    unseen_labels = np.repeat(np.arange(spec.N), spec.n_per_class)
    Z_s = P[:, seen_labels] + spec.noise_sigma * rng.standard_normal((spec.d, seen_labels.size))
    Z_t = (P[:, spec.M + unseen_labels]
           + spec.noise_sigma * rng.standard_normal((spec.d, unseen_labels.size))
           + spec.shift_magnitude * direction[:, None])

    seen = SeenDataset.from_labels(D_true @ Z_s, seen_labels, A[:, :spec.M],
                                   [f"s{c:03d}" for c in range(spec.M)])
    unseen = UnseenDataset.build(D_true @ Z_t, A[:, spec.M:],
                                 [f"u{c:03d}" for c in range(spec.N)])
    truth = SynthTruth(D=D_true, V=V_true, prototypes=P, seen_labels=seen_labels,
                       unseen_labels=unseen_labels, shift_direction=direction,
                       spacing=prototype_spacing(P))
    return seen, unseen, truth
