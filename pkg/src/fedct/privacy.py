"""Differential privacy for shared one-hot label matrices.

The mechanism flips every bit independently with probability ``p`` (the XOR
mechanism with a product-Bernoulli noise matrix).  Two inputs differing in
``h`` bits give output likelihood ratios of at most
``((1-p)/p) ** h``, so ``p = 1 / (1 + exp(eps / s))`` yields ``eps``-DP for
inputs within Hamming distance ``s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .analysis.special import probit
from .data import LabeledDataset, UnlabeledDataset
from .learners import LearnerConfig, fit_update, predict_hard


class PrivacyError(ValueError):
    pass


def flip_probability(epsilon: float, sensitivity: float) -> float:
    if not epsilon > 0:
        raise PrivacyError(f"epsilon must be positive, got {epsilon!r}")
    if not sensitivity >= 1:
        raise PrivacyError(f"sensitivity must be at least 1, got {sensitivity!r}")
    x = epsilon / sensitivity
    e = math.exp(-x)
    return e / (1.0 + e)


def epsilon_for(p: float, sensitivity: float) -> float:
    if not 0 < p < 0.5:
        raise PrivacyError(f"flip probability must lie in (0, 0.5) for a finite budget, got {p!r}")
    if not sensitivity >= 1:
        raise PrivacyError(f"sensitivity must be at least 1, got {sensitivity!r}")
    return sensitivity * math.log((1.0 - p) / p)


@dataclass(frozen=True)
class NoiseSpec:
    """Privacy budget, entry-level sensitivity and the resulting flip rate.

    ``flip_prob == 0`` is allowed as a no-noise control (``epsilon`` is then
    infinite).
    """

    epsilon: float
    sensitivity: int
    flip_prob: float = field(default=None)

    def __post_init__(self):
        if self.sensitivity < 1:
            raise PrivacyError("sensitivity must be at least 1")
        if self.flip_prob is None:
            object.__setattr__(self, "flip_prob", flip_probability(self.epsilon, self.sensitivity))
        elif not 0 <= self.flip_prob < 0.5:
            raise PrivacyError(f"flip_prob must lie in [0, 0.5), got {self.flip_prob!r}")

    @classmethod
    def from_budget(cls, epsilon: float, sensitivity: int) -> NoiseSpec:
        return cls(epsilon, sensitivity, flip_probability(epsilon, sensitivity))

    @classmethod
    def from_flip_prob(cls, p: float, sensitivity: int) -> NoiseSpec:
        eps = math.inf if p == 0 else epsilon_for(p, sensitivity)
        return cls(eps, sensitivity, p)


def xor_mechanism(bits, p: float, seed) -> np.ndarray:
    """Flip every bit independently with probability ``p``.

    The result is a relaxed one-hot matrix: rows may hold zero or several
    set bits.
    """
    if not 0 <= p <= 1:
        raise PrivacyError(f"p must lie in [0, 1], got {p!r}")
    bits = np.asarray(bits, dtype=np.uint8)
    flips = np.random.default_rng(seed).random(bits.shape) < p
    return bits ^ flips.astype(np.uint8)


def repair_votes(noisy, seed) -> np.ndarray:
    """Turn a relaxed one-hot matrix back into one label per row.

    Uniform choice among the set bits, or over all classes for an empty row.
    """
    noisy = np.asarray(noisy).astype(bool)
    u, C = noisy.shape
    rng = np.random.default_rng(seed)
    keys = rng.random((u, C))
    pick = np.where(noisy, keys, -1.0).argmax(axis=1)
    empty = ~noisy.any(axis=1)
    fallback = rng.integers(0, C, size=u)
    return np.where(empty, fallback, pick).astype(np.int64)


def log_likelihood(output_bits, input_bits, p: float) -> np.ndarray:
    """``log P(output | input)`` under independent flips; broadcasts over leading axes."""
    o = np.asarray(output_bits, dtype=np.uint8)
    i = np.asarray(input_bits, dtype=np.uint8)
    flipped = np.count_nonzero(o ^ i, axis=-1)
    n = o.shape[-1]
    return flipped * math.log(p) + (n - flipped) * math.log1p(-p)


def sensitivity_bound(n: int, rate: float, delta: float) -> int:
    """High-probability cap on changed predictions over ``n`` unlabeled points.

    Binomial-quantile bound ``ceil(n*r + P*sqrt(n*r*(1-r)) + P^2/3)`` with
    ``P = probit(1 - delta)``, for a learner that is on-average-replace-one
    stable at rate ``r``.
    """
    if n < 0:
        raise PrivacyError(f"n must be non-negative, got {n!r}")
    if not 0 <= rate < 1:
        raise PrivacyError(f"rate must lie in [0, 1), got {rate!r}")
    if not 0 < delta < 1:
        raise PrivacyError(f"delta must lie in (0, 1), got {delta!r}")
    P = probit(1.0 - delta)
    mean = n * rate
    value = mean + P * math.sqrt(mean * (1.0 - rate)) + P * P / 3.0
    # keep float dust from pushing an exact integer up a step
    return max(0, math.ceil(round(value, 9)))


@dataclass(frozen=True)
class SensitivityReport:
    row_hamming_max: int
    entry_hamming_max: int
    samples: int
    row_changes: tuple[int, ...] = ()


def prediction_change(cfg: LearnerConfig, D: LabeledDataset, D_prime: LabeledDataset, U) -> int:
    """Number of unlabeled points whose hard prediction differs between the two fits."""
    X = U.features if isinstance(U, UnlabeledDataset) else np.asarray(U, dtype=np.float64)
    a = predict_hard(fit_update(cfg, None, D), X)
    b = predict_hard(fit_update(cfg, None, D_prime), X)
    return int(np.count_nonzero(a != b))


def neighbor(D: LabeledDataset, rng, noise_scale: float = 0.1) -> LabeledDataset:
    """Replace one uniformly chosen row by a perturbed resample with a uniform label."""
    n = len(D)
    i = int(rng.integers(n))
    j = int(rng.integers(n))
    std = D.features.std(axis=0)
    x_new = D.features[j] + noise_scale * std * rng.standard_normal(D.dim)
    y_new = int(rng.integers(D.num_classes))
    X = D.features.copy()
    y = D.labels.copy()
    X[i] = x_new
    y[i] = y_new
    return LabeledDataset(X, y, D.num_classes, D.label_names)


def estimate_sensitivity(cfg: LearnerConfig, D: LabeledDataset, U, k: int, seed) -> SensitivityReport:
    """Empirical sensitivity over ``k`` sampled replace-one neighbours of ``D``.

    Both fits of a trial use the same learner seed, so any prediction change
    comes from the replaced row alone.
    """
    if k < 1:
        raise PrivacyError("k must be at least 1")
    if len(D) < 2:
        raise PrivacyError("need at least 2 training rows")
    X = U.features if isinstance(U, UnlabeledDataset) else np.asarray(U, dtype=np.float64)
    base = predict_hard(fit_update(cfg, None, D), X)
    changes = []
    for child in np.random.SeedSequence(seed).spawn(k):
        Dp = neighbor(D, np.random.default_rng(child))
        other = predict_hard(fit_update(cfg, None, Dp), X)
        changes.append(int(np.count_nonzero(base != other)))
    rows = max(changes)
    return SensitivityReport(rows, 2 * rows, k, tuple(changes))
