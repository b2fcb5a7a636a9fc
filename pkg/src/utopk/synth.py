"""Synthetic long-tail data for desk-scale experiments.

Label priors follow a power law over label index, rescaled (with a cap at
0.9) so they sum to the requested average number of labels per instance.
Per-instance probabilities multiply the prior by a mean-one lognormal factor,
are capped at 0.98, and values below 1e-4 are zeroed before labels are drawn,
so the emitted probability matrix is exactly the distribution the labels come
from: a perfect estimator for it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import KIND_BINARY, KIND_PROBABILITIES, SparseRowMatrix

_PRIOR_CAP = 0.9
_PROB_CAP = 0.98
_PROB_FLOOR = 1e-4
_LOG_SIGMA = 1.0


@dataclass(frozen=True)
class SyntheticSpec:
    n: int
    m: int
    power_exponent: float = 1.5
    avg_labels_per_instance: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("n and m must be >= 1")
        if self.power_exponent <= 0:
            raise ValueError("power_exponent must be > 0")
        if not 0 < self.avg_labels_per_instance <= _PRIOR_CAP * self.m:
            raise ValueError("avg_labels_per_instance out of achievable range")


def label_priors(spec: SyntheticSpec) -> np.ndarray:
    """Power-law priors scaled so their sum equals the requested average."""
    base = (np.arange(spec.m) + 1.0) ** (-spec.power_exponent)
    target = spec.avg_labels_per_instance
    lo, hi = 0.0, target / base.min()
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if np.minimum(mid * base, _PRIOR_CAP).sum() < target:
            lo = mid
        else:
            hi = mid
    return np.minimum(hi * base, _PRIOR_CAP)


def generate_synthetic(spec: SyntheticSpec):
    """Return (probabilities, labels) sparse matrices for the spec."""
    rng = np.random.default_rng(spec.seed)
    priors = label_priors(spec)
    prob_rows = []
    label_rows = []
    for _ in range(spec.n):
        noise = np.exp(_LOG_SIGMA * rng.standard_normal(spec.m)
                       - 0.5 * _LOG_SIGMA * _LOG_SIGMA)
        eta = np.minimum(priors * noise, _PROB_CAP)
        eta[eta < _PROB_FLOOR] = 0.0
        draws = rng.random(spec.m) < eta
        idx = np.nonzero(eta)[0]
        prob_rows.append((idx, eta[idx]))
        lab_idx = np.nonzero(draws)[0]
        label_rows.append((lab_idx, np.ones(lab_idx.size)))
    probs = SparseRowMatrix(spec.n, spec.m, prob_rows, kind=KIND_PROBABILITIES)
    labels = SparseRowMatrix(spec.n, spec.m, label_rows, kind=KIND_BINARY)
    return probs, labels
