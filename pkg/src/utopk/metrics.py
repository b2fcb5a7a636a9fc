"""Confusion-matrix utility families, label-weight schemes, and smoothness profiles.

Every per-label utility is a function psi(t, p, q) of the three independent
confusion quantities (all in 1/n units):

    t = true-positive rate, p = predicted-positive rate, q = positive rate.

A task-level utility sums per-label contributions; macro families average
over all labels (the 1/m factor counts every label, present or not), while
instance-wise weighted families sum weighted confusion entries directly.
Whenever a denominator is 0 the utility is defined as 0, which makes every
family total (the numerator is forced to 0 in all such cases by t <= min(p, q)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import (
    CapabilityError,
    PredictionRow,
    SparseRowMatrix,
    load_vector,
    stats_from_scratch,
)

MACRO_PRECISION = "macro-precision"
MACRO_RECALL = "macro-recall"
MACRO_FBETA = "macro-fbeta"
COVERAGE = "coverage"
INSTANCE_PRECISION = "instance-precision"
HAMMING = "hamming"
WEIGHTED = "weighted"
MIXED = "mixed"

# Families whose task utility averages per-label values over all m labels.
_MEAN_FAMILIES = {MACRO_PRECISION, MACRO_RECALL, MACRO_FBETA, COVERAGE, HAMMING}
# Families whose task utility sums per-label values (weights carry the scale).
_SUM_FAMILIES = {INSTANCE_PRECISION, WEIGHTED}


@dataclass(frozen=True, eq=False)
class MetricSpec:
    """A utility family plus its parameters; immutable and shareable.

    Use the module-level factories (macro_fbeta, weighted_instance, ...)
    rather than constructing directly.
    """

    family: str
    beta: float = 1.0
    k: int = 1
    w00: Optional[np.ndarray] = None
    w01: Optional[np.ndarray] = None
    w10: Optional[np.ndarray] = None
    w11: Optional[np.ndarray] = None
    alpha: float = 0.0
    part_a: Optional["MetricSpec"] = None
    part_b: Optional["MetricSpec"] = None

    def __repr__(self):
        if self.family == MACRO_FBETA:
            return f"MetricSpec(macro-fbeta, beta={self.beta})"
        if self.family == MIXED:
            return f"MetricSpec(mixed, alpha={self.alpha}, a={self.part_a!r}, b={self.part_b!r})"
        return f"MetricSpec({self.family})"


def macro_precision() -> MetricSpec:
    return MetricSpec(MACRO_PRECISION)


def macro_recall() -> MetricSpec:
    return MetricSpec(MACRO_RECALL)


def macro_fbeta(beta: float = 1.0) -> MetricSpec:
    if beta <= 0:
        raise ValueError("beta must be > 0")
    return MetricSpec(MACRO_FBETA, beta=float(beta))


def coverage() -> MetricSpec:
    return MetricSpec(COVERAGE)


def instance_precision(k: int) -> MetricSpec:
    if k < 1:
        raise ValueError("k must be >= 1")
    return MetricSpec(INSTANCE_PRECISION, k=int(k))


def hamming() -> MetricSpec:
    return MetricSpec(HAMMING)


def weighted_instance(w11, w01=None, w10=None, w00=None) -> MetricSpec:
    """Instance-wise weighted utility with per-label 2x2 confusion weights.

    Omitted weight vectors default to 0.  All vectors must share length m.
    """
    w11 = np.atleast_1d(np.asarray(w11, dtype=np.float64))
    m = w11.size

    def _prep(w):
        if w is None:
            return np.zeros(m)
        w = np.atleast_1d(np.asarray(w, dtype=np.float64))
        if w.size != m:
            raise ValueError("weight vectors must all have length m")
        return w

    return MetricSpec(WEIGHTED, w11=w11, w01=_prep(w01), w10=_prep(w10), w00=_prep(w00))


def mixed(alpha: float, part_a: MetricSpec, part_b: MetricSpec) -> MetricSpec:
    """(1 - alpha) * part_a + alpha * part_b; parts must not be mixed themselves."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    if part_a.family == MIXED or part_b.family == MIXED:
        raise ValueError("mixed metrics cannot nest")
    return MetricSpec(MIXED, alpha=float(alpha), part_a=part_a, part_b=part_b)


# ---------------------------------------------------------------------------
# Per-label evaluation
# ---------------------------------------------------------------------------


def _safe_div(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den > 0)
    return out


def psi_eval(metric: MetricSpec, t, p, q):
    """Raw per-label utility psi(t, p, q), without macro averaging.

    Accepts scalars or arrays (broadcast together).  Weighted metrics
    broadcast against their per-label weight vectors.  Scalar inputs on
    non-weighted families return a scalar.
    """
    fam = metric.family
    t = np.asarray(t, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if fam == MACRO_PRECISION:
        out = _safe_div(t, p)
    elif fam == MACRO_RECALL:
        out = _safe_div(t, q)
    elif fam == MACRO_FBETA:
        b2 = metric.beta * metric.beta
        out = _safe_div((1.0 + b2) * t, b2 * q + p)
    elif fam == COVERAGE:
        out = (t > 0).astype(np.float64)
    elif fam == INSTANCE_PRECISION:
        out = t / metric.k
    elif fam == HAMMING:
        out = 1.0 + 2.0 * t - p - q
    elif fam == WEIGHTED:
        out = (
            metric.w11 * t
            + metric.w01 * (p - t)
            + metric.w10 * (q - t)
            + metric.w00 * (1.0 - p - q + t)
        )
    elif fam == MIXED:
        out = (1.0 - metric.alpha) * psi_eval(metric.part_a, t, p, q) + (
            metric.alpha * psi_eval(metric.part_b, t, p, q)
        )
    else:
        raise ValueError(f"unknown metric family: {fam}")
    if out.ndim == 0:
        return float(out)
    return out


def label_utilities(metric: MetricSpec, t, p, q, n_labels: int, label_ids=None):
    """Per-label contributions to the task utility (macro 1/m included).

    `label_ids` restricts weighted metrics to a subset of labels; `t`, `p`,
    `q` then refer to those labels.  Summing the full vector over all labels
    gives the task utility at those statistics.
    """
    fam = metric.family
    if fam == WEIGHTED:
        if label_ids is None:
            w11, w01, w10, w00 = metric.w11, metric.w01, metric.w10, metric.w00
        else:
            w11 = metric.w11[label_ids]
            w01 = metric.w01[label_ids]
            w10 = metric.w10[label_ids]
            w00 = metric.w00[label_ids]
        return (
            w11 * np.asarray(t)
            + w01 * (np.asarray(p) - t)
            + w10 * (np.asarray(q) - t)
            + w00 * (1.0 - np.asarray(p) - q + t)
        )
    if fam == MIXED:
        a = label_utilities(metric.part_a, t, p, q, n_labels, label_ids)
        b = label_utilities(metric.part_b, t, p, q, n_labels, label_ids)
        return (1.0 - metric.alpha) * a + metric.alpha * b
    out = psi_eval(metric, t, p, q)
    if fam in _MEAN_FAMILIES:
        return np.asarray(out) / n_labels
    return np.asarray(out)


def utility_at_stats(metric: MetricSpec, t_hat, p, q_hat) -> float:
    """Task utility evaluated at full per-label statistic vectors."""
    m = np.asarray(t_hat).shape[-1]
    return float(np.sum(label_utilities(metric, t_hat, p, q_hat, m)))


def task_utility(metric: MetricSpec, labels: SparseRowMatrix, preds: Sequence[PredictionRow]) -> float:
    """Task utility of predictions against realized binary labels."""
    if labels.kind != "binary":
        raise ValueError("task_utility expects a binary label matrix")
    stats = stats_from_scratch(labels, preds)
    return utility_at_stats(metric, stats.t_hat, stats.p, stats.q_hat)


# ---------------------------------------------------------------------------
# Label-weight schemes
# ---------------------------------------------------------------------------

PROPENSITY = "propensity"
POWER_LAW = "power-law"
LOG = "log"


@dataclass(frozen=True, eq=False)
class WeightScheme:
    """Per-label weighting recipe built from empirical label priors."""

    kind: str
    priors: np.ndarray
    a: float = 0.55
    b: float = 1.5
    n_train: Optional[int] = None
    beta_exp: float = 0.5


def propensity_scheme(priors, n_train, a=0.55, b=1.5) -> WeightScheme:
    return WeightScheme(PROPENSITY, _check_priors(priors), a=a, b=b, n_train=int(n_train))


def power_law_scheme(priors, beta_exp, n_train=None) -> WeightScheme:
    return WeightScheme(POWER_LAW, _check_priors(priors), beta_exp=float(beta_exp),
                        n_train=None if n_train is None else int(n_train))


def log_scheme(priors, n_train=None) -> WeightScheme:
    return WeightScheme(LOG, _check_priors(priors),
                        n_train=None if n_train is None else int(n_train))


def _check_priors(priors):
    priors = np.asarray(priors, dtype=np.float64)
    if priors.size and (priors.min() < 0.0 or priors.max() > 1.0):
        raise ValueError("label priors must lie in [0, 1]")
    return priors


def weight_compute(scheme: WeightScheme, k: int) -> np.ndarray:
    """Per-label true-positive weights w11 for the given scheme and budget.

    Power-law and log weights are defined only up to scale and are
    normalized so the largest weight equals 1.  Zero priors are floored at
    1/n_train when the training-set size is known, otherwise at the smallest
    positive prior in the vector.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    pri = scheme.priors
    if scheme.kind == PROPENSITY:
        if scheme.n_train is None or scheme.n_train < 1:
            raise ValueError("propensity weighting requires n_train >= 1")
        n_tr = float(scheme.n_train)
        c = (math.log(n_tr) - 1.0) * (scheme.b + 1.0) ** scheme.a
        return (1.0 + c * (n_tr * pri + scheme.b) ** (-scheme.a)) / k
    floored = _floor_priors(pri, scheme.n_train)
    if scheme.kind == POWER_LAW:
        w = floored ** (-scheme.beta_exp)
    elif scheme.kind == LOG:
        w = -np.log(floored)
    else:
        raise ValueError(f"unknown weight scheme: {scheme.kind}")
    top = w.max() if w.size else 0.0
    if top <= 0.0:
        return np.ones_like(w)
    return w / top


def _floor_priors(priors, n_train):
    if n_train is not None and n_train >= 1:
        floor = 1.0 / n_train
    else:
        positive = priors[priors > 0]
        floor = positive.min() if positive.size else 1.0
    return np.maximum(priors, floor)


# ---------------------------------------------------------------------------
# Smoothness profiles and the approximation-gap bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LipschitzProfile:
    """Per-label constants (T_j, P_j) bounding the utility's sensitivity
    to the true-positive and positive-rate arguments, evaluated at q_hat."""

    t_const: np.ndarray
    p_const: np.ndarray


def lipschitz_profile(metric: MetricSpec, q_hat) -> LipschitzProfile:
    """Sensitivity constants at the given q_hat, macro 1/m factor included.

    Macro-precision and coverage admit no such constants (their sensitivity
    to t is unbounded as p -> 0, respectively discontinuous) and raise
    CapabilityError, as do macro families at q_hat = 0.
    """
    q_hat = np.asarray(q_hat, dtype=np.float64)
    m = q_hat.size
    fam = metric.family
    if fam == MACRO_RECALL:
        _require_positive(q_hat, fam)
        c = 1.0 / (m * q_hat)
        return LipschitzProfile(c, c.copy())
    if fam == MACRO_FBETA:
        # For two points sharing p:  |psi - psi'| splits into a t-difference
        # term 1/(b^2 q + p) <= 1/(b^2 q) and a q-difference cross term whose
        # t/(b^2 q + p) factor is <= 1/b^2 because t <= q.  Both collapse to
        # (1+b^2)/(b^2 q) at the reference point.
        _require_positive(q_hat, fam)
        b2 = metric.beta * metric.beta
        c = (1.0 + b2) / (m * b2 * q_hat)
        return LipschitzProfile(c, c.copy())
    if fam == WEIGHTED:
        t_c = np.abs(metric.w11 - metric.w01 - metric.w10 + metric.w00)
        p_c = np.abs(metric.w10 - metric.w00)
        return LipschitzProfile(np.broadcast_to(t_c, (m,)).copy(),
                                np.broadcast_to(p_c, (m,)).copy())
    if fam == INSTANCE_PRECISION:
        return LipschitzProfile(np.full(m, 1.0 / metric.k), np.zeros(m))
    if fam == HAMMING:
        return LipschitzProfile(np.full(m, 2.0 / m), np.full(m, 1.0 / m))
    raise CapabilityError(f"no sensitivity profile for metric family {fam!r}")


def _require_positive(q_hat, fam):
    if q_hat.size and q_hat.min() <= 0.0:
        raise CapabilityError(f"{fam}: profile undefined at q_hat = 0")


def etu_gap_bound(profile: LipschitzProfile, n: int) -> float:
    """Bound on |exact - semi-empirical| expected utility: sum(T+P)/(2*sqrt(n))."""
    return float(np.sum(profile.t_const + profile.p_const) / (2.0 * math.sqrt(n)))


# ---------------------------------------------------------------------------
# Metric-string grammar (CLI surface)
# ---------------------------------------------------------------------------


def parse_metric(text: str, k: int) -> MetricSpec:
    """Parse a metric selection string.

    Grammar: macro-p | macro-r | macro-f:<beta> | coverage | instance-p |
    weighted:<path> | mixed:<alpha>:<metricA>:<metricB>.
    """
    tokens = text.split(":")
    spec, rest = _parse_tokens(tokens, k)
    if rest:
        raise ValueError(f"trailing tokens in metric string: {':'.join(rest)!r}")
    return spec


def _parse_tokens(tokens, k):
    if not tokens:
        raise ValueError("empty metric string")
    head, rest = tokens[0], tokens[1:]
    if head == "macro-p":
        return macro_precision(), rest
    if head == "macro-r":
        return macro_recall(), rest
    if head == "macro-f":
        if not rest:
            raise ValueError("macro-f requires a beta, e.g. macro-f:1.0")
        return macro_fbeta(_parse_float(rest[0], "beta")), rest[1:]
    if head == "coverage":
        return coverage(), rest
    if head == "instance-p":
        return instance_precision(k), rest
    if head == "weighted":
        if not rest:
            raise ValueError("weighted requires a weight-file path")
        return weighted_instance(load_vector(rest[0])), rest[1:]
    if head == "mixed":
        if len(rest) < 3:
            raise ValueError("mixed requires mixed:<alpha>:<metricA>:<metricB>")
        alpha = _parse_float(rest[0], "alpha")
        part_a, rest = _parse_tokens(rest[1:], k)
        part_b, rest = _parse_tokens(rest, k)
        return mixed(alpha, part_a, part_b), rest
    raise ValueError(f"unknown metric: {head!r}")


def _parse_float(tok, name):
    try:
        return float(tok)
    except ValueError:
        raise ValueError(f"bad {name} value: {tok!r}") from None
