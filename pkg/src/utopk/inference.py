"""Prediction strategies for exactly-k label selection.

Strategies either decide each instance independently (weighted top-k, the
closed form for utilities linear in the confusion entries) or iterate block
coordinate ascent over instances, re-optimizing one prediction row at a time
against per-label running statistics.  The coverage objective gets a
specialized ascent that works on the exact expected value rather than the
semi-empirical surrogate.  Greedy variants do a single in-order pass using
statistics of previously seen rows only.

All strategies are pure functions of (inputs, config.seed): identical inputs
reproduce identical reports.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .data import (
    CapabilityError,
    PredictionRow,
    SparseRowMatrix,
    array_to_pred_rows,
    failure_from_scratch,
    pred_rows_to_array,
    stats_from_scratch,
    values_at,
)
from .metrics import (
    COVERAGE,
    HAMMING,
    INSTANCE_PRECISION,
    MACRO_FBETA,
    MACRO_PRECISION,
    MACRO_RECALL,
    MIXED,
    WEIGHTED,
    MetricSpec,
    label_utilities,
    utility_at_stats,
)

INIT_RANDOM = "random"
INIT_TOPK = "topk"

_ASCENT_FAMILIES = {MACRO_PRECISION, MACRO_RECALL, MACRO_FBETA, WEIGHTED,
                    INSTANCE_PRECISION, HAMMING}


@dataclass(frozen=True)
class InferenceConfig:
    """Shared knobs for all strategies.

    k_prime = 0 disables shortlisting; otherwise gains are computed only on
    each row's k_prime largest-probability labels (plus its current
    prediction set during ascent), with all other labels treated as having
    probability 0.
    """

    k: int
    k_prime: int = 0
    epsilon: float = 1e-7
    seed: int = 0
    init: str = INIT_RANDOM
    max_passes: int = 100

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.k_prime != 0 and self.k_prime < self.k:
            raise ValueError("k_prime must be 0 or >= k")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.max_passes < 1:
            raise ValueError("max_passes must be >= 1")
        if self.init not in (INIT_RANDOM, INIT_TOPK):
            raise ValueError(f"unknown init mode: {self.init!r}")


@dataclass
class InferenceReport:
    predictions: List[PredictionRow]
    objective_trace: List[float]
    passes: int
    wall_time: float

    def prediction_array(self) -> np.ndarray:
        return pred_rows_to_array(self.predictions)


# ---------------------------------------------------------------------------
# Top-k selection primitives
# ---------------------------------------------------------------------------


def select_top_k(gains, k: int, n_labels: Optional[int] = None) -> PredictionRow:
    """The k labels with largest gains, ties broken by smaller label index.

    `gains` is a dense array over all labels, a (indices, values) pair, or a
    {label: gain} dict.  Sparse inputs treat missing labels as gain 0, which
    pads the selection when fewer than k gains are given.
    """
    if isinstance(gains, dict):
        idx = np.asarray(sorted(gains), dtype=np.int64)
        val = np.asarray([gains[j] for j in idx], dtype=np.float64)
    elif isinstance(gains, tuple):
        idx = np.asarray(gains[0], dtype=np.int64)
        val = np.asarray(gains[1], dtype=np.float64)
    else:
        arr = np.asarray(gains, dtype=np.float64)
        if n_labels is None:
            n_labels = arr.size
        elif n_labels != arr.size:
            raise ValueError("dense gain vector length must equal n_labels")
        if k > n_labels:
            raise ValueError(f"k={k} exceeds number of labels {n_labels}")
        return PredictionRow(k, tuple(_top_k_dense(arr, k)))
    if n_labels is None:
        raise ValueError("sparse gains require n_labels")
    if k > n_labels:
        raise ValueError(f"k={k} exceeds number of labels {n_labels}")
    return PredictionRow(k, tuple(_top_k_padded(idx, val, k, n_labels)))


def _top_k_dense(gains: np.ndarray, k: int) -> np.ndarray:
    order = np.argsort(-gains, kind="stable")[:k]
    return np.sort(order)


def _top_k_restricted(cand: np.ndarray, gains: np.ndarray, k: int) -> np.ndarray:
    """Top-k among candidate labels only; `cand` must be sorted ascending."""
    sel = np.argsort(-gains, kind="stable")[:k]
    return np.sort(cand[sel])


def _top_k_padded(idx: np.ndarray, val: np.ndarray, k: int, n_labels: int) -> np.ndarray:
    """Top-k treating labels outside `idx` as having gain exactly 0."""
    missing = _smallest_missing(idx, k, n_labels)
    pool_idx = np.concatenate([idx, missing])
    pool_val = np.concatenate([val, np.zeros(missing.size)])
    order = np.argsort(pool_idx)
    pool_idx = pool_idx[order]
    pool_val = pool_val[order]
    sel = np.argsort(-pool_val, kind="stable")[:k]
    return np.sort(pool_idx[sel])


def _smallest_missing(idx: np.ndarray, k: int, n_labels: int) -> np.ndarray:
    out = []
    stored = set(int(j) for j in idx)
    j = 0
    while len(out) < k and j < n_labels:
        if j not in stored:
            out.append(j)
        j += 1
    return np.asarray(out, dtype=np.int64)


def _top_k_prime_row(idx: np.ndarray, val: np.ndarray, k_prime: int) -> np.ndarray:
    """Indices of a row's k_prime largest probabilities, sorted ascending."""
    if idx.size <= k_prime:
        return idx
    sel = np.argsort(-val, kind="stable")[:k_prime]
    return np.sort(idx[sel])


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------


def semi_etu_objective(probs: SparseRowMatrix, preds: Sequence[PredictionRow],
                       metric: MetricSpec) -> float:
    """Utility evaluated at expected statistics (expectation moved inside)."""
    stats = stats_from_scratch(probs, preds)
    return utility_at_stats(metric, stats.t_hat, stats.p, stats.q_hat)


def coverage_expected_utility(probs: SparseRowMatrix, preds: Sequence[PredictionRow]) -> float:
    """Exact expected coverage: 1 - (1/m) sum_j prod_i (1 - eta_ij yhat_ij)."""
    return 1.0 - float(failure_from_scratch(probs, preds).f.mean())


_ENUM_MAX_N = 20


def etu_objective_exact(probs: SparseRowMatrix, preds: Sequence[PredictionRow],
                        metric: MetricSpec) -> float:
    """Exact expected task utility over label realizations.

    Coverage uses its closed-form product expression with no size limit.
    Other families enumerate, per label, all 2^n outcomes of that label's
    column (label columns are independent given the instances), which is
    guarded at n <= 20.
    """
    if metric.family == COVERAGE:
        return coverage_expected_utility(probs, preds)
    if metric.family == MIXED:
        a = etu_objective_exact(probs, preds, metric.part_a)
        b = etu_objective_exact(probs, preds, metric.part_b)
        return (1.0 - metric.alpha) * a + metric.alpha * b
    n, m = probs.n_rows, probs.n_cols
    if len(preds) != n:
        raise ValueError(f"got {len(preds)} prediction rows for {n} instances")
    if n > _ENUM_MAX_N:
        raise CapabilityError(f"exact enumeration limited to n <= {_ENUM_MAX_N}, got {n}")
    bits, q_arr = _outcome_table(n)
    pred_arr = pred_rows_to_array(preds)
    eta = probs.to_dense()
    inv_n = 1.0 / n
    p_vec = np.zeros(m)
    yhat = np.zeros((n, m))
    for i in range(n):
        yhat[i, pred_arr[i]] = 1.0
        p_vec[pred_arr[i]] += inv_n
    total = 0.0
    for j in range(m):
        col = eta[:, j]
        prob = np.ones(bits.shape[0])
        for i in range(n):
            prob *= np.where(bits[:, i], col[i], 1.0 - col[i])
        t_arr = (bits @ yhat[:, j]) * inv_n
        contrib = label_utilities(metric, t_arr, p_vec[j], q_arr, m, label_ids=j)
        total += float(prob @ np.asarray(contrib, dtype=np.float64))
    return total


_OUTCOME_CACHE = {}


def _outcome_table(n: int):
    cached = _OUTCOME_CACHE.get(n)
    if cached is None:
        span = np.arange(1 << n, dtype=np.int64)
        bits = ((span[:, None] >> np.arange(n)) & 1).astype(np.float64)
        q_arr = bits.sum(axis=1) / n
        cached = (bits, q_arr)
        _OUTCOME_CACHE.clear()
        _OUTCOME_CACHE[n] = cached
    return cached


# ---------------------------------------------------------------------------
# Instance-wise strategies
# ---------------------------------------------------------------------------


def weighted_topk_infer(probs: SparseRowMatrix, w11, w01=None,
                        cfg: InferenceConfig = None) -> InferenceReport:
    """Per instance, select the k labels with largest eta_j * w11_j + w01_j.

    Globally optimal for utilities linear in the confusion entries.  With
    w01 = None the additive part is 0 and rows are scored on their stored
    entries only (labels with probability 0 score exactly 0).
    """
    if cfg is None:
        raise ValueError("cfg is required")
    n, m = probs.n_rows, probs.n_cols
    k = cfg.k
    if k > m:
        raise ValueError(f"k={k} exceeds number of labels {m}")
    w11 = np.asarray(w11, dtype=np.float64)
    if w11.shape != (m,):
        raise ValueError("w11 must have length n_cols")
    if w01 is not None:
        w01 = np.asarray(w01, dtype=np.float64)
        if w01.shape != (m,):
            raise ValueError("w01 must have length n_cols")
    start = time.perf_counter()
    pred = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        idx, val = _row_view(probs, i, cfg.k_prime)
        if w01 is None:
            pred[i] = _top_k_padded(idx, val * w11[idx], k, m)
        else:
            gains = w01.copy()
            gains[idx] += val * w11[idx]
            pred[i] = _top_k_dense(gains, k)
    rows = array_to_pred_rows(pred)
    stats = stats_from_scratch(probs, rows)
    value = float(np.sum(w11 * stats.t_hat))
    if w01 is not None:
        value += float(np.sum(w01 * stats.p))
    return InferenceReport(rows, [value], 1, time.perf_counter() - start)


def top_k_infer(probs: SparseRowMatrix, cfg: InferenceConfig) -> InferenceReport:
    """Plain top-k on the probability estimates (uniform unit weights)."""
    return weighted_topk_infer(probs, np.ones(probs.n_cols), None, cfg)


def _row_view(probs, i, k_prime):
    idx, val = probs.row(i)
    if k_prime > 0 and idx.size > k_prime:
        keep = _top_k_prime_row(idx, val, k_prime)
        return keep, values_at(idx, val, keep)
    return idx, val


# ---------------------------------------------------------------------------
# Block coordinate ascent
# ---------------------------------------------------------------------------


def bca_infer(probs: SparseRowMatrix, metric: MetricSpec,
              cfg: InferenceConfig) -> InferenceReport:
    """Block coordinate ascent on the semi-empirical expected utility.

    Each step re-optimizes one instance's prediction row exactly, holding
    the others fixed, so the per-pass objective trace never decreases.
    Stops once a full pass improves the objective by at most epsilon, or
    after max_passes.  Instance visit order is a fresh shuffle per pass from
    a single generator seeded with cfg.seed, which also drives the random
    initialization.
    """
    _check_ascent_metric(metric)
    n, m = probs.n_rows, probs.n_cols
    k = cfg.k
    if k > m:
        raise ValueError(f"k={k} exceeds number of labels {m}")
    start = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    pred = _init_predictions(probs, cfg, rng)
    inv_n = 1.0 / n
    t_hat = np.zeros(m)
    p = np.zeros(m)
    for i in range(n):
        idx, val = probs.row(i)
        t_hat[pred[i]] += values_at(idx, val, pred[i]) * inv_n
        p[pred[i]] += inv_n
    q_hat = probs.column_means()
    shortlists = None
    if cfg.k_prime > 0:
        shortlists = [_top_k_prime_row(*probs.row(i), cfg.k_prime) for i in range(n)]
    dense_eta = np.zeros(m)
    u_new = utility_at_stats(metric, t_hat, p, q_hat)
    u_old = -np.inf
    trace: List[float] = []
    passes = 0
    while u_new > u_old + cfg.epsilon and passes < cfg.max_passes:
        for s in rng.permutation(n):
            idx, val = probs.row(s)
            ent = pred[s]
            t_hat[ent] -= values_at(idx, val, ent) * inv_n
            p[ent] -= inv_n
            if shortlists is None:
                probs.row_dense(s, out=dense_eta)
                base = label_utilities(metric, t_hat, p, q_hat, m)
                plus = label_utilities(
                    metric, t_hat + dense_eta * inv_n, p + inv_n, q_hat, m)
                new_ent = _top_k_dense(np.asarray(plus) - base, k)
            else:
                cand = np.union1d(shortlists[s], ent)
                eta_c = values_at(idx, val, cand)
                base = label_utilities(
                    metric, t_hat[cand], p[cand], q_hat[cand], m, label_ids=cand)
                plus = label_utilities(
                    metric, t_hat[cand] + eta_c * inv_n, p[cand] + inv_n,
                    q_hat[cand], m, label_ids=cand)
                new_ent = _top_k_restricted(cand, np.asarray(plus) - base, k)
            pred[s] = new_ent
            t_hat[new_ent] += values_at(idx, val, new_ent) * inv_n
            p[new_ent] += inv_n
        passes += 1
        u_old = u_new
        u_new = utility_at_stats(metric, t_hat, p, q_hat)
        trace.append(u_new)
    return InferenceReport(array_to_pred_rows(pred), trace, passes,
                           time.perf_counter() - start)


def bca_coverage_infer(probs: SparseRowMatrix, cfg: InferenceConfig) -> InferenceReport:
    """Block coordinate ascent directly on exact expected coverage.

    Maintains per-label failure products f_j multiplicatively; the gain of
    predicting label j for the current row is eta_j * f_j with the row's own
    factor divided out.  Requires probabilities clamped below 1 (a matrix
    construction guarantee).
    """
    n, m = probs.n_rows, probs.n_cols
    k = cfg.k
    if k > m:
        raise ValueError(f"k={k} exceeds number of labels {m}")
    start = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    pred = _init_predictions(probs, cfg, rng)
    views = [_row_view(probs, i, cfg.k_prime) for i in range(n)]
    f = np.ones(m)
    for i in range(n):
        idx, val = views[i]
        f[pred[i]] *= 1.0 - values_at(idx, val, pred[i])
    u_new = 1.0 - float(f.mean())
    u_old = -np.inf
    trace: List[float] = []
    passes = 0
    while u_new > u_old + cfg.epsilon and passes < cfg.max_passes:
        for s in rng.permutation(n):
            idx, val = views[s]
            ent = pred[s]
            f[ent] /= 1.0 - values_at(idx, val, ent)
            new_ent = _top_k_padded(idx, f[idx] * val, k, m)
            pred[s] = new_ent
            f[new_ent] *= 1.0 - values_at(idx, val, new_ent)
            np.minimum(f, 1.0, out=f)
        passes += 1
        u_old = u_new
        u_new = 1.0 - float(f.mean())
        trace.append(u_new)
    return InferenceReport(array_to_pred_rows(pred), trace, passes,
                           time.perf_counter() - start)


# ---------------------------------------------------------------------------
# Greedy single-pass variants
# ---------------------------------------------------------------------------


def greedy_infer(probs: SparseRowMatrix, metric: MetricSpec,
                 cfg: InferenceConfig) -> InferenceReport:
    """One pass in natural row order; each row is decided from statistics of
    previously seen rows only (the positive-rate estimate includes the
    current row)."""
    _check_ascent_metric(metric)
    n, m = probs.n_rows, probs.n_cols
    k = cfg.k
    if k > m:
        raise ValueError(f"k={k} exceeds number of labels {m}")
    start = time.perf_counter()
    inv_n = 1.0 / n
    t_hat = np.zeros(m)
    p = np.zeros(m)
    q_part = np.zeros(m)
    pred = np.empty((n, k), dtype=np.int64)
    dense_eta = np.zeros(m)
    for i in range(n):
        full_idx, full_val = probs.row(i)
        q_part[full_idx] += full_val * inv_n
        if cfg.k_prime > 0:
            idx, val = _row_view(probs, i, cfg.k_prime)
            eta_c = val
            base = label_utilities(metric, t_hat[idx], p[idx], q_part[idx], m,
                                   label_ids=idx)
            plus = label_utilities(metric, t_hat[idx] + eta_c * inv_n,
                                   p[idx] + inv_n, q_part[idx], m, label_ids=idx)
            pred[i] = _top_k_padded(idx, np.asarray(plus) - base, k, m)
        else:
            idx, val = full_idx, full_val
            probs.row_dense(i, out=dense_eta)
            base = label_utilities(metric, t_hat, p, q_part, m)
            plus = label_utilities(metric, t_hat + dense_eta * inv_n, p + inv_n,
                                   q_part, m)
            pred[i] = _top_k_dense(np.asarray(plus) - base, k)
        ent = pred[i]
        t_hat[ent] += values_at(idx, val, ent) * inv_n
        p[ent] += inv_n
    value = utility_at_stats(metric, t_hat, p, q_part)
    return InferenceReport(array_to_pred_rows(pred), [value], 1,
                           time.perf_counter() - start)


def greedy_coverage_infer(probs: SparseRowMatrix, cfg: InferenceConfig) -> InferenceReport:
    """Single-pass coverage ascent: per row select top-k of f_j * eta_ij,
    then update the failure products multiplicatively."""
    n, m = probs.n_rows, probs.n_cols
    k = cfg.k
    if k > m:
        raise ValueError(f"k={k} exceeds number of labels {m}")
    start = time.perf_counter()
    f = np.ones(m)
    pred = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        idx, val = _row_view(probs, i, cfg.k_prime)
        pred[i] = _top_k_padded(idx, f[idx] * val, k, m)
        ent = pred[i]
        f[ent] *= 1.0 - values_at(idx, val, ent)
    value = 1.0 - float(f.mean())
    return InferenceReport(array_to_pred_rows(pred), [value], 1,
                           time.perf_counter() - start)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _check_ascent_metric(metric: MetricSpec):
    if metric.family == MIXED:
        _check_ascent_metric(metric.part_a)
        _check_ascent_metric(metric.part_b)
        return
    if metric.family not in _ASCENT_FAMILIES:
        raise ValueError(
            f"metric family {metric.family!r} is not supported by ascent "
            "strategies (use the coverage-specific ones for coverage)")


def _init_predictions(probs, cfg, rng) -> np.ndarray:
    n, m = probs.n_rows, probs.n_cols
    k = cfg.k
    pred = np.empty((n, k), dtype=np.int64)
    if cfg.init == INIT_RANDOM:
        for i in range(n):
            pred[i] = np.sort(rng.choice(m, size=k, replace=False))
    else:
        for i in range(n):
            idx, val = probs.row(i)
            pred[i] = _top_k_padded(idx, val, k, m)
    return pred
