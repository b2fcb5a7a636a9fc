"""Exhaustive optimizers and local-optimality checking for small instances.

These are the ground truth the inference strategies are validated against.
Candidate prediction matrices are enumerated in lexicographic order over
per-row label combinations; the first maximum wins, so results are fully
reproducible.  Size guards are hard errors, never silent truncation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb
from typing import List, Sequence

import numpy as np

from .data import (
    CapabilityError,
    PredictionRow,
    SparseRowMatrix,
    pred_rows_to_array,
    stats_from_scratch,
    values_at,
)
from .inference import etu_objective_exact
from .metrics import MetricSpec, label_utilities

_SEMI_GUARD = 10_000_000
_ETU_GUARD = 100_000
_ETU_MAX_N = 12
_CHUNK = 1 << 14


@dataclass
class OracleResult:
    best_preds: List[PredictionRow]
    best_value: float
    candidates_evaluated: int


def _candidate_count(n: int, m: int, k: int) -> int:
    return comb(m, k) ** n


def brute_force_semi_etu(probs: SparseRowMatrix, metric: MetricSpec, k: int) -> OracleResult:
    """Exhaustive maximum of the semi-empirical objective over all exactly-k
    prediction matrices.  Guarded at C(m, k)^n <= 1e7 candidates."""
    n, m = probs.n_rows, probs.n_cols
    if k > m:
        raise ValueError(f"k={k} exceeds number of labels {m}")
    total = _candidate_count(n, m, k)
    if total > _SEMI_GUARD:
        raise CapabilityError(
            f"{total} candidate matrices exceed the {_SEMI_GUARD} guard")
    combos = np.asarray(list(itertools.combinations(range(m), k)), dtype=np.int64)
    n_c = combos.shape[0]
    inv_n = 1.0 / n
    # Per row: the t_hat / p contribution of each combo, as dense vectors.
    row_t = np.zeros((n, n_c, m))
    row_p = np.zeros((n_c, m))
    rows_idx = np.repeat(np.arange(n_c), k)
    row_p[rows_idx, combos.ravel()] = inv_n
    for i in range(n):
        idx, val = probs.row(i)
        eta_at = values_at(idx, val, combos.ravel()).reshape(n_c, k)
        row_t[i][rows_idx, combos.ravel()] = (eta_at * inv_n).ravel()
    q_hat = probs.column_means()

    best_value = -np.inf
    best_index = -1
    evaluated = 0
    for start in range(0, total, _CHUNK):
        stop = min(start + _CHUNK, total)
        span = np.arange(start, stop, dtype=np.int64)
        t_mat = np.zeros((span.size, m))
        p_mat = np.zeros((span.size, m))
        rem = span
        for i in range(n - 1, -1, -1):
            digit = rem % n_c
            rem = rem // n_c
            t_mat += row_t[i][digit]
            p_mat += row_p[digit]
        contrib = label_utilities(metric, t_mat, p_mat, q_hat[None, :], m)
        vals = np.asarray(contrib).sum(axis=1)
        pos = int(np.argmax(vals))
        if vals[pos] > best_value:
            best_value = float(vals[pos])
            best_index = start + pos
        evaluated += span.size
    best = _decode_candidate(best_index, combos, n, k)
    return OracleResult(best, best_value, evaluated)


def _decode_candidate(index: int, combos: np.ndarray, n: int, k: int) -> List[PredictionRow]:
    n_c = combos.shape[0]
    digits = []
    rem = index
    for _ in range(n):
        digits.append(rem % n_c)
        rem //= n_c
    digits.reverse()
    return [PredictionRow(k, tuple(combos[d])) for d in digits]


def brute_force_etu(probs: SparseRowMatrix, metric: MetricSpec, k: int) -> OracleResult:
    """Exhaustive maximum of the exact expected utility.

    Each evaluation enumerates 2^n outcomes per label, so this is guarded at
    C(m, k)^n <= 1e5 candidates and n <= 12.
    """
    n, m = probs.n_rows, probs.n_cols
    if k > m:
        raise ValueError(f"k={k} exceeds number of labels {m}")
    total = _candidate_count(n, m, k)
    if total > _ETU_GUARD:
        raise CapabilityError(f"{total} candidate matrices exceed the {_ETU_GUARD} guard")
    if n > _ETU_MAX_N:
        raise CapabilityError(f"exact oracle limited to n <= {_ETU_MAX_N}, got {n}")
    combos = list(itertools.combinations(range(m), k))
    best_value = -np.inf
    best_preds = None
    evaluated = 0
    for choice in itertools.product(combos, repeat=n):
        preds = [PredictionRow(k, c) for c in choice]
        value = etu_objective_exact(probs, preds, metric)
        evaluated += 1
        if value > best_value:
            best_value = value
            best_preds = preds
    return OracleResult(best_preds, float(best_value), evaluated)


def local_opt_check(probs: SparseRowMatrix, preds: Sequence[PredictionRow],
                    metric: MetricSpec, k: int, tol: float = 1e-10) -> bool:
    """True iff no single-row replacement strictly increases the
    semi-empirical objective.  Enumerates all C(m, k) rows per instance and
    evaluates the full objective for each, independently of how any
    optimizer computes its gains."""
    n, m = probs.n_rows, probs.n_cols
    pred_arr = pred_rows_to_array(preds)
    if pred_arr.shape != (n, k):
        raise ValueError("predictions do not match (n, k)")
    stats = stats_from_scratch(probs, preds)
    q_hat = stats.q_hat
    combos = np.asarray(list(itertools.combinations(range(m), k)), dtype=np.int64)
    n_c = combos.shape[0]
    rows_idx = np.repeat(np.arange(n_c), k)
    inv_n = 1.0 / n
    current = float(np.sum(label_utilities(metric, stats.t_hat, stats.p, q_hat, m)))
    for s in range(n):
        idx, val = probs.row(s)
        ent = pred_arr[s]
        t_base = stats.t_hat.copy()
        p_base = stats.p.copy()
        t_base[ent] -= values_at(idx, val, ent) * inv_n
        p_base[ent] -= inv_n
        t_mat = np.tile(t_base, (n_c, 1))
        p_mat = np.tile(p_base, (n_c, 1))
        eta_at = values_at(idx, val, combos.ravel()).reshape(n_c, k)
        t_mat[rows_idx, combos.ravel()] += (eta_at * inv_n).ravel()
        p_mat[rows_idx, combos.ravel()] += inv_n
        contrib = label_utilities(metric, t_mat, p_mat, q_hat[None, :], m)
        vals = np.asarray(contrib).sum(axis=1)
        if float(vals.max()) > current + tol:
            return False
    return True
