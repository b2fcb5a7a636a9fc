"""The at-k metric report against ground-truth labels.

Counting here is deliberately independent of the utility-family code path:
confusion entries are accumulated as integers per label and per instance, so
agreement between the two routes is a meaningful consistency check rather
than a tautology.  Macro denominators count all m labels, including labels
absent from the test set (they contribute 0).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import KIND_BINARY, PredictionRow, SparseRowMatrix


@dataclass
class EvalReport:
    k: int
    instance_precision: float
    instance_recall: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    coverage: float
    ps_precision: Optional[float] = None

    def as_dict(self):
        out = {
            f"iP@{self.k}": self.instance_precision,
            f"iR@{self.k}": self.instance_recall,
            f"mP@{self.k}": self.macro_precision,
            f"mR@{self.k}": self.macro_recall,
            f"mF@{self.k}": self.macro_f1,
            f"mC@{self.k}": self.coverage,
        }
        if self.ps_precision is not None:
            out[f"psP@{self.k}"] = self.ps_precision
        return out

    def as_lines(self) -> str:
        return "\n".join(f"{key}={value:.9g}" for key, value in self.as_dict().items())

    def as_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=False)


def evaluate(preds: Sequence[PredictionRow], labels: SparseRowMatrix, k: int,
             ps_weights=None) -> EvalReport:
    """Compute the full at-k report; never silently truncates predictions."""
    if labels.kind != KIND_BINARY:
        raise ValueError("evaluate expects a binary label matrix")
    n, m = labels.n_rows, labels.n_cols
    if len(preds) != n:
        raise ValueError(f"got {len(preds)} prediction rows for {n} instances")
    if ps_weights is not None:
        ps_weights = np.asarray(ps_weights, dtype=np.float64)
        if ps_weights.shape != (m,):
            raise ValueError("ps_weights must have length n_cols")
    tp = np.zeros(m, dtype=np.int64)
    pred_count = np.zeros(m, dtype=np.int64)
    pos_count = np.zeros(m, dtype=np.int64)
    inst_prec = 0.0
    inst_rec = 0.0
    ps_num = 0.0
    ps_den = 0.0
    for i in range(n):
        row = preds[i]
        if row.k != k:
            raise ValueError(f"prediction row {i} has budget {row.k}, expected {k}")
        ent = np.asarray(row.entries, dtype=np.int64)
        if ent.size and ent[-1] >= m:
            raise ValueError(f"prediction row {i}: label index out of range")
        true_idx, _ = labels.row(i)
        hits = np.intersect1d(ent, true_idx, assume_unique=True)
        tp[hits] += 1
        pred_count[ent] += 1
        pos_count[true_idx] += 1
        inst_prec += hits.size / k
        if true_idx.size:
            inst_rec += hits.size / true_idx.size
        if ps_weights is not None:
            ps_num += float(ps_weights[hits].sum())
            best = np.sort(ps_weights[true_idx])[::-1][:k]
            ps_den += float(best.sum())
    macro_p = _zero_safe(tp, pred_count).sum() / m
    macro_r = _zero_safe(tp, pos_count).sum() / m
    macro_f = _zero_safe(2 * tp, pred_count + pos_count).sum() / m
    cov = float((tp > 0).sum()) / m
    ps = None
    if ps_weights is not None:
        ps = ps_num / ps_den if ps_den > 0 else 0.0
    return EvalReport(
        k=k,
        instance_precision=inst_prec / n,
        instance_recall=inst_rec / n,
        macro_precision=float(macro_p),
        macro_recall=float(macro_r),
        macro_f1=float(macro_f),
        coverage=cov,
        ps_precision=ps,
    )


def _zero_safe(num, den):
    out = np.zeros(num.shape)
    np.divide(num, den, out=out, where=den > 0)
    return out
