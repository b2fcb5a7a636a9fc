"""Sparse row matrices, prediction rows, and the running statistics they feed.

The on-disk text format used throughout the package:

    <n_rows> <n_cols>
    idx:value idx:value ...
    idx idx ...               (binary matrices may omit ":value", implied 1)

Column indices are 0-based and strictly ascending within a row.  Values are
serialized with 9 significant digits, which round-trips exactly through
float64.  An empty line is a valid row with no entries.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

# Probabilities are clamped strictly below 1 on construction so that later
# divisions by (1 - eta * yhat) are never singular.
PROB_CLAMP = 1.0 - 1e-9

KIND_PROBABILITIES = "probabilities"
KIND_BINARY = "binary"


class FormatError(ValueError):
    """Malformed matrix/weight/tree file; message names the offending line."""


class CapabilityError(RuntimeError):
    """Requested computation exceeds a hard size guard or supported family."""


class SparseRowMatrix:
    """Row-major sparse matrix with per-row sorted (index, value) arrays.

    Immutable after construction; safe to share across threads.
    """

    __slots__ = ("n_rows", "n_cols", "kind", "_indices", "_values")

    def __init__(self, n_rows, n_cols, rows, kind=KIND_PROBABILITIES, validate=True):
        """`rows` is a sequence of (indices, values) array pairs, one per row."""
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.kind = kind
        if kind not in (KIND_PROBABILITIES, KIND_BINARY):
            raise ValueError(f"unknown matrix kind: {kind!r}")
        if len(rows) != self.n_rows:
            raise ValueError(f"expected {self.n_rows} rows, got {len(rows)}")
        self._indices = []
        self._values = []
        for i, (idx, val) in enumerate(rows):
            idx = np.asarray(idx, dtype=np.int64)
            val = np.asarray(val, dtype=np.float64)
            if validate:
                self._check_row(i, idx, val)
            if kind == KIND_PROBABILITIES:
                val = np.minimum(val, PROB_CLAMP)
            self._indices.append(idx)
            self._values.append(val)

    def _check_row(self, i, idx, val):
        if idx.shape != val.shape:
            raise ValueError(f"row {i}: index/value length mismatch")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.n_cols:
                raise ValueError(f"row {i}: column index out of range")
            if np.any(np.diff(idx) <= 0):
                raise ValueError(f"row {i}: column indices not strictly ascending")
        if self.kind == KIND_PROBABILITIES:
            if val.size and (val.min() < 0.0 or val.max() > 1.0):
                raise ValueError(f"row {i}: probability outside [0, 1]")
        else:
            if val.size and np.any(val != 1.0):
                raise ValueError(f"row {i}: binary matrix value != 1")

    @classmethod
    def from_dense(cls, dense, kind=KIND_PROBABILITIES):
        dense = np.asarray(dense, dtype=np.float64)
        rows = []
        for r in dense:
            idx = np.nonzero(r)[0]
            rows.append((idx, r[idx]))
        return cls(dense.shape[0], dense.shape[1], rows, kind=kind)

    def row(self, i):
        """Return (indices, values) arrays for row `i` (do not mutate)."""
        return self._indices[i], self._values[i]

    def row_dense(self, i, out=None):
        """Dense length-n_cols copy of row `i`."""
        if out is None:
            out = np.zeros(self.n_cols)
        else:
            out[:] = 0.0
        out[self._indices[i]] = self._values[i]
        return out

    def to_dense(self):
        dense = np.zeros((self.n_rows, self.n_cols))
        for i in range(self.n_rows):
            dense[i, self._indices[i]] = self._values[i]
        return dense

    def column_means(self):
        """Per-column mean over rows (missing entries count as 0)."""
        totals = np.zeros(self.n_cols)
        for idx, val in zip(self._indices, self._values):
            np.add.at(totals, idx, val)
        return totals / self.n_rows

    def __eq__(self, other):
        if not isinstance(other, SparseRowMatrix):
            return NotImplemented
        if (self.n_rows, self.n_cols) != (other.n_rows, other.n_cols):
            return False
        for a, b, c, d in zip(self._indices, other._indices, self._values, other._values):
            if not (np.array_equal(a, b) and np.array_equal(c, d)):
                return False
        return True

    def __repr__(self):
        return f"SparseRowMatrix({self.n_rows}x{self.n_cols}, kind={self.kind})"


@dataclass(frozen=True)
class PredictionRow:
    """Exactly-k label subset predicted for one instance."""

    k: int
    entries: tuple

    def __post_init__(self):
        entries = tuple(int(e) for e in self.entries)
        if len(entries) != self.k:
            raise ValueError(f"prediction row must have exactly k={self.k} entries")
        if len(set(entries)) != len(entries):
            raise ValueError("prediction row entries must be distinct")
        if any(e < 0 for e in entries):
            raise ValueError("prediction row entries must be non-negative")
        object.__setattr__(self, "entries", tuple(sorted(entries)))


def pred_rows_to_array(preds: Sequence[PredictionRow]) -> np.ndarray:
    """Stack prediction rows into an (n, k) int array of sorted label ids."""
    if not preds:
        return np.zeros((0, 0), dtype=np.int64)
    k = preds[0].k
    arr = np.empty((len(preds), k), dtype=np.int64)
    for i, row in enumerate(preds):
        if row.k != k:
            raise ValueError("all prediction rows must share the same budget k")
        arr[i] = row.entries
    return arr


def array_to_pred_rows(arr: np.ndarray) -> list:
    return [PredictionRow(arr.shape[1], tuple(row)) for row in arr]


def predictions_to_matrix(preds: Sequence[PredictionRow], n_cols: int) -> SparseRowMatrix:
    rows = [(np.asarray(p.entries, dtype=np.int64), np.ones(p.k)) for p in preds]
    return SparseRowMatrix(len(preds), n_cols, rows, kind=KIND_BINARY)


def matrix_to_predictions(mat: SparseRowMatrix, k: int) -> list:
    preds = []
    for i in range(mat.n_rows):
        idx, _ = mat.row(i)
        preds.append(PredictionRow(k, tuple(idx)))
    return preds


# ---------------------------------------------------------------------------
# Running statistics
# ---------------------------------------------------------------------------

STATS_ATOL = 1e-9


def values_at(idx: np.ndarray, val: np.ndarray, ent: np.ndarray) -> np.ndarray:
    """Values of a sorted sparse row at positions `ent` (0 where absent)."""
    out = np.zeros(ent.size)
    if idx.size == 0 or ent.size == 0:
        return out
    pos = np.searchsorted(idx, ent)
    inside = pos < idx.size
    hit = inside.copy()
    hit[inside] = idx[pos[inside]] == ent[inside]
    out[hit] = val[pos[hit]]
    return out


@dataclass
class RunningStats:
    """Per-label expected statistics in 1/n units.

    t_hat[j] = (1/n) sum_i eta_ij * yhat_ij   (expected true positives)
    p[j]     = (1/n) sum_i yhat_ij            (predicted-positive rate)
    q_hat[j] = (1/n) sum_i eta_ij             (expected positive rate)

    Single-writer object: mutate only from one thread at a time.
    """

    n: int
    t_hat: np.ndarray
    p: np.ndarray
    q_hat: np.ndarray

    def copy(self):
        return RunningStats(self.n, self.t_hat.copy(), self.p.copy(), self.q_hat.copy())


def stats_from_scratch(probs: SparseRowMatrix, preds: Sequence[PredictionRow]) -> RunningStats:
    """Recompute running statistics by a full pass over all rows."""
    n, m = probs.n_rows, probs.n_cols
    if len(preds) != n:
        raise ValueError(f"got {len(preds)} prediction rows for {n} instances")
    t_hat = np.zeros(m)
    p = np.zeros(m)
    inv_n = 1.0 / n
    for i, pred in enumerate(preds):
        ent = np.asarray(pred.entries, dtype=np.int64)
        if ent.size and ent[-1] >= m:
            raise ValueError(f"prediction row {i}: label index out of range")
        idx, val = probs.row(i)
        t_hat[ent] += values_at(idx, val, ent) * inv_n
        p[ent] += inv_n
    return RunningStats(n, t_hat, p, probs.column_means())


def stats_swap_row(
    stats: RunningStats,
    eta_row,
    old_pred: PredictionRow,
    new_pred: PredictionRow,
) -> RunningStats:
    """Statistics after replacing one instance's prediction row.

    `eta_row` is the (indices, values) pair for that instance.  Equivalent to
    recomputing from scratch with the row swapped, up to float round-off.
    """
    out = stats.copy()
    _apply_row(out, eta_row, old_pred.entries, -1.0)
    _apply_row(out, eta_row, new_pred.entries, +1.0)
    return out


def _apply_row(stats, eta_row, entries, sign):
    idx, val = eta_row
    ent = np.asarray(entries, dtype=np.int64)
    inv_n = sign / stats.n
    stats.t_hat[ent] += values_at(idx, val, ent) * inv_n
    stats.p[ent] += inv_n


@dataclass
class FailureProbVector:
    """Per-label product of (1 - eta_ij * yhat_ij) over instances.

    f[j] is the probability that label j is relevant for none of the
    instances that predicted it.  Single-writer object.
    """

    f: np.ndarray

    def copy(self):
        return FailureProbVector(self.f.copy())


def failure_from_scratch(probs: SparseRowMatrix, preds: Sequence[PredictionRow]) -> FailureProbVector:
    n, m = probs.n_rows, probs.n_cols
    if len(preds) != n:
        raise ValueError(f"got {len(preds)} prediction rows for {n} instances")
    f = np.ones(m)
    for i, pred in enumerate(preds):
        idx, val = probs.row(i)
        ent = np.asarray(pred.entries, dtype=np.int64)
        f[ent] *= 1.0 - values_at(idx, val, ent)
    return FailureProbVector(f)


def failure_swap_row(
    fail: FailureProbVector,
    eta_row,
    old_pred: PredictionRow,
    new_pred: PredictionRow,
) -> FailureProbVector:
    """Multiplicative update of the failure products after a row swap.

    Requires probabilities clamped below 1 (construction guarantee), so the
    divisions are never singular.
    """
    out = fail.copy()
    idx, val = eta_row
    for entries, invert in ((old_pred.entries, True), (new_pred.entries, False)):
        ent = np.asarray(entries, dtype=np.int64)
        factors = 1.0 - values_at(idx, val, ent)
        if invert:
            out.f[ent] /= factors
        else:
            out.f[ent] *= factors
    np.minimum(out.f, 1.0, out=out.f)
    return out


# ---------------------------------------------------------------------------
# Text I/O
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return "%.9g" % x


def load_sparse_matrix(path, kind=KIND_PROBABILITIES) -> SparseRowMatrix:
    """Parse a sparse matrix file; raises FormatError naming the bad line."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FormatError(f"{path}: line 1: missing header")
    head = lines[0].split()
    if len(head) != 2:
        raise FormatError(f"{path}: line 1: header must be '<n_rows> <n_cols>'")
    try:
        n_rows, n_cols = int(head[0]), int(head[1])
    except ValueError:
        raise FormatError(f"{path}: line 1: non-integer header") from None
    if n_rows < 0 or n_cols < 0:
        raise FormatError(f"{path}: line 1: negative dimension")
    if len(lines) - 1 != n_rows:
        raise FormatError(
            f"{path}: expected {n_rows} row lines, found {len(lines) - 1}"
        )
    rows = []
    for r, line in enumerate(lines[1:]):
        lineno = r + 2
        idx_list, val_list = [], []
        for tok in line.split():
            if ":" in tok:
                si, _, sv = tok.partition(":")
            else:
                si, sv = tok, "1"
            try:
                j = int(si)
                v = float(sv)
            except ValueError:
                raise FormatError(f"{path}: line {lineno}: bad entry {tok!r}") from None
            idx_list.append(j)
            val_list.append(v)
        idx = np.asarray(idx_list, dtype=np.int64)
        val = np.asarray(val_list, dtype=np.float64)
        if idx.size:
            if idx.min() < 0 or idx.max() >= n_cols:
                raise FormatError(f"{path}: line {lineno}: column index out of range")
            if np.any(np.diff(idx) <= 0):
                raise FormatError(f"{path}: line {lineno}: non-ascending indices")
            if kind == KIND_PROBABILITIES and (val.min() < 0.0 or val.max() > 1.0):
                raise FormatError(f"{path}: line {lineno}: value outside [0, 1]")
            if kind == KIND_BINARY and np.any(val != 1.0):
                raise FormatError(f"{path}: line {lineno}: binary value != 1")
        rows.append((idx, val))
    return SparseRowMatrix(n_rows, n_cols, rows, kind=kind, validate=False)


def save_sparse_matrix(mat: SparseRowMatrix, path) -> None:
    parts = [f"{mat.n_rows} {mat.n_cols}"]
    binary = mat.kind == KIND_BINARY
    for i in range(mat.n_rows):
        idx, val = mat.row(i)
        if binary:
            parts.append(" ".join(str(j) for j in idx))
        else:
            parts.append(" ".join(f"{j}:{_fmt(v)}" for j, v in zip(idx, val)))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


def load_vector(path) -> np.ndarray:
    """One float per line (weight and prior files)."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(float(line))
            except ValueError:
                raise FormatError(f"{path}: line {lineno}: not a number") from None
    return np.asarray(out, dtype=np.float64)


def save_vector(vec: Iterable[float], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in vec:
            fh.write(_fmt(v) + "\n")
