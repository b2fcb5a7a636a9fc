"""Best-first search over a probabilistic label tree.

A label tree factorizes per-label probabilities into per-node conditional
scores: the probability mass reaching a node is the product of conditional
scores along the root path, so it can only shrink on the way down.  For any
gain function that is monotone non-decreasing in that probability, scoring a
frontier node by the best gain any leaf below it could still achieve (at the
node's own path probability) never underestimates, and best-first expansion
therefore pops the true top-k leaves without visiting whole subtrees whose
bound is already beaten.

Tree file format:
    line 1: <num_nodes> <num_labels>
    line 2: parent index per node (root's parent = -1)
    line 3: <leaf_node_id>:<label_id> pairs, one per label

Node-score files hold one instance per line as node_id:score pairs and must
cover every node.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .data import FormatError, PredictionRow
from .metrics import _safe_div


class LabelTree:
    """Rooted tree with a leaf-to-label bijection over exactly m labels.

    Every internal node has at least two children; validated on construction.
    """

    __slots__ = ("n_nodes", "n_labels", "parents", "children", "root",
                 "leaf_label", "label_leaf", "leaf_labels_under")

    def __init__(self, parents, leaf_to_label):
        parents = np.asarray(parents, dtype=np.int64)
        self.n_nodes = parents.size
        self.parents = parents
        roots = np.nonzero((parents == -1) | (parents == np.arange(self.n_nodes)))[0]
        if roots.size != 1:
            raise ValueError(f"tree must have exactly one root, found {roots.size}")
        self.root = int(roots[0])
        if np.any((parents < -1) | (parents >= self.n_nodes)):
            raise ValueError("parent index out of range")
        self.children = [[] for _ in range(self.n_nodes)]
        for v in range(self.n_nodes):
            if v != self.root:
                self.children[int(parents[v])].append(v)
        self._check_acyclic()
        leaves = [v for v in range(self.n_nodes) if not self.children[v]]
        for v in range(self.n_nodes):
            if self.children[v] and len(self.children[v]) < 2:
                raise ValueError(f"internal node {v} has fewer than 2 children")
        self.leaf_label = dict(leaf_to_label)
        if sorted(self.leaf_label) != sorted(leaves):
            raise ValueError("leaf-to-label mapping must cover exactly the leaves")
        labels = sorted(self.leaf_label.values())
        self.n_labels = len(leaves)
        if labels != list(range(self.n_labels)):
            raise ValueError("labels must be a bijection onto 0..m-1")
        self.label_leaf = np.empty(self.n_labels, dtype=np.int64)
        for leaf, lab in self.leaf_label.items():
            self.label_leaf[lab] = leaf
        self.leaf_labels_under = self._collect_labels_under()

    def _check_acyclic(self):
        seen = np.zeros(self.n_nodes, dtype=bool)
        stack = [self.root]
        seen[self.root] = True
        count = 0
        while stack:
            v = stack.pop()
            count += 1
            for c in self.children[v]:
                if seen[c]:
                    raise ValueError("cycle detected in tree")
                seen[c] = True
                stack.append(c)
        if count != self.n_nodes:
            raise ValueError("tree has nodes unreachable from the root")

    def _collect_labels_under(self):
        under: List[Optional[np.ndarray]] = [None] * self.n_nodes
        order = []
        stack = [self.root]
        while stack:
            v = stack.pop()
            order.append(v)
            stack.extend(self.children[v])
        for v in reversed(order):
            if not self.children[v]:
                under[v] = np.asarray([self.leaf_label[v]], dtype=np.int64)
            else:
                under[v] = np.sort(np.concatenate([under[c] for c in self.children[v]]))
        return under

    def path_to_root(self, node: int):
        path = [node]
        while node != self.root:
            node = int(self.parents[node])
            path.append(node)
        return path


def load_label_tree(path) -> LabelTree:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if len(lines) < 3:
        raise FormatError(f"{path}: expected 3 lines (header, parents, leaf map)")
    head = lines[0].split()
    if len(head) != 2:
        raise FormatError(f"{path}: line 1: header must be '<num_nodes> <num_labels>'")
    try:
        n_nodes, n_labels = int(head[0]), int(head[1])
        parents = [int(tok) for tok in lines[1].split()]
    except ValueError:
        raise FormatError(f"{path}: lines 1-2: non-integer field") from None
    if len(parents) != n_nodes:
        raise FormatError(f"{path}: line 2: expected {n_nodes} parent entries")
    leaf_map = {}
    for tok in lines[2].split():
        si, sep, sl = tok.partition(":")
        if not sep:
            raise FormatError(f"{path}: line 3: bad pair {tok!r}")
        try:
            leaf_map[int(si)] = int(sl)
        except ValueError:
            raise FormatError(f"{path}: line 3: bad pair {tok!r}") from None
    tree = LabelTree(parents, leaf_map)
    if tree.n_labels != n_labels:
        raise FormatError(f"{path}: header claims {n_labels} labels, tree has {tree.n_labels}")
    return tree


def save_label_tree(tree: LabelTree, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{tree.n_nodes} {tree.n_labels}\n")
        parents = tree.parents.copy()
        parents[tree.root] = -1
        fh.write(" ".join(str(int(p)) for p in parents) + "\n")
        pairs = sorted(tree.leaf_label.items())
        fh.write(" ".join(f"{leaf}:{lab}" for leaf, lab in pairs) + "\n")


def load_node_scores(path, n_nodes: int) -> List[np.ndarray]:
    """One score row per instance; every node must be covered."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            scores = np.full(n_nodes, -1.0)
            for tok in line.split():
                si, sep, sv = tok.partition(":")
                if not sep:
                    raise FormatError(f"{path}: line {lineno}: bad pair {tok!r}")
                try:
                    v = int(si)
                    s = float(sv)
                except ValueError:
                    raise FormatError(f"{path}: line {lineno}: bad pair {tok!r}") from None
                if not 0 <= v < n_nodes:
                    raise FormatError(f"{path}: line {lineno}: node id out of range")
                if not 0.0 <= s <= 1.0:
                    raise FormatError(f"{path}: line {lineno}: score outside [0, 1]")
                scores[v] = s
            if np.any(scores < 0):
                raise FormatError(f"{path}: line {lineno}: scores must cover all nodes")
            rows.append(scores)
    return rows


def path_prob(tree: LabelTree, scores: np.ndarray, node: int) -> float:
    """Product of conditional scores along the root-to-node path."""
    if not 0 <= node < tree.n_nodes:
        raise ValueError(f"invalid node id {node}")
    out = 1.0
    for v in tree.path_to_root(node):
        out *= float(scores[v])
    return out


# ---------------------------------------------------------------------------
# Gain specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GainSpec:
    """Per-label gain as a monotone non-decreasing function of probability.

    kind "weighted": g_j(x) = w_j * x with w_j >= 0.
    kind "macro-precision": g_j(x) = prec(t_j + x/n, p_j + 1/n) - prec(t_j, p_j),
    the exact ascent gain for macro-precision at the given running statistics.
    """

    kind: str
    w: Optional[np.ndarray] = None
    t_hat: Optional[np.ndarray] = None
    p: Optional[np.ndarray] = None
    n: int = 0

    def gains_at(self, prob: float, label_ids: np.ndarray) -> np.ndarray:
        if self.kind == "weighted":
            return self.w[label_ids] * prob
        if self.kind == "macro-precision":
            t = self.t_hat[label_ids]
            p = self.p[label_ids]
            plus = _safe_div(t + prob / self.n, p + 1.0 / self.n)
            return np.asarray(plus) - np.asarray(_safe_div(t, p))
        raise ValueError(f"unknown gain kind: {self.kind!r}")


def weighted_gain(w) -> GainSpec:
    w = np.asarray(w, dtype=np.float64)
    if w.size and w.min() < 0:
        raise ValueError("weighted gains require non-negative weights")
    return GainSpec("weighted", w=w)


def macro_precision_gain(t_hat, p, n: int) -> GainSpec:
    return GainSpec("macro-precision", t_hat=np.asarray(t_hat, dtype=np.float64),
                    p=np.asarray(p, dtype=np.float64), n=int(n))


# ---------------------------------------------------------------------------
# Best-first top-k search
# ---------------------------------------------------------------------------


def astar_top_k(tree: LabelTree, scores: np.ndarray, gain: GainSpec, k: int,
                debug_check: bool = False) -> Tuple[PredictionRow, int]:
    """Exactly the k labels maximizing g_j(path probability of leaf j).

    Returns the prediction row and the number of queue pops (expansions).
    Queue priority is the node's gain bound, ties broken by node id.  With
    debug_check=True, every popped internal node is asserted to bound the
    true best leaf gain in its subtree.
    """
    if k > tree.n_labels:
        raise ValueError(f"k={k} exceeds number of labels {tree.n_labels}")
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size != tree.n_nodes:
        raise ValueError("score row must cover every node")
    found: List[int] = []
    expansions = 0
    root_prob = float(scores[tree.root])
    heap = [(-_bound(tree, gain, tree.root, root_prob), tree.root, root_prob)]
    while heap and len(found) < k:
        neg_bound, node, prob = heapq.heappop(heap)
        expansions += 1
        kids = tree.children[node]
        if not kids:
            found.append(tree.leaf_label[node])
            continue
        if debug_check:
            best_leaf = max(
                float(gain.gains_at(path_prob(tree, scores, int(tree.label_leaf[j])),
                                    np.asarray([j]))[0])
                for j in tree.leaf_labels_under[node]
            )
            assert -neg_bound >= best_leaf - 1e-12, "inadmissible node bound"
        for child in kids:
            child_prob = prob * float(scores[child])
            heapq.heappush(
                heap, (-_bound(tree, gain, child, child_prob), child, child_prob))
    return PredictionRow(k, tuple(found)), expansions


def _bound(tree: LabelTree, gain: GainSpec, node: int, prob: float) -> float:
    return float(gain.gains_at(prob, tree.leaf_labels_under[node]).max())


def exhaustive_top_k(tree: LabelTree, scores: np.ndarray, gain: GainSpec,
                     k: int) -> PredictionRow:
    """Reference scan of every leaf; ties broken by label index."""
    probs = np.empty(tree.n_labels)
    for j in range(tree.n_labels):
        probs[j] = path_prob(tree, scores, int(tree.label_leaf[j]))
    gains = np.empty(tree.n_labels)
    for j in range(tree.n_labels):
        gains[j] = float(gain.gains_at(probs[j], np.asarray([j]))[0])
    order = np.argsort(-gains, kind="stable")[:k]
    return PredictionRow(k, tuple(np.sort(order)))
