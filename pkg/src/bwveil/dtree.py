"""C4.5-style decision trees over real-valued features.

Binary splits on continuous features chosen by gain ratio, candidate
thresholds at midpoints between consecutive distinct sorted values,
bottom-up pessimistic pruning driven by a confidence factor, JSON
serialization, and stratified k-fold cross-validation. Feature numbers are
1-based throughout so a split on feature 3 reads column F3 of the feature
CSV; "x <= threshold" descends left.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Union

import numpy as np

from .metrics import MetricsReport, confusion


class TreeError(ValueError):
    pass


@dataclass(frozen=True)
class Leaf:
    label: str
    counts: dict[str, int]

    @property
    def n_rows(self) -> int:
        return sum(self.counts.values())


@dataclass(frozen=True)
class Split:
    feature: int       # 1-based
    threshold: float   # <= goes left
    left: "Node"
    right: "Node"


Node = Union[Leaf, Split]


@dataclass(frozen=True)
class DecisionTree:
    root: Node
    n_features: int

    def feature_ids(self) -> set[int]:
        out: set[int] = set()

        def walk(node: Node) -> None:
            if isinstance(node, Split):
                out.add(node.feature)
                walk(node.left)
                walk(node.right)

        walk(self.root)
        return out

    def node_count(self) -> int:
        def walk(node: Node) -> int:
            if isinstance(node, Leaf):
                return 1
            return 1 + walk(node.left) + walk(node.right)

        return walk(self.root)

    def leaf_counts(self) -> list[int]:
        out: list[int] = []

        def walk(node: Node) -> None:
            if isinstance(node, Leaf):
                out.append(node.n_rows)
            else:
                walk(node.left)
                walk(node.right)

        walk(self.root)
        return out


@dataclass(frozen=True)
class InductionConfig:
    confidence: float = 0.25   # smaller prunes harder; 1.0 disables pruning
    min_leaf: int = 2
    max_depth: int | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.confidence <= 1.0:
            raise TreeError("confidence factor must be in (0, 1]")
        if self.min_leaf < 1:
            raise TreeError("min_leaf must be a positive integer")
        if self.max_depth is not None and self.max_depth < 0:
            raise TreeError("max_depth must be >= 0")


@dataclass(frozen=True, eq=False)
class LabeledRow:
    features: np.ndarray
    label: str


def _as_matrix(rows) -> tuple[np.ndarray, np.ndarray]:
    rows = list(rows)
    if not rows:
        raise TreeError("empty dataset")
    widths = {len(np.atleast_1d(r.features)) for r in rows}
    if len(widths) != 1:
        raise TreeError(f"inconsistent row widths: {sorted(widths)}")
    x = np.array([np.asarray(r.features, dtype=np.float64) for r in rows])
    y = np.array([r.label for r in rows], dtype=object)
    return x, y


def _entropy(counts: np.ndarray) -> np.ndarray:
    """Entropy in bits along the last axis of a count array."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum(axis=-1, keepdims=True)
    p = np.divide(counts, total, out=np.zeros_like(counts), where=total > 0)
    term = np.zeros_like(p)
    nz = p > 0
    term[nz] = p[nz] * np.log2(p[nz])
    return -term.sum(axis=-1)


def _make_leaf(y: np.ndarray) -> Leaf:
    labels, counts = np.unique(y.astype(str), return_counts=True)
    # ties go to the lexicographically smallest label (np.unique sorts)
    best = labels[int(np.argmax(counts))]
    return Leaf(str(best), {str(l): int(c) for l, c in zip(labels, counts)})


def _best_split(x: np.ndarray, y: np.ndarray, min_leaf: int
                ) -> tuple[int, float] | None:
    """Gain-ratio-maximizing (feature, threshold), or None.

    Candidates are midpoints between consecutive distinct sorted values;
    both children must keep at least min_leaf rows and the information
    gain must be positive. Ties break to the lowest feature number, then
    the lowest threshold.
    """
    n, d = x.shape
    classes = np.unique(y.astype(str))
    onehot = (y.astype(str)[:, None] == classes[None, :]).astype(np.int64)
    total = onehot.sum(axis=0)
    base = float(_entropy(total))
    best: tuple[float, int, float] | None = None
    for f in range(d):
        order = np.argsort(x[:, f], kind="stable")
        xs = x[order, f]
        prefix = np.cumsum(onehot[order], axis=0)
        k = np.arange(1, n)
        cand = (xs[1:] != xs[:-1]) & (k >= min_leaf) & (n - k >= min_leaf)
        if not cand.any():
            continue
        pos = k[cand]
        left = prefix[pos - 1]
        right = total[None, :] - left
        frac = pos / n
        gain = base - frac * _entropy(left) - (1.0 - frac) * _entropy(right)
        keep = gain > 1e-12
        if not keep.any():
            continue
        pos, frac, gain = pos[keep], frac[keep], gain[keep]
        split_info = -(frac * np.log2(frac) + (1 - frac) * np.log2(1 - frac))
        ratio = gain / split_info
        i = int(np.argmax(ratio))  # first max -> lowest threshold on ties
        if best is None or ratio[i] > best[0]:
            threshold = float((xs[pos[i] - 1] + xs[pos[i]]) / 2.0)
            best = (float(ratio[i]), f + 1, threshold)
    if best is None:
        return None
    return best[1], best[2]


def _grow(x: np.ndarray, y: np.ndarray, config: InductionConfig,
          depth: int) -> Node:
    if (len(np.unique(y.astype(str))) == 1
            or len(y) < 2 * config.min_leaf
            or (config.max_depth is not None and depth >= config.max_depth)):
        return _make_leaf(y)
    found = _best_split(x, y, config.min_leaf)
    if found is None:
        return _make_leaf(y)
    feature, threshold = found
    mask = x[:, feature - 1] <= threshold
    return Split(feature, threshold,
                 _grow(x[mask], y[mask], config, depth + 1),
                 _grow(x[~mask], y[~mask], config, depth + 1))


def induce(rows, config: InductionConfig = InductionConfig()) -> DecisionTree:
    """Grow a tree by recursive gain-ratio splitting, then prune it.

    Growth stops at pure nodes, nodes with fewer than 2 * min_leaf rows,
    or when no candidate split has positive information gain. A
    confidence factor of 1.0 skips pruning.
    """
    rows = list(rows)
    x, y = _as_matrix(rows)
    tree = DecisionTree(_grow(x, y, config, 0), x.shape[1])
    if config.confidence < 1.0:
        tree = prune(tree, rows, config.confidence)
    return tree


# ---------------------------------------------------------------------------
# Pruning
# ---------------------------------------------------------------------------

def _error_ucb(errors: float, n: float, z: float, confidence: float) -> float:
    """Upper confidence bound on the error rate.

    Error-free nodes use the exact binomial zero-error bound
    1 - confidence**(1/n); otherwise the Wilson score upper limit under
    the normal approximation with a half-count continuity correction,
    capped at 1. z is the one-sided normal deviate of the confidence
    factor. Both choices make small leaves markedly pessimistic, which is
    what lets noise-grown subtrees collapse.
    """
    if errors < 1e-9:
        return 1.0 - confidence ** (1.0 / n)
    f = min(1.0, (errors + 0.5) / n)
    z2 = z * z
    return min(1.0, (f + z2 / (2 * n)
                     + z * math.sqrt(f * (1 - f) / n + z2 / (4 * n * n)))
               / (1 + z2 / n))


def prune(tree: DecisionTree, rows, confidence: float) -> DecisionTree:
    """Bottom-up replacement of subtrees by majority leaves.

    A subtree collapses when the candidate leaf's estimated error count
    (rows times the upper-confidence-bound error rate) does not exceed the
    sum of its children's estimates; smaller confidence factors inflate
    the per-leaf bound more and therefore prune more aggressively.
    """
    if not 0.0 < confidence <= 1.0:
        raise TreeError("confidence factor must be in (0, 1]")
    if confidence >= 1.0:
        return tree
    x, y = _as_matrix(rows)
    if x.shape[1] != tree.n_features:
        raise TreeError(f"pruning rows of width {x.shape[1]} against a tree "
                        f"trained on {tree.n_features} features")
    z = NormalDist().inv_cdf(1.0 - confidence)

    def walk(node: Node, xs: np.ndarray, ys: np.ndarray
             ) -> tuple[Node, float]:
        if len(ys) == 0:
            return node, 0.0
        if isinstance(node, Leaf):
            errors = int((ys.astype(str) != node.label).sum())
            return node, len(ys) * _error_ucb(errors, len(ys), z, confidence)
        mask = xs[:, node.feature - 1] <= node.threshold
        left, err_l = walk(node.left, xs[mask], ys[mask])
        right, err_r = walk(node.right, xs[~mask], ys[~mask])
        subtree_err = err_l + err_r
        leaf = _make_leaf(ys)
        errors = len(ys) - leaf.counts[leaf.label]
        leaf_err = len(ys) * _error_ucb(errors, len(ys), z, confidence)
        if leaf_err <= subtree_err:
            return leaf, leaf_err
        if left is node.left and right is node.right:
            return node, subtree_err
        return Split(node.feature, node.threshold, left, right), subtree_err

    root, _ = walk(tree.root, x, y)
    return DecisionTree(root, tree.n_features)


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------

def predict(tree: DecisionTree, features) -> str:
    x = np.asarray(features, dtype=np.float64)
    if x.shape != (tree.n_features,):
        raise TreeError(f"feature vector of width {x.size} does not match "
                        f"training width {tree.n_features}")
    node = tree.root
    while isinstance(node, Split):
        node = node.left if x[node.feature - 1] <= node.threshold else node.right
    return node.label


def predict_batch(tree: DecisionTree, columns, n: int | None = None
                  ) -> np.ndarray:
    """Vectorized prediction.

    `columns` is either an (n, n_features) matrix or a mapping from
    feature number to a 1-D value array; with a mapping, only the features
    the tree actually tests are ever read.
    """
    if isinstance(columns, np.ndarray):
        if columns.ndim != 2 or columns.shape[1] != tree.n_features:
            raise TreeError(f"feature matrix of width "
                            f"{columns.shape[1] if columns.ndim == 2 else '?'} "
                            f"does not match training width {tree.n_features}")
        n = columns.shape[0]
        getter = lambda f: columns[:, f - 1]
    else:
        if n is None:
            for values in columns.values():
                n = len(values)
                break
        if n is None:
            raise TreeError("predict_batch needs n when no columns are given")
        getter = lambda f: np.asarray(columns[f])

    out = np.empty(n, dtype=object)

    def walk(node: Node, idx: np.ndarray) -> None:
        if idx.size == 0:
            return
        if isinstance(node, Leaf):
            out[idx] = node.label
            return
        mask = getter(node.feature)[idx] <= node.threshold
        walk(node.left, idx[mask])
        walk(node.right, idx[~mask])

    walk(tree.root, np.arange(n))
    return out


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CrossValidation:
    folds: tuple[MetricsReport, ...]
    pooled: MetricsReport
    assignments: np.ndarray  # fold index per row

    def to_dict(self) -> dict:
        return {"k": len(self.folds),
                "folds": [f.to_dict() for f in self.folds],
                "pooled": self.pooled.to_dict()}


def cross_validate(rows, k: int = 10,
                   config: InductionConfig = InductionConfig(),
                   seed: int = 0, positive: str | None = None
                   ) -> CrossValidation:
    """Stratified k-fold cross-validation with a pooled confusion matrix.

    Folds come from a seeded per-class shuffle dealt round-robin. The
    positive class defaults to the lexicographically greatest label.
    """
    if k < 2:
        raise TreeError("cross-validation needs k >= 2")
    rows = list(rows)
    x, y = _as_matrix(rows)
    ys = y.astype(str)
    classes, counts = np.unique(ys, return_counts=True)
    for cls, cnt in zip(classes, counts):
        if cnt < k:
            raise TreeError(f"class {cls!r} has {cnt} rows; "
                            f"stratified {k}-fold needs at least {k}")
    if positive is None:
        positive = str(classes[-1])
    rng = np.random.default_rng(seed)
    fold = np.empty(len(ys), dtype=np.int64)
    for cls in classes:
        idx = np.nonzero(ys == cls)[0]
        rng.shuffle(idx)
        fold[idx] = np.arange(idx.size) % k
    reports = []
    pooled_pred: list[str] = []
    pooled_actual: list[str] = []
    for i in range(k):
        test = fold == i
        tree = induce([rows[j] for j in np.nonzero(~test)[0]], config)
        pred = predict_batch(tree, x[test])
        reports.append(confusion(pred, ys[test], positive))
        pooled_pred.extend(pred)
        pooled_actual.extend(ys[test])
    pooled = confusion(pooled_pred, pooled_actual, positive)
    return CrossValidation(tuple(reports), pooled, fold)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _node_to_obj(node: Node) -> dict:
    if isinstance(node, Leaf):
        return {"leaf": {"class": node.label, "counts": dict(node.counts)}}
    return {"feature": node.feature, "threshold": node.threshold,
            "left": _node_to_obj(node.left), "right": _node_to_obj(node.right)}


def serialize(tree: DecisionTree) -> str:
    doc = {"n_features": tree.n_features, "root": _node_to_obj(tree.root)}
    return json.dumps(doc, indent=2) + "\n"


def _node_from_obj(obj, path: str) -> Node:
    if not isinstance(obj, dict):
        raise TreeError(f"{path}: expected an object")
    if "leaf" in obj:
        leaf = obj["leaf"]
        if not isinstance(leaf, dict) or "class" not in leaf:
            raise TreeError(f"{path}.leaf: expected an object with a class")
        counts = leaf.get("counts", {})
        if (not isinstance(counts, dict)
                or not all(isinstance(v, int) for v in counts.values())):
            raise TreeError(f"{path}.leaf.counts: expected integer counts")
        return Leaf(str(leaf["class"]), {str(k): v for k, v in counts.items()})
    for key in ("feature", "threshold", "left", "right"):
        if key not in obj:
            raise TreeError(f"{path}: missing {key!r}")
    if not isinstance(obj["feature"], int) or obj["feature"] < 1:
        raise TreeError(f"{path}.feature: expected a 1-based feature number")
    if not isinstance(obj["threshold"], (int, float)):
        raise TreeError(f"{path}.threshold: expected a number")
    return Split(obj["feature"], float(obj["threshold"]),
                 _node_from_obj(obj["left"], f"{path}.left"),
                 _node_from_obj(obj["right"], f"{path}.right"))


def _max_feature(node: Node) -> int:
    if isinstance(node, Leaf):
        return 0
    return max(node.feature, _max_feature(node.left), _max_feature(node.right))


def deserialize(text: str) -> DecisionTree:
    """Parse a tree document; hand-written bare node objects are accepted,
    with the training width inferred from the largest feature tested."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TreeError(f"malformed tree document: {exc}") from exc
    if isinstance(doc, dict) and "root" in doc:
        root = _node_from_obj(doc["root"], "root")
        n_features = doc.get("n_features")
        if not isinstance(n_features, int) or n_features < 0:
            raise TreeError("n_features: expected a non-negative integer")
    else:
        root = _node_from_obj(doc, "root")
        n_features = _max_feature(root)
    if _max_feature(root) > n_features:
        raise TreeError("tree tests a feature beyond its declared width")
    return DecisionTree(root, n_features)


def save_tree(tree: DecisionTree, path) -> None:
    from ._io import atomic_text

    atomic_text(path, serialize(tree))


def load_tree(path) -> DecisionTree:
    with open(path, "r", encoding="utf-8") as fh:
        return deserialize(fh.read())
