"""Supervised learners behind one classifier contract.

KNN, a weighted-Gini decision tree, and a seeded random forest, all
deterministic given (spec, data, weights, seed) and serializable to a
versioned JSON document so a model can be saved between stream windows.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy.spatial.distance import cdist

from .data import Dataset, LabelState, derive_rng
from .errors import ValidationError

MODEL_DOC_VERSION = 1


@dataclass(frozen=True)
class KNNSpec:
    kind: str = "knn"
    k: int = 5

    def validate(self):
        if self.k < 1:
            raise ValidationError("k must be >= 1")


@dataclass(frozen=True)
class TreeSpec:
    kind: str = "tree"
    max_depth: int = 8
    min_leaf: int = 1

    def validate(self):
        if self.max_depth < 1 or self.min_leaf < 1:
            raise ValidationError("max_depth and min_leaf must be >= 1")


@dataclass(frozen=True)
class ForestSpec:
    kind: str = "forest"
    n_trees: int = 15
    max_depth: int = 8
    min_leaf: int = 1
    features_per_split: int | None = None   # default: ceil(sqrt(d))
    seed: int = 0

    def validate(self):
        if self.n_trees < 1:
            raise ValidationError("n_trees must be >= 1")
        if self.max_depth < 1 or self.min_leaf < 1:
            raise ValidationError("max_depth and min_leaf must be >= 1")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ValidationError("features_per_split must be >= 1")


def _check_train(X, y, w, num_classes):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise ValidationError("cannot fit on an empty training set")
    if w is None:
        w = np.ones(len(X))
    w = np.asarray(w, dtype=float)
    if len(w) != len(X) or len(y) != len(X):
        raise ValidationError("X, y, weights must have equal length")
    if np.any(w < 0):
        raise ValidationError("weights must be non-negative")
    if np.any((y < 0) | (y >= num_classes)):
        raise ValidationError("training label out of class range")
    if not np.any(w > 0):
        raise ValidationError("all training weights are zero")
    return X, y, w


# ----------------------------------------------------------------------
# KNN
# ----------------------------------------------------------------------
class KNNModel:
    def __init__(self, spec, X, y, w, num_classes):
        self.spec = spec
        self.X, self.y, self.w = X, y, w
        self.num_classes = num_classes
        self.dim = X.shape[1]

    def predict_proba(self, Xq):
        Xq = _check_query(Xq, self.dim)
        k = min(self.spec.k, len(self.X))
        d = cdist(Xq, self.X)
        # stable neighbor choice: break distance ties by training row order
        idx = np.lexsort((np.broadcast_to(np.arange(len(self.X)),
                                          d.shape), d), axis=1)[:, :k]
        votes = np.zeros((len(Xq), self.num_classes))
        for c in range(self.num_classes):
            votes[:, c] = np.sum(self.w[idx] * (self.y[idx] == c), axis=1)
        tot = votes.sum(axis=1, keepdims=True)
        uniform = np.full(self.num_classes, 1.0 / self.num_classes)
        out = np.where(tot > 0, votes / np.where(tot == 0, 1, tot), uniform)
        return out

    def to_doc(self):
        return {"version": MODEL_DOC_VERSION, "spec": asdict(self.spec),
                "num_classes": self.num_classes,
                "params": {"X": self.X.tolist(), "y": self.y.tolist(),
                           "w": self.w.tolist()}}


# ----------------------------------------------------------------------
# Decision tree (weighted Gini, deterministic tie-breaking)
# ----------------------------------------------------------------------
class _Tree:
    """Flat-array tree: internal nodes route on feature/threshold, leaves
    hold a class distribution."""

    def __init__(self, num_classes):
        self.feature, self.threshold = [], []
        self.left, self.right = [], []
        self.proba = []
        self.num_classes = num_classes

    def _add_node(self):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.proba.append(None)
        return len(self.feature) - 1

    def predict_proba(self, X):
        out = np.empty((len(X), self.num_classes))
        stack = [(0, np.arange(len(X)))]
        while stack:
            node, rows = stack.pop()
            if self.feature[node] < 0:
                out[rows] = self.proba[node]
                continue
            go_left = X[rows, self.feature[node]] <= self.threshold[node]
            stack.append((self.left[node], rows[go_left]))
            stack.append((self.right[node], rows[~go_left]))
        return out


def _leaf_distribution(y, w, num_classes):
    dist = np.bincount(y, weights=w, minlength=num_classes)
    tot = dist.sum()
    if tot <= 0:
        # zero-weight node: fall back to unweighted counts
        dist = np.bincount(y, minlength=num_classes).astype(float)
        tot = dist.sum()
    return dist / tot


def _best_split(X, y, w, features, min_leaf, num_classes):
    """Lowest weighted-Gini split over candidate features.

    Ties resolve to the lowest feature index then the lowest threshold
    (first strictly better candidate wins while scanning in order).
    """
    best = (math.inf, -1, 0.0)
    total_w = w.sum()
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs, ys, ws = X[order, f], y[order], w[order]
        onehot = np.zeros((len(ys), num_classes))
        onehot[np.arange(len(ys)), ys] = ws
        left_cw = np.cumsum(onehot, axis=0)          # class weights left of cut
        left_w = np.cumsum(ws)
        boundaries = np.flatnonzero(np.diff(xs) > 0)  # cut after position b
        if len(boundaries) == 0:
            continue
        counts = boundaries + 1
        valid = (counts >= min_leaf) & ((len(ys) - counts) >= min_leaf)
        boundaries = boundaries[valid]
        if len(boundaries) == 0:
            continue
        wl = left_w[boundaries]
        wr = total_w - wl
        cl = left_cw[boundaries]
        cr = left_cw[-1] - cl
        with np.errstate(divide="ignore", invalid="ignore"):
            gini_l = 1.0 - np.sum(cl ** 2, axis=1) / np.maximum(wl, 1e-300) ** 2
            gini_r = 1.0 - np.sum(cr ** 2, axis=1) / np.maximum(wr, 1e-300) ** 2
        score = (wl * gini_l + wr * gini_r) / max(total_w, 1e-300)
        j = int(np.argmin(score))   # first minimum -> lowest threshold
        if score[j] < best[0] - 1e-12:
            thr = 0.5 * (xs[boundaries[j]] + xs[boundaries[j] + 1])
            best = (float(score[j]), int(f), float(thr))
    return best


def _grow(tree, X, y, w, depth, spec, num_classes, rng, n_candidates):
    node = tree._add_node()
    pure = len(np.unique(y[w > 0] if np.any(w > 0) else y)) <= 1
    if depth >= spec.max_depth or len(y) < 2 * spec.min_leaf or pure:
        tree.proba[node] = _leaf_distribution(y, w, num_classes)
        return node
    d = X.shape[1]
    if rng is None or n_candidates >= d:
        features = range(d)
    else:
        features = np.sort(rng.choice(d, size=n_candidates, replace=False))
    score, f, thr = _best_split(X, y, w, features, spec.min_leaf, num_classes)
    if f < 0:
        tree.proba[node] = _leaf_distribution(y, w, num_classes)
        return node
    go_left = X[:, f] <= thr
    tree.feature[node] = f
    tree.threshold[node] = thr
    tree.left[node] = _grow(tree, X[go_left], y[go_left], w[go_left],
                            depth + 1, spec, num_classes, rng, n_candidates)
    tree.right[node] = _grow(tree, X[~go_left], y[~go_left], w[~go_left],
                             depth + 1, spec, num_classes, rng, n_candidates)
    return node


class TreeModel:
    def __init__(self, spec, tree, num_classes, dim):
        self.spec = spec
        self.tree = tree
        self.num_classes = num_classes
        self.dim = dim

    def predict_proba(self, Xq):
        Xq = _check_query(Xq, self.dim)
        return self.tree.predict_proba(Xq)

    def to_doc(self):
        t = self.tree
        return {"version": MODEL_DOC_VERSION, "spec": asdict(self.spec),
                "num_classes": self.num_classes, "dim": self.dim,
                "params": {"feature": t.feature, "threshold": t.threshold,
                           "left": t.left, "right": t.right,
                           "proba": [None if p is None else list(p)
                                     for p in t.proba]}}


class ForestModel:
    def __init__(self, spec, trees, num_classes, dim):
        self.spec = spec
        self.trees = trees
        self.num_classes = num_classes
        self.dim = dim

    def predict_proba(self, Xq):
        Xq = _check_query(Xq, self.dim)
        acc = np.zeros((len(Xq), self.num_classes))
        for t in self.trees:
            acc += t.predict_proba(Xq)
        return acc / len(self.trees)

    def to_doc(self):
        return {"version": MODEL_DOC_VERSION, "spec": asdict(self.spec),
                "num_classes": self.num_classes, "dim": self.dim,
                "params": {"trees": [
                    {"feature": t.feature, "threshold": t.threshold,
                     "left": t.left, "right": t.right,
                     "proba": [None if p is None else list(p)
                               for p in t.proba]} for t in self.trees]}}


def _check_query(Xq, dim):
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    if Xq.shape[1] != dim:
        raise ValidationError(
            f"query dimension {Xq.shape[1]} != training dimension {dim}")
    return Xq


# ----------------------------------------------------------------------
# fitting
# ----------------------------------------------------------------------
def fit_arrays(spec, X, y, w=None, num_classes=2, seed=0):
    spec.validate()
    X, y, w = _check_train(X, y, w, num_classes)
    if isinstance(spec, KNNSpec):
        return KNNModel(spec, X, y, w, num_classes)
    if isinstance(spec, TreeSpec):
        tree = _Tree(num_classes)
        _grow(tree, X, y, w, 0, spec, num_classes, None, X.shape[1])
        return TreeModel(spec, tree, num_classes, X.shape[1])
    if isinstance(spec, ForestSpec):
        d = X.shape[1]
        fps = spec.features_per_split or max(1, int(math.ceil(math.sqrt(d))))
        if fps > d:
            raise ValidationError("features_per_split exceeds dimension")
        trees = []
        n = len(X)
        for t in range(spec.n_trees):
            rng = derive_rng(spec.seed, "forest", seed, t)
            idx = rng.integers(0, n, size=n)          # seeded bootstrap
            tree = _Tree(num_classes)
            ts = TreeSpec(max_depth=spec.max_depth, min_leaf=spec.min_leaf)
            _grow(tree, X[idx], y[idx], w[idx], 0, ts, num_classes, rng, fps)
            trees.append(tree)
        return ForestModel(spec, trees, num_classes, d)
    raise ValidationError(f"unknown classifier spec {spec!r}")


def fit(spec, train: Dataset, weights=None, seed=0):
    """Fit on a dataset's visible labels (Unlabeled rows are rejected)."""
    vis = train.visible_labels()
    if np.any(vis < 0):
        raise ValidationError("training set contains unlabeled instances")
    w = train.weight if weights is None else np.asarray(weights, dtype=float)
    return fit_arrays(spec, train.features, vis, w, train.num_classes, seed)


def predict(model, Xq):
    """Hard labels; ties broken toward the lower class index."""
    return np.argmax(model.predict_proba(Xq), axis=1)


# ----------------------------------------------------------------------
# serialization
# ----------------------------------------------------------------------
def save_model(model, path):
    with open(path, "w") as fh:
        json.dump(model.to_doc(), fh)


def _tree_from_params(p, num_classes):
    t = _Tree(num_classes)
    t.feature = [int(v) for v in p["feature"]]
    t.threshold = [float(v) for v in p["threshold"]]
    t.left = [int(v) for v in p["left"]]
    t.right = [int(v) for v in p["right"]]
    t.proba = [None if v is None else np.asarray(v, dtype=float)
               for v in p["proba"]]
    return t


def load_model(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != MODEL_DOC_VERSION:
        raise ValidationError(f"unsupported model document version "
                              f"{doc.get('version')!r}")
    kind = doc["spec"]["kind"]
    C = doc["num_classes"]
    if kind == "knn":
        spec = KNNSpec(**doc["spec"])
        p = doc["params"]
        return KNNModel(spec, np.asarray(p["X"], dtype=float),
                        np.asarray(p["y"], dtype=np.int64),
                        np.asarray(p["w"], dtype=float), C)
    if kind == "tree":
        spec = TreeSpec(**doc["spec"])
        return TreeModel(spec, _tree_from_params(doc["params"], C), C,
                         doc["dim"])
    if kind == "forest":
        spec = ForestSpec(**doc["spec"])
        trees = [_tree_from_params(p, C) for p in doc["params"]["trees"]]
        return ForestModel(spec, trees, C, doc["dim"])
    raise ValidationError(f"unknown model kind {kind!r}")
