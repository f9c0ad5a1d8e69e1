"""Graph-based transductive labeling: label spreading and its clamped
label-propagation limit.

The iteration is F <- alpha * S * F + (1 - alpha) * Y0 over the
symmetrically normalized affinity S = D^-1/2 W D^-1/2. alpha = 0 is the
clamped propagation limit: F <- S * F with provided rows pinned back to
their one-hot labels every sweep, so provided labels can never move.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .data import Dataset, NO_LABEL, derive_rng
from .errors import ValidationError


@dataclass(frozen=True)
class SpreadSpec:
    affinity: str = "rbf"          # "rbf" | "knn"
    gamma: float | None = None     # rbf width; None -> median heuristic
    k: int = 7                     # knn graph degree
    alpha: float = 0.2
    max_iter: int = 1000
    tol: float = 1e-6

    def validate(self):
        if self.affinity not in ("rbf", "knn"):
            raise ValidationError(f"unknown affinity {self.affinity!r}")
        if self.gamma is not None and self.gamma <= 0:
            raise ValidationError("gamma must be > 0")
        if self.affinity == "knn" and self.k < 1:
            raise ValidationError("k must be >= 1")
        if not (0.0 <= self.alpha <= 1.0):
            raise ValidationError("alpha must be in [0, 1]")
        if self.max_iter < 1 or self.tol <= 0:
            raise ValidationError("max_iter must be >= 1 and tol > 0")


@dataclass
class SpreadResult:
    F: np.ndarray                  # row-normalized soft labels, n x C
    hard: np.ndarray               # argmax labels, -1 where undecidable
    confidence: np.ndarray         # max of normalized row, 0 where undecidable
    undecidable: np.ndarray        # bool mask: no provided label reachable
    iterations: int


def median_heuristic_gamma(X):
    """gamma = 1 / (d * median pairwise squared distance); scale-robust."""
    n, d = X.shape
    if n > 1500:
        rng = derive_rng(0, "gamma-subsample", n)
        X = X[rng.choice(n, size=1500, replace=False)]
    sq = cdist(X, X, "sqeuclidean")
    med = np.median(sq[np.triu_indices_from(sq, k=1)])
    if med <= 0:
        med = 1.0
    return 1.0 / (d * med)


def affinity_matrix(X, spec: SpreadSpec):
    if spec.affinity == "rbf":
        gamma = spec.gamma if spec.gamma is not None else median_heuristic_gamma(X)
        W = np.exp(-gamma * cdist(X, X, "sqeuclidean"))
        np.fill_diagonal(W, 0.0)
        return W
    # symmetrized binary kNN graph
    d = cdist(X, X)
    np.fill_diagonal(d, np.inf)
    k = min(spec.k, len(X) - 1)
    idx = np.argsort(d, axis=1, kind="stable")[:, :k]
    W = np.zeros_like(d)
    rows = np.repeat(np.arange(len(X)), k)
    W[rows, idx.ravel()] = 1.0
    return np.maximum(W, W.T)


def _normalize_affinity(W):
    deg = W.sum(axis=1)
    inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg == 0, 1, deg)), 0.0)
    return W * inv_sqrt[:, None] * inv_sqrt[None, :]


def spread_arrays(X, labels, num_classes, spec: SpreadSpec):
    """Run spreading over feature matrix X with labels (-1 = unlabeled)."""
    spec.validate()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    labels = np.asarray(labels, dtype=np.int64)
    provided = labels != NO_LABEL
    if not np.any(provided):
        raise ValidationError("label spreading needs at least one provided label")
    if len(X) < 2:
        raise ValidationError("label spreading needs at least two instances")
    S = _normalize_affinity(affinity_matrix(X, spec))
    Y0 = np.zeros((len(X), num_classes))
    Y0[provided, labels[provided]] = 1.0

    F = Y0.copy()
    a = spec.alpha
    it = 0
    for it in range(1, spec.max_iter + 1):
        if a == 0.0:
            Fn = S @ F
            Fn[provided] = Y0[provided]
        else:
            Fn = a * (S @ F) + (1.0 - a) * Y0
        delta = np.max(np.abs(Fn - F))
        F = Fn
        if delta < spec.tol:
            break

    mass = F.sum(axis=1)
    undecidable = mass <= 1e-12
    norm = np.where(undecidable, 1.0, mass)
    Fn = F / norm[:, None]
    hard = np.argmax(Fn, axis=1)
    hard[undecidable] = NO_LABEL
    conf = np.max(Fn, axis=1)
    conf[undecidable] = 0.0
    return SpreadResult(Fn, hard, conf, undecidable, it)


def label_spread(data: Dataset, spec: SpreadSpec) -> SpreadResult:
    return spread_arrays(data.features, data.visible_labels(),
                         data.num_classes, spec)
