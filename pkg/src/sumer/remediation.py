"""Error remediation: class-conditional noise-rate estimation from the
contaminated-mixture view, rank pruning (prune + reweight), clamped-vs-free
spreading correction, and the model-coupling diagnostic.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, LabelState, derive_rng
from .errors import ValidationError
from .learners import fit_arrays
from .spreading import SpreadSpec, label_spread

MAX_TOTAL_NOISE = 0.95   # keep estimates inside the identifiable region


@dataclass(frozen=True)
class NoiseEstimate:
    pi0: float
    pi1: float
    n_confident_0: int
    n_confident_1: int
    threshold_lb: float
    threshold_ub: float
    degenerate: bool = False


@dataclass(frozen=True)
class PruneResult:
    kept_ids: frozenset
    removed_ids: frozenset
    weights: dict            # id -> weight, for kept ids only


@dataclass(frozen=True)
class CouplingReport:
    agreement: float
    pi0: float
    pi1: float
    coupled: bool


def estimate_noise_rates(probas, given_labels) -> NoiseEstimate:
    """Estimate per-class noise rates from confident counts.

    probas must come from cross-validated predictions (never from a model
    fit on the same rows it scores). Thresholds: LB = mean P(class 1) over
    rows given label 1, UB = mean P(class 1) over rows given label 0. Rows
    beyond a threshold are counted as confidently belonging to that class,
    and the confident joint is normalized per inferred true class:
    pi0 = N10 / (N10 + N00), pi1 = N01 / (N01 + N11).
    """
    probas = np.atleast_2d(np.asarray(probas, dtype=float))
    given = np.asarray(given_labels, dtype=np.int64)
    if probas.shape[1] != 2:
        raise ValidationError("noise estimation is binary only")
    if len(probas) != len(given):
        raise ValidationError("probas and labels length mismatch")
    p1 = probas[:, 1]
    is1 = given == 1
    is0 = given == 0
    if not np.any(is1) or not np.any(is0):
        raise ValidationError("noise estimation needs both given-label classes")
    lb = float(np.mean(p1[is1]))
    ub = float(np.mean(p1[is0]))
    if lb <= ub:
        return NoiseEstimate(0.0, 0.0, 0, 0, lb, ub, degenerate=True)
    n11 = int(np.sum(is1 & (p1 >= lb)))
    n01 = int(np.sum(is0 & (p1 >= lb)))
    n00 = int(np.sum(is0 & (p1 <= ub)))
    n10 = int(np.sum(is1 & (p1 <= ub)))
    pi0 = n10 / (n10 + n00) if (n10 + n00) else 0.0
    pi1 = n01 / (n01 + n11) if (n01 + n11) else 0.0
    total = pi0 + pi1
    if total > MAX_TOTAL_NOISE:
        scale = MAX_TOTAL_NOISE / total
        pi0 *= scale
        pi1 *= scale
    return NoiseEstimate(pi0, pi1, n01 + n00, n11 + n10, lb, ub)


def cross_val_proba(spec, X, y, w=None, num_classes=2, n_folds=5, seed=0):
    """Out-of-fold predicted probabilities with seeded stratified folds."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=np.int64)
    n = len(X)
    if w is None:
        w = np.ones(n)
    counts = np.bincount(y, minlength=num_classes)
    n_folds = max(2, min(n_folds, int(counts[counts > 0].min())))
    rng = derive_rng(seed, "cv-folds")
    fold = np.empty(n, dtype=int)
    for c in np.unique(y):
        rows = np.flatnonzero(y == c)
        rows = rows[rng.permutation(len(rows))]
        fold[rows] = np.arange(len(rows)) % n_folds
    out = np.zeros((n, num_classes))
    for f in range(n_folds):
        test = fold == f
        model = fit_arrays(spec, X[~test], y[~test], w[~test], num_classes,
                           seed=f)
        out[test] = model.predict_proba(X[test])
    return out


def rank_prune(dataset: Dataset, probas, estimate: NoiseEstimate) -> PruneResult:
    """Remove the least confident floor(pi_y * n_y) rows per given class
    and reweight survivors of class y by 1 / (1 - pi_y)."""
    if estimate.degenerate:
        raise ValidationError("cannot prune from a degenerate noise estimate")
    probas = np.atleast_2d(np.asarray(probas, dtype=float))
    if probas.shape != (len(dataset), 2):
        raise ValidationError("probas must be n x 2 and aligned with dataset")
    given = dataset.visible_labels()
    if np.any(given < 0):
        raise ValidationError("rank pruning requires labels on every row")
    removed = []
    for y, pi in ((0, estimate.pi0), (1, estimate.pi1)):
        rows_y = np.flatnonzero(given == y)
        n_y = len(rows_y)
        k = int(np.floor(pi * n_y))
        if k >= n_y and n_y > 0:
            warnings.warn(f"prune count for class {y} clipped to {n_y - 1}")
            k = n_y - 1
        if k <= 0:
            continue
        conf = probas[rows_y, y]
        order = np.lexsort((dataset.ids[rows_y], conf))  # ties -> lower id
        removed.extend(rows_y[order[:k]])
    removed_rows = set(int(r) for r in removed)
    kept_ids, weights = [], {}
    for r in range(len(dataset)):
        if r in removed_rows:
            continue
        i = int(dataset.ids[r])
        kept_ids.append(i)
        pi = estimate.pi0 if given[r] == 0 else estimate.pi1
        weights[i] = 1.0 / (1.0 - pi)
    return PruneResult(frozenset(kept_ids),
                       frozenset(int(dataset.ids[r]) for r in removed_rows),
                       weights)


def spread_correct(data: Dataset, spec: SpreadSpec):
    """Clamp-relaxed spreading over the dataset; returns (result,
    corrected_labels, changed_ids) where changed_ids are provided-label rows
    whose output label moved."""
    result = label_spread(data, spec)
    corrected = result.hard.copy()
    provided = data.state == LabelState.PROVIDED
    changed = provided & (corrected != data.label) & (corrected >= 0)
    changed_ids = set(int(i) for i in data.ids[changed])
    return result, corrected, changed_ids


def coupling_report(predictor_labels, corrected_labels,
                    estimate: NoiseEstimate, theta=0.02) -> CouplingReport:
    pred = np.asarray(predictor_labels, dtype=np.int64)
    corr = np.asarray(corrected_labels, dtype=np.int64)
    if len(pred) != len(corr):
        raise ValidationError("label list length mismatch")
    if len(pred) == 0:
        raise ValidationError("cannot diagnose coupling on empty label lists")
    agreement = float(np.mean(pred == corr))
    coupled = (estimate.pi0 < theta and estimate.pi1 < theta
               and agreement > 1.0 - theta)
    return CouplingReport(agreement, estimate.pi0, estimate.pi1, coupled)
