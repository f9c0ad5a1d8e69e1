"""Core data model: instances, label lifecycle, seeded splits, CSV I/O.

A Dataset is backed by parallel numpy arrays. Hidden ground truth travels
with every instance (``truth``) but is never exposed through the label
state that learners see; self-labels and provided labels live in ``label``
together with a state code. All operations return new datasets.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import IntEnum
from zlib import crc32

import numpy as np

from .errors import ValidationError

NO_LABEL = -1


class LabelState(IntEnum):
    UNLABELED = 0
    PROVIDED = 1
    SELF_LABELED = 2


def derive_rng(seed, *tags):
    """Deterministic substream generator for (seed, tags).

    Every stochastic operation in the library draws from one of these, so
    reruns with the same seed are bit-exact regardless of call order
    elsewhere.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for tag in tags:
        if isinstance(tag, (int, np.integer)):
            entropy.append(int(tag) & 0xFFFFFFFF)
        else:
            entropy.append(crc32(str(tag).encode("utf-8")))
    return np.random.default_rng(entropy)


@dataclass(frozen=True)
class Instance:
    features: np.ndarray
    id: int


@dataclass(frozen=True)
class LabelRecord:
    truth: int | None
    state: LabelState
    label: int | None
    confidence: float | None = None
    round: int | None = None
    weight: float = 1.0


@dataclass(frozen=True)
class SplitSpec:
    labeled_fraction: float
    holdout_fraction: float
    seed: int
    stratified: bool = False

    def validate(self):
        if not (0.0 < self.labeled_fraction <= 1.0):
            raise ValidationError("labeled_fraction must be in (0, 1]")
        if not (0.0 < self.holdout_fraction < 1.0):
            raise ValidationError("holdout_fraction must be in (0, 1)")
        if self.labeled_fraction + self.holdout_fraction > 1.0:
            raise ValidationError(
                "labeled_fraction + holdout_fraction must not exceed 1"
            )


class Dataset:
    """Immutable-by-convention collection of instances and label records."""

    def __init__(self, features, ids, truth, state, label,
                 confidence=None, round_=None, weight=None, num_classes=2):
        features = np.atleast_2d(np.asarray(features, dtype=float))
        n = features.shape[0]
        self.features = features
        self.ids = np.asarray(ids, dtype=np.int64)
        self.truth = np.asarray(truth, dtype=np.int64)
        self.state = np.asarray(state, dtype=np.int8)
        self.label = np.asarray(label, dtype=np.int64)
        self.confidence = (np.zeros(n) if confidence is None
                           else np.asarray(confidence, dtype=float))
        self.round = (np.zeros(n, dtype=np.int64) if round_ is None
                      else np.asarray(round_, dtype=np.int64))
        self.weight = (np.ones(n) if weight is None
                       else np.asarray(weight, dtype=float))
        self.num_classes = int(num_classes)
        self._validate()

    def _validate(self):
        n, _d = self.features.shape
        for name in ("ids", "truth", "state", "label", "confidence",
                     "round", "weight"):
            if len(getattr(self, name)) != n:
                raise ValidationError(f"parallel array '{name}' length mismatch")
        if n and not np.all(np.isfinite(self.features)):
            raise ValidationError("feature values must be finite")
        if len(np.unique(self.ids)) != n:
            raise ValidationError("instance ids must be unique")
        if np.any(self.ids < 0):
            raise ValidationError("instance ids must be non-negative")
        if self.num_classes < 2:
            raise ValidationError("num_classes must be >= 2")
        C = self.num_classes
        if n:
            if np.any((self.truth != NO_LABEL) & ((self.truth < 0) | (self.truth >= C))):
                raise ValidationError("truth out of class range")
            vis = self.state != LabelState.UNLABELED
            if np.any(vis & ((self.label < 0) | (self.label >= C))):
                raise ValidationError("provided/self label out of class range")
            sl = self.state == LabelState.SELF_LABELED
            if np.any(self.confidence[sl] < 0) or np.any(self.confidence[sl] > 1):
                raise ValidationError("self-label confidence must be in [0, 1]")
            if np.any(self.round[sl] < 1):
                raise ValidationError("self-label round must be >= 1")
            if np.any(self.weight < 0):
                raise ValidationError("weights must be non-negative")

    # ------------------------------------------------------------------
    # construction helpers
    # ------------------------------------------------------------------
    @classmethod
    def from_labeled(cls, features, labels, num_classes=None, ids=None):
        """All labels Provided and equal to ground truth."""
        features = np.atleast_2d(np.asarray(features, dtype=float))
        labels = np.asarray(labels, dtype=np.int64)
        n = features.shape[0]
        if ids is None:
            ids = np.arange(n)
        if num_classes is None:
            num_classes = max(2, int(labels.max()) + 1 if n else 2)
        return cls(features, ids, labels,
                   np.full(n, LabelState.PROVIDED, dtype=np.int8),
                   labels.copy(), num_classes=num_classes)

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def select(self, index):
        """New dataset from a row index array or boolean mask."""
        return Dataset(self.features[index], self.ids[index],
                       self.truth[index], self.state[index],
                       self.label[index], self.confidence[index],
                       self.round[index], self.weight[index],
                       self.num_classes)

    def rows_for_ids(self, ids):
        lookup = {int(i): r for r, i in enumerate(self.ids)}
        try:
            return np.array([lookup[int(i)] for i in ids], dtype=np.int64)
        except KeyError as exc:
            raise ValidationError(f"unknown instance id {exc}") from exc

    def subset_by_ids(self, ids):
        return self.select(self.rows_for_ids(ids))

    @staticmethod
    def concat(parts):
        parts = [p for p in parts if len(p)]
        if not parts:
            raise ValidationError("cannot concatenate zero non-empty datasets")
        C = parts[0].num_classes
        if any(p.num_classes != C for p in parts):
            raise ValidationError("num_classes mismatch in concat")
        if any(p.dim != parts[0].dim for p in parts):
            raise ValidationError("dimension mismatch in concat")
        return Dataset(
            np.vstack([p.features for p in parts]),
            np.concatenate([p.ids for p in parts]),
            np.concatenate([p.truth for p in parts]),
            np.concatenate([p.state for p in parts]),
            np.concatenate([p.label for p in parts]),
            np.concatenate([p.confidence for p in parts]),
            np.concatenate([p.round for p in parts]),
            np.concatenate([p.weight for p in parts]),
            C)

    # ------------------------------------------------------------------
    # label lifecycle
    # ------------------------------------------------------------------
    def visible_labels(self):
        """Labels a learner may see: -1 where Unlabeled."""
        out = self.label.copy()
        out[self.state == LabelState.UNLABELED] = NO_LABEL
        return out

    def as_unlabeled(self, keep_truth=True):
        n = len(self)
        truth = self.truth if keep_truth else np.full(n, NO_LABEL, dtype=np.int64)
        return Dataset(self.features, self.ids, truth,
                       np.full(n, LabelState.UNLABELED, dtype=np.int8),
                       np.full(n, NO_LABEL, dtype=np.int64),
                       num_classes=self.num_classes)

    def with_provided_labels(self, labels, weight=None):
        labels = np.asarray(labels, dtype=np.int64)
        return Dataset(self.features, self.ids, self.truth,
                       np.full(len(self), LabelState.PROVIDED, dtype=np.int8),
                       labels, None, None, weight, self.num_classes)

    def with_self_labels(self, labels, confidence, round_):
        n = len(self)
        labels = np.asarray(labels, dtype=np.int64)
        return Dataset(self.features, self.ids, self.truth,
                       np.full(n, LabelState.SELF_LABELED, dtype=np.int8),
                       labels, np.asarray(confidence, dtype=float),
                       np.full(n, int(round_), dtype=np.int64),
                       None, self.num_classes)

    def with_weights(self, weight):
        return Dataset(self.features, self.ids, self.truth, self.state,
                       self.label, self.confidence, self.round,
                       np.asarray(weight, dtype=float), self.num_classes)

    def record(self, row):
        s = LabelState(self.state[row])
        return LabelRecord(
            truth=None if self.truth[row] == NO_LABEL else int(self.truth[row]),
            state=s,
            label=None if s == LabelState.UNLABELED else int(self.label[row]),
            confidence=float(self.confidence[row]) if s == LabelState.SELF_LABELED else None,
            round=int(self.round[row]) if s == LabelState.SELF_LABELED else None,
            weight=float(self.weight[row]))

    def instance(self, row):
        return Instance(self.features[row].copy(), int(self.ids[row]))

    # ------------------------------------------------------------------
    # CSV interface: header f0..f{d-1}[,label]; ids assigned by row order
    # ------------------------------------------------------------------
    def to_csv(self, path):
        d = self.dim
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"f{j}" for j in range(d)] + ["label"])
            vis = self.visible_labels()
            for i in range(len(self)):
                row = [repr(float(v)) for v in self.features[i]]
                row.append("" if vis[i] == NO_LABEL else str(int(vis[i])))
                w.writerow(row)

    @classmethod
    def from_csv(cls, path, num_classes=None):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ValidationError(f"{path}: empty CSV") from None
            has_label = header and header[-1] == "label"
            feat_cols = header[:-1] if has_label else header
            d = len(feat_cols)
            if d < 1 or feat_cols != [f"f{j}" for j in range(d)]:
                raise ValidationError(f"{path}: header must be f0..f{{d-1}}[,label]")
            feats, labels = [], []
            for lineno, row in enumerate(reader, start=2):
                if len(row) != len(header):
                    raise ValidationError(f"{path}:{lineno}: ragged row")
                try:
                    vals = [float(v) for v in row[:d]]
                except ValueError:
                    raise ValidationError(f"{path}:{lineno}: non-numeric feature") from None
                if not all(math.isfinite(v) for v in vals):
                    raise ValidationError(f"{path}:{lineno}: non-finite feature value")
                feats.append(vals)
                if has_label and row[d] != "":
                    try:
                        labels.append(int(row[d]))
                    except ValueError:
                        raise ValidationError(f"{path}:{lineno}: non-integer label") from None
                else:
                    labels.append(NO_LABEL)
        if not feats:
            raise ValidationError(f"{path}: no data rows")
        feats = np.asarray(feats)
        labels = np.asarray(labels, dtype=np.int64)
        if num_classes is None:
            num_classes = max(2, int(labels.max()) + 1)
        if np.any(labels >= num_classes):
            raise ValidationError(f"{path}: label out of range")
        n = len(feats)
        state = np.where(labels == NO_LABEL, LabelState.UNLABELED,
                         LabelState.PROVIDED).astype(np.int8)
        return cls(feats, np.arange(n), labels, state, labels,
                   num_classes=num_classes)


def class_summary(dataset):
    """Per-class counts keyed by label state name; 'unlabeled' is one bucket."""
    out = {"unlabeled": int(np.sum(dataset.state == LabelState.UNLABELED)),
           "provided": {}, "self_labeled": {}}
    for c in range(dataset.num_classes):
        out["provided"][c] = int(np.sum(
            (dataset.state == LabelState.PROVIDED) & (dataset.label == c)))
        out["self_labeled"][c] = int(np.sum(
            (dataset.state == LabelState.SELF_LABELED) & (dataset.label == c)))
    return out


def _stratified_pick(truth, order, count, num_classes):
    """First `count` shuffled rows, rebalanced so classes appear in
    proportion (largest remainder, at least one per present class)."""
    per_class = [order[truth[order] == c] for c in range(num_classes)]
    sizes = np.array([len(p) for p in per_class], dtype=float)
    if np.any(sizes == 0):
        raise ValidationError("stratified split impossible: a class is empty")
    quota = sizes / sizes.sum() * count
    take = np.floor(quota).astype(int)
    take = np.maximum(take, 1)
    while take.sum() > count:
        take[np.argmax(take - quota)] -= 1
    rema = quota - take
    while take.sum() < count:
        j = int(np.argmax(rema))
        take[j] += 1
        rema[j] = -1
    picked = np.concatenate([p[:k] for p, k in zip(per_class, take)])
    return picked


def split_dataset(dataset, spec):
    """Partition into (labeled, unlabeled, holdout).

    `labeled` keeps Provided labels equal to truth, `unlabeled` hides its
    labels but retains truth for later scoring, `holdout` keeps truth for
    evaluation. Deterministic in spec.seed.
    """
    spec.validate()
    n = len(dataset)
    if n == 0:
        raise ValidationError("cannot split an empty dataset")
    if np.any(dataset.truth == NO_LABEL):
        raise ValidationError("split requires ground truth on every instance")
    n_lab = int(math.floor(spec.labeled_fraction * n))
    n_hold = int(math.floor(spec.holdout_fraction * n))
    if n_lab < 1:
        raise ValidationError("labeled fraction leaves no labeled instances")
    if n_hold < 1:
        raise ValidationError("holdout fraction leaves no holdout instances")
    rng = derive_rng(spec.seed, "split")
    order = rng.permutation(n)
    if spec.stratified:
        lab_idx = _stratified_pick(dataset.truth, order, n_lab,
                                   dataset.num_classes)
    else:
        lab_idx = order[:n_lab]
    rest = order[~np.isin(order, lab_idx)]
    hold_idx = rest[:n_hold]
    unl_idx = rest[n_hold:]

    labeled = dataset.select(np.sort(lab_idx))
    labeled = labeled.with_provided_labels(labeled.truth)
    unlabeled = dataset.select(np.sort(unl_idx)).as_unlabeled(keep_truth=True)
    holdout = dataset.select(np.sort(hold_idx))
    holdout = holdout.with_provided_labels(holdout.truth)
    return labeled, unlabeled, holdout
