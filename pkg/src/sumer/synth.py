"""Synthetic data generation, exact-count label noise, and stream planning."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, LabelState, NO_LABEL, derive_rng
from .errors import ValidationError


@dataclass(frozen=True)
class GaussianSpec:
    means: tuple          # one mean vector per class
    covariances: tuple    # one SPD covariance matrix per class
    counts: tuple         # instances per class

    def validate(self):
        if not (len(self.means) == len(self.covariances) == len(self.counts)):
            raise ValidationError("means/covariances/counts lengths differ")
        if len(self.means) < 2:
            raise ValidationError("need at least two classes")
        d = len(np.atleast_1d(self.means[0]))
        for c, (mu, cov, cnt) in enumerate(
                zip(self.means, self.covariances, self.counts)):
            if int(cnt) < 1:
                raise ValidationError(f"class {c} count must be >= 1")
            mu = np.atleast_1d(np.asarray(mu, dtype=float))
            cov = np.atleast_2d(np.asarray(cov, dtype=float))
            if mu.shape != (d,) or cov.shape != (d, d):
                raise ValidationError(f"class {c} mean/covariance shape mismatch")
            if not np.allclose(cov, cov.T):
                raise ValidationError(f"class {c} covariance not symmetric")
            try:
                np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                raise ValidationError(
                    f"class {c} covariance not positive-definite") from None


@dataclass(frozen=True)
class MoonsSpec:
    n: int
    noise_std: float = 0.1
    seed: int = 0

    def validate(self):
        if self.n < 2:
            raise ValidationError("two-moons needs n >= 2")
        if self.noise_std < 0:
            raise ValidationError("noise_std must be >= 0")


@dataclass(frozen=True)
class NoiseSpec:
    kind: str             # "symmetric" | "class_conditional"
    rate: float = 0.0     # symmetric flip rate
    pi0: float = 0.0      # class-conditional rate for class 0
    pi1: float = 0.0      # class-conditional rate for class 1
    seed: int = 0

    def validate(self):
        if self.kind not in ("symmetric", "class_conditional"):
            raise ValidationError(f"unknown noise kind {self.kind!r}")
        for r in ((self.rate,) if self.kind == "symmetric"
                  else (self.pi0, self.pi1)):
            if not (0.0 <= r < 1.0):
                raise ValidationError("noise rates must be in [0, 1)")


@dataclass(frozen=True)
class StreamPlan:
    window_size: int
    windows: tuple        # tuple of id tuples, pairwise disjoint
    seed: int

    def to_json(self):
        return json.dumps({"window_size": self.window_size,
                           "seed": self.seed,
                           "windows": [list(map(int, w)) for w in self.windows]})

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        return cls(int(doc["window_size"]), tuple(
            tuple(int(i) for i in w) for w in doc["windows"]), int(doc["seed"]))


def gen_two_gaussians(spec: GaussianSpec, seed) -> Dataset:
    """Sample per-class multivariate normals; labels Provided = class."""
    spec.validate()
    rng = derive_rng(seed, "gaussians")
    feats, labels = [], []
    for c, (mu, cov, cnt) in enumerate(
            zip(spec.means, spec.covariances, spec.counts)):
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        feats.append(rng.multivariate_normal(mu, cov, size=int(cnt),
                                             method="cholesky"))
        labels.append(np.full(int(cnt), c))
    return Dataset.from_labeled(np.vstack(feats), np.concatenate(labels),
                                num_classes=len(spec.means))


def moon_arcs(t0, t1):
    """Parametric arcs: class 0 on the upper unit half-circle, class 1 on
    the mirrored half-circle shifted right by 1 and down by 0.5."""
    a0 = np.column_stack([np.cos(t0), np.sin(t0)])
    a1 = np.column_stack([1.0 - np.cos(t1), 1.0 - np.sin(t1) - 0.5])
    return a0, a1


def gen_two_moons(spec: MoonsSpec) -> Dataset:
    spec.validate()
    rng = derive_rng(spec.seed, "moons")
    n0 = (spec.n + 1) // 2
    n1 = spec.n - n0
    t0 = rng.uniform(0.0, math.pi, size=n0)
    t1 = rng.uniform(0.0, math.pi, size=n1)
    a0, a1 = moon_arcs(t0, t1)
    pts = np.vstack([a0, a1])
    if spec.noise_std > 0:
        pts = pts + rng.normal(0.0, spec.noise_std, size=pts.shape)
    labels = np.concatenate([np.zeros(n0, dtype=int), np.ones(n1, dtype=int)])
    return Dataset.from_labeled(pts, labels, num_classes=2)


def inject_noise(dataset: Dataset, spec: NoiseSpec):
    """Flip an exact count of Provided labels; returns (noisy, flipped_ids).

    Symmetric: exactly floor(rate*n) labels flipped to a uniformly random
    different class. Class-conditional (binary): exactly floor(pi_y * n_y)
    flips per labeled class y. Hidden truth is never touched.
    """
    spec.validate()
    if np.any(dataset.state != LabelState.PROVIDED):
        raise ValidationError("noise injection requires all labels Provided")
    C = dataset.num_classes
    n = len(dataset)
    rng = derive_rng(spec.seed, "noise")
    labels = dataset.label.copy()
    flipped_rows = []
    if spec.kind == "symmetric":
        k = int(math.floor(spec.rate * n))
        rows = rng.choice(n, size=k, replace=False)
        for r in rows:
            other = [c for c in range(C) if c != labels[r]]
            labels[r] = other[rng.integers(len(other))]
        flipped_rows = list(rows)
    else:
        if C != 2:
            raise ValidationError("class-conditional noise is binary only")
        for y, pi in ((0, spec.pi0), (1, spec.pi1)):
            rows_y = np.flatnonzero(dataset.label == y)
            k = int(math.floor(pi * len(rows_y)))
            rows = rng.choice(rows_y, size=k, replace=False)
            labels[rows] = 1 - y
            flipped_rows.extend(rows)
    noisy = dataset.with_provided_labels(labels)
    flipped_ids = set(int(dataset.ids[r]) for r in flipped_rows)
    return noisy, flipped_ids


def plan_stream(source: Dataset, window_size, n_windows, seed) -> StreamPlan:
    """Disjoint arrival windows sampled without replacement from source."""
    window_size = int(window_size)
    n_windows = int(n_windows)
    if window_size < 1 or n_windows < 0:
        raise ValidationError("window_size must be >= 1 and n_windows >= 0")
    need = window_size * n_windows
    if need > len(source):
        raise ValidationError(
            f"stream needs {need} instances but source has {len(source)} "
            "(window_size * n_windows must not exceed the pool)")
    rng = derive_rng(seed, "stream")
    order = rng.permutation(len(source))[:need]
    ids = source.ids[order]
    windows = tuple(tuple(int(i) for i in ids[w * window_size:(w + 1) * window_size])
                    for w in range(n_windows))
    return StreamPlan(window_size, windows, int(seed))
