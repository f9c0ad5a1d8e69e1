"""The self-updating loop: per-window self-labeling with confidence gating,
optional error remediation, retraining, and side-by-side strategy traces.

Strategies share identical seeds, splits, windows, and initial labels, so
trace differences are attributable only to the strategy.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.spatial.distance import cdist

from .data import Dataset, LabelState, NO_LABEL, SplitSpec, derive_rng, split_dataset
from .errors import ValidationError
from .learners import KNNSpec, TreeSpec, ForestSpec, fit, fit_arrays, predict
from .remediation import (NoiseEstimate, coupling_report, cross_val_proba,
                          estimate_noise_rates, rank_prune, spread_correct)
from .spreading import SpreadSpec, spread_arrays
from .synth import NoiseSpec, StreamPlan, inject_noise, plan_stream

STRATEGIES = ("static", "static_remediated", "sum", "sumer", "oracle")

TRACE_COLUMNS = ["window", "strategy", "seen", "holdout_acc", "accepted",
                 "rejected", "selflabel_precision", "pi0_hat", "pi1_hat",
                 "coupling_agreement", "coupled"]


@dataclass(frozen=True)
class GateSpec:
    tau: float = 0.8
    coverage_k: int | None = None     # None -> coverage gating off
    coverage_q: float = 0.9

    def validate(self):
        if not (0.0 <= self.tau <= 1.0):
            raise ValidationError("tau must be in [0, 1]")
        if self.coverage_k is not None:
            if self.coverage_k < 1:
                raise ValidationError("coverage k must be >= 1")
            if not (0.0 < self.coverage_q < 1.0):
                raise ValidationError("coverage quantile must be in (0, 1)")


@dataclass(frozen=True)
class RemediationSpec:
    kind: str = "rank_prune"          # "rank_prune" | "spread_correct" | "none"
    cv_folds: int = 5
    theta: float = 0.02
    anti_coupling: bool = True
    spread: SpreadSpec | None = None  # spec for spread_correct remediation

    def validate(self):
        if self.kind not in ("rank_prune", "spread_correct", "none"):
            raise ValidationError(f"unknown remediation kind {self.kind!r}")
        if self.kind == "spread_correct":
            spec = self.spread or SpreadSpec(alpha=0.9)
            spec.validate()
            if spec.alpha <= 0:
                raise ValidationError("spread_correct needs alpha > 0")


@dataclass(frozen=True)
class EngineConfig:
    split: SplitSpec
    window_size: int
    n_windows: int
    learner: object                   # KNNSpec | TreeSpec | ForestSpec | SpreadSpec
    gate: GateSpec = GateSpec()
    remediation: RemediationSpec = RemediationSpec()
    noise: NoiseSpec | None = None    # applied to the labeled seed
    strategies: tuple = ("static", "sum", "oracle")
    seed: int = 0


class Trace:
    """Per-(window, strategy) metrics rows plus run provenance."""

    def __init__(self, rows, provenance):
        self.rows = rows
        self.provenance = provenance

    def final(self, strategy):
        last = [r for r in self.rows if r["strategy"] == strategy][-1]
        return last

    @staticmethod
    def _fmt(key, value):
        if value is None:
            return ""
        if key == "coupled":
            return "true" if value else "false"
        if isinstance(value, float):
            return "" if math.isnan(value) else f"{value:.6f}"
        return str(value)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for row in self.rows:
                w.writerow([self._fmt(c, row[c]) for c in TRACE_COLUMNS])

    def to_json(self, path):
        doc = _json_safe({"provenance": self.provenance, "rows": self.rows})
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=False)

    @staticmethod
    def read_csv(path):
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = [c for c in TRACE_COLUMNS
                       if c not in (reader.fieldnames or [])]
            if missing:
                raise ValidationError(
                    f"{path}: missing trace column(s) {', '.join(missing)}")
            rows = list(reader)
        if not rows:
            raise ValidationError(f"{path}: trace has no rows")
        return rows


def _json_safe(value):
    """Recursively convert to JSON-encodable values; nan becomes null."""
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        value = float(value)
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


# ----------------------------------------------------------------------
# coverage-aware confidence
# ----------------------------------------------------------------------
class CoverageScorer:
    """Discounts confidence for points far from the training support.

    score = exp(-ln 2 * d_k(x) / d*), with d_k the mean distance to the k
    nearest training points and d* the q-quantile of in-training d_k
    values: 1 at zero distance, 0.5 at the reference quantile.
    """

    def __init__(self, train_X, k, q=0.9):
        train_X = np.atleast_2d(np.asarray(train_X, dtype=float))
        if len(train_X) == 0:
            raise ValidationError("coverage scoring needs a training set")
        if k > len(train_X):
            raise ValidationError("coverage k exceeds training size")
        self.train_X = train_X
        self.k = int(k)
        d = cdist(train_X, train_X)
        np.fill_diagonal(d, np.inf)
        kk = min(self.k, len(train_X) - 1)
        if kk < 1:
            self.d_star = 1.0
        else:
            dk = np.sort(d, axis=1)[:, :kk].mean(axis=1)
            self.d_star = float(np.quantile(dk, q))
        if self.d_star <= 0:
            self.d_star = 1e-12

    def score(self, Xq):
        Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
        d = np.sort(cdist(Xq, self.train_X), axis=1)[:, :self.k]
        dk = d.mean(axis=1)
        return np.exp(-math.log(2.0) * dk / self.d_star)


def coverage_confidence(x, train_X, k, q=0.9):
    """Convenience wrapper for a single instance."""
    return float(CoverageScorer(train_X, k, q).score(np.atleast_2d(x))[0])


# ----------------------------------------------------------------------
# learner adapters
# ----------------------------------------------------------------------
class SpreadingModel:
    """Label spreading behind the predict_proba contract.

    Fit runs spreading once over the stored pool; queries are scored
    inductively by affinity-weighted interpolation of the spread soft
    labels, so a deployed model never absorbs evaluation data into its
    graph.
    """

    def __init__(self, spec: SpreadSpec, X, y, num_classes):
        from .spreading import median_heuristic_gamma
        self.spec = spec
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.y = np.asarray(y, dtype=np.int64)
        self.num_classes = num_classes
        self.dim = self.X.shape[1]
        if len(self.X) >= 2:
            res = spread_arrays(self.X, self.y, num_classes, spec)
            F = res.F.copy()
            und = res.undecidable
            if np.any(und):
                # fall back to the input labels on unreachable rows
                onehot = np.zeros((len(self.X), num_classes))
                lab = und & (self.y >= 0)
                onehot[lab, self.y[lab]] = 1.0
                onehot[und & (self.y < 0)] = 1.0 / num_classes
                F[und] = onehot[und]
            self.F = F
        else:
            self.F = np.zeros((len(self.X), num_classes))
            self.F[np.arange(len(self.X)), self.y] = 1.0
        if spec.affinity == "rbf":
            self.gamma = spec.gamma if spec.gamma is not None \
                else median_heuristic_gamma(self.X)

    def predict_proba(self, Xq):
        Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
        if Xq.shape[1] != self.dim:
            raise ValidationError("query dimension mismatch")
        d = cdist(Xq, self.X)
        if self.spec.affinity == "rbf":
            W = np.exp(-self.gamma * d ** 2)
        else:
            k = min(self.spec.k, len(self.X))
            idx = np.argsort(d, axis=1, kind="stable")[:, :k]
            W = np.zeros_like(d)
            W[np.repeat(np.arange(len(Xq)), k), idx.ravel()] = 1.0
        P = W @ self.F
        tot = P.sum(axis=1, keepdims=True)
        uniform = np.full(self.num_classes, 1.0 / self.num_classes)
        return np.where(tot > 0, P / np.where(tot == 0, 1, tot), uniform)


def _refit(learner, train_ds: Dataset, seed, tag):
    if isinstance(learner, SpreadSpec):
        vis = train_ds.visible_labels()
        keep = vis >= 0
        return SpreadingModel(learner, train_ds.features[keep], vis[keep],
                              train_ds.num_classes)
    fit_seed = int(derive_rng(seed, "fit", tag).integers(2 ** 31))
    return fit(learner, train_ds, seed=fit_seed)


def _accuracy(model, holdout: Dataset):
    return float(np.mean(predict(model, holdout.features) == holdout.truth))


# ----------------------------------------------------------------------
# self-labeling
# ----------------------------------------------------------------------
def self_label(model, window: Dataset, gate: GateSpec, round_,
               coverage: CoverageScorer | None = None):
    """Gate the model's predictions on an unlabeled window.

    Returns (accepted SelfLabeled dataset, rejected id set). Combined
    confidence = max class probability times the coverage score when
    coverage gating is configured.
    """
    gate.validate()
    if np.any(window.state != LabelState.UNLABELED):
        raise ValidationError("self_label expects an unlabeled window")
    proba = model.predict_proba(window.features)
    conf = proba.max(axis=1)
    labels = np.argmax(proba, axis=1)
    if coverage is not None:
        conf = conf * coverage.score(window.features)
    accept = conf >= gate.tau
    accepted = window.select(accept)
    if len(accepted):
        accepted = accepted.with_self_labels(labels[accept],
                                             np.clip(conf[accept], 0.0, 1.0),
                                             round_)
    rejected_ids = set(int(i) for i in window.ids[~accept])
    return accepted, rejected_ids


def _precision_vs_truth(accepted: Dataset):
    if len(accepted) == 0:
        return float("nan")
    known = accepted.truth != NO_LABEL
    if not np.any(known):
        return float("nan")
    return float(np.mean(accepted.label[known] == accepted.truth[known]))


# ----------------------------------------------------------------------
# remediation inside the loop
# ----------------------------------------------------------------------
def _corrector_spec(cfg: EngineConfig):
    # spreading learners get a default forest corrector for rank pruning
    if isinstance(cfg.learner, SpreadSpec):
        return ForestSpec(seed=cfg.seed)
    return cfg.learner


def _correction_probas_anti(cfg, seed_ds, pool, round_):
    """Corrector is independent of self-labels: cross-validated on the
    pristine seed for seed rows, seed-trained for everything else."""
    spec = _corrector_spec(cfg)
    C = pool.num_classes
    probas = np.zeros((len(pool), C))
    seed_rows = np.isin(pool.ids, seed_ds.ids)
    sx, sy = seed_ds.features, seed_ds.visible_labels()
    probas[seed_rows] = cross_val_proba(
        spec, sx, sy, None, C, cfg.remediation.cv_folds,
        seed=int(derive_rng(cfg.seed, "cv", round_).integers(2 ** 31)))
    full = fit_arrays(spec, sx, sy, None, C,
                      seed=int(derive_rng(cfg.seed, "corrector",
                                          round_).integers(2 ** 31)))
    if np.any(~seed_rows):
        probas[~seed_rows] = full.predict_proba(pool.features[~seed_rows])
    return probas


def _remediate_rank_prune(cfg, seed_ds, pool, model, round_):
    """Returns (train_ds, weights, estimate, report)."""
    rem = cfg.remediation
    pred_labels = predict(model, pool.features)
    if rem.anti_coupling:
        probas = _correction_probas_anti(cfg, seed_ds, pool, round_)
        given = pool.visible_labels()
    else:
        # coupled mode: the corrector only ever sees the predictor's own
        # labels, so it cannot detect the predictor's mistakes
        given = pred_labels
        probas = cross_val_proba(
            _corrector_spec(cfg), pool.features, given, None,
            pool.num_classes, rem.cv_folds,
            seed=int(derive_rng(cfg.seed, "cv", round_).integers(2 ** 31)))
    corrected = np.argmax(probas, axis=1)
    estimate = estimate_noise_rates(probas, given)
    report = coupling_report(pred_labels, corrected, estimate, rem.theta)
    if estimate.degenerate:
        return pool, None, estimate, report
    result = rank_prune(pool, probas, estimate)
    kept = pool.subset_by_ids(sorted(result.kept_ids))
    weights = np.array([result.weights[int(i)] for i in kept.ids])
    return kept, weights, estimate, report


def _remediate_spread_correct(cfg, seed_ds, pool, model, round_):
    rem = cfg.remediation
    spec = rem.spread or SpreadSpec(alpha=0.9)
    if rem.anti_coupling:
        base = pool
    else:
        # coupled mode: correct a pool relabeled with the predictor's output
        base = pool.with_provided_labels(predict(model, pool.features))
    _res, corrected, changed_ids = spread_correct(base, spec)
    given = base.visible_labels()
    pis = []
    for y in (0, 1):
        rows_y = np.flatnonzero(given == y)
        ch = np.isin(base.ids[rows_y], sorted(changed_ids))
        pis.append(float(np.mean(ch)) if len(rows_y) else 0.0)
    estimate = NoiseEstimate(pis[0], pis[1], 0, 0, 1.0, 0.0)
    pred_labels = predict(model, pool.features)
    report = coupling_report(pred_labels, np.where(corrected >= 0, corrected,
                                                   given), estimate, rem.theta)
    fixed = np.where(corrected >= 0, corrected, pool.visible_labels())
    train = pool.with_provided_labels(fixed)
    return train, None, estimate, report


# ----------------------------------------------------------------------
# experiment driver
# ----------------------------------------------------------------------
def prepare_experiment(dataset: Dataset, cfg: EngineConfig):
    """Split, optional seed-noise injection, and stream planning. Raises on
    any config inconsistency before training starts."""
    cfg.gate.validate()
    cfg.remediation.validate()
    for s in cfg.strategies:
        if s not in STRATEGIES:
            raise ValidationError(f"unknown strategy {s!r}")
    if ("sumer" in cfg.strategies or "static_remediated" in cfg.strategies) \
            and cfg.remediation.kind == "none":
        raise ValidationError("sumer/static_remediated need a remediation kind")
    labeled, unlabeled, holdout = split_dataset(dataset, cfg.split)
    flipped_ids = set()
    if cfg.noise is not None:
        labeled, flipped_ids = inject_noise(labeled, cfg.noise)
    if cfg.window_size * cfg.n_windows > len(unlabeled):
        raise ValidationError(
            f"window_size * n_windows = {cfg.window_size * cfg.n_windows} "
            f"exceeds the unlabeled pool of {len(unlabeled)}")
    plan = plan_stream(unlabeled, cfg.window_size, cfg.n_windows, cfg.seed)
    return labeled, unlabeled, holdout, plan, flipped_ids


def run_strategy(strategy, seed_ds, pool, holdout, plan, cfg: EngineConfig):
    """One strategy over the whole stream; returns its trace rows."""
    w = plan.window_size
    rows = []
    rem_fields = dict(selflabel_precision=float("nan"), pi0_hat=float("nan"),
                      pi1_hat=float("nan"), coupling_agreement=float("nan"),
                      coupled=None)

    if strategy == "static_remediated":
        if cfg.remediation.kind == "spread_correct":
            train, weights, est, _rep = _remediate_spread_correct(
                cfg, seed_ds, seed_ds, _refit(cfg.learner, seed_ds, cfg.seed, 0), 0)
        else:
            spec = _corrector_spec(cfg)
            probas = cross_val_proba(
                spec, seed_ds.features, seed_ds.visible_labels(), None,
                seed_ds.num_classes, cfg.remediation.cv_folds,
                seed=int(derive_rng(cfg.seed, "cv", 0).integers(2 ** 31)))
            est = estimate_noise_rates(probas, seed_ds.visible_labels())
            if est.degenerate:
                train, weights = seed_ds, None
            else:
                result = rank_prune(seed_ds, probas, est)
                train = seed_ds.subset_by_ids(sorted(result.kept_ids))
                weights = np.array([result.weights[int(i)] for i in train.ids])
        if weights is not None:
            train = train.with_weights(weights)
        model = _refit(cfg.learner, train, cfg.seed, 0)
    else:
        model = _refit(cfg.learner, seed_ds, cfg.seed, 0)

    coverage = None
    if cfg.gate.coverage_k is not None:
        coverage = CoverageScorer(seed_ds.features, cfg.gate.coverage_k,
                                  cfg.gate.coverage_q)

    rows.append(dict(window=0, strategy=strategy, seen=0,
                     holdout_acc=_accuracy(model, holdout),
                     accepted=0, rejected=0, **rem_fields))

    accepted_parts = []    # accumulated SelfLabeled datasets
    backlog = None         # rejected instances, re-gated each round
    oracle_parts = []

    for r, window_ids in enumerate(plan.windows, start=1):
        window = pool.subset_by_ids(window_ids)
        fields = dict(rem_fields)
        if strategy == "static" or strategy == "static_remediated":
            acc_n, rej_n = 0, w
        elif strategy == "oracle":
            oracle_parts.append(window.with_provided_labels(window.truth))
            train = Dataset.concat([seed_ds] + oracle_parts)
            model = _refit(cfg.learner, train, cfg.seed, r)
            acc_n, rej_n = w, 0
            fields["selflabel_precision"] = 1.0
        else:  # sum / sumer
            cands = window if backlog is None or len(backlog) == 0 \
                else Dataset.concat([window, backlog])
            accepted, rejected_ids = self_label(model, cands, cfg.gate, r,
                                                coverage)
            acc_n = int(np.sum(np.isin(window.ids, accepted.ids)))
            rej_n = w - acc_n
            backlog = cands.subset_by_ids(sorted(rejected_ids)) \
                if rejected_ids else None
            if len(accepted):
                accepted_parts.append(accepted)
            fields["selflabel_precision"] = _precision_vs_truth(accepted)
            train_pool = Dataset.concat([seed_ds] + accepted_parts)
            if strategy == "sum":
                model = _refit(cfg.learner, train_pool, cfg.seed, r)
            else:  # sumer
                if cfg.remediation.kind == "spread_correct":
                    train, weights, est, rep = _remediate_spread_correct(
                        cfg, seed_ds, train_pool, model, r)
                else:
                    train, weights, est, rep = _remediate_rank_prune(
                        cfg, seed_ds, train_pool, model, r)
                if weights is not None:
                    train = train.with_weights(weights)
                model = _refit(cfg.learner, train, cfg.seed, r)
                fields.update(pi0_hat=est.pi0, pi1_hat=est.pi1,
                              coupling_agreement=rep.agreement,
                              coupled=rep.coupled)
        rows.append(dict(window=r, strategy=strategy, seen=r * w,
                         holdout_acc=_accuracy(model, holdout),
                         accepted=acc_n, rejected=rej_n, **fields))
    return rows


def run_experiment(dataset: Dataset, cfg: EngineConfig,
                   provenance=None) -> Trace:
    seed_ds, pool, holdout, plan, _flipped = prepare_experiment(dataset, cfg)
    rows = []
    for strategy in cfg.strategies:
        rows.extend(run_strategy(strategy, seed_ds, pool, holdout, plan, cfg))
    return Trace(rows, provenance or {"seed": cfg.seed})


def single_round_sum(data: Dataset, learner, gate: GateSpec = GateSpec(tau=0.0),
                     seed=0):
    """One self-updating pass over a dataset with a few Provided labels.

    All Unlabeled rows get a label in one round (spreading, or fit +
    ungated self-labeling); returns (labeled dataset, accuracy of the new
    labels against hidden truth).
    """
    provided = data.state == LabelState.PROVIDED
    if not np.any(provided):
        raise ValidationError("need at least one provided label")
    unlab = np.flatnonzero(data.state == LabelState.UNLABELED)
    if len(unlab) == 0:
        acc = float(np.mean(data.label[provided] == data.truth[provided]))
        return data, acc
    if isinstance(learner, SpreadSpec):
        res = spread_arrays(data.features, data.visible_labels(),
                            data.num_classes, learner)
        new_labels = res.hard[unlab]
        conf = res.confidence[unlab]
    else:
        model = _refit(learner, data.select(provided), seed, 0)
        proba = model.predict_proba(data.features[unlab])
        new_labels = np.argmax(proba, axis=1)
        conf = proba.max(axis=1)
    decided = new_labels >= 0
    unl_ds = data.select(unlab[decided]).with_self_labels(
        new_labels[decided], np.clip(conf[decided], 0, 1), 1)
    labeled = Dataset.concat([data.select(provided), unl_ds,
                              data.select(unlab[~decided])])
    known = unl_ds.truth != NO_LABEL
    acc = float(np.mean(unl_ds.label[known] == unl_ds.truth[known])) \
        if np.any(known) else float("nan")
    return labeled, acc
