"""TOML experiment configs: parsing, strict validation, dataset building.

The schema is versioned (`version = 1`); unknown keys anywhere are
rejected so stale configs fail loudly instead of running the wrong thing.
"""
from __future__ import annotations

try:
    import tomllib
except ModuleNotFoundError:           # Python < 3.11
    import tomli as tomllib

import numpy as np

from .data import Dataset, SplitSpec
from .engine import EngineConfig, GateSpec, RemediationSpec, STRATEGIES
from .errors import ValidationError
from .learners import ForestSpec, KNNSpec, TreeSpec
from .spreading import SpreadSpec
from .synth import (GaussianSpec, MoonsSpec, NoiseSpec, gen_two_gaussians,
                    gen_two_moons)

CONFIG_VERSION = 1


def _take(table, allowed, where):
    unknown = set(table) - set(allowed)
    if unknown:
        raise ValidationError(
            f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}")
    return table


def load_toml(path):
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"{path}: invalid TOML: {exc}") from None


def parse_learner(table, default_seed):
    kind = table.get("kind")
    if kind == "knn":
        _take(table, {"kind", "k"}, "learner")
        return KNNSpec(k=int(table.get("k", 5)))
    if kind == "tree":
        _take(table, {"kind", "max_depth", "min_leaf"}, "learner")
        return TreeSpec(max_depth=int(table.get("max_depth", 8)),
                        min_leaf=int(table.get("min_leaf", 1)))
    if kind == "forest":
        _take(table, {"kind", "n_trees", "max_depth", "min_leaf",
                      "features_per_split", "seed"}, "learner")
        return ForestSpec(n_trees=int(table.get("n_trees", 15)),
                          max_depth=int(table.get("max_depth", 8)),
                          min_leaf=int(table.get("min_leaf", 1)),
                          features_per_split=table.get("features_per_split"),
                          seed=int(table.get("seed", default_seed)))
    if kind == "spreading":
        return parse_spread(table, "learner")
    raise ValidationError(f"unknown learner kind {kind!r}")


def parse_spread(table, where):
    _take(table, {"kind", "affinity", "gamma", "k", "alpha", "max_iter",
                  "tol"}, where)
    return SpreadSpec(affinity=table.get("affinity", "rbf"),
                      gamma=table.get("gamma"),
                      k=int(table.get("k", 7)),
                      alpha=float(table.get("alpha", 0.2)),
                      max_iter=int(table.get("max_iter", 1000)),
                      tol=float(table.get("tol", 1e-6)))


def parse_noise(table, default_seed):
    _take(table, {"kind", "rate", "pi0", "pi1", "seed"}, "noise")
    return NoiseSpec(kind=table.get("kind", "symmetric"),
                     rate=float(table.get("rate", 0.0)),
                     pi0=float(table.get("pi0", 0.0)),
                     pi1=float(table.get("pi1", 0.0)),
                     seed=int(table.get("seed", default_seed)))


def parse_dataset_spec(table):
    kind = table.get("kind")
    if kind == "two_moons":
        _take(table, {"kind", "n", "noise_std", "seed"}, "dataset")
        return table
    if kind == "two_gaussians":
        _take(table, {"kind", "means", "covariances", "counts", "seed"},
              "dataset")
        return table
    if kind == "csv":
        _take(table, {"kind", "path", "num_classes"}, "dataset")
        return table
    raise ValidationError(f"unknown dataset kind {kind!r}")


def build_dataset(table, default_seed):
    kind = table["kind"]
    seed = int(table.get("seed", default_seed))
    if kind == "two_moons":
        return gen_two_moons(MoonsSpec(n=int(table["n"]),
                                       noise_std=float(table.get("noise_std", 0.1)),
                                       seed=seed))
    if kind == "two_gaussians":
        spec = GaussianSpec(means=tuple(table["means"]),
                            covariances=tuple(table["covariances"]),
                            counts=tuple(table["counts"]))
        return gen_two_gaussians(spec, seed)
    return Dataset.from_csv(table["path"], table.get("num_classes"))


def parse_config(doc, path="<config>"):
    _take(doc, {"version", "seed", "dataset", "split", "noise", "stream",
                "learner", "gate", "remediation", "strategies"}, "top level")
    if doc.get("version") != CONFIG_VERSION:
        raise ValidationError(
            f"{path}: config version must be {CONFIG_VERSION}")
    for key in ("dataset", "split", "stream", "learner"):
        if key not in doc:
            raise ValidationError(f"{path}: missing [{key}] section")
    seed = int(doc.get("seed", 0))

    dataset_table = parse_dataset_spec(doc["dataset"])

    sp = _take(doc["split"], {"labeled_fraction", "holdout_fraction", "seed",
                              "stratified"}, "split")
    split = SplitSpec(labeled_fraction=float(sp["labeled_fraction"]),
                      holdout_fraction=float(sp["holdout_fraction"]),
                      seed=int(sp.get("seed", seed)),
                      stratified=bool(sp.get("stratified", False)))

    st = _take(doc["stream"], {"window_size", "n_windows", "seed"}, "stream")
    learner = parse_learner(doc["learner"], seed)

    gt = _take(doc.get("gate", {}), {"tau", "coverage_k", "coverage_q"},
               "gate")
    default_tau = 0.7 if isinstance(learner, SpreadSpec) else 0.8
    gate = GateSpec(tau=float(gt.get("tau", default_tau)),
                    coverage_k=gt.get("coverage_k"),
                    coverage_q=float(gt.get("coverage_q", 0.9)))

    rm = _take(doc.get("remediation", {}),
               {"kind", "cv_folds", "theta", "anti_coupling", "affinity",
                "gamma", "k", "alpha", "max_iter", "tol"}, "remediation")
    kind = rm.get("kind", "rank_prune")
    spread = None
    if kind == "spread_correct":
        spread = parse_spread({k: v for k, v in rm.items()
                               if k not in ("kind", "cv_folds", "theta",
                                            "anti_coupling")}, "remediation")
        if "alpha" not in rm:
            spread = SpreadSpec(affinity=spread.affinity, gamma=spread.gamma,
                                k=spread.k, alpha=0.9,
                                max_iter=spread.max_iter, tol=spread.tol)
    remediation = RemediationSpec(kind=kind,
                                  cv_folds=int(rm.get("cv_folds", 5)),
                                  theta=float(rm.get("theta", 0.02)),
                                  anti_coupling=bool(rm.get("anti_coupling",
                                                            True)),
                                  spread=spread)

    strategies = tuple(doc.get("strategies", ["static", "sum", "oracle"]))
    for s in strategies:
        if s not in STRATEGIES:
            raise ValidationError(f"{path}: unknown strategy {s!r}")

    noise = parse_noise(doc["noise"], seed) if "noise" in doc else None

    engine_cfg = EngineConfig(split=split,
                              window_size=int(st["window_size"]),
                              n_windows=int(st["n_windows"]),
                              learner=learner, gate=gate,
                              remediation=remediation, noise=noise,
                              strategies=strategies, seed=seed)
    return dataset_table, engine_cfg
