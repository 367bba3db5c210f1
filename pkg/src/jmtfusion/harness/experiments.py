"""Learning-rate grid search, subject-disjoint k-fold runs and the fusion ablation table."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from ..data import SyntheticDataset, generate_dataset, make_folds
from ..errors import ConfigError, JMTError
from ..fusion import MODEL_KINDS
from ..losses import MetricsRecord
from .config import RunConfig
from .training import FeatureSet, TrainResult, compute_features, primary_metric, train


@dataclass
class GridResult:
    best_config: RunConfig
    best_lr: float
    per_lr: list[dict]  # {"learning_rate", "val_metric", "best_epoch"}
    results: list[TrainResult]


def grid_search(config: RunConfig, dataset: SyntheticDataset | None = None, features: FeatureSet | None = None,
                split=None) -> GridResult:
    """One run per rate in ``config.lr_grid``; the best validation metric wins, ties go to the lower rate."""
    if not config.lr_grid:
        raise ConfigError("lr_grid is empty")
    fs = compute_features(dataset, config) if features is None else features
    per_lr, results = [], []
    for lr in config.lr_grid:
        cfg = config.replace(learning_rate=lr)
        res = train(cfg, dataset, features=fs, split=split)
        results.append(res)
        per_lr.append({"learning_rate": lr, "val_metric": res.best_metric, "best_epoch": res.best_epoch})
    best = max(range(len(per_lr)), key=lambda i: (per_lr[i]["val_metric"], -per_lr[i]["learning_rate"]))
    best_lr = per_lr[best]["learning_rate"]
    return GridResult(config.replace(learning_rate=best_lr), best_lr, per_lr, results)


@dataclass
class KFoldResult:
    folds: list[list[int]]
    fold_records: list[MetricsRecord]  # one test record per fold
    mean: dict[str, float]
    std: dict[str, float]
    results: list[TrainResult] = field(default_factory=list)


_SUMMARY_FIELDS = ("valence_ccc", "arousal_ccc", "mean_ccc", "accuracy", "loss")


def _summarise(records: list[MetricsRecord]) -> tuple[dict, dict]:
    mean, std = {}, {}
    for name in _SUMMARY_FIELDS:
        vals = [getattr(r, name) for r in records]
        if all(v is not None for v in vals):
            mean[name] = float(np.mean(vals))
            std[name] = float(np.std(vals))
    return mean, std


def kfold_run(config: RunConfig, dataset: SyntheticDataset, k: int | None = None,
              features: FeatureSet | None = None) -> KFoldResult:
    """Train once per subject-disjoint fold and evaluate on that fold.

    Fold ``i`` is the test set, fold ``i+1`` (cyclically) the validation set
    for early stopping, and the remaining folds the training set.
    """
    k = config.data.k_folds if k is None else k
    if k < 3:
        raise ConfigError(f"k-fold runs need k >= 3 (separate test, validation and training folds), got {k}")
    folds = make_folds(dataset, k, config.data.seed)
    fs = compute_features(dataset, config) if features is None else features
    subj = fs.subject_ids
    records, results = [], []
    for i in range(k):
        test = np.flatnonzero(np.isin(subj, folds[i]))
        val = np.flatnonzero(np.isin(subj, folds[(i + 1) % k]))
        tr = np.setdiff1d(np.arange(len(fs)), np.concatenate([test, val]))
        res = train(config.replace(run_id=f"{config.run_id}-fold{i}"), features=fs, split=(tr, val, test))
        results.append(res)
        records.append(res.test_record)
    mean, std = _summarise(records)
    return KFoldResult(folds, records, mean, std, results)


@dataclass
class AblationResult:
    kinds: list[str]
    seeds: list[int]
    metric: str
    scores: dict[str, list[float]]  # kind -> per-seed test metric
    order_hashes: dict[int, str]
    records: list[MetricsRecord] = field(default_factory=list)

    def mean(self, kind: str) -> float:
        return float(np.mean(self.scores[kind]))

    def std(self, kind: str) -> float:
        return float(np.std(self.scores[kind]))

    def rows(self) -> list[dict]:
        return [{"model": k, "mean": self.mean(k), "std": self.std(k),
                 **{f"seed_{s}": v for s, v in zip(self.seeds, self.scores[k])}} for k in self.kinds]

    def to_json(self) -> str:
        return json.dumps({"metric": self.metric, "seeds": self.seeds, "rows": self.rows(),
                           "data_order_hashes": {str(s): h for s, h in self.order_hashes.items()}}, indent=2)

    def to_csv(self) -> str:
        rows = self.rows()
        fh = io.StringIO()
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return fh.getvalue()

    def pretty(self) -> str:
        lines = [f"{'model':<12} {self.metric + ' (mean +/- std)':>28}   per seed"]
        for k in self.kinds:
            per = " ".join(f"{v:.4f}" for v in self.scores[k])
            lines.append(f"{k:<12} {self.mean(k):>19.4f} +/- {self.std(k):.4f}   {per}")
        return "\n".join(lines)


def ablation_run(base: RunConfig, seeds=(0, 1, 2, 3, 4), kinds=MODEL_KINDS) -> AblationResult:
    """Train every model kind under one protocol and report the test metric per seed.

    For each seed the dataset, backbone and run seeds are all set to that
    seed, so every kind sees the same features, split and batch order. The
    batch order is checked through the logged data-order hash.
    """
    seeds, kinds = list(seeds), list(kinds)
    metric = "accuracy" if base.task == "binary_classification" else "mean_ccc"
    scores = {k: [] for k in kinds}
    hashes, records = {}, []
    for s in seeds:
        cfg_s = base.replace(seed=s, data={"seed": s}, backbone={"seed": s})
        ds = generate_dataset(cfg_s.data)
        fs = compute_features(ds, cfg_s)
        for kind in kinds:
            res = train(cfg_s.replace(model=kind, run_id=f"{kind}-seed{s}"), ds, features=fs)
            if hashes.setdefault(s, res.data_order_hash) != res.data_order_hash:
                raise JMTError(f"data order differs between variants for seed {s}")
            scores[kind].append(primary_metric(cfg_s, res.test_record))
            records.extend(res.records)
    return AblationResult(kinds, seeds, metric, scores, hashes, records)
