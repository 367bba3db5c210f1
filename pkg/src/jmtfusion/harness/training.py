"""
Feature precomputation and the training loop.

Backbones are frozen, so their clip embeddings are computed once per
dataset and reused by every fusion run. Every random draw is keyed by
``(seed, purpose, epoch)``: model initialisation, per-epoch shuffling and
per-epoch dropout masks. Resuming from a checkpoint written at the end of
epoch ``e`` therefore replays epochs ``e+1, ...`` exactly as an
uninterrupted run would.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .. import tensor as T
from ..backbones import TemporalConvBackbone, extract_clip_features
from ..data import SyntheticDataset
from ..errors import CheckpointError, InputError, NumericError
from ..fusion import build_model
from ..losses import MetricsRecord, accuracy, ccc_loss, ccc_per_target, cross_entropy, write_csv, write_jsonl
from ..nn import Module
from .checkpoint import Checkpoint, save_checkpoint
from .config import RunConfig
from .optim import make_optimizer

# purpose tags for derived random streams
_INIT, _SHUFFLE, _DROPOUT, _BACKBONE = 1, 2, 3, 4


@dataclass
class FeatureSet:
    """Frozen-backbone clip embeddings for a whole dataset.

    ``F_A`` and ``F_B`` are ``(N, clips, D)``; ``clip_targets`` is
    ``(N, clips, K)`` holding the target averaged over each clip.
    """

    F_A: np.ndarray
    F_B: np.ndarray
    clip_targets: np.ndarray
    labels: np.ndarray
    subject_ids: np.ndarray

    def __len__(self):
        return self.F_A.shape[0]

    @property
    def dim(self) -> int:
        return self.F_A.shape[-1]

    @property
    def sequence_targets(self) -> np.ndarray:
        return self.clip_targets.mean(axis=1)


def build_backbone(config: RunConfig, channels: int, modality: str):
    bb = config.backbone
    if bb.kind == "flatten":
        return None
    idx = 0 if modality == "A" else 1
    rng = np.random.default_rng([bb.seed, _BACKBONE, idx])
    return TemporalConvBackbone(channels, bb.clip_length, config.fusion.feat_dim, tuple(bb.filters),
                                bb.kernel_size, rng=rng).freeze()


def compute_features(dataset: SyntheticDataset, config: RunConfig) -> FeatureSet:
    if len(dataset) == 0:
        raise InputError("dataset is empty")
    clip = config.backbone.clip_length
    channels = dataset.samples[0].stream_a.frames.shape[1]
    feats = {}
    for m in ("A", "B"):
        backbone = build_backbone(config, channels, m)
        frames = np.stack([(s.stream_a if m == "A" else s.stream_b).frames for s in dataset.samples])
        n_clips = frames.shape[1] // clip
        if n_clips == 0:
            raise InputError(f"sequences of {frames.shape[1]} frames are shorter than one clip ({clip})")
        clips = frames[:, : n_clips * clip].reshape(len(dataset), n_clips, clip, channels)
        if backbone is None:
            feats[m] = clips.reshape(len(dataset), n_clips, clip * channels)
        else:
            flat = clips.reshape(-1, clip, channels)
            feats[m] = extract_clip_features(flat.reshape(-1, channels), backbone, clip).data.reshape(
                len(dataset), n_clips, -1)
    targets = np.stack([s.targets for s in dataset.samples])
    n_clips = feats["A"].shape[1]
    clip_targets = targets[:, : n_clips * clip].reshape(len(dataset), n_clips, clip, -1).mean(axis=2)
    labels = np.array([s.label for s in dataset.samples])
    return FeatureSet(feats["A"], feats["B"], clip_targets, labels, dataset.subject_ids)


def make_model(config: RunConfig, feature_dim: int) -> Module:
    fusion = dataclasses.replace(config.fusion, feature_dim=feature_dim)
    return build_model(config.model, fusion, np.random.default_rng([config.seed, _INIT]))


def _epoch_rng(config: RunConfig, purpose: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng([config.seed, purpose, epoch])


def _loss(config: RunConfig, out: T.Tensor, fs: FeatureSet, idx: np.ndarray) -> T.Tensor:
    if config.task == "binary_classification":
        if out.ndim == 3:
            out = T.mean(out, axis=1)
        return cross_entropy(out, fs.labels[idx])
    target = fs.clip_targets[idx] if out.ndim == 3 else fs.sequence_targets[idx]
    return ccc_loss(out, target)


def evaluate(model: Module, config: RunConfig, fs: FeatureSet, idx: np.ndarray, split: str, epoch: int,
             loss: float | None = None) -> MetricsRecord:
    """Evaluation-mode metrics on ``fs[idx]``. ``loss`` overrides the split loss when given."""
    with T.no_grad():
        out = model(fs.F_A[idx], fs.F_B[idx], training=False)
        split_loss = _loss(config, out, fs, idx).item()
    common = dict(run_id=config.run_id, epoch=epoch, split=split, seed=config.seed, config_hash=config.hash(),
                  loss=split_loss if loss is None else loss)
    if config.task == "binary_classification":
        logits = out.data.mean(axis=1) if out.ndim == 3 else out.data
        return MetricsRecord(accuracy=accuracy(logits, fs.labels[idx]), **common)
    target = fs.clip_targets[idx] if out.ndim == 3 else fs.sequence_targets[idx]
    cccs = ccc_per_target(out.data, target)
    return MetricsRecord(valence_ccc=cccs[0], arousal_ccc=cccs[1] if len(cccs) > 1 else None, **common)


def primary_metric(config: RunConfig, rec: MetricsRecord) -> float:
    return rec.accuracy if config.task == "binary_classification" else rec.mean_ccc


@dataclass
class TrainResult:
    model: Module  # holds the best-epoch parameters
    records: list[MetricsRecord]
    checkpoint: Checkpoint  # state at the last completed epoch
    best_epoch: int
    best_metric: float
    test_record: MetricsRecord | None = None
    data_order_hash: str = ""
    epochs_run: int = 0
    stopped_early: bool = False
    extra: dict = field(default_factory=dict)


def data_order_hash(config: RunConfig, train_idx, val_idx, test_idx) -> str:
    """sha256 over the split and the full shuffle schedule for ``max_epochs`` epochs.

    It depends only on the seed, the split and the epoch budget, so every
    model trained under one protocol logs the same value.
    """
    h = hashlib.sha256()
    for part in (train_idx, val_idx, test_idx):
        h.update(np.asarray(part, dtype="<i8").tobytes() + b"|")
    for epoch in range(config.max_epochs):
        h.update(_epoch_rng(config, _SHUFFLE, epoch).permutation(train_idx).astype("<i8").tobytes())
    return h.hexdigest()


def _split_indices(config: RunConfig, dataset, fs: FeatureSet, split):
    if split is not None:
        return tuple(np.asarray(s, dtype=int) for s in split)
    if dataset is None:
        raise InputError("pass either a dataset or an explicit split")
    return dataset.split(config.test_fold)


def train(config: RunConfig, dataset: SyntheticDataset | None = None, features: FeatureSet | None = None,
          split=None, resume: Checkpoint | None = None, stop_after_epoch: int | None = None,
          checkpoint_path=None, metrics_path=None) -> TrainResult:
    """Train ``config.model`` on frozen-backbone features with early stopping.

    Parameters
    ----------
    split
        ``(train, val, test)`` index arrays; defaults to ``dataset.split(config.test_fold)``.
        ``test`` may be empty, in which case no test record is produced.
    resume
        Checkpoint from an earlier call with the same config; training continues after its epoch.
    stop_after_epoch
        Stop (without early-stopping bookkeeping) once this epoch completes, as if interrupted.
    checkpoint_path, metrics_path
        When given, the checkpoint is rewritten after every epoch and the metrics are written as
        ``<metrics_path>.jsonl`` and ``<metrics_path>.csv`` at the end.

    Raises
    ------
    NumericError
        On a non-finite training loss. The exception's ``record`` attribute holds a diagnostic
        ``MetricsRecord`` (split ``"diverged"``), which is also appended to the metrics files.
    """
    fs = compute_features(dataset, config) if features is None else features
    train_idx, val_idx, test_idx = _split_indices(config, dataset, fs, split)
    if len(train_idx) < 2 or len(val_idx) < 1:
        raise InputError("need at least two training samples and one validation sample")
    model = make_model(config, fs.dim)
    params = model.trainable_parameters()
    names = [n for n, p in model.named_parameters() if p.requires_grad]
    opt = make_optimizer(config.optimizer, params, config.learning_rate, config.momentum)
    chash = config.hash()

    records: list[MetricsRecord] = []
    best_metric, best_epoch, bad = -math.inf, -1, 0
    best_state = model.state_dict()
    order_hash = data_order_hash(config, train_idx, val_idx, test_idx)
    start = 0
    if resume is not None:
        if resume.config_hash != chash:
            raise CheckpointError(f"checkpoint was written for config {resume.config_hash}, this run is {chash}")
        model.load_state_dict(resume.params)
        opt.load_state_dict(resume.optimizer_state)
        best_state = {k: v.copy() for k, v in resume.best_params.items()}
        best_metric = -math.inf if resume.best_metric is None else resume.best_metric
        best_epoch = resume.best_epoch
        bad = resume.meta["bad_epochs"]
        records = [MetricsRecord.from_dict(r) for r in resume.meta["records"]]
        start = resume.epoch + 1

    n_batches = max(1, math.ceil(len(train_idx) / config.batch_size))
    ck = resume
    stopped_early = bad > config.patience
    interrupted = False
    epoch = start - 1
    for epoch in range(start, config.max_epochs if not stopped_early else start):
        order = _epoch_rng(config, _SHUFFLE, epoch).permutation(train_idx)
        drop_rng = _epoch_rng(config, _DROPOUT, epoch)
        losses = []
        for batch in np.array_split(order, n_batches):
            opt.zero_grad()
            try:
                out = model(fs.F_A[batch], fs.F_B[batch], training=True, rng=drop_rng)
                loss = _loss(config, out, fs, batch)
                value = loss.item()
                if not np.isfinite(value):
                    raise NumericError(f"non-finite training loss at epoch {epoch}, step {opt.steps}")
            except NumericError as err:
                diag = MetricsRecord(config.run_id, epoch, "diverged", loss=math.nan,
                                     seed=config.seed, config_hash=chash)
                records.append(diag)
                _write_metrics(records, metrics_path)
                err.record = diag
                raise
            T.backward(loss)
            opt.step()
            losses.append(loss.item())
        train_rec = evaluate(model, config, fs, train_idx, "train", epoch, loss=float(np.mean(losses)))
        val_rec = evaluate(model, config, fs, val_idx, "val", epoch)
        records += [train_rec, val_rec]
        metric = primary_metric(config, val_rec)
        if metric > best_metric:  # strict: ties keep the earlier epoch
            best_metric, best_epoch, bad = metric, epoch, 0
            best_state = model.state_dict()
        else:
            bad += 1
        ck = Checkpoint(chash, epoch, model.state_dict(), opt.state_dict(), best_state, best_metric, best_epoch,
                        {"bad_epochs": bad, "data_order_hash": order_hash,
                         "records": [r.to_dict() for r in records], "config": config.to_dict()})
        if checkpoint_path is not None:
            save_checkpoint(ck, checkpoint_path)
        if bad > config.patience:
            stopped_early = True
            break
        if stop_after_epoch is not None and epoch >= stop_after_epoch and epoch + 1 < config.max_epochs:
            interrupted = True
            break

    model.load_state_dict(best_state)
    test_rec = None
    if len(test_idx) and not interrupted:
        test_rec = evaluate(model, config, fs, test_idx, "test", best_epoch)
        records.append(test_rec)
    _write_metrics(records, metrics_path)
    return TrainResult(model, records, ck, best_epoch, best_metric, test_rec, order_hash,
                       epoch + 1, stopped_early)


def _write_metrics(records, metrics_path) -> None:
    if metrics_path is None:
        return
    write_jsonl(records, f"{metrics_path}.jsonl")
    write_csv(records, f"{metrics_path}.csv")
