"""Concordance correlation, CCC loss, classification metrics and metric records."""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from . import tensor as T
from .errors import InputError, ShapeError
from .tensor import Tensor


def _values(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def ccc(pred, target, return_flag: bool = False):
    """Lin's concordance correlation coefficient with population moments.

    ``2 cov(x, y) / (var(x) + var(y) + (mean(x) - mean(y))**2)``.

    When both inputs are constant the ratio is 0/0; it is defined as 1 when
    they are equal and 0 otherwise. With ``return_flag=True`` a
    ``(value, degenerate)`` pair is returned so callers can tell those cases
    apart from a genuine result.
    """
    x = _values(pred).reshape(-1)
    y = _values(target).reshape(-1)
    if x.shape != y.shape:
        raise ShapeError(f"ccc: prediction has {x.size} values, target has {y.size}")
    if x.size < 2:
        raise InputError("ccc needs at least two samples")
    mx, my = x.mean(), y.mean()
    xc, yc = x - mx, y - my
    vx, vy = (xc * xc).mean(), (yc * yc).mean()
    cov = (xc * yc).mean()
    denom = vx + vy + (mx - my) ** 2
    degenerate = vx == 0.0 and vy == 0.0
    if degenerate:
        value = 1.0 if mx == my else 0.0
    else:
        value = float(2.0 * cov / denom)
    return (value, degenerate) if return_flag else value


def ccc_per_target(pred, target) -> list[float]:
    """CCC for each column of ``(..., K)`` arrays, flattening the leading axes."""
    x, y = _values(pred), _values(target)
    k = x.shape[-1]
    x, y = x.reshape(-1, k), y.reshape(-1, k)
    return [ccc(x[:, j], y[:, j]) for j in range(k)]


def _ccc_loss_1d(p: Tensor, y: np.ndarray) -> Tensor:
    my = y.mean()
    yc = y - my
    vy = float((yc * yc).mean())
    mx = T.mean(p)
    pc = p - mx
    vx = T.mean(pc * pc)
    if vx.item() == 0.0 and vy == 0.0:
        # 0/0 case: constant loss, no gradient signal
        return T.Tensor(0.0 if mx.item() == my else 1.0) + 0.0 * T.sum(p)
    cov = T.mean(pc * T.Tensor(yc))
    d = mx - float(my)
    return 1.0 - 2.0 * cov / (vx + vy + d * d)


def ccc_loss(pred: Tensor, target) -> Tensor:
    """``1 - ccc`` on the autodiff graph.

    ``pred`` of shape ``(N,)`` gives a single loss; ``(..., K)`` gives the
    mean of the K per-target losses, with leading axes flattened.
    """
    pred = T._as_tensor(pred)
    y = _values(target)
    if pred.shape != y.shape:
        raise ShapeError(f"ccc_loss: prediction {pred.shape} vs target {y.shape}")
    if pred.ndim == 1:
        if pred.size < 2:
            raise InputError("ccc_loss needs at least two samples")
        return _ccc_loss_1d(pred, y)
    k = pred.shape[-1]
    p2 = T.reshape(pred, (-1, k))
    y2 = y.reshape(-1, k)
    if p2.shape[0] < 2:
        raise InputError("ccc_loss needs at least two samples")
    losses = [_ccc_loss_1d(p2[:, j], y2[:, j]) for j in range(k)]
    total = losses[0]
    for extra in losses[1:]:
        total = total + extra
    return total * (1.0 / k)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under ``softmax(logits)``."""
    logits = T._as_tensor(logits)
    labels = np.asarray(labels).astype(int).reshape(-1)
    if logits.ndim != 2 or logits.shape[0] != labels.size:
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs {labels.size} labels")
    if labels.size == 0:
        raise InputError("cross_entropy on an empty batch")
    logp = T.log_softmax(logits, axis=-1)
    picked = logp[np.arange(labels.size), labels]
    return -T.mean(picked)


def accuracy(logits, labels) -> float:
    """Fraction of rows whose argmax equals the label. Exact ties resolve to class 0."""
    z = _values(logits)
    labels = np.asarray(labels).reshape(-1)
    if labels.size == 0:
        raise InputError("accuracy on an empty batch")
    if not np.isin(labels, (0, 1)).all():
        raise InputError("labels must be 0 or 1")
    z = z.reshape(labels.size, -1)
    return float((z.argmax(axis=1) == labels).mean())


@dataclass
class MetricsRecord:
    run_id: str
    epoch: int
    split: str
    valence_ccc: float | None = None
    arousal_ccc: float | None = None
    mean_ccc: float | None = None
    accuracy: float | None = None
    loss: float | None = None
    seed: int = 0
    config_hash: str = ""

    def __post_init__(self):
        if self.valence_ccc is not None and self.arousal_ccc is not None:
            self.mean_ccc = (self.valence_ccc + self.arousal_ccc) / 2.0
        elif self.mean_ccc is None and self.valence_ccc is not None:
            self.mean_ccc = self.valence_ccc

    @classmethod
    def fields(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.fields()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), allow_nan=True)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsRecord":
        return cls(**{k: d.get(k) for k in cls.fields() if k in d})


def write_jsonl(records: Iterable[MetricsRecord], path, append: bool = False) -> None:
    with open(path, "a" if append else "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def read_jsonl(path) -> list[MetricsRecord]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [MetricsRecord.from_dict(json.loads(line)) for line in lines if line.strip()]


def write_csv(records: Iterable[MetricsRecord], path, append: bool = False) -> None:
    path = Path(path)
    header = not (append and path.exists() and path.stat().st_size > 0)
    with open(path, "a" if append else "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(MetricsRecord.fields())
        for r in records:
            w.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in r.to_dict().values()])
