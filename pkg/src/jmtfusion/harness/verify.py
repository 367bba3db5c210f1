"""Fast self-check of gradients and core invariants, run by ``jmt verify``."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .. import nn
from .. import tensor as T
from ..backbones import Phys1DCNN
from ..fusion import FusionConfig, JointFusionModel
from ..losses import ccc, ccc_loss

GRAD_TOL = 1e-3
PHYS_TRACE = [("input", (2816, 1)), ("conv1", (1406, 32)), ("relu", (1406, 32)), ("pool1", (703, 32)),
              ("conv2", (699, 64)), ("relu", (699, 64)), ("pool2", (349, 64)), ("fc1", (512,)),
              ("relu", (512,)), ("fc2", (2,))]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _grad(name, f, x, coords=None) -> CheckResult:
    rep = T.gradient_check_report(f, x, coords=coords, skip_kinks=True)
    ok = rep.max_relative_error < GRAD_TOL and rep.checked > 0
    return CheckResult(name, ok, f"max rel err {rep.max_relative_error:.2e} over {rep.checked} coords "
                                 f"({rep.skipped} at kinks skipped)")


def _sample(rng, size, n):
    return None if size <= n else np.sort(rng.choice(size, n, replace=False))


def gradient_checks(seed: int = 0, per_tensor: int = 24) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    x = T.tensor(rng.standard_normal((3, 5, 8)))
    lin = nn.Linear(8, 6, rng)
    out.append(_grad("linear", lambda v: T.sum(lin(v) * lin(v)), x))
    ln = nn.LayerNorm(8)
    w = T.Tensor(rng.standard_normal((3, 5, 8)))
    out.append(_grad("layer_norm", lambda v: T.sum(ln(v) * w), x))
    out.append(_grad("softmax", lambda v: T.sum(T.softmax(v, axis=-1) * w), x))
    conv = nn.Conv1d(8, 4, 3, stride=2, rng=rng)
    out.append(_grad("conv1d", lambda v: T.sum(conv(v) * conv(v)), x))
    out.append(_grad("maxpool1d", lambda v: T.sum(T.maxpool1d(v, 2) * T.maxpool1d(v, 2)), x))
    mha = nn.MultiHeadAttention(8, 2, rng)
    ctx = T.Tensor(rng.standard_normal((3, 4, 8)))
    out.append(_grad("multi_head_attention", lambda v: T.sum(mha(v, ctx) * mha(v, ctx)), x))
    blk = nn.EncoderBlock(8, 2, rng=rng)
    out.append(_grad("encoder_block", lambda v: T.sum(blk(v, ctx) * w), x))

    cfg = FusionConfig(model_dim=16, num_heads=2, head_output_dim=2)
    model = JointFusionModel(cfg, rng)
    fa = T.tensor(rng.standard_normal((3, 4, 16)))
    fb = T.Tensor(rng.standard_normal((3, 4, 16)))
    y = rng.uniform(-1, 1, (3, 2))

    def loss(_):
        return ccc_loss(model(fa, fb), y)

    out.append(_grad("jmt+ccc wrt features", loss, fa))
    worst_err, worst_name, failed = 0.0, "", []
    params = list(model.named_parameters())
    for name, p in params:
        rep = T.gradient_check_report(loss, p, coords=_sample(rng, p.size, per_tensor), skip_kinks=True)
        if rep.max_relative_error >= GRAD_TOL:
            failed.append(name)
        if rep.max_relative_error >= worst_err:
            worst_err, worst_name = rep.max_relative_error, name
    detail = f"{len(params)} tensors, worst {worst_err:.2e} at {worst_name}"
    if failed:
        detail += f"; failing: {', '.join(failed)}"
    worst = CheckResult("jmt+ccc wrt parameters", not failed, detail)
    out.append(worst)
    return out


def invariant_checks(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    mha = nn.MultiHeadAttention(16, 4, rng)
    q = rng.standard_normal((2, 5, 16))
    kv = rng.standard_normal((2, 7, 16))
    with T.no_grad():
        y, w = mha(q, kv, return_weights=True)
        perm = rng.permutation(7)
        y2 = mha(q, kv[:, perm]).data
    rows = float(np.abs(w.sum(-1) - 1).max())
    out.append(CheckResult("attention rows sum to 1", rows < 1e-9, f"max deviation {rows:.1e}"))
    d = float(np.abs(y.data - y2).max())
    out.append(CheckResult("key permutation invariance", d < 1e-10, f"max deviation {d:.1e}"))

    x = rng.standard_normal(50)
    x -= x.mean()
    vals = (ccc(x, x), ccc(x, -x))
    out.append(CheckResult("ccc extremes", abs(vals[0] - 1) < 1e-12 and abs(vals[1] + 1) < 1e-12,
                           f"ccc(x,x)={vals[0]:.12f}, ccc(x,-x)={vals[1]:.12f}"))
    trace = []
    with T.no_grad():
        Phys1DCNN(rng).forward(np.zeros((2816, 1)), mode="logits", trace=trace)
    out.append(CheckResult("1d cnn shape trace", trace == PHYS_TRACE, " -> ".join(str(s) for _, s in trace)))
    return out


def run_all(seed: int = 0) -> tuple[list[CheckResult], float]:
    t0 = time.perf_counter()
    results = gradient_checks(seed) + invariant_checks(seed)
    return results, time.perf_counter() - t0
