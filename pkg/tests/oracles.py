"""
Independent reference implementations used as test oracles.

Nothing here imports the autodiff engine: every function works on plain
numpy arrays and reads weights out of a ``state_dict``.
"""

import math

import numpy as np


def ccc_direct(x, y):
    """Concordance correlation written out with explicit sums."""
    x = [float(v) for v in x]
    y = [float(v) for v in y]
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    vx = sum((a - mx) ** 2 for a in x) / n
    vy = sum((b - my) ** 2 for b in y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y)) / n
    return 2.0 * cov / (vx + vy + (mx - my) ** 2)


def linear(state, prefix, x):
    out = x @ state[prefix + ".weight"]
    if prefix + ".bias" in state:
        out = out + state[prefix + ".bias"]
    return out


def layer_norm(state, prefix, x, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * state[prefix + ".gain"] + state[prefix + ".shift"]


def attention(state, prefix, xq, xkv, heads, scaling="sqrt_dk"):
    """Loop over batch and heads; softmax with an explicit exp/normalise."""
    b, tq, d = xq.shape
    dk = d // heads
    q = xq @ state[prefix + ".w_q.weight"]
    k = xkv @ state[prefix + ".w_k.weight"]
    v = xkv @ state[prefix + ".w_v.weight"]
    s = math.sqrt(dk) if scaling == "sqrt_dk" else float(dk)
    ctx = np.zeros_like(q)
    for i in range(b):
        for h in range(heads):
            sl = slice(h * dk, (h + 1) * dk)
            scores = q[i][:, sl] @ k[i][:, sl].T / s
            e = np.exp(scores - scores.max(axis=1, keepdims=True))
            w = e / e.sum(axis=1, keepdims=True)
            ctx[i][:, sl] = w @ v[i][:, sl]
    return linear(state, prefix + ".w_o", ctx)


def encoder_block(state, prefix, x, ctx, heads, scaling="sqrt_dk"):
    kv = x if ctx is None else ctx
    z = layer_norm(state, prefix + ".norm1", x + attention(state, prefix + ".attention", x, kv, heads, scaling))
    h = np.maximum(linear(state, prefix + ".feed_forward.fc1", z), 0.0)
    return layer_norm(state, prefix + ".norm2", z + linear(state, prefix + ".feed_forward.fc2", h))


JMT_PAIRS = [("A", "B"), ("A", "J"), ("B", "A"), ("B", "J"), ("J", "A"), ("J", "B")]


def jmt_reference(state, fa, fb, heads, depth=1, pooling="mean", aggregate=True, scaling="sqrt_dk"):
    """Three branches, six cross blocks, stacked self-attention, FC head; batched ``(B, T, D)`` input."""
    streams = {"J": linear(state, "joint_fc", np.concatenate([fb, fa], axis=-1))}
    if "input_proj.A.weight" in state:
        streams["A"] = linear(state, "input_proj.A", fa)
        streams["B"] = linear(state, "input_proj.B", fb)
    else:
        streams["A"], streams["B"] = fa, fb
    enc = {}
    for br, x in streams.items():
        for i in range(depth):
            x = encoder_block(state, f"encoders.{br}.{i}", x, None, heads, scaling)
        enc[br] = x
    outs = []
    for q, s in JMT_PAIRS:
        y = encoder_block(state, f"cross.{q}<-{s}", enc[q], enc[s], heads, scaling)
        outs.append(y.mean(axis=1) if pooling == "mean" else y)
    seq = np.stack(outs, axis=-2)
    lead, n, d = seq.shape[:-2], seq.shape[-2], seq.shape[-1]
    seq = seq.reshape(-1, n, d)
    if aggregate:
        seq = encoder_block(state, "aggregator", seq, None, heads, scaling)
    return linear(state, "head", seq.reshape(lead + (n * d,)))


def lstsq_decode_mse(features, targets):
    """Mean squared error of the best affine least-squares map ``features -> targets``."""
    x = np.column_stack([features, np.ones(len(features))])
    coef, *_ = np.linalg.lstsq(x, targets, rcond=None)
    return float(((x @ coef - targets) ** 2).mean())


def lag1_autocorrelation(series):
    s = series - series.mean()
    return float((s[1:] * s[:-1]).sum() / (s * s).sum())
