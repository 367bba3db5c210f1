"""Parameterised layers built on :mod:`jmtfusion.tensor`.

Sequences are laid out ``(batch, time, features)``; 2-D inputs are treated as
a single unbatched sequence. Weights follow the ``x @ W`` convention, so a
linear layer's weight is ``in_dim x out_dim``.
"""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .tensor import Tensor

SCALING_VARIANTS = ("sqrt_dk", "dk")


def _rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def uniform_init(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Base class with recursive parameter discovery.

    Parameters are attributes holding a :class:`~jmtfusion.tensor.Parameter`;
    sub-modules may sit directly in attributes or inside lists and dicts.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            yield from _walk(value, f"{prefix}{key}")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def trainable_parameters(self) -> list[Tensor]:
        return [p for p in self.parameters() if p.requires_grad]

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def freeze(self) -> "Module":
        for p in self.parameters():
            p.requires_grad = False
        return self

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise ConfigError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ShapeError(f"{name}: stored shape {arr.shape} != parameter shape {p.shape}")
        for name, p in own.items():
            p.data[...] = state[name]

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _walk(value, name):
    if isinstance(value, T.Parameter):
        yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(prefix=name + ".")
    elif isinstance(value, (list, tuple)):
        for i, v in enumerate(value):
            yield from _walk(v, f"{name}.{i}")
    elif isinstance(value, dict):
        for k, v in value.items():
            yield from _walk(v, f"{name}.{k}")


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng=None, bias: bool = True):
        rng = _rng(rng)
        self.in_dim, self.out_dim = in_dim, out_dim
        self.weight = T.parameter(uniform_init(rng, (in_dim, out_dim), in_dim))
        self.bias = T.parameter(np.zeros(out_dim)) if bias else None

    def forward(self, x) -> Tensor:
        return T.linear(x, self.weight, self.bias)


class Conv1d(Module):
    """Unpadded 1-D convolution on channels-last input ``(..., L, C_in)``."""

    def __init__(self, in_channels: int, filters: int, kernel_size: int, stride: int = 1, rng=None):
        rng = _rng(rng)
        self.in_channels, self.filters = in_channels, filters
        self.kernel_size, self.stride = kernel_size, stride
        fan_in = in_channels * kernel_size
        self.weight = T.parameter(uniform_init(rng, (filters, in_channels, kernel_size), fan_in))
        self.bias = T.parameter(np.zeros(filters))

    def out_length(self, length: int) -> int:
        return (length - self.kernel_size) // self.stride + 1

    def forward(self, x) -> Tensor:
        return T.conv1d(x, self.weight, self.bias, stride=self.stride)


class MaxPool1d(Module):
    def __init__(self, kernel_size: int, stride: int | None = None):
        self.kernel_size = kernel_size
        self.stride = kernel_size if stride is None else stride

    def out_length(self, length: int) -> int:
        return (length - self.kernel_size) // self.stride + 1

    def forward(self, x) -> Tensor:
        return T.maxpool1d(x, self.kernel_size, self.stride)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.eps = eps
        self.gain = T.parameter(np.ones(dim))
        self.shift = T.parameter(np.zeros(dim))

    def forward(self, x) -> Tensor:
        return T.layer_norm(x, self.gain, self.shift, self.eps)


class FeedForward(Module):
    """Linear -> ReLU -> (dropout) -> Linear."""

    def __init__(self, dim: int, hidden: int, rng=None, dropout: float = 0.0):
        rng = _rng(rng)
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)
        self.dropout = dropout

    def forward(self, x, training: bool = False, rng=None) -> Tensor:
        if training:
            rng = _rng(rng)
        h = T.relu(self.fc1(x))
        h = T.dropout(h, self.dropout, training, rng)
        return self.fc2(h)


class MultiHeadAttention(Module):
    """Scaled dot-product attention with ``num_heads`` heads.

    Per head ``softmax(Q K^T / s) V`` with ``s = sqrt(d_k)`` (``"sqrt_dk"``)
    or ``s = d_k`` (``"dk"``). The query projection reads ``query_src`` and
    the key/value projections read ``kv_src``, so passing two different
    sequences gives cross-attention.
    """

    def __init__(self, model_dim: int, num_heads: int, rng=None, scaling: str = "sqrt_dk"):
        if model_dim % num_heads:
            raise ConfigError(f"model_dim {model_dim} is not divisible by num_heads {num_heads}")
        if scaling not in SCALING_VARIANTS:
            raise ConfigError(f"unknown scaling variant {scaling!r}")
        rng = _rng(rng)
        self.model_dim, self.num_heads = model_dim, num_heads
        self.head_dim = model_dim // num_heads
        self.scaling = scaling
        self.w_q = Linear(model_dim, model_dim, rng, bias=False)
        self.w_k = Linear(model_dim, model_dim, rng, bias=False)
        self.w_v = Linear(model_dim, model_dim, rng, bias=False)
        self.w_o = Linear(model_dim, model_dim, rng)

    @property
    def scale(self) -> float:
        return math.sqrt(self.head_dim) if self.scaling == "sqrt_dk" else float(self.head_dim)

    def _heads(self, x: Tensor) -> Tensor:
        b, t, _ = x.shape
        return T.transpose(T.reshape(x, (b, t, self.num_heads, self.head_dim)), (0, 2, 1, 3))

    def forward(self, query_src, kv_src=None, return_weights: bool = False):
        query_src = T._as_tensor(query_src)
        kv_src = query_src if kv_src is None else T._as_tensor(kv_src)
        if query_src.shape[-1] != self.model_dim or kv_src.shape[-1] != self.model_dim:
            raise ShapeError(
                f"attention expects feature dim {self.model_dim}, got {query_src.shape} and {kv_src.shape}"
            )
        unbatched = query_src.ndim == 2
        if unbatched:
            query_src = T.reshape(query_src, (1,) + query_src.shape)
            kv_src = T.reshape(kv_src, (1,) + kv_src.shape)
        if query_src.shape[0] != kv_src.shape[0]:
            raise ShapeError(f"attention batch sizes differ: {query_src.shape} vs {kv_src.shape}")
        b, tq, d = query_src.shape
        q = self._heads(self.w_q(query_src))
        k = self._heads(self.w_k(kv_src))
        v = self._heads(self.w_v(kv_src))
        scores = T.matmul(q, T.transpose(k, (0, 1, 3, 2))) * (1.0 / self.scale)
        weights = T.softmax(scores, axis=-1)  # (B, H, Tq, Tk)
        ctx = T.matmul(weights, v)
        ctx = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (b, tq, d))
        out = self.w_o(ctx)
        if unbatched:
            out = T.reshape(out, (tq, d))
        if return_weights:
            w = weights.data[0] if unbatched else weights.data
            return out, w.copy()
        return out


class EncoderBlock(Module):
    """Post-norm transformer block.

    ``z = LN1(x + Attn(x, context))``, ``y = LN2(z + FFN(z))``. With
    ``context=None`` the attention is self-attention; otherwise ``x`` supplies
    queries and ``context`` keys and values.
    """

    def __init__(self, model_dim: int, num_heads: int, ff_dim: int | None = None, rng=None,
                 scaling: str = "sqrt_dk", dropout: float = 0.0):
        rng = _rng(rng)
        self.attention = MultiHeadAttention(model_dim, num_heads, rng, scaling)
        self.feed_forward = FeedForward(model_dim, ff_dim or 2 * model_dim, rng, dropout)
        self.norm1 = LayerNorm(model_dim)
        self.norm2 = LayerNorm(model_dim)
        self.dropout = dropout

    def forward(self, x, context=None, training: bool = False, rng=None, return_weights: bool = False):
        if training:
            rng = _rng(rng)
        attn = self.attention(x, context, return_weights=return_weights)
        if return_weights:
            attn, weights = attn
        z = self.norm1(T.add(x, T.dropout(attn, self.dropout, training, rng)))
        y = self.norm2(T.add(z, T.dropout(self.feed_forward(z, training, rng), self.dropout, training, rng)))
        if return_weights:
            return y, weights
        return y


def attention(query_src, key_value_src, mha: MultiHeadAttention) -> Tensor:
    return mha(query_src, key_value_src)


def encoder_forward(x, block: EncoderBlock, training: bool = False, rng=None) -> Tensor:
    return block(x, training=training, rng=rng)


def sinusoidal_positions(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    rates = np.exp(-math.log(10000.0) * (np.arange(0, dim, 2) / dim))
    table = np.zeros((length, dim))
    table[:, 0::2] = np.sin(pos * rates)
    table[:, 1::2] = np.cos(pos * rates[: dim // 2])
    return table
