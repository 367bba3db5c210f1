"""
Dense float64 tensors with reverse-mode automatic differentiation.

Storage is a contiguous row-major NumPy array; every differentiable operation
records a :class:`Node` holding its parents and a closure that maps the output
gradient to one gradient per parent. :func:`backward` walks the graph in
reverse topological order, so each node is visited exactly once and gradients
reaching a tensor along several paths are summed.

Elementwise binary ops accept operands of identical shape, or one scalar
(size-1) operand. There is no other broadcasting; ops that need a bias or an
affine per-feature term (``linear``, ``layer_norm``, ``conv1d``) are fused.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, NumericError, ShapeError, UsageError

__all__ = [
    "Tensor",
    "Node",
    "Parameter",
    "tensor",
    "parameter",
    "no_grad",
    "grad_enabled",
    "backward",
    "zero_grads",
    "check_gradients",
    "gradient_check_report",
    "GradientCheck",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "relu",
    "softmax",
    "log_softmax",
    "concat",
    "split",
    "stack",
    "reshape",
    "transpose",
    "sum",
    "mean",
    "variance",
    "dropout",
    "linear",
    "layer_norm",
    "conv1d",
    "maxpool1d",
]

_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Disable graph construction in the current thread."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Node:
    __slots__ = ("op", "parents", "backward")

    def __init__(self, op: str, parents: tuple, backward: Callable):
        self.op = op
        self.parents = parents
        self.backward = backward

    def __repr__(self):
        return f"Node({self.op}, {len(self.parents)} parents)"


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "node", "name", "__weakref__")

    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64, copy=True, order="C")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.node: Node | None = None
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        arr = np.asarray(arr, dtype=np.float64)
        if not arr.flags.c_contiguous:
            arr = arr.copy(order="C")
        t.data = arr
        t.grad = None
        t.requires_grad = False
        t.node = None
        t.name = None
        return t

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self):
        tag = f", op={self.node.op}" if self.node is not None else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    def __len__(self):
        return self.shape[0]

    # operator sugar
    def __add__(self, o):
        return add(self, o)

    def __radd__(self, o):
        return add(o, self)

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    def __rmul__(self, o):
        return mul(o, self)

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, o):
        return matmul(self, o)

    def __getitem__(self, idx):
        return index(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def var(self, axis=None, keepdims=False):
        return variance(self, axis, keepdims)

    def relu(self):
        return relu(self)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


class Parameter(Tensor):
    """A trainable leaf. Stays registered with its module even when frozen."""

    __slots__ = ()


def parameter(data, name: str | None = None) -> Parameter:
    return Parameter(data, requires_grad=True, name=name)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor._wrap(np.asarray(x, dtype=np.float64))


def _result(data: np.ndarray, parents: tuple, op: str, backward_fn: Callable) -> Tensor:
    out = Tensor._wrap(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.node = Node(op, parents, backward_fn)
    return out


# ----------------------------------------------------------------------------
# graph traversal


def _topo_order(root: Tensor) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t.node is not None:
            for p in t.node.parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf that requires grad."""
    if not isinstance(loss, Tensor) or loss.size != 1:
        shape = loss.shape if isinstance(loss, Tensor) else type(loss).__name__
        raise UsageError(f"backward() needs a scalar loss, got shape {shape}")
    if not loss.requires_grad:
        raise UsageError("loss is not connected to any tensor that requires grad")
    grads = {id(loss): np.ones_like(loss.data)}
    for t in reversed(_topo_order(loss)):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        if t.node is None:
            if t.grad is None:
                t.grad = g.copy()
            else:
                t.grad += g
            continue
        for p, pg in zip(t.node.parents, t.node.backward(g)):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


# ----------------------------------------------------------------------------
# elementwise


def _reduce_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    return np.full(shape, g.sum())


def _check_binary(a: Tensor, b: Tensor, op: str) -> tuple:
    if a.shape == b.shape or a.size == 1 or b.size == 1:
        return
    raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are incompatible")


def _scalar_view(t: Tensor, other: Tensor) -> np.ndarray:
    # size-1 operand against a larger one is broadcast as a scalar
    if t.size == 1 and other.size != 1:
        return t.data.reshape(())
    return t.data


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_binary(a, b, "add")
    out = _scalar_view(a, b) + _scalar_view(b, a)

    def bw(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return _result(out, (a, b), "add", bw)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_binary(a, b, "sub")
    out = _scalar_view(a, b) - _scalar_view(b, a)

    def bw(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return _result(out, (a, b), "sub", bw)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_binary(a, b, "mul")
    av, bv = _scalar_view(a, b), _scalar_view(b, a)

    def bw(g):
        return _reduce_to(g * bv, a.shape), _reduce_to(g * av, b.shape)

    return _result(av * bv, (a, b), "mul", bw)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_binary(a, b, "div")
    av, bv = _scalar_view(a, b), _scalar_view(b, a)
    out = av / bv

    def bw(g):
        return _reduce_to(g / bv, a.shape), _reduce_to(-g * out / bv, b.shape)

    return _result(out, (a, b), "div", bw)


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _result(-a.data, (a,), "neg", lambda g: (-g,))


def _log_branch(decisions: np.ndarray) -> None:
    log = getattr(_state, "branch_log", None)
    if log is not None:
        log.append(hash(decisions.tobytes()))


def relu(x) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0
    _log_branch(mask)
    return _result(np.where(mask, x.data, 0.0), (x,), "relu", lambda g: (g * mask,))


# ----------------------------------------------------------------------------
# linear algebra


def _swap(m: np.ndarray) -> np.ndarray:
    return np.swapaxes(m, -1, -2)


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes.

    ``b`` is either 2-D (shared across the leading axes of ``a``) or has the
    same leading axes as ``a``.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs operands of rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2] or (b.ndim > 2 and a.shape[:-2] != b.shape[:-2]):
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    out = a.data @ b.data

    def bw(g):
        ga = g @ _swap(b.data)
        if b.ndim == 2:
            lhs = a.data.reshape(-1, a.shape[-1])
            gb = lhs.T @ g.reshape(-1, g.shape[-1])
        else:
            gb = _swap(a.data) @ g
        return ga, gb

    return _result(out, (a, b), "matmul", bw)


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight + bias`` over the last axis of ``x``."""
    x, weight = _as_tensor(x), _as_tensor(weight)
    if weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear: input {x.shape} does not match weight {weight.shape}")
    out = x.data @ weight.data
    parents = (x, weight)
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.shape != (weight.shape[1],):
            raise ShapeError(f"linear: bias {bias.shape} does not match weight {weight.shape}")
        out = out + bias.data
        parents = parents + (bias,)

    def bw(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = g @ weight.data.T
        gw = x.data.reshape(-1, x.shape[-1]).T @ g2
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return _result(out, parents, "linear", bw)


# ----------------------------------------------------------------------------
# normalisation and probability


def softmax(x, axis: int = -1) -> Tensor:
    x = _as_tensor(x)
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"softmax: axis {axis} out of range for shape {x.shape}")
    if np.isnan(x.data).any():
        raise NumericError("softmax received NaN input")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _result(y, (x,), "softmax", bw)


def log_softmax(x, axis: int = -1) -> Tensor:
    x = _as_tensor(x)
    if np.isnan(x.data).any():
        raise NumericError("log_softmax received NaN input")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - logz
    p = np.exp(y)

    def bw(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return _result(y, (x,), "log_softmax", bw)


def layer_norm(x, gain, shift, eps: float = 1e-5) -> Tensor:
    """Normalise the last axis to zero mean / unit variance, then apply ``gain`` and ``shift``."""
    x, gain, shift = _as_tensor(x), _as_tensor(gain), _as_tensor(shift)
    d = x.shape[-1]
    if gain.shape != (d,) or shift.shape != (d,):
        raise ShapeError(f"layer_norm: gain {gain.shape}/shift {shift.shape} vs input {x.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gain.data + shift.data

    def bw(g):
        gh = g * gain.data
        gx = inv * (gh - gh.mean(axis=-1, keepdims=True) - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        lead = (-1, d)
        return gx, (g * xhat).reshape(lead).sum(axis=0), g.reshape(lead).sum(axis=0)

    return _result(out, (x, gain, shift), "layer_norm", bw)


def dropout(x, rate: float, training: bool, rng=None) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1/(1-rate)`` at train time.

    ``rng`` is a ``numpy.random.Generator`` or an integer seed.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    x = _as_tensor(x)
    if not training or rate == 0.0:
        return x
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _result(x.data * mask, (x,), "dropout", lambda g: (g * mask,))


# ----------------------------------------------------------------------------
# shape manipulation


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {x.shape} to {tuple(shape)}") from exc
    return _result(out, (x,), "reshape", lambda g: (g.reshape(x.shape),))


def transpose(x, axes=None) -> Tensor:
    x = _as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = x.data.transpose(axes).copy(order="C")
    return _result(out, (x,), "transpose", lambda g: (g.transpose(inverse),))


def index(x, idx) -> Tensor:
    x = _as_tensor(x)
    out = np.array(x.data[idx], dtype=np.float64)

    def bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return (full,)

    return _result(out, (x,), "index", bw)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat needs at least one tensor")
    ndim = ts[0].ndim
    ax = axis % ndim
    for t in ts[1:]:
        if t.ndim != ndim or t.shape[:ax] + t.shape[ax + 1:] != ts[0].shape[:ax] + ts[0].shape[ax + 1:]:
            raise ShapeError(f"concat along axis {axis}: {ts[0].shape} vs {t.shape}")
    out = np.concatenate([t.data for t in ts], axis=ax)
    bounds = np.cumsum([t.shape[ax] for t in ts])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _result(out, tuple(ts), "concat", bw)


def split(x, sizes: Sequence[int], axis: int = -1) -> list:
    """Inverse of :func:`concat`: cut ``x`` into consecutive pieces of the given sizes."""
    x = _as_tensor(x)
    ax = axis % x.ndim
    if int(np.sum(sizes)) != x.shape[ax]:
        raise ShapeError(f"split sizes {list(sizes)} do not cover axis {axis} of {x.shape}")
    pieces, start = [], 0
    for n in sizes:
        sl = [slice(None)] * x.ndim
        sl[ax] = slice(start, start + n)
        pieces.append(index(x, tuple(sl)))
        start += n
    return pieces


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    ax = axis % (ts[0].ndim + 1)
    expanded = [reshape(t, t.shape[:ax] + (1,) + t.shape[ax:]) for t in ts]
    return concat(expanded, axis=ax)


# ----------------------------------------------------------------------------
# reductions


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def _expand(g: np.ndarray, shape: tuple, axes: tuple, keepdims: bool) -> np.ndarray:
    if not keepdims:
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape)


def sum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)
    return _result(np.asarray(out), (x,), "sum", lambda g: (_expand(g, x.shape, axes, keepdims).copy(),))


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    n = int(np.prod([x.shape[a] for a in axes]))
    out = x.data.mean(axis=axes, keepdims=keepdims)
    return _result(np.asarray(out), (x,), "mean", lambda g: (_expand(g, x.shape, axes, keepdims) / n,))


def variance(x, axis=None, keepdims: bool = False) -> Tensor:
    """Population (1/N) variance."""
    x = _as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    n = int(np.prod([x.shape[a] for a in axes]))
    xc = x.data - x.data.mean(axis=axes, keepdims=True)
    out = (xc * xc).mean(axis=axes, keepdims=keepdims)
    return _result(np.asarray(out), (x,), "variance", lambda g: (_expand(g, x.shape, axes, keepdims) * (2.0 / n) * xc,))


# ----------------------------------------------------------------------------
# 1-D convolution and pooling, channels-last layout (..., length, channels)


def _conv_out_len(length: int, kernel: int, stride: int, what: str) -> int:
    if length < kernel:
        raise ShapeError(f"{what}: input length {length} is shorter than kernel {kernel}")
    return (length - kernel) // stride + 1


def conv1d(x, weight, bias=None, stride: int = 1) -> Tensor:
    """Valid (unpadded) convolution.

    ``x`` has shape ``(..., L, C_in)``, ``weight`` ``(F, C_in, K)``, result ``(..., L_out, F)``
    with ``L_out = (L - K) // stride + 1``.
    """
    x, weight = _as_tensor(x), _as_tensor(weight)
    if weight.ndim != 3 or x.ndim < 2 or x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"conv1d: input {x.shape} does not match weight {weight.shape}")
    f, c, k = weight.shape
    lead, length = x.shape[:-2], x.shape[-2]
    lout = _conv_out_len(length, k, stride, "conv1d")
    xb = x.data.reshape((-1, length, c))
    cols = sliding_window_view(xb, k, axis=1)[:, ::stride]  # (N, L_out, C, K)
    cols = cols.reshape(-1, c * k)
    wmat = weight.data.reshape(f, c * k)
    out = cols @ wmat.T
    parents = (x, weight)
    if bias is not None:
        bias = _as_tensor(bias)
        out = out + bias.data
        parents = parents + (bias,)
    out = out.reshape(lead + (lout, f))

    def bw(g):
        g2 = g.reshape(-1, f)
        gw = (g2.T @ cols).reshape(f, c, k)
        gcols = (g2 @ wmat).reshape(-1, lout, c, k)
        gx = np.zeros_like(xb)
        span = stride * (lout - 1) + 1
        for j in range(k):
            gx[:, j:j + span:stride, :] += gcols[..., j]
        grads = (gx.reshape(x.shape), gw)
        if bias is not None:
            grads = grads + (g2.sum(axis=0),)
        return grads

    return _result(out, parents, "conv1d", bw)


def maxpool1d(x, kernel: int, stride: int | None = None) -> Tensor:
    """Max over windows along the length axis of ``(..., L, C)``; ties go to the first index."""
    x = _as_tensor(x)
    stride = kernel if stride is None else stride
    lead, length, c = x.shape[:-2], x.shape[-2], x.shape[-1]
    lout = _conv_out_len(length, kernel, stride, "maxpool1d")
    xb = x.data.reshape((-1, length, c))
    win = sliding_window_view(xb, kernel, axis=1)[:, ::stride]  # (N, L_out, C, K)
    arg = win.argmax(axis=-1)
    _log_branch(arg)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    n_idx, l_idx, c_idx = np.indices(arg.shape)
    src = l_idx * stride + arg

    def bw(g):
        gx = np.zeros_like(xb)
        np.add.at(gx, (n_idx, src, c_idx), g.reshape(arg.shape))
        return (gx.reshape(x.shape),)

    return _result(out.reshape(lead + (lout, c)), (x,), "maxpool1d", bw)


# ----------------------------------------------------------------------------
# verification


@contextmanager
def _branch_recorder():
    prev = getattr(_state, "branch_log", None)
    _state.branch_log = log = []
    try:
        yield log
    finally:
        _state.branch_log = prev


@dataclass
class GradientCheck:
    max_relative_error: float
    checked: int
    skipped: int  # coordinates whose probes straddled a ReLU / max-pool kink
    worst_index: int | None = None


def gradient_check_report(f: Callable[[Tensor], Tensor], x: Tensor, epsilon: float = 1e-4,
                          coords=None, skip_kinks: bool = False) -> GradientCheck:
    """Compare autodiff against central differences coordinate by coordinate.

    Relative error is ``|a - n| / max(|a|, |n|, 1e-8)``. With ``skip_kinks``
    a coordinate is left out when the ReLU masks or max-pool choices differ
    between the ``+epsilon`` and ``-epsilon`` probes: the function is not
    differentiable on that interval and the central difference is not a valid
    reference there.
    """
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    was = x.requires_grad
    x.requires_grad = True
    x.grad = None
    try:
        backward(f(x))
        analytic = np.zeros(x.size) if x.grad is None else x.grad.reshape(-1).copy()
        x.grad = None
        flat = x.data.reshape(-1)
        idx = range(x.size) if coords is None else coords
        worst, worst_i, checked, skipped = 0.0, None, 0, 0
        with no_grad():
            for i in idx:
                orig = flat[i]
                with _branch_recorder() as plus:
                    flat[i] = orig + epsilon
                    fp = f(x).item()
                with _branch_recorder() as minus:
                    flat[i] = orig - epsilon
                    fm = f(x).item()
                flat[i] = orig
                if skip_kinks and plus != minus:
                    skipped += 1
                    continue
                num = (fp - fm) / (2.0 * epsilon)
                a = analytic[i]
                err = abs(a - num) / max(abs(a), abs(num), 1e-8)
                checked += 1
                if err > worst or worst_i is None:
                    worst, worst_i = max(worst, err), int(i)
        return GradientCheck(worst, checked, skipped, worst_i)
    finally:
        x.requires_grad = was


def check_gradients(f: Callable[[Tensor], Tensor], x: Tensor, epsilon: float = 1e-4, coords=None) -> float:
    """Largest relative disagreement between autodiff and central differences.

    ``f`` maps ``x`` to a scalar tensor and must be deterministic. Each
    coordinate ``i`` is probed with ``(f(x + eps e_i) - f(x - eps e_i)) / 2 eps``
    and compared with ``|a - n| / max(|a|, |n|, 1e-8)``. ``coords`` restricts
    the comparison to a subset of flat indices.
    """
    return gradient_check_report(f, x, epsilon, coords).max_relative_error
