"""A small reverse-mode autodiff over float64 numpy arrays.

Only what the agent networks need: same-size 2-D convolution, ReLU,
(masked) softmax, sums/collapses, elementwise arithmetic on equal shapes,
categorical KL and Adam. There is no broadcasting between tensors; use the
explicit adapters (:func:`broadcast_rows`, :func:`broadcast_cols`, :func:`stack`).
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.array(data, dtype=np.float64)
        _check_finite(arr, name or "tensor")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[Callable] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on a tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, -1.0 * other if isinstance(other, Tensor) else -other)

    def __rsub__(self, other):
        return add(-1.0 * self, other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor / tensor is not supported; divide by a float")
        return mul(self, 1.0 / other)

    def __getitem__(self, idx):
        return index(self, idx)


def _check_finite(arr: np.ndarray, what: str):
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values in {what}")


def _make(data: np.ndarray, parents: Sequence[Tensor], backward: Callable, what: str) -> Tensor:
    _check_finite(data, what)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.requires_grad = False
    out._parents = ()
    out._backward = None
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def detach(x: Tensor) -> Tensor:
    return Tensor(x.data)


# --------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        c = float(b)
        return _make(a.data + c, (a,), lambda g: (g,), "add")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch in add: {a.shape} vs {b.shape}")
    return _make(a.data + b.data, (a, b), lambda g: (g, g), "add")


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        c = float(b)
        return _make(a.data * c, (a,), lambda g: (g * c,), "mul")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch in mul: {a.shape} vs {b.shape}")
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def square(a: Tensor) -> Tensor:
    ad = a.data
    return _make(ad * ad, (a,), lambda g: (2.0 * g * ad,), "square")


def relu(a: Tensor) -> Tensor:
    pos = a.data > 0
    return _make(np.where(pos, a.data, 0.0), (a,), lambda g: (g * pos,), "relu")


def log(a: Tensor) -> Tensor:
    ad = a.data
    if np.any(ad <= 0):
        raise FloatingPointError("log of a non-positive value")
    return _make(np.log(ad), (a,), lambda g: (g / ad,), "log")


# --------------------------------------------------------------------------
# shape adapters and reductions


def sum(a: Tensor, axis=None) -> Tensor:  # noqa: A001
    shape = a.shape
    out = a.data.sum(axis=axis)

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(ax % len(shape) for ax in axes)
        return (np.broadcast_to(np.expand_dims(g, axes), shape).copy(),)

    return _make(np.asarray(out, dtype=np.float64), (a,), back, "sum")


def collapse(x: Tensor, axis: str) -> Tensor:
    """Sum a (K, m, n) map over channels and one of the grid axes.

    ``clusters`` leaves a length-n vector, ``nodes`` a length-m vector.
    """
    if x.data.ndim != 3:
        raise ValueError(f"collapse expects a 3-D tensor, got shape {x.shape}")
    if axis == "clusters":
        return sum(x, axis=(0, 1))
    if axis == "nodes":
        return sum(x, axis=(0, 2))
    raise ValueError(f"bad collapse axis {axis!r}")


def index(a: Tensor, idx) -> Tensor:
    shape = a.shape

    def back(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _make(np.array(a.data[idx], dtype=np.float64), (a,), back, "index")


def broadcast_rows(v: Tensor, m: int) -> Tensor:
    """(n,) -> (m, n), repeating the vector on every row."""
    if v.data.ndim != 1:
        raise ValueError("broadcast_rows expects a vector")
    return _make(np.tile(v.data, (m, 1)), (v,), lambda g: (g.sum(axis=0),), "broadcast_rows")


def broadcast_cols(v: Tensor, n: int) -> Tensor:
    """(m,) -> (m, n), repeating each entry along its row."""
    if v.data.ndim != 1:
        raise ValueError("broadcast_cols expects a vector")
    return _make(np.tile(v.data[:, None], (1, n)), (v,), lambda g: (g.sum(axis=1),), "broadcast_cols")


def stack(ts: Sequence[Tensor]) -> Tensor:
    """Stack equally shaped tensors along a new leading axis."""
    ts = [as_tensor(t) for t in ts]
    shape = ts[0].shape
    if any(t.shape != shape for t in ts):
        raise ValueError("stack needs equal shapes")
    return _make(np.stack([t.data for t in ts]), ts, lambda g: tuple(g[i] for i in range(len(ts))), "stack")


def concat(ts: Sequence[Tensor]) -> Tensor:
    """Concatenate along axis 0."""
    ts = [as_tensor(t) for t in ts]
    sizes = np.cumsum([t.shape[0] for t in ts])[:-1]
    return _make(np.concatenate([t.data for t in ts]), ts, lambda g: tuple(np.split(g, sizes)), "concat")


def mean(ts: Sequence[Tensor]) -> Tensor:
    """Mean of a list of scalar tensors."""
    return sum(stack(ts)) * (1.0 / len(ts))


# --------------------------------------------------------------------------
# convolution


def _cols(xp: np.ndarray, k: int, H: int, W: int) -> np.ndarray:
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))  # C,H,W,k,k
    C = xp.shape[0]
    return win.transpose(0, 3, 4, 1, 2).reshape(C * k * k, H * W)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Stride-1 convolution of a (C, H, W) input with zero padding k//2 on each side."""
    if x.data.ndim != 3:
        raise ValueError(f"conv2d expects (C, H, W), got {x.shape}")
    K, C, k, k2 = weight.shape
    if k != k2 or k % 2 == 0:
        raise ValueError("kernels must be square with odd size")
    if x.shape[0] != C:
        raise ValueError(f"conv2d channel mismatch: input {x.shape[0]}, kernels {C}")
    _, H, W = x.shape
    p = k // 2
    xp = np.pad(x.data, ((0, 0), (p, p), (p, p)))
    cols = _cols(xp, k, H, W)
    w2 = weight.data.reshape(K, C * k * k)
    out = (w2 @ cols + bias.data[:, None]).reshape(K, H, W)

    def back(g):
        g2 = g.reshape(K, H * W)
        dw = (g2 @ cols.T).reshape(weight.shape)
        db = g2.sum(axis=1)
        dcols = (w2.T @ g2).reshape(C, k, k, H, W)
        dxp = np.zeros_like(xp)
        for a in range(k):
            for b in range(k):
                dxp[:, a:a + H, b:b + W] += dcols[:, a, b]
        return dxp[:, p:p + H, p:p + W], dw, db

    return _make(out, (x, weight, bias), back, "conv2d")


class ConvLayer:
    """K filters of size C_in x k x k with a bias; output keeps the input's H x W."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int = 3,
                 rng: Optional[np.random.Generator] = None, init: str = "he"):
        self.in_channels, self.out_channels, self.kernel = in_channels, out_channels, kernel
        shape = (out_channels, in_channels, kernel, kernel)
        if init == "zero":
            w = np.zeros(shape)
        else:
            rng = rng if rng is not None else np.random.default_rng(0)
            w = rng.normal(0.0, np.sqrt(2.0 / (in_channels * kernel * kernel)), size=shape)
        self.weight = Tensor(w, requires_grad=True, name="weight")
        self.bias = Tensor(np.zeros(out_channels), requires_grad=True, name="bias")

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias)

    def parameters(self) -> List[Tensor]:
        return [self.weight, self.bias]


# --------------------------------------------------------------------------
# distributions


def _softmax_back(p: np.ndarray):
    def back(g):
        return (p * (g - np.dot(g, p)),)
    return back


def softmax(logits: Tensor) -> Tensor:
    z = logits.data
    if z.ndim != 1 or z.size == 0:
        raise ValueError("softmax expects a non-empty vector")
    e = np.exp(z - z.max())
    p = e / e.sum()
    return _make(p, (logits,), _softmax_back(p), "softmax")


def masked_softmax(logits: Tensor, mask) -> Tensor:
    """Softmax over the entries where ``mask`` is true; the rest are exactly 0."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != logits.shape:
        raise ValueError("mask shape differs from logits")
    if not mask.any():
        raise ValueError("mask has no true entry")
    z = np.where(mask, logits.data, -np.inf)
    e = np.where(mask, np.exp(z - z[mask].max()), 0.0)
    p = e / e.sum()
    return _make(p, (logits,), _softmax_back(p), "masked_softmax")


def kl_categorical(p, q) -> Tensor:
    """KL(p || q) = sum p log(p/q), with 0 log 0 = 0. Differentiable in ``p`` only."""
    p = as_tensor(p)
    qd = q.data if isinstance(q, Tensor) else np.asarray(q, dtype=np.float64)
    pd = p.data
    if pd.shape != qd.shape:
        raise ValueError("distributions differ in length")
    pos = pd > 0
    if np.any(pos & (qd <= 0)):
        raise ValueError("KL support violation: p > 0 where q = 0")
    logr = np.zeros_like(pd)
    logr[pos] = np.log(pd[pos]) - np.log(qd[pos])
    val = np.array(np.dot(pd[pos], logr[pos]))
    return _make(val, (p,), lambda g: (g * np.where(pos, logr + 1.0, 0.0),), "kl")


def categorical_sample(dist, rng: np.random.Generator) -> int:
    p = dist.data if isinstance(dist, Tensor) else np.asarray(dist, dtype=np.float64)
    if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
        raise ValueError("not a probability vector")
    cdf = np.cumsum(p)
    i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    if i >= len(p) or p[i] == 0:
        i = int(np.flatnonzero(p)[-1])
    return i


# --------------------------------------------------------------------------
# backward pass and optimiser


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    topo, seen = [], set()
    stack_ = [(loss, False)]
    while stack_:
        node, done = stack_.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for par in node._parents:
            if par.requires_grad and id(par) not in seen:
                stack_.append((par, False))
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for par, pg in zip(node._parents, node._backward(g)):
            if pg is None or not par.requires_grad:
                continue
            key = id(par)
            grads[key] = pg if key not in grads else grads[key] + pg


def zero_grad(params: Sequence[Tensor]) -> None:
    for p in params:
        p.grad = None


class AdamState:
    def __init__(self, params: Sequence[Tensor], beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0


def adam_step(params: Sequence[Tensor], grads: Sequence[Optional[np.ndarray]], lr: float,
              state: AdamState) -> AdamState:
    """In-place bias-corrected Adam update; ``None`` gradients count as zero."""
    if len(params) != len(state.m):
        raise ValueError("parameter list does not match the optimiser state")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1 - b1 ** state.t, 1 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.data.shape}")
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state
