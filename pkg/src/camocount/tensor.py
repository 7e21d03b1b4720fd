"""Dense float64 tensors with reverse-mode automatic differentiation.

Define-by-run: every forward op eagerly computes its numpy result and, when
any input participates in differentiation, records its parents plus a
backward closure. ``Tensor.backward()`` topologically sorts the recorded
graph from the scalar loss, visits each op exactly once, and accumulates
adjoints into the ``.grad`` buffer of every ``requires_grad`` leaf. Repeated
backward calls keep accumulating; call ``zero_grad`` between steps.

The op set is exactly what the counting model needs: matmul, same-padded 2-D
convolution (optional stride), elementwise arithmetic, ReLU/sigmoid/log/abs/
clip, row softmax, row layer normalization, reshape, row gather, column
slice/concat, transpose, full-tensor sum/mean, and the scaled dot-product
attention composition. No broadcasting beyond trailing-axis bias vectors and
scalars.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from . import kernels


class ShapeError(ValueError):
    """Operands have incompatible shapes for the requested op."""


class GraphError(RuntimeError):
    """Autodiff graph misuse (e.g. backward from a non-scalar)."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- basic protocol ----------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    # -- graph bookkeeping --------------------------------------------------

    def _needs_graph(self) -> bool:
        return self.requires_grad or bool(self._parents)

    def backward(self) -> None:
        """Populate ``.grad`` on every reachable requires_grad tensor."""
        if self.data.size != 1:
            raise GraphError(
                f"backward requires a scalar loss, got shape {self.data.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        adjoint: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = adjoint.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None:
                    continue
                key = id(parent)
                if key in adjoint:
                    adjoint[key] = adjoint[key] + pg
                else:
                    adjoint[key] = pg

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(as_tensor(other), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise GraphError("tensor/tensor division is not a supported op")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)

    @property
    def T(self):
        return transpose(self)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if any(p._needs_graph() for p in parents):
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g down to ``shape`` (inverse of trailing-axis/scalar broadcast)."""
    if g.shape == shape:
        return g
    if shape == ():
        return np.asarray(g.sum())
    extra = g.ndim - len(shape)
    return g.sum(axis=tuple(range(extra)))


def _check_broadcast(a: Tensor, b: Tensor, opname: str) -> None:
    if a.shape == b.shape or b.shape == () or a.shape == ():
        return
    if b.shape == a.shape[-1:] or a.shape == b.shape[-1:]:
        return
    raise ShapeError(f"{opname}: incompatible shapes {a.shape} and {b.shape}")


# ---------------------------------------------------------------------------
# elementwise / arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    data = a.data + b.data
    need_a, need_b = a._needs_graph(), b._needs_graph()

    def backward(g):
        return (_reduce_to(g, a.shape) if need_a else None,
                _reduce_to(g, b.shape) if need_b else None)

    return _result(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    data = a.data * b.data
    need_a, need_b = a._needs_graph(), b._needs_graph()

    def backward(g):
        ga = _reduce_to(g * b.data, a.shape) if need_a else None
        gb = _reduce_to(g * a.data, b.shape) if need_b else None
        return ga, gb

    return _result(data, (a, b), backward)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return _result(np.where(mask, x.data, 0.0), (x,),
                   lambda g: (g * mask,))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    d = x.data
    out = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                   np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    return _result(out, (x,), lambda g: (g * out * (1.0 - out),))


def log(x) -> Tensor:
    x = as_tensor(x)
    return _result(np.log(x.data), (x,), lambda g: (g / x.data,))


def tabs(x) -> Tensor:
    x = as_tensor(x)
    return _result(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def clip(x, lo: float, hi: float) -> Tensor:
    x = as_tensor(x)
    mask = (x.data > lo) & (x.data < hi)
    return _result(np.clip(x.data, lo, hi), (x,), lambda g: (g * mask,))


def tsum(x) -> Tensor:
    x = as_tensor(x)
    return _result(np.asarray(x.data.sum()), (x,),
                   lambda g: (np.broadcast_to(g, x.shape).copy(),))


def tmean(x) -> Tensor:
    x = as_tensor(x)
    n = x.data.size
    return _result(np.asarray(x.data.mean()), (x,),
                   lambda g: (np.broadcast_to(g / n, x.shape).copy(),))


# ---------------------------------------------------------------------------
# shape ops
# ---------------------------------------------------------------------------

def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    return _result(x.data.reshape(shape), (x,),
                   lambda g: (g.reshape(x.shape),))


def transpose(x) -> Tensor:
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"transpose expects a 2-D tensor, got {x.shape}")
    return _result(x.data.T.copy(), (x,), lambda g: (g.T,))


def gather_rows(x, index) -> Tensor:
    """Select rows of a 2-D tensor; backward scatter-adds."""
    x = as_tensor(x)
    idx = np.asarray(index, dtype=np.int64)
    if x.data.ndim != 2:
        raise ShapeError(f"gather_rows expects a 2-D tensor, got {x.shape}")

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return _result(x.data[idx], (x,), backward)


def slice_cols(x, start: int, stop: int) -> Tensor:
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"slice_cols expects a 2-D tensor, got {x.shape}")

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[:, start:stop] = g
        return (gx,)

    return _result(x.data[:, start:stop].copy(), (x,), backward)


def concat_cols(parts: Iterable[Tensor]) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    widths = [p.shape[1] for p in parts]
    data = np.concatenate([p.data for p in parts], axis=1)

    def backward(g):
        grads, at = [], 0
        for w in widths:
            grads.append(g[:, at:at + w])
            at += w
        return tuple(grads)

    return _result(data, tuple(parts), backward)


# ---------------------------------------------------------------------------
# linear algebra and neural primitives
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    need_a, need_b = a._needs_graph(), b._needs_graph()

    def backward(g):
        ga = g @ b.data.T if need_a else None
        gb = a.data.T @ g if need_b else None
        return ga, gb

    return _result(a.data @ b.data, (a, b), backward)


def conv2d(x, w, stride: int = 1) -> Tensor:
    """Same-padded cross-correlation of (h,w,cin) with (kh,kw,cin,cout)."""
    x, w = as_tensor(x), as_tensor(w)
    if x.data.ndim != 3 or w.data.ndim != 4:
        raise ShapeError(
            f"conv2d: expected (h,w,cin) and (kh,kw,cin,cout), got "
            f"{x.shape} and {w.shape}")
    kh, kw, cin, _ = w.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d: kernel extents must be odd, got {kh}x{kw}")
    if x.shape[2] != cin:
        raise ShapeError(
            f"conv2d: input channels {x.shape} do not match weights {w.shape}")
    if stride < 1:
        raise ShapeError(f"conv2d: stride must be positive, got {stride}")
    h, win = x.shape[0], x.shape[1]
    need_x, need_w = x._needs_graph(), w._needs_graph()

    def backward(g):
        gx = (kernels.conv2d_backward_input(g, w.data, stride, h, win)
              if need_x else None)
        gw = (kernels.conv2d_backward_weights(x.data, g, stride, kh, kw)
              if need_w else None)
        return gx, gw

    return _result(kernels.conv2d_forward(x.data, w.data, stride),
                   (x, w), backward)


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return ((g - inner) * out,)

    return _result(out, (x,), backward)


def layer_norm(x, gamma, beta, eps: float = 1e-8) -> Tensor:
    """Normalize each row of a 2-D tensor, then apply the affine terms."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.data.ndim != 2:
        raise ShapeError(f"layer_norm expects a 2-D tensor, got {x.shape}")
    n = x.shape[1]
    mu = x.data.mean(axis=1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = xhat * gamma.data + beta.data
    need_x = x._needs_graph()
    need_g = gamma._needs_graph()
    need_b = beta._needs_graph()

    def backward(g):
        gg = (g * xhat).sum(axis=0) if need_g else None
        gb = g.sum(axis=0) if need_b else None
        if need_x:
            dxhat = g * gamma.data
            gx = inv * (dxhat
                        - dxhat.mean(axis=1, keepdims=True)
                        - xhat * (dxhat * xhat).mean(axis=1, keepdims=True))
        else:
            gx = None
        return gx, gg, gb

    return _result(out, (x, gamma, beta), backward)


def attention(q, k, v) -> Tensor:
    """softmax(q k^T / sqrt(c)) v composed from the primitives above."""
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    c = q.shape[-1]
    if k.shape[-1] != c or v.shape[0] != k.shape[0]:
        raise ShapeError(
            f"attention: incompatible shapes q={q.shape} k={k.shape} "
            f"v={v.shape}")
    scores = mul(matmul(q, transpose(k)), 1.0 / math.sqrt(c))
    return matmul(softmax(scores, axis=-1), v)


def attention_weights(q, k) -> Tensor:
    """The row-stochastic weight matrix used by :func:`attention`."""
    q, k = as_tensor(q), as_tensor(k)
    c = q.shape[-1]
    if k.shape[-1] != c:
        raise ShapeError(
            f"attention: incompatible shapes q={q.shape} k={k.shape}")
    return softmax(mul(matmul(q, transpose(k)), 1.0 / math.sqrt(c)), axis=-1)
