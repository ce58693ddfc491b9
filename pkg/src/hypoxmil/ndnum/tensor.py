"""Dense tensors with reverse-mode automatic differentiation.

Only the operations needed by the MIL network are provided. Every op builds a
new :class:`Tensor` holding its forward value plus a closure that pushes the
output gradient back to its inputs. :func:`backward` sweeps the graph in a
fixed reverse topological order, so gradient accumulation is deterministic.
"""

from __future__ import annotations

from collections import OrderedDict
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

CE_EPS = 1e-7


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class Tensor:
    """A node in the compute graph.

    ``data`` is never mutated once the node is built. ``grad`` is filled by
    :func:`backward` and has the same shape as ``data``.
    """

    __slots__ = ("data", "grad", "op", "parents", "_backward", "name", "requires_grad")

    def __init__(
        self,
        data,
        parents: Sequence["Tensor"] = (),
        op: str = "leaf",
        backward_fn: Optional[Callable[[np.ndarray], None]] = None,
        dtype=None,
        name: Optional[str] = None,
        requires_grad: Optional[bool] = None,
    ):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        if not np.isfinite(arr).all():
            raise FloatingPointError(f"non-finite values produced by op '{op}'")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.op = op
        self.parents = tuple(parents)
        self._backward = backward_fn
        self.name = name
        if requires_grad is None:
            requires_grad = name is not None or any(p.requires_grad for p in self.parents)
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, dtype={self.dtype})"

    def __add__(self, other):
        return add(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(x, dtype=dtype, op="const", requires_grad=False)


def _accum(t: Tensor, g: np.ndarray, owned: bool = False) -> None:
    # owned=True: g is a fresh array nobody else references, so it can be kept
    if not t.requires_grad:
        return
    if t.grad is None:
        if owned and g.dtype == t.dtype and g.flags.writeable and g.base is None:
            t.grad = g
        else:
            t.grad = np.array(g, dtype=t.dtype, copy=True)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# --------------------------------------------------------------------------
# elementwise and structural ops


def add(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    try:
        out_data = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"cannot add shapes {a.shape} and {b.shape}") from exc

    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return Tensor(out_data, (a, b), "add", bw)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    out_data = x.data.reshape(tuple(shape))

    def bw(g):
        _accum(x, g.reshape(x.shape))

    return Tensor(out_data, (x,), "reshape", bw)


def transpose(x: Tensor) -> Tensor:
    """Swap the two axes of a 2-D tensor."""
    if x.data.ndim != 2:
        raise ShapeError(f"transpose expects a 2-D tensor, got {x.shape}")

    def bw(g):
        _accum(x, g.T)

    return Tensor(np.ascontiguousarray(x.data.T), (x,), "transpose", bw)


def pick(x: Tensor, index: int) -> Tensor:
    """Select one entry of a 1-D tensor as a scalar node."""
    if x.data.ndim != 1:
        raise ShapeError(f"pick expects a 1-D tensor, got {x.shape}")
    if not 0 <= index < x.shape[0]:
        raise IndexError(f"index {index} out of range for length {x.shape[0]}")
    out_data = x.data[index : index + 1].reshape(())

    def bw(g):
        full = np.zeros_like(x.data)
        full[index] = g
        _accum(x, full)

    return Tensor(out_data, (x,), "pick", bw)


def relu(x: Tensor) -> Tensor:
    out_data = np.maximum(x.data, 0)

    def bw(g):
        _accum(x, g * (out_data > 0), owned=True)

    return Tensor(out_data, (x,), "relu", bw)


def tanh_act(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def bw(g):
        _accum(x, g * (1 - y * y), owned=True)

    return Tensor(y, (x,), "tanh", bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def bw(g):
        _accum(a, g @ b.data.T, owned=True)
        _accum(b, a.data.T @ g, owned=True)

    return Tensor(out_data, (a, b), "matmul", bw)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis, computed with max subtraction."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        _accum(x, y * (g - (g * y).sum(axis=-1, keepdims=True)), owned=True)

    return Tensor(y, (x,), "softmax", bw)


def cross_entropy(probs: Tensor, target: int) -> Tensor:
    """``-log(p[target])`` with ``p`` clamped to ``[1e-7, 1]``."""
    if probs.data.ndim != 1:
        raise ShapeError(f"cross_entropy expects a 1-D probability vector, got {probs.shape}")
    n = probs.shape[0]
    if not isinstance(target, (int, np.integer)) or not 0 <= target < n:
        raise ValueError(f"target class {target!r} out of range for {n} classes")
    p = probs.data[target]
    # clamp and log in the tensor's own dtype (extended precision stays extended)
    pc = np.clip(p, probs.dtype.type(CE_EPS), probs.dtype.type(1.0))
    out_data = np.asarray(-np.log(pc), dtype=probs.dtype)

    def bw(g):
        full = np.zeros_like(probs.data)
        if CE_EPS < p < 1.0:
            full[target] = -g / p
        _accum(probs, full)

    return Tensor(out_data, (probs,), "cross_entropy", bw)


# --------------------------------------------------------------------------
# spatial ops; inputs are [C, H, W] or a channel-major batch [C, N, H, W]


def _im2col(xp: np.ndarray, h: int, w: int) -> np.ndarray:
    # xp: [C, N, H+2, W+2] -> [C*9, N*H*W]
    c, n = xp.shape[:2]
    cols = np.empty((c, 3, 3, n, h, w), dtype=xp.dtype)
    for dy in range(3):
        for dx in range(3):
            cols[:, dy, dx] = xp[:, :, dy : dy + h, dx : dx + w]
    return cols.reshape(c * 9, n * h * w)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """3x3 convolution, stride 1, zero padding 1 ("same" output size).

    A batch of instances is stacked along axis 1, giving ``[C, N, H, W]``;
    this keeps both the im2col copy and the matmuls free of transposes.
    """
    batched = x.data.ndim == 4
    if x.data.ndim not in (3, 4):
        raise ShapeError(f"conv2d expects [C,H,W] or [C,N,H,W], got {x.shape}")
    if kernel.data.ndim != 4 or kernel.shape[2:] != (3, 3):
        raise ShapeError(f"conv2d kernel must be [C_out,C_in,3,3], got {kernel.shape}")
    xd = x.data if batched else x.data[:, None]
    c, n, h, w = xd.shape
    c_out = kernel.shape[0]
    if kernel.shape[1] != c:
        raise ShapeError(f"input has {c} channels but kernel expects {kernel.shape[1]}")
    if bias.shape != (c_out,):
        raise ShapeError(f"bias shape {bias.shape} does not match {c_out} output channels")

    xp = np.zeros((c, n, h + 2, w + 2), dtype=xd.dtype)
    xp[:, :, 1:-1, 1:-1] = xd
    cols = _im2col(xp, h, w)
    kmat = kernel.data.reshape(c_out, c * 9)
    out2d = kmat @ cols
    out2d += bias.data[:, None]
    out = out2d.reshape(c_out, n, h, w)
    if not batched:
        out = out[:, 0]
    need_dx = x.requires_grad

    def bw(g):
        g2d = g.reshape(c_out, n * h * w)
        _accum(bias, g2d.sum(axis=1), owned=True)
        _accum(kernel, (g2d @ cols.T).reshape(kernel.shape))
        if not need_dx:
            return
        dcols = (kmat.T @ g2d).reshape(c, 3, 3, n, h, w)
        dxp = np.zeros_like(xp)
        for dy in range(3):
            for dx in range(3):
                dxp[:, :, dy : dy + h, dx : dx + w] += dcols[:, dy, dx]
        dx_ = dxp[:, :, 1:-1, 1:-1]
        _accum(x, dx_ if batched else dx_[:, 0])

    return Tensor(out, (x, kernel, bias), "conv2d", bw)


def maxpool2(x: Tensor) -> Tensor:
    """2x2 non-overlapping max pool over the last two axes.

    An odd trailing row/column is dropped. Ties route the gradient to the
    first maximal entry in (top-left, top-right, bottom-left, bottom-right)
    order.
    """
    if x.data.ndim < 2:
        raise ShapeError(f"maxpool2 needs at least 2 dims, got {x.shape}")
    h, w = x.shape[-2:]
    h2, w2 = h // 2, w // 2
    if h2 == 0 or w2 == 0:
        raise ShapeError(f"maxpool2 input too small: {x.shape}")
    quads = [
        x.data[..., 0 : 2 * h2 : 2, 0 : 2 * w2 : 2],
        x.data[..., 0 : 2 * h2 : 2, 1 : 2 * w2 : 2],
        x.data[..., 1 : 2 * h2 : 2, 0 : 2 * w2 : 2],
        x.data[..., 1 : 2 * h2 : 2, 1 : 2 * w2 : 2],
    ]
    out = np.maximum(np.maximum(quads[0], quads[1]), np.maximum(quads[2], quads[3]))

    def bw(g):
        full = np.zeros_like(x.data)
        free = None
        for q, (oy, ox) in zip(quads, ((0, 0), (0, 1), (1, 0), (1, 1))):
            view = full[..., oy : 2 * h2 : 2, ox : 2 * w2 : 2]
            if free is None:
                hit = q == out
                free = ~hit
            elif oy == ox == 1:
                hit = free  # some quad always attains the max
            else:
                hit = free & (q == out)
                free &= ~hit
            np.multiply(g, hit, out=view)
        _accum(x, full, owned=True)

    return Tensor(out, (x,), "maxpool2", bw)


def global_avg_pool(x: Tensor) -> Tensor:
    """Per-channel spatial mean over the last two axes."""
    if x.data.ndim < 3:
        raise ShapeError(f"global_avg_pool expects [C,H,W] or [N,C,H,W], got {x.shape}")
    h, w = x.shape[-2:]
    out = x.data.mean(axis=(-2, -1))

    def bw(g):
        _accum(x, np.broadcast_to(g[..., None, None] / (h * w), x.shape))

    return Tensor(out, (x,), "global_avg_pool", bw)


# --------------------------------------------------------------------------
# graph traversal


def topo_order(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root`` in a deterministic topological order."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in reversed(node.parents):
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, params: Optional["ParamStore"] = None) -> None:
    """Populate ``.grad`` on every node reachable from the scalar ``loss``.

    Gradients are reset, not accumulated across calls. When ``params`` is
    given, parameters absent from the graph get an all-zero gradient.
    """
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    order = topo_order(loss)
    if params is not None:
        params.zero_grad()
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    if params is not None:
        for t in params.values():
            if t.grad is None:
                t.grad = np.zeros_like(t.data)


class ParamStore:
    """Ordered name -> leaf tensor mapping; iteration follows insertion order."""

    def __init__(self):
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, copy=True), name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def values(self):
        return self._params.values()

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def set(self, name: str, value: np.ndarray) -> None:
        """Replace a parameter's value, keeping its dtype and shape."""
        old = self._params[name]
        value = np.asarray(value, dtype=old.dtype)
        if value.shape != old.shape:
            raise ShapeError(f"{name}: shape {value.shape} != {old.shape}")
        self._params[name] = Tensor(value.copy(), name=name)

    def astype(self, dtype) -> "ParamStore":
        out = ParamStore()
        for name, t in self._params.items():
            out.add(name, t.data.astype(dtype))
        return out

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for name, t in self._params.items():
            out.add(name, t.data)
        return out
