"""Minimal reverse-mode autodiff on numpy arrays.

Only the operations the embedder/classifier stack needs: broadcast
arithmetic, matmul, 3x3 convolution, 2x2 max pooling, relu/sigmoid/log,
reductions, reshapes, row gathering and fused L2 row normalization.
Graphs are built eagerly by the op functions; ``Tensor.backward`` walks
the topological order once.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    """Array node in the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def _accumulate(self, grad: np.ndarray):
        if self.grad is None:
            self.grad = grad.copy() if isinstance(grad, np.ndarray) else np.asarray(grad)
        else:
            self.grad = self.grad + grad

    # Operator sugar used throughout the model code.
    def __add__(self, other):
        return add(self, _wrap(other))

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(np.asarray(value))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return Tensor(out_data, parents=(a, b), backward=backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out_data = x.data * mask

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * mask)

    return Tensor(out_data, parents=(x,), backward=backward)


def sigmoid(x: Tensor) -> Tensor:
    # Stable two-branch form: exp only ever sees non-positive arguments.
    pos = x.data >= 0
    z = np.exp(np.where(pos, -x.data, x.data))
    out_data = np.where(pos, 1.0 / (1.0 + z), z / (1.0 + z))
    # Keep outputs strictly inside (0, 1) even where the float saturates.
    info = np.finfo(out_data.dtype)
    out_data = np.clip(out_data, info.tiny, np.nextafter(out_data.dtype.type(1.0), out_data.dtype.type(0.0)))

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * out_data * (1.0 - out_data))

    return Tensor(out_data, parents=(x,), backward=backward)


def log(x: Tensor) -> Tensor:
    out_data = np.log(x.data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g / x.data)

    return Tensor(out_data, parents=(x,), backward=backward)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp with pass-through gradient inside the bounds."""
    out_data = np.clip(x.data, lo, hi)
    mask = (x.data >= lo) & (x.data <= hi)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * mask)

    return Tensor(out_data, parents=(x,), backward=backward)


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out_data = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if not x.requires_grad:
            return
        if axis is None:
            x._accumulate(np.broadcast_to(g, x.data.shape).copy())
        else:
            g_exp = g if keepdims else np.expand_dims(g, axis)
            x._accumulate(np.broadcast_to(g_exp, x.data.shape).copy())

    return Tensor(out_data, parents=(x,), backward=backward)


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.data.size if axis is None else x.data.shape[axis]
    total = tsum(x, axis=axis, keepdims=keepdims)
    return mul(total, Tensor(np.asarray(1.0 / count, dtype=x.data.dtype)))


def reshape(x: Tensor, shape) -> Tensor:
    out_data = x.data.reshape(shape)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g.reshape(x.data.shape))

    return Tensor(out_data, parents=(x,), backward=backward)


def take_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Gather rows; gradients scatter-add back (indices may repeat)."""
    idx = np.asarray(idx, dtype=np.int64)
    out_data = x.data[idx]

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            np.add.at(gx, idx, g)
            x._accumulate(gx)

    return Tensor(out_data, parents=(x,), backward=backward)


def l2_normalize(x: Tensor, eps: float = 1e-12) -> Tensor:
    """Row-wise x / sqrt(sum(x^2) + eps), fused with its exact gradient."""
    norm = np.sqrt((x.data**2).sum(axis=-1, keepdims=True) + eps)
    out_data = x.data / norm

    def backward(g):
        if x.requires_grad:
            inner = (g * out_data).sum(axis=-1, keepdims=True)
            x._accumulate((g - out_data * inner) / norm)

    return Tensor(out_data, parents=(x,), backward=backward)


def _conv_cols(xp: np.ndarray, k: int, stride: int) -> np.ndarray:
    """im2col on a padded (B, C, Hp, Wp) input -> (B*Ho*Wo, C*k*k)."""
    windows = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]
    b, c, ho, wo = windows.shape[:4]
    return windows.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, c * k * k), (ho, wo)


def conv2d(x: Tensor, w: Tensor, stride: int = 1) -> Tensor:
    """3x3 'same' convolution, stride >= 1; x (B,C,H,W), w (O,C,3,3)."""
    b, c, h, wdt = x.data.shape
    o, c2, k, k2 = w.data.shape
    if c != c2 or k != 3 or k2 != 3:
        raise ValueError(f"conv2d expects matching channels and 3x3 kernels, got {x.shape} x {w.shape}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols, (ho, wo) = _conv_cols(xp, 3, stride)
    w_mat = w.data.reshape(o, c * 9)
    out_data = (cols @ w_mat.T).reshape(b, ho, wo, o).transpose(0, 3, 1, 2)
    out_data = np.ascontiguousarray(out_data)

    def backward(g):
        g_mat = g.transpose(0, 2, 3, 1).reshape(b * ho * wo, o)
        if w.requires_grad:
            # Recompute cols instead of keeping the big im2col buffer alive.
            cols_b, _ = _conv_cols(np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1))), 3, stride)
            w._accumulate((g_mat.T @ cols_b).reshape(o, c, 3, 3))
        if x.requires_grad:
            dcols = (g_mat @ w_mat).reshape(b, ho, wo, c, 3, 3).transpose(0, 3, 1, 2, 4, 5)
            dxp = np.zeros((b, c, h + 2, wdt + 2), dtype=g.dtype)
            for ki in range(3):
                for kj in range(3):
                    dxp[:, :, ki : ki + stride * ho : stride, kj : kj + stride * wo : stride] += dcols[
                        :, :, :, :, ki, kj
                    ]
            x._accumulate(dxp[:, :, 1:-1, 1:-1])

    return Tensor(out_data, parents=(x, w), backward=backward)


def maxpool2d(x: Tensor) -> Tensor:
    """2x2 max pooling, stride 2; odd trailing rows/columns are dropped."""
    b, c, h, w = x.data.shape
    h2, w2 = h // 2, w // 2
    trimmed = x.data[:, :, : h2 * 2, : w2 * 2]
    tiles = trimmed.reshape(b, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h2, w2, 4)
    idx = tiles.argmax(axis=-1)
    out_data = np.take_along_axis(tiles, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        if not x.requires_grad:
            return
        gt = np.zeros((b, c, h2, w2, 4), dtype=g.dtype)
        np.put_along_axis(gt, idx[..., None], g[..., None], axis=-1)
        gx = np.zeros_like(x.data)
        gx[:, :, : h2 * 2, : w2 * 2] = (
            gt.reshape(b, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h2 * 2, w2 * 2)
        )
        x._accumulate(gx)

    return Tensor(out_data, parents=(x,), backward=backward)
