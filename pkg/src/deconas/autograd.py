"""Reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` wraps an ndarray plus an optional backward closure; calling
``backward()`` on a scalar result walks the graph in reverse topological
order and accumulates gradients into every tensor that requires them.
Graph edges are only recorded when some input requires a gradient, so
inference-only code pays no bookkeeping cost.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={'yes' if self.requires_grad else 'no'})"

    # -- graph traversal ----------------------------------------------------

    def backward(self, seed=None):
        """Accumulate gradients of ``self`` into every upstream tensor.

        ``seed`` defaults to ones (so ``self`` should be scalar for a loss).
        Gradients add up across calls; use ``zero_grad`` on stores between steps.
        """
        topo: list[Tensor] = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {
            id(self): np.ones_like(self.data) if seed is None else np.asarray(seed)
        }
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg

    # -- operator sugar -----------------------------------------------------

    def __add__(self, other):
        return add(self, as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, as_tensor(other))

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))

    def __getitem__(self, key):
        return take(self, key)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _track(*parents: Tensor) -> bool:
    return any(p.requires_grad or p._parents for p in parents)


def _make(data, parents, backward) -> Tensor:
    if _track(*parents):
        return Tensor(data, _parents=tuple(parents), _backward=backward)
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise / linear algebra primitives

def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data
    return _make(out, (a, b),
                 lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)))


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data
    return _make(out, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.data.shape),
                            _unbroadcast(g * a.data, b.data.shape)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError("matmul expects 2-D operands")
    out = a.data @ b.data
    return _make(out, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def take(a: Tensor, key) -> Tensor:
    out = a.data[key]

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, key, g)  # accumulates repeated fancy indices
        return (full,)

    return _make(out, (a,), bw)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.data.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0), (a,), lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)
    return _make(s, (a,), lambda g: (g * s * (1 - s),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.result_type(x, np.float32))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out.astype(x.dtype, copy=False)


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    return _make(t, (a,), lambda g: (g * (1 - t * t),))


def softplus(a: Tensor) -> Tensor:
    out = np.logaddexp(0, a.data)
    return _make(out, (a,), lambda g: (g * _sigmoid(a.data),))


def absolute(a: Tensor) -> Tensor:
    return _make(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def tsum(a: Tensor) -> Tensor:
    return _make(np.asarray(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, a.data.shape).copy(),))


def tmean(a: Tensor) -> Tensor:
    n = a.data.size
    return _make(np.asarray(a.data.mean()), (a,),
                 lambda g: (np.broadcast_to(g / n, a.data.shape).copy(),))


def scalar_mul(a: Tensor, c: float) -> Tensor:
    return _make(a.data * c, (a,), lambda g: (g * c,))


def mean_over(tensors) -> Tensor:
    """Elementwise mean of a non-empty list of same-shape tensors."""
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("mean_over needs at least one tensor")
    acc = tensors[0]
    for t in tensors[1:]:
        acc = add(acc, t)
    return scalar_mul(acc, 1.0 / len(tensors))


def l1_loss(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"l1_loss shapes differ: {a.data.shape} vs {b.data.shape}")
    return tmean(absolute(a - b))


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Dense layer: x (B, in) @ weight (in, out) + bias (out,)."""
    out = matmul(x, weight)
    if bias is not None:
        out = add(out, bias)
    return out


def bernoulli_log_prob(logit: Tensor, bit) -> Tensor:
    """Elementwise log P(bit) for Bernoulli(sigmoid(logit)): bit*l - softplus(l)."""
    bit_arr = np.asarray(bit, dtype=logit.data.dtype)
    return mul(logit, Tensor(bit_arr)) - softplus(logit)


def concat_channels(tensors) -> Tensor:
    """Concatenate 4-D tensors along the channel axis (axis 1)."""
    tensors = list(tensors)
    sizes = [t.data.shape[1] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=1)

    def bw(g):
        grads = []
        off = 0
        for size in sizes:
            grads.append(g[:, off:off + size])
            off += size
        return tuple(grads)

    return _make(out, tuple(tensors), bw)


def global_avg_pool(a: Tensor) -> Tensor:
    """(B, C, H, W) -> (B, C, 1, 1) spatial mean."""
    if a.data.ndim != 4:
        raise ShapeError("global_avg_pool expects a 4-D tensor")
    h, w = a.data.shape[2:]
    out = a.data.mean(axis=(2, 3), keepdims=True)
    return _make(out, (a,),
                 lambda g: (np.broadcast_to(g / (h * w), a.data.shape).copy(),))


# ---------------------------------------------------------------------------
# convolution

def _im2col(x: np.ndarray, kh: int, kw: int, dilation: int):
    """Return (cols, pad) where cols has shape (B, C, H, W, kh, kw)."""
    pad_h = dilation * (kh - 1) // 2
    pad_w = dilation * (kw - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad_h, pad_h), (pad_w, pad_w)))
    span_h = dilation * (kh - 1) + 1
    span_w = dilation * (kw - 1) + 1
    windows = np.lib.stride_tricks.sliding_window_view(xp, (span_h, span_w), axis=(2, 3))
    return windows[..., ::dilation, ::dilation], (pad_h, pad_w)


def _col2im(gcols: np.ndarray, x_shape, dilation: int):
    """Scatter-add per-tap gradients back to the input (inverse of _im2col)."""
    b, c, h, w = x_shape
    kh, kw = gcols.shape[4], gcols.shape[5]
    pad_h = dilation * (kh - 1) // 2
    pad_w = dilation * (kw - 1) // 2
    gxp = np.zeros((b, c, h + 2 * pad_h, w + 2 * pad_w), dtype=gcols.dtype)
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i * dilation:i * dilation + h, j * dilation:j * dilation + w] += gcols[:, :, :, :, i, j]
    if pad_h or pad_w:
        return gxp[:, :, pad_h:h + pad_h, pad_w:w + pad_w]
    return gxp


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None,
           dilation: int = 1, depthwise: bool = False) -> Tensor:
    """Same-padded 2-D cross-correlation.

    ``x`` is (B, Cin, H, W).  Standard kernels are (Cout, Cin, kh, kw);
    depthwise kernels are (C, 1, kh, kw) with Cin == Cout == C.
    """
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise ShapeError("conv2d expects 4-D input and kernel")
    kc_out, kc_in, kh, kw = kernel.data.shape
    if depthwise:
        if kc_in != 1 or kc_out != x.data.shape[1]:
            raise ShapeError(
                f"depthwise kernel {kernel.data.shape} incompatible with input {x.data.shape}")
    elif kc_in != x.data.shape[1]:
        raise ShapeError(
            f"kernel expects {kc_in} input channels, input has {x.data.shape[1]}")

    cols, _ = _im2col(x.data, kh, kw, dilation)

    if depthwise:
        kmat = kernel.data[:, 0]  # (C, kh, kw)
        out = np.einsum("bchwij,cij->bchw", cols, kmat, optimize=True)
    else:
        out = np.einsum("bchwij,ocij->bohw", cols, kernel.data, optimize=True)
    if bias is not None:
        if bias.data.shape != (out.shape[1],):
            raise ShapeError(f"bias shape {bias.data.shape} does not match {out.shape[1]} channels")
        out = out + bias.data[None, :, None, None]

    x_shape = x.data.shape
    k_data = kernel.data

    def bw(g):
        g = np.ascontiguousarray(g)
        cols_local, _ = _im2col(x.data, kh, kw, dilation)
        if depthwise:
            gk = np.einsum("bchwij,bchw->cij", cols_local, g, optimize=True)[:, None]
            gcols = np.einsum("bchw,cij->bchwij", g, k_data[:, 0], optimize=True)
        else:
            gk = np.einsum("bchwij,bohw->ocij", cols_local, g, optimize=True)
            gcols = np.einsum("bohw,ocij->bchwij", g, k_data, optimize=True)
        gx = _col2im(gcols, x_shape, dilation)
        if bias is None:
            return gx, gk
        return gx, gk, g.sum(axis=(0, 2, 3))

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return _make(out, parents, bw)


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """Periodic shuffle (B, C*r^2, H, W) -> (B, C, H*r, W*r)."""
    b, c_in, h, w = x.data.shape
    if c_in % (r * r) != 0:
        raise ShapeError(f"{c_in} channels not divisible by r^2={r * r}")
    c = c_in // (r * r)

    def fwd(arr):
        t = arr.reshape(b, c, r, r, h, w)
        return t.transpose(0, 1, 4, 2, 5, 3).reshape(b, c, h * r, w * r)

    def bw(g):
        t = g.reshape(b, c, h, r, w, r)
        return (t.transpose(0, 1, 3, 5, 2, 4).reshape(b, c_in, h, w),)

    return _make(fwd(x.data), (x,), bw)


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    """Exact inverse of :func:`pixel_shuffle`; used as a test oracle."""
    b, c, hr, wr = x.data.shape
    if hr % r or wr % r:
        raise ShapeError("spatial dims not divisible by r")
    h, w = hr // r, wr // r

    def fwd(arr):
        t = arr.reshape(b, c, h, r, w, r)
        return t.transpose(0, 1, 3, 5, 2, 4).reshape(b, c * r * r, h, w)

    def bw(g):
        t = g.reshape(b, c, r, r, h, w)
        return (t.transpose(0, 1, 4, 2, 5, 3).reshape(b, c, hr, wr),)

    return _make(fwd(x.data), (x,), bw)


# ---------------------------------------------------------------------------
# recurrent cell

def lstm_cell(x: Tensor, hidden: Tensor, cell: Tensor,
              w_ih: Tensor, w_hh: Tensor, bias: Tensor) -> tuple[Tensor, Tensor]:
    """One LSTM step; gate order along the packed axis is (i, f, g, o).

    ``x``/``hidden``/``cell`` are (B, H); ``w_ih`` is (in, 4H), ``w_hh`` (H, 4H),
    ``bias`` (4H,).  Built from differentiable primitives.
    """
    n = hidden.data.shape[1]
    if w_ih.data.shape[1] != 4 * n or w_hh.data.shape != (n, 4 * n) or bias.data.shape != (4 * n,):
        raise ShapeError("lstm_cell parameter shapes inconsistent with hidden size")
    z = add(add(matmul(x, w_ih), matmul(hidden, w_hh)), bias)
    i = sigmoid(z[:, 0 * n:1 * n])
    f = sigmoid(z[:, 1 * n:2 * n])
    g = tanh(z[:, 2 * n:3 * n])
    o = sigmoid(z[:, 3 * n:4 * n])
    c_next = add(mul(f, cell), mul(i, g))
    h_next = mul(o, tanh(c_next))
    return h_next, c_next


def check_finite(t: Tensor, what: str = "tensor") -> Tensor:
    """Debug guard: raise if any value is NaN or infinite."""
    if not np.all(np.isfinite(t.data)):
        raise ShapeError(f"{what} contains non-finite values")
    return t
