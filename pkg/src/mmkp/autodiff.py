"""Dense tensor arithmetic with reverse-mode automatic differentiation.

Values live in numpy arrays; every primitive builds its output eagerly and,
when a Tape is active, records a backward closure. The tape is rebuilt per
forward pass (define-by-run), so variable-length sequences need no padding.

Precision is module-wide: float32 for training, float64 for gradient checks
(see set_default_dtype / default_dtype context manager).
"""

from contextlib import contextmanager

import numpy as np

from .errors import ContractError, DimensionError, EmptyBankError

_DEFAULT_DTYPE = np.float32
_TAPE_STACK = []


def set_default_dtype(dtype):
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ContractError(f"unsupported dtype {dtype}")
    _DEFAULT_DTYPE = dtype.type


def get_default_dtype():
    return _DEFAULT_DTYPE


@contextmanager
def default_dtype(dtype):
    old = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(old)


class Tensor:
    """A dense array node. grad is populated by Tape.backward."""

    __slots__ = ("data", "grad", "requires_grad", "_tracked")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=_DEFAULT_DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self._tracked = requires_grad

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def accumulate(self, g):
        if self.grad is None:
            self.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
        else:
            self.grad = self.grad + g

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Operator sugar for the common binary ops.
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return smul(self, -1.0)

    def __sub__(self, other):
        return add(self, smul(other, -1.0))


class Tape:
    """Ordered record of primitive operations for one forward pass.

    Operations are appended in execution order, which is already topological;
    backward visits them exactly once in reverse. A tape can be consumed by
    backward() only once (second call raises ContractError).
    """

    def __init__(self):
        self.ops = []
        self._spent = False

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def record(self, out, backward_fn):
        self.ops.append((out, backward_fn))

    def backward(self, loss):
        if self._spent:
            raise ContractError("backward already ran on this tape")
        if loss.data.size != 1:
            raise ContractError(f"loss must be scalar, got shape {loss.data.shape}")
        self._spent = True
        loss.grad = np.ones_like(loss.data)
        for out, fn in reversed(self.ops):
            if out.grad is not None:
                fn(out.grad)


def active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def tensor(data, requires_grad=False):
    return Tensor(data, requires_grad=requires_grad)


def constant(data):
    return Tensor(data)


def _wrap(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def _unbroadcast(grad, shape):
    """Reduce grad (shape of a broadcast result) back to the operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _emit(out_data, inputs, backward_builder):
    """Create the output tensor and record backward when tracking is on.

    backward_builder() is only called when a tape is active and at least one
    input is tracked; it must return f(grad_out) that accumulates into inputs.
    """
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    out.requires_grad = False
    tape = active_tape()
    tracked = tape is not None and any(i._tracked for i in inputs)
    out._tracked = tracked
    if tracked:
        tape.record(out, backward_builder(out))
    return out


# ---------------------------------------------------------------------------
# Elementwise and broadcast arithmetic


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} incompatible")

    def build(out):
        def backward(g):
            if a._tracked:
                a.accumulate(_unbroadcast(g, a.data.shape))
            if b._tracked:
                b.accumulate(_unbroadcast(g, b.data.shape))
        return backward

    return _emit(data, (a, b), build)


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise DimensionError(f"mul: shapes {a.shape} and {b.shape} incompatible")

    def build(out):
        def backward(g):
            if a._tracked:
                a.accumulate(_unbroadcast(g * b.data, a.data.shape))
            if b._tracked:
                b.accumulate(_unbroadcast(g * a.data, b.data.shape))
        return backward

    return _emit(data, (a, b), build)


def smul(a, scalar):
    a = _wrap(a)
    data = a.data * scalar

    def build(out):
        def backward(g):
            a.accumulate(g * scalar)
        return backward

    return _emit(data, (a,), build)


def tanh(a):
    a = _wrap(a)
    data = np.tanh(a.data)

    def build(out):
        def backward(g):
            a.accumulate(g * (1.0 - out.data * out.data))
        return backward

    return _emit(data, (a,), build)


def sigmoid(a):
    a = _wrap(a)
    data = 1.0 / (1.0 + np.exp(-a.data))

    def build(out):
        def backward(g):
            a.accumulate(g * out.data * (1.0 - out.data))
        return backward

    return _emit(data, (a,), build)


def relu(a):
    a = _wrap(a)
    data = np.maximum(a.data, 0.0)

    def build(out):
        mask = a.data > 0

        def backward(g):
            a.accumulate(g * mask)
        return backward

    return _emit(data, (a,), build)


def log(a):
    a = _wrap(a)
    data = np.log(a.data)

    def build(out):
        def backward(g):
            a.accumulate(g / a.data)
        return backward

    return _emit(data, (a,), build)


# ---------------------------------------------------------------------------
# Linear algebra


def matmul(a, b):
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} incompatible")
    data = a.data @ b.data

    def build(out):
        def backward(g):
            if a._tracked:
                a.accumulate(g @ b.data.T)
            if b._tracked:
                b.accumulate(a.data.T @ g)
        return backward

    return _emit(data, (a, b), build)


def matvec(m, v):
    """m (L x d) @ v (d,) -> (L,)."""
    m, v = _wrap(m), _wrap(v)
    if m.data.ndim != 2 or v.data.ndim != 1 or m.data.shape[1] != v.data.shape[0]:
        raise DimensionError(f"matvec: shapes {m.shape} and {v.shape} incompatible")
    data = m.data @ v.data

    def build(out):
        def backward(g):
            if m._tracked:
                m.accumulate(np.outer(g, v.data))
            if v._tracked:
                v.accumulate(m.data.T @ g)
        return backward

    return _emit(data, (m, v), build)


def vecmat(v, m):
    """v (L,) @ m (L x d) -> (d,)."""
    v, m = _wrap(v), _wrap(m)
    if v.data.ndim != 1 or m.data.ndim != 2 or v.data.shape[0] != m.data.shape[0]:
        raise DimensionError(f"vecmat: shapes {v.shape} and {m.shape} incompatible")
    data = v.data @ m.data

    def build(out):
        def backward(g):
            if v._tracked:
                v.accumulate(m.data @ g)
            if m._tracked:
                m.accumulate(np.outer(v.data, g))
        return backward

    return _emit(data, (v, m), build)


def affine(x, w, b):
    """x (din,) @ w (din x dout) + b (dout,) -> (dout,)."""
    x, w, b = _wrap(x), _wrap(w), _wrap(b)
    if x.data.ndim != 1 or w.data.ndim != 2 or x.data.shape[0] != w.data.shape[0]:
        raise DimensionError(f"affine: shapes {x.shape} and {w.shape} incompatible")
    data = x.data @ w.data + b.data

    def build(out):
        def backward(g):
            if x._tracked:
                x.accumulate(w.data @ g)
            if w._tracked:
                w.accumulate(np.outer(x.data, g))
            if b._tracked:
                b.accumulate(g)
        return backward

    return _emit(data, (x, w, b), build)


def linear_rows(x, w, b):
    """Row-wise affine map: x (L x din) @ w (din x dout) + b -> (L x dout)."""
    x, w, b = _wrap(x), _wrap(w), _wrap(b)
    if x.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise DimensionError(f"linear_rows: shapes {x.shape} and {w.shape} incompatible")
    data = x.data @ w.data + b.data

    def build(out):
        def backward(g):
            if x._tracked:
                x.accumulate(g @ w.data.T)
            if w._tracked:
                w.accumulate(x.data.T @ g)
            if b._tracked:
                b.accumulate(g.sum(axis=0))
        return backward

    return _emit(data, (x, w, b), build)


# ---------------------------------------------------------------------------
# Shape / selection


def concat(parts, axis=-1):
    parts = [_wrap(p) for p in parts]
    ref = parts[0].data.shape
    for p in parts[1:]:
        a = axis % max(p.data.ndim, 1)
        if p.data.ndim != len(ref) or any(
            p.data.shape[i] != ref[i] for i in range(p.data.ndim) if i != a
        ):
            raise DimensionError(
                f"concat: shapes {[tuple(q.data.shape) for q in parts]} incompatible on axis {axis}"
            )
    data = np.concatenate([p.data for p in parts], axis=axis)

    def build(out):
        sizes = [p.data.shape[axis] for p in parts]
        offsets = np.cumsum([0] + sizes)

        def backward(g):
            for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                if p._tracked:
                    idx = [slice(None)] * g.ndim
                    idx[axis] = slice(lo, hi)
                    p.accumulate(g[tuple(idx)])
        return backward

    return _emit(data, tuple(parts), build)


def tile_rows(v, n):
    """Repeat a vector as n rows: (d,) -> (n x d)."""
    v = _wrap(v)
    data = np.broadcast_to(v.data, (n, v.data.shape[0])).copy()

    def build(out):
        def backward(g):
            v.accumulate(g.sum(axis=0))
        return backward

    return _emit(data, (v,), build)


def row(x, i):
    """Select one row of a matrix as a vector."""
    x = _wrap(x)
    data = x.data[i].copy()

    def build(out):
        def backward(g):
            full = np.zeros_like(x.data)
            full[i] = g
            x.accumulate(full)
        return backward

    return _emit(data, (x,), build)


def div(a, b):
    a, b = _wrap(a), _wrap(b)
    try:
        data = a.data / b.data
    except ValueError:
        raise DimensionError(f"div: shapes {a.shape} and {b.shape} incompatible")

    def build(out):
        def backward(g):
            if a._tracked:
                a.accumulate(_unbroadcast(g / b.data, a.data.shape))
            if b._tracked:
                b.accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))
        return backward

    return _emit(data, (a, b), build)


def flip_rows(x):
    """Reverse the row order of a matrix (for backward-direction scans)."""
    x = _wrap(x)
    data = x.data[::-1].copy()

    def build(out):
        def backward(g):
            x.accumulate(g[::-1])
        return backward

    return _emit(data, (x,), build)


def embed(table, ids):
    """Gather rows of an embedding table: ids (L,) -> (L x d)."""
    table = _wrap(table)
    ids = np.asarray(ids, dtype=np.intp)
    data = table.data[ids].copy()

    def build(out):
        def backward(g):
            full = np.zeros_like(table.data)
            np.add.at(full, ids, g)
            table.accumulate(full)
        return backward

    return _emit(data, (table,), build)


def gather(x, idx):
    """Pick a single element of a vector: returns a scalar tensor."""
    x = _wrap(x)
    data = np.asarray(x.data[idx])

    def build(out):
        def backward(g):
            full = np.zeros_like(x.data)
            full[idx] = g
            x.accumulate(full)
        return backward

    return _emit(data, (x,), build)


def gather_vec(x, ids):
    """Pick several elements of a vector: ids (k,) -> (k,)."""
    x = _wrap(x)
    ids = np.asarray(ids, dtype=np.intp)
    data = x.data[ids].copy()

    def build(out):
        def backward(g):
            full = np.zeros_like(x.data)
            np.add.at(full, ids, g)
            x.accumulate(full)
        return backward

    return _emit(data, (x,), build)


def scatter_sum(w, ids, size):
    """Sum vector entries into slots: out[ids[i]] += w[i], out has length size."""
    w = _wrap(w)
    ids = np.asarray(ids, dtype=np.intp)
    if w.data.ndim != 1 or ids.shape != w.data.shape:
        raise DimensionError(f"scatter_sum: weights {w.shape} vs ids {ids.shape}")
    data = np.zeros(size, dtype=w.data.dtype)
    np.add.at(data, ids, w.data)

    def build(out):
        def backward(g):
            w.accumulate(g[ids])
        return backward

    return _emit(data, (w,), build)


def pad_to(v, size):
    """Zero-extend a vector to the given length."""
    v = _wrap(v)
    n = v.data.shape[0]
    if size < n:
        raise DimensionError(f"pad_to: target {size} < length {n}")
    data = np.zeros(size, dtype=v.data.dtype)
    data[:n] = v.data

    def build(out):
        def backward(g):
            v.accumulate(g[:n])
        return backward

    return _emit(data, (v,), build)


# ---------------------------------------------------------------------------
# Reductions and normalizations


def sum_all(x):
    x = _wrap(x)
    data = np.asarray(x.data.sum())

    def build(out):
        def backward(g):
            x.accumulate(np.full_like(x.data, float(g)))
        return backward

    return _emit(data, (x,), build)


def softmax(x, axis=-1):
    x = _wrap(x)
    if x.data.shape[axis % max(x.data.ndim, 1)] == 0:
        raise DimensionError("softmax: empty axis")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def build(out):
        def backward(g):
            s = out.data
            dot = (g * s).sum(axis=axis, keepdims=True)
            x.accumulate(s * (g - dot))
        return backward

    return _emit(data, (x,), build)


def layer_norm(x, gain, bias, eps=1e-5):
    """(x - mean) / sqrt(popvar + eps) * gain + bias over a vector."""
    x, gain, bias = _wrap(x), _wrap(gain), _wrap(bias)
    if x.data.ndim != 1 or x.data.shape[0] < 2:
        raise DimensionError(f"layer_norm: need a vector of length >= 2, got {x.shape}")
    n = x.data.shape[0]
    mean = x.data.mean()
    var = x.data.var()
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv
    data = xhat * gain.data + bias.data

    def build(out):
        def backward(g):
            if gain._tracked:
                gain.accumulate(g * xhat)
            if bias._tracked:
                bias.accumulate(g)
            if x._tracked:
                gh = g * gain.data
                x.accumulate(inv * (gh - gh.mean() - xhat * (gh * xhat).mean()))
        return backward

    return _emit(data, (x, gain, bias), build)


def pool(x, mode):
    """Column-wise max or mean over an L x d matrix -> (d,)."""
    x = _wrap(x)
    if x.data.ndim != 2 or x.data.shape[0] == 0:
        raise EmptyBankError(f"pool: need a nonempty L x d matrix, got {x.shape}")
    if mode == "max":
        arg = x.data.argmax(axis=0)  # first index on ties
        data = x.data[arg, np.arange(x.data.shape[1])].copy()

        def build(out):
            def backward(g):
                full = np.zeros_like(x.data)
                full[arg, np.arange(x.data.shape[1])] = g
                x.accumulate(full)
            return backward

    elif mode == "avg":
        data = x.data.mean(axis=0)

        def build(out):
            def backward(g):
                x.accumulate(np.broadcast_to(g / x.data.shape[0], x.data.shape).copy())
            return backward

    else:
        raise ContractError(f"pool: unknown mode {mode!r}")

    return _emit(data, (x,), build)


def gru_seq(x, h0, wx, wh, b):
    """Full-sequence GRU scan as a single tape primitive.

    x (T x din), h0 (h,), wx (din x 3h), wh (h x 3h), b (3h,); returns the
    hidden states (T x h). The heavy lifting lives in mmkp.kernels (compiled
    extension when available, numpy fallback otherwise).
    """
    from . import kernels

    x, h0, wx, wh, b = (_wrap(t) for t in (x, h0, wx, wh, b))
    if x.data.ndim != 2 or x.data.shape[1] != wx.data.shape[0]:
        raise DimensionError(f"gru_seq: input {x.shape} vs wx {wx.shape}")
    if wx.data.shape[1] != wh.data.shape[1] or wh.data.shape[0] * 3 != wh.data.shape[1]:
        raise DimensionError(f"gru_seq: wx {wx.shape} vs wh {wh.shape}")
    hs, cache = kernels.gru_forward(x.data, h0.data, wx.data, wh.data, b.data)

    def build(out):
        def backward(g):
            dx, dh0, dwx, dwh, db = kernels.gru_backward(g, cache)
            if x._tracked:
                x.accumulate(dx)
            if h0._tracked:
                h0.accumulate(dh0)
            if wx._tracked:
                wx.accumulate(dwx)
            if wh._tracked:
                wh.accumulate(dwh)
            if b._tracked:
                b.accumulate(db)
        return backward

    return _emit(hs, (x, h0, wx, wh, b), build)
