"""Dense tensors with define-by-run reverse-mode differentiation.

Every op builds its output eagerly with NumPy and, when gradients are
enabled and some input requires them, records a closure that maps the
output gradient to input gradients. :func:`backward` walks the recorded
graph once in reverse topological order and then releases it; calling
``backward`` a second time on the same loss raises :class:`GraphError`.

Leaf gradients accumulate (``grad += ...``) across separate graphs, so
callers zero them between optimisation steps.
"""

from contextlib import contextmanager

import numpy as np

from . import kernels
from .errors import ConfigError, DimensionError, GraphError, InvalidMaskError, NumericalError

_GRAD_ENABLED = True
_CHECK_FINITE = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def set_finite_check(enabled):
    """Toggle the NaN/Inf check after every forward op; returns the old setting."""
    global _CHECK_FINITE
    previous = _CHECK_FINITE
    _CHECK_FINITE = bool(enabled)
    return previous


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward", "_op", "_released")

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._parents = ()
        self._backward = None
        self._op = "leaf"
        self._released = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def detach(self):
        return Tensor(self.data, dtype=self.data.dtype)

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self._op}{label})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other, self.dtype)))

    def __rsub__(self, other):
        return add(_as_tensor(other, self.dtype), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def backward(self):
        backward(self)


def _as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype if dtype is not None else np.float64))


def _make(data, parents, backward_fn, op):
    if _CHECK_FINITE and not np.all(np.isfinite(data)):
        raise NumericalError(f"non-finite values produced by op '{op}'")
    out = Tensor(data, dtype=data.dtype)
    out._op = op
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _accumulate(t, g):
    if not t.requires_grad:
        return
    if g.shape != t.data.shape:
        g = _unbroadcast(g, t.data.shape)
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise


def add(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, a.dtype)
    try:
        data = a.data + b.data
    except ValueError as exc:
        raise DimensionError(f"add: cannot broadcast {a.shape} and {b.shape}") from exc

    def _bw(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _make(data, (a, b), _bw, "add")


def mul(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, a.dtype)
    try:
        data = a.data * b.data
    except ValueError as exc:
        raise DimensionError(f"mul: cannot broadcast {a.shape} and {b.shape}") from exc

    def _bw(g):
        if a.requires_grad:
            _accumulate(a, g * b.data)
        if b.requires_grad:
            _accumulate(b, g * a.data)

    return _make(data, (a, b), _bw, "mul")


def neg(a):
    def _bw(g):
        _accumulate(a, -g)

    return _make(-a.data, (a,), _bw, "neg")


def relu(x):
    """max(0, x); the subgradient at exactly 0 is 0."""
    positive = x.data > 0
    data = np.where(positive, x.data, 0).astype(x.dtype, copy=False)

    def _bw(g):
        _accumulate(x, g * positive)

    return _make(data, (x,), _bw, "relu")


def tanh(x):
    data = np.tanh(x.data)

    def _bw(g):
        _accumulate(x, g * (1.0 - data * data))

    return _make(data, (x,), _bw, "tanh")


# ---------------------------------------------------------------------------
# shape and reduction


def reshape(x, shape):
    try:
        data = x.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"reshape: {x.shape} -> {shape}") from exc

    def _bw(g):
        _accumulate(x, g.reshape(x.shape))

    return _make(data, (x,), _bw, "reshape")


def tsum(x, axis=None, keepdims=False):
    data = np.asarray(x.data.sum(axis=axis, keepdims=keepdims))

    def _bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(x, np.broadcast_to(g, x.shape))

    return _make(data, (x,), _bw, "sum")


def mean(x, axis=None, keepdims=False):
    count = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def getitem(x, index):
    data = np.array(x.data[index])

    def _bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        _accumulate(x, full)

    return _make(data, (x,), _bw, "getitem")


def stack(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    try:
        data = np.stack([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"stack: mismatched shapes {[t.shape for t in tensors]}") from exc

    def _bw(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                _accumulate(t, np.take(g, i, axis=axis))

    return _make(data, tuple(tensors), _bw, "stack")


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b):
    """Matrix product with NumPy broadcasting over leading dims.

    ``b`` may be 1-D, in which case the last axis of ``a`` is contracted.
    """
    a = _as_tensor(a)
    b = _as_tensor(b, a.dtype)
    if a.ndim < 1 or b.ndim < 1 or a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise DimensionError(f"matmul: inner dimensions disagree {a.shape} @ {b.shape}")
    if a.ndim == 1:
        raise DimensionError("matmul: left operand must have at least 2 dims")
    try:
        data = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise DimensionError(f"matmul: {a.shape} @ {b.shape}") from exc

    def _bw(g):
        if b.ndim == 1:
            if a.requires_grad:
                _accumulate(a, g[..., None] * b.data)
            if b.requires_grad:
                _accumulate(b, (a.data * g[..., None]).reshape(-1, b.shape[0]).sum(axis=0))
            return
        if a.requires_grad:
            _accumulate(a, np.matmul(g, np.swapaxes(b.data, -1, -2)))
        if b.requires_grad:
            _accumulate(b, np.matmul(np.swapaxes(a.data, -1, -2), g))

    return _make(data, (a, b), _bw, "matmul")


def linear(x, weight, bias=None):
    """``x @ weight.T + bias`` over the last axis of ``x``; weight is [out, in]."""
    if x.shape[-1] != weight.shape[1]:
        raise DimensionError(f"linear: input dim {x.shape[-1]} vs weight {weight.shape}")
    data = x.data @ weight.data.T
    if bias is not None:
        data = data + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def _bw(g):
        if x.requires_grad:
            _accumulate(x, g @ weight.data)
        g2 = g.reshape(-1, g.shape[-1])
        if weight.requires_grad:
            _accumulate(weight, g2.T @ x.data.reshape(-1, x.shape[-1]))
        if bias is not None and bias.requires_grad:
            _accumulate(bias, g2.sum(axis=0))

    return _make(data, parents, _bw, "linear")


# ---------------------------------------------------------------------------
# model-specific ops


def conv1d_same(seq, kernel, bias, half_window):
    """Zero-padded 1-D convolution; output length equals input length.

    ``seq`` is [..., L, D]; ``kernel`` is [N_f, (2*half_window+1)*D] acting on
    the concatenation of the embeddings at positions i-half..i+half; ``bias``
    is [N_f]. Returns the pre-activation [..., L, N_f].
    """
    if seq.ndim < 2 or seq.shape[-2] < 1:
        raise DimensionError(f"conv1d_same: empty or 1-D sequence {seq.shape}")
    L, D = seq.shape[-2], seq.shape[-1]
    width = 2 * half_window + 1
    n_f = kernel.shape[0]
    if kernel.ndim != 2 or kernel.shape[1] != width * D:
        raise DimensionError(f"conv1d_same: kernel {kernel.shape} does not fit window {width} x D={D}")
    if bias.shape != (n_f,):
        raise DimensionError(f"conv1d_same: bias {bias.shape} vs {n_f} filters")
    lead = seq.shape[:-2]
    flat = seq.data.reshape(-1, L, D)
    cols = kernels.unfold_same(flat, half_window)  # [B, L, W*D]
    data = (cols @ kernel.data.T + bias.data).reshape(*lead, L, n_f)

    def _bw(g):
        g3 = g.reshape(-1, L, n_f)
        if seq.requires_grad:
            gcols = g3 @ kernel.data
            _accumulate(seq, kernels.fold_same(gcols, half_window, D).reshape(seq.shape))
        g2 = g3.reshape(-1, n_f)
        if kernel.requires_grad:
            _accumulate(kernel, g2.T @ cols.reshape(-1, width * D))
        if bias.requires_grad:
            _accumulate(bias, g2.sum(axis=0))

    return _make(data, (seq, kernel, bias), _bw, "conv1d_same")


def embedding_gather(table, ids):
    """Rows of ``table`` [V, D] at integer ``ids`` of any shape -> [*ids.shape, D]."""
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise IndexError(f"embedding ids must be integers, got {ids.dtype}")
    V = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= V):
        bad = ids[(ids < 0) | (ids >= V)].reshape(-1)[0]
        raise IndexError(f"embedding id {int(bad)} out of range [0, {V})")
    data = table.data[ids]

    def _bw(g):
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            kernels.scatter_add_rows(table.grad, ids, g)

    return _make(data, (table,), _bw, "embedding_gather")


def dropout(x, rate, training, rng):
    """Inverted dropout. Identity when ``training`` is false or ``rate`` is 0."""
    if not 0 <= rate < 1:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0:
        return x
    draw_dtype = np.float32 if x.dtype == np.float32 else np.float64
    keep = (rng.random(x.shape, dtype=draw_dtype) >= rate).astype(x.dtype)
    keep *= 1.0 / (1.0 - rate)
    data = x.data * keep

    def _bw(g):
        _accumulate(x, g * keep)

    return _make(data, (x,), _bw, "dropout")


def masked_softmax(scores, mask=None, axis=-1, allow_empty=False):
    """Softmax over ``axis`` restricted to positions where ``mask`` is true.

    Masked positions get exactly 0. A slice with no unmasked position raises
    :class:`InvalidMaskError` unless ``allow_empty`` is set, in which case
    that slice is all zeros.
    """
    x = scores.data
    if mask is None:
        mask = np.ones(x.shape, dtype=bool)
    else:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    any_open = mask.any(axis=axis, keepdims=True)
    if not allow_empty and not any_open.all():
        raise InvalidMaskError("masked_softmax: every position is masked")
    neg_inf = np.array(-np.inf, dtype=x.dtype)
    shift = np.max(np.where(mask, x, neg_inf), axis=axis, keepdims=True)
    shift = np.where(any_open, shift, 0)
    e = np.where(mask, np.exp(np.where(mask, x - shift, 0)), 0).astype(x.dtype, copy=False)
    # sequential sum: trailing masked zeros then cannot change the rounding
    denom = np.take(np.cumsum(e, axis=axis), [-1], axis=axis)
    data = e / np.where(denom > 0, denom, 1)

    def _bw(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        _accumulate(scores, data * (g - dot))

    return _make(data, (scores,), _bw, "masked_softmax")


def logsumexp(x, axis=-1):
    """Max-stabilised log-sum-exp over ``axis`` (reduced)."""
    m = np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    s = e.sum(axis=axis, keepdims=True)
    data = np.squeeze(np.log(s) + m, axis=axis)

    def _bw(g):
        _accumulate(x, np.expand_dims(g, axis) * (e / s))

    return _make(data, (x,), _bw, "logsumexp")


# ---------------------------------------------------------------------------
# backward pass


def topological_order(root):
    """Nodes reachable from ``root`` with every node after all of its inputs."""
    order, seen = [], set()
    stack_ = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack_.append((parent, False))
    return order


def backward(loss):
    """Populate ``.grad`` of every tensor reachable from the scalar ``loss``.

    The graph is released afterwards; a second call on the same loss raises
    :class:`GraphError` instead of silently double-counting.
    """
    if loss.size != 1:
        raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._released:
        raise GraphError("graph already released by a previous backward(); rerun the forward pass")
    if not loss.requires_grad:
        loss._released = True
        return
    order = topological_order(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    for node in order:
        if node._backward is not None:
            node._backward = None
            node._parents = ()
            node._released = True
            if node is not loss:
                node.grad = None
    loss._released = True


def gradcheck(fn, tensors, eps=1e-5, floor=1e-8):
    """Compare analytic gradients of scalar ``fn()`` with central differences.

    Relative error per element is ``|a - n| / max(|a|, |n|, floor)``.
    Returns ``{tensor name or index: max relative error}``.
    """
    for t in tensors:
        t.grad = None
    loss = fn()
    backward(loss)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    report = {}
    with no_grad():
        for idx, (t, a) in enumerate(zip(tensors, analytic)):
            flat = t.data.reshape(-1)
            if not np.shares_memory(flat, t.data):
                raise GraphError("gradcheck needs contiguous tensors")
            numeric = np.empty(flat.size)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                plus = float(fn().data)
                flat[i] = orig - eps
                minus = float(fn().data)
                flat[i] = orig
                numeric[i] = (plus - minus) / (2 * eps)
            a = a.reshape(-1)
            denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), floor)
            err = np.abs(a - numeric) / denom
            report[t.name or idx] = float(err.max()) if err.size else 0.0
    return report
