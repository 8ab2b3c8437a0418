"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Tensors wrap numpy arrays and record, per operation, their input tensors and
a vector-Jacobian-product closure. ``backward`` replays the recorded graph in
reverse topological order. Everything is float64 and row-major; slices copy.

Gradients accumulate into ``Tensor.grad`` across repeated ``backward`` calls;
training loops are expected to reset grads each step.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "Graph",
    "no_grad",
    "add",
    "sub",
    "mul",
    "neg",
    "tanh",
    "sigmoid",
    "one_minus",
    "log",
    "abs_",
    "clip",
    "elementwise",
    "matmul",
    "softmax",
    "concat",
    "gather_rows",
    "take_rows",
    "reduce",
    "reduce_sum",
    "reduce_mean",
    "reshape",
    "transpose",
    "backward",
    "grad_check",
]

_grad_enabled = True


class no_grad:
    """Context manager that disables graph recording (forward values only)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    """Dense float64 array participating in a reverse-mode graph."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _ensure(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents, vjp) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    rg = False
    if _grad_enabled:
        for p in parents:
            if p.requires_grad:
                rg = True
                break
    out.requires_grad = rg
    if rg:
        out._parents = parents
        out._vjp = vjp
    else:
        out._parents = ()
        out._vjp = None
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum g over broadcast dimensions so it matches ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise operations
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _ensure(a), _ensure(b)
    ad, bd = a.data, b.data
    try:
        out = ad + bd
    except ValueError:
        raise ValueError(f"add: shapes {ad.shape} and {bd.shape} are not broadcastable")
    ash, bsh = ad.shape, bd.shape
    return _make(out, (a, b), lambda g: (_unbroadcast(g, ash), _unbroadcast(g, bsh)))


def sub(a, b) -> Tensor:
    a, b = _ensure(a), _ensure(b)
    ad, bd = a.data, b.data
    try:
        out = ad - bd
    except ValueError:
        raise ValueError(f"sub: shapes {ad.shape} and {bd.shape} are not broadcastable")
    ash, bsh = ad.shape, bd.shape
    return _make(out, (a, b), lambda g: (_unbroadcast(g, ash), _unbroadcast(-g, bsh)))


def mul(a, b) -> Tensor:
    a, b = _ensure(a), _ensure(b)
    ad, bd = a.data, b.data
    try:
        out = ad * bd
    except ValueError:
        raise ValueError(f"mul: shapes {ad.shape} and {bd.shape} are not broadcastable")
    return _make(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
    )


def neg(a) -> Tensor:
    a = _ensure(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def tanh(a) -> Tensor:
    a = _ensure(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # piecewise form avoids exp overflow for large negative inputs
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = _ensure(a)
    out = _sigmoid(np.asarray(a.data, dtype=np.float64))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def one_minus(a) -> Tensor:
    a = _ensure(a)
    return _make(1.0 - a.data, (a,), lambda g: (-g,))


def log(a) -> Tensor:
    a = _ensure(a)
    ad = a.data
    return _make(np.log(ad), (a,), lambda g: (g / ad,))


def abs_(a) -> Tensor:
    """|a|, with subgradient 0 at exactly 0 (np.sign convention)."""
    a = _ensure(a)
    ad = a.data
    return _make(np.abs(ad), (a,), lambda g: (g * np.sign(ad),))


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient is zero wherever the clamp binds."""
    a = _ensure(a)
    ad = a.data
    out = np.clip(ad, lo, hi)
    inside = (ad > lo) & (ad < hi)
    return _make(out, (a,), lambda g: (g * inside,))


_ELEMENTWISE_BINARY = {"add": add, "mul": mul}
_ELEMENTWISE_UNARY = {"tanh": tanh, "sigmoid": sigmoid, "one_minus": one_minus, "one-minus": one_minus}


def elementwise(op_kind: str, a, b=None) -> Tensor:
    """Dispatch by name: add, mul (binary); tanh, sigmoid, one_minus (unary)."""
    if op_kind in _ELEMENTWISE_BINARY:
        if b is None:
            raise ValueError(f"elementwise: {op_kind!r} needs two operands")
        return _ELEMENTWISE_BINARY[op_kind](a, b)
    if op_kind in _ELEMENTWISE_UNARY:
        if b is not None:
            raise ValueError(f"elementwise: {op_kind!r} takes a single operand")
        return _ELEMENTWISE_UNARY[op_kind](a)
    raise ValueError(f"elementwise: unknown op kind {op_kind!r}")


# ---------------------------------------------------------------------------
# linear algebra and structure
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = _ensure(a), _ensure(b)
    ad, bd = a.data, b.data
    if ad.ndim != 2 or bd.ndim != 2:
        raise ValueError(f"matmul: expected 2-D operands, got {ad.shape} and {bd.shape}")
    if ad.shape[1] != bd.shape[0]:
        raise ValueError(f"matmul: inner dimensions disagree: {ad.shape} @ {bd.shape}")
    out = ad @ bd
    return _make(out, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def _check_axis(axis: int, ndim: int, opname: str) -> int:
    if not -ndim <= axis < ndim:
        raise ValueError(f"{opname}: invalid axis {axis} for {ndim}-D tensor")
    return axis % ndim


def softmax(x, axis: int = -1, mask=None) -> Tensor:
    """Softmax along ``axis``. Masked positions get weight exactly 0.

    ``mask`` is a boolean array of x's shape marking real positions; every
    slice along ``axis`` must contain at least one unmasked position.
    """
    x = _ensure(x)
    xd = x.data
    axis = _check_axis(axis, xd.ndim, "softmax")
    if mask is None:
        mx = xd.max(axis=axis, keepdims=True)
        e = np.exp(xd - mx)
    else:
        m = np.asarray(mask, dtype=bool)
        if m.shape != xd.shape:
            raise ValueError(f"softmax: mask shape {m.shape} does not match input shape {xd.shape}")
        counts = m.sum(axis=axis)
        if np.any(counts == 0):
            raise ValueError("softmax: fully masked slice (no unmasked position along axis)")
        z = np.where(m, xd, -np.inf)
        mx = z.max(axis=axis, keepdims=True)
        e = np.exp(z - mx)
    denom = e.sum(axis=axis, keepdims=True)
    out = e / denom

    def vjp(g):
        s = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - s),)

    return _make(out, (x,), vjp)


def concat(tensors, axis: int = 0) -> Tensor:
    ts = [_ensure(t) for t in tensors]
    if not ts:
        raise ValueError("concat: need at least one tensor")
    ndim = ts[0].data.ndim
    axis = _check_axis(axis, ndim, "concat")
    base = list(ts[0].data.shape)
    for t in ts[1:]:
        sh = list(t.data.shape)
        if len(sh) != ndim or any(sh[i] != base[i] for i in range(ndim) if i != axis):
            raise ValueError(f"concat: dimension mismatch between {tuple(base)} and {tuple(sh)} on axis {axis}")
    out = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.data.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out, tuple(ts), vjp)


def gather_rows(t, index: int) -> Tensor:
    """Row ``index`` of a 2-D tensor as a 1-D tensor; backward scatters into that row only."""
    t = _ensure(t)
    td = t.data
    if td.ndim != 2:
        raise ValueError(f"gather_rows: expected 2-D tensor, got shape {td.shape}")
    if not 0 <= index < td.shape[0]:
        raise IndexError(f"gather_rows: row index {index} out of bounds for {td.shape[0]} rows")
    out = td[index].copy()

    def vjp(g):
        z = np.zeros_like(td)
        z[index] = g
        return (z,)

    return _make(out, (t,), vjp)


def take_rows(t, indices) -> Tensor:
    """Rows ``indices`` of a 2-D tensor; duplicate indices accumulate gradient."""
    t = _ensure(t)
    td = t.data
    if td.ndim != 2:
        raise ValueError(f"take_rows: expected 2-D tensor, got shape {td.shape}")
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= td.shape[0]):
        raise IndexError(f"take_rows: index out of bounds for {td.shape[0]} rows")
    out = td[idx]

    def vjp(g):
        z = np.zeros_like(td)
        np.add.at(z, idx, g)
        return (z,)

    return _make(out, (t,), vjp)


def reduce(op_kind: str, t, axis=None) -> Tensor:
    t = _ensure(t)
    td = t.data
    if axis is not None:
        axis = _check_axis(axis, td.ndim, "reduce")
    if op_kind == "sum":
        out = td.sum(axis=axis)
        scale = 1.0
    elif op_kind == "mean":
        out = td.mean(axis=axis)
        scale = 1.0 / (td.size if axis is None else td.shape[axis])
    else:
        raise ValueError(f"reduce: unknown op kind {op_kind!r}")

    def vjp(g):
        if axis is None:
            return (np.full(td.shape, g * scale),)
        return (np.broadcast_to(np.expand_dims(g * scale, axis), td.shape),)

    return _make(out, (t,), vjp)


def reduce_sum(t, axis=None) -> Tensor:
    return reduce("sum", t, axis)


def reduce_mean(t, axis=None) -> Tensor:
    return reduce("mean", t, axis)


def reshape(t, shape) -> Tensor:
    t = _ensure(t)
    td = t.data
    out = td.reshape(shape)
    return _make(out, (t,), lambda g: (g.reshape(td.shape),))


def transpose(t) -> Tensor:
    t = _ensure(t)
    td = t.data
    if td.ndim != 2:
        raise ValueError(f"transpose: expected 2-D tensor, got shape {td.shape}")
    return _make(td.T.copy(), (t,), lambda g: (g.T,))


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------


def _topo(root: Tensor):
    """Nodes reachable from ``root`` through recorded parents, inputs first."""
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        nid = id(node)
        if nid in visited:
            continue
        visited.add(nid)
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


class Graph:
    """Topologically ordered list of the nodes reachable from one output."""

    def __init__(self, nodes):
        self.nodes = list(nodes)

    @classmethod
    def from_output(cls, output: Tensor) -> "Graph":
        return cls(_topo(_ensure(output)))

    def __len__(self):
        return len(self.nodes)


def backward(loss: Tensor):
    """Populate ``grad`` for every requires_grad tensor reachable from ``loss``.

    Visits each graph node exactly once. Grads accumulate across calls.
    """
    loss = _ensure(loss)
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    order = _topo(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g if node.grad is None else node.grad + g
        if node._vjp is None:
            continue
        parts = node._vjp(g)
        for p, part in zip(node._parents, parts):
            if part is None or not p.requires_grad:
                continue
            pid = id(p)
            if pid in grads:
                grads[pid] = grads[pid] + part
            else:
                grads[pid] = part


def grad_check(f, inputs, h: float = 1e-6) -> float:
    """Compare analytic gradients of scalar-valued ``f`` against central differences.

    Returns the max over all requires_grad input components of
    |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    """
    inputs = [_ensure(t) for t in inputs]
    for t in inputs:
        t.grad = None
    out = f(*inputs)
    if out.data.size != 1:
        raise ValueError("grad_check: function must be scalar-valued")
    if out.requires_grad:
        backward(out)
    max_err = 0.0
    with no_grad():
        for t in inputs:
            if not t.requires_grad:
                continue
            analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
            aflat = analytic.reshape(-1)
            flat = t.data.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                fp = float(f(*inputs).data)
                flat[i] = orig - h
                fm = float(f(*inputs).data)
                flat[i] = orig
                numeric = (fp - fm) / (2.0 * h)
                err = abs(aflat[i] - numeric) / max(1e-8, abs(aflat[i]) + abs(numeric))
                if err > max_err:
                    max_err = err
    for t in inputs:
        t.grad = None
    return max_err
