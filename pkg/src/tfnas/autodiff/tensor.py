"""
Dense float64 tensors with reverse-mode automatic differentiation.

Every operation returns a new :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to parent gradients. ``backward`` builds a
:class:`Tape` (the topologically ordered graph reachable from the loss) and
visits it once in reverse.

Broadcasting is deliberately narrow: elementwise binary ops accept operands of
identical shape, or a scalar against a tensor. Bias addition along the last
axis is a separate explicit op (:func:`add_bias`). ``matmul`` follows numpy's
stacked-matrix semantics.
"""
import numpy as np
from scipy.special import erf

from ..errors import ContractError, DimensionError, DomainError

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Tensor:
    """
    An n-dimensional float64 array with an optional gradient slot.

    Parameters
    ----------
    data : array-like
        Values; copied to a contiguous float64 array.
    requires_grad : bool
        Whether gradients should be accumulated into ``grad`` on backward.
    name : str, optional
        Label used in error messages.
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _op="leaf"):
        if _op == "leaf":
            self.data = np.array(data, dtype=np.float64)
        else:
            self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.retains_grad = False
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = tuple(_parents)
        self._op = _op
        self._backward = None

    # -- basic properties -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def retain_grad(self):
        """Keep this intermediate's gradient after backward (leaves always keep theirs)."""
        self.retains_grad = True
        return self

    def __repr__(self):
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self._op}{label})"

    def backward(self):
        backward(self)

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / float(other))

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def swapaxes(self, a, b):
        return swapaxes(self, a, b)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, op, backward_fn):
    parents = tuple(parents)
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents), _parents=parents, _op=op)
    if out.requires_grad:
        out._backward = backward_fn
    return out


# -- tape and backward ----------------------------------------------------
class Tape:
    """
    Operations reachable from ``root`` in topological order.

    Every node appears after all of its parents; :meth:`backward` walks the
    list once in reverse. Gradients are accumulated into ``grad`` on leaves
    and on intermediates marked with :meth:`Tensor.retain_grad`; other
    intermediate gradients are released as soon as they are consumed.
    """

    def __init__(self, root):
        self.root = root
        order, seen = [], set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.nodes = order

    def __len__(self):
        return len(self.nodes)

    def backward(self, seed_grad=None):
        root = self.root
        if seed_grad is None:
            if root.size != 1:
                raise ContractError(f"backward needs a scalar loss, got shape {root.shape}")
            seed_grad = np.ones_like(root.data)
        local = {id(root): np.asarray(seed_grad, dtype=np.float64)}
        for node in reversed(self.nodes):
            g = local.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None or node.retains_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                local[key] = pg if key not in local else local[key] + pg


def backward(loss, tape=None):
    """Populate ``grad`` on every leaf (and retained intermediate) ``loss`` depends on.

    Gradients accumulate across calls; zero them with :func:`zero_grad`.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    (tape or Tape(loss)).backward()


def zero_grad(tensors):
    for t in tensors:
        t.grad = None


# -- elementwise -----------------------------------------------------------
def _binary_operands(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise DimensionError(f"elementwise shapes {a.shape} and {b.shape} are not compatible")
    return a, b


def _reduce_to(g, t):
    if g.shape == t.shape:
        return g
    return np.sum(g).reshape(t.shape)


def add(a, b):
    a, b = _binary_operands(a, b)
    return _make(a.data + b.data, (a, b), "add", lambda g: (_reduce_to(g, a), _reduce_to(g, b)))


def sub(a, b):
    a, b = _binary_operands(a, b)
    return _make(a.data - b.data, (a, b), "sub", lambda g: (_reduce_to(g, a), _reduce_to(-g, b)))


def mul(a, b):
    a, b = _binary_operands(a, b)

    def bw(g):
        return _reduce_to(g * b.data, a), _reduce_to(g * a.data, b)

    return _make(a.data * b.data, (a, b), "mul", bw)


def power(x, p):
    x = as_tensor(x)
    p = float(p)
    if p != int(p) and np.any(x.data < 0):
        raise DomainError("non-integer power of a negative value")
    if p < 0 and np.any(x.data == 0):
        raise DomainError("negative power of zero")
    out = x.data ** p
    return _make(out, (x,), f"power({p})", lambda g: (g * p * x.data ** (p - 1.0),))


def exp(x):
    x = as_tensor(x)
    out = np.exp(x.data)
    return _make(out, (x,), "exp", lambda g: (g * out,))


def log(x):
    x = as_tensor(x)
    if np.any(x.data <= 0):
        raise DomainError("log of a non-positive value")
    return _make(np.log(x.data), (x,), "log", lambda g: (g / x.data,))


def tanh(x):
    x = as_tensor(x)
    out = np.tanh(x.data)
    return _make(out, (x,), "tanh", lambda g: (g * (1.0 - out * out),))


def sigmoid(x):
    x = as_tensor(x)
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _make(out, (x,), "sigmoid", lambda g: (g * out * (1.0 - out),))


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    return _make(x.data * mask, (x,), "relu", lambda g: (g * mask,))


def gelu(x):
    """Exact GELU, ``x * Phi(x)`` with the Gaussian CDF."""
    x = as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data / _SQRT2))
    out = x.data * cdf
    slope = cdf + x.data * _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
    return _make(out, (x,), "gelu", lambda g: (g * slope,))


_UNARY = {"tanh": tanh, "sigmoid": sigmoid, "relu": relu, "gelu": gelu, "exp": exp, "log": log}
_BINARY = {"add": add, "sub": sub, "mul": mul}


def elementwise(op_id, *operands, p=None):
    """Dispatch an elementwise op by name (``power`` takes ``p``)."""
    if op_id in _UNARY:
        (x,) = operands
        return _UNARY[op_id](x)
    if op_id in _BINARY:
        a, b = operands
        return _BINARY[op_id](a, b)
    if op_id == "power":
        (x,) = operands
        return power(x, p)
    raise ValueError(f"unknown elementwise op {op_id!r}")


def add_bias(x, b):
    """Add a vector ``b`` along the last axis of ``x``."""
    x, b = as_tensor(x), as_tensor(b)
    if b.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise DimensionError(f"bias of shape {b.shape} does not match last axis of {x.shape}")
    return _make(
        x.data + b.data,
        (x, b),
        "add_bias",
        lambda g: (g, g.reshape(-1, b.shape[0]).sum(axis=0)),
    )


# -- linear algebra --------------------------------------------------------
def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def matmul(a, b):
    """Matrix product with numpy's stacked-matrix semantics (both operands >= 2-D)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError("matmul operands must be at least 2-D")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    if b.ndim == 2:
        # one GEMM over the collapsed leading axes
        k = a.shape[-1]
        out = (a.data.reshape(-1, k) @ b.data).reshape(a.shape[:-1] + (b.shape[1],))

        def bw(g):
            g2 = g.reshape(-1, g.shape[-1])
            return (g2 @ b.data.T).reshape(a.shape), a.data.reshape(-1, k).T @ g2

        return _make(out, (a, b), "matmul", bw)
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise DimensionError(str(exc)) from None

    def bw(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(out, (a, b), "matmul", bw)


# -- shape manipulation ----------------------------------------------------
def reshape(x, shape):
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(str(exc)) from None
    return _make(out, (x,), "reshape", lambda g: (g.reshape(x.shape),))


def swapaxes(x, a, b):
    x = as_tensor(x)
    return _make(np.swapaxes(x.data, a, b), (x,), "swapaxes", lambda g: (np.swapaxes(g, a, b),))


def getitem(x, index):
    x = as_tensor(x)
    out = x.data[index]

    def bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return _make(out, (x,), "getitem", bw)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(str(exc)) from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _make(out, tensors, "concat", lambda g: tuple(np.split(g, bounds, axis=axis)))


def tsum(x, axis=None):
    x = as_tensor(x)
    out = np.sum(x.data, axis=axis)

    def bw(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(out, (x,), "sum", bw)


def mean(x, axis=None):
    x = as_tensor(x)
    count = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(tsum(x, axis), 1.0 / float(count))


# -- network building blocks ------------------------------------------------
def embedding(table, ids):
    """Row lookup ``table[ids]``; gradient scatters back into the table."""
    table = as_tensor(table)
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"token id outside vocabulary of size {table.shape[0]}")
    return getitem(table, ids)


def softmax(x, axis=-1):
    """Max-shifted softmax along ``axis``."""
    x = as_tensor(x)
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"axis {axis} invalid for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return _make(out, (x,), "softmax", bw)


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize over the last axis, then scale by ``gain`` and shift by ``bias``."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError("layer_norm gain/bias must match the last axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def bw(g):
        gxhat = g * gain.data
        gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        flat = g.reshape(-1, d)
        return gx, (flat * xhat.reshape(-1, d)).sum(axis=0), flat.sum(axis=0)

    return _make(out, (x, gain, bias), "layer_norm", bw)


def seq_windows(x, kernel_size):
    """
    Centered sliding windows along axis 1 with zero padding.

    Maps ``(N, T, C)`` to ``(N, T, K, C)`` where tap ``k`` holds position
    ``t + k - K // 2``.
    """
    x = as_tensor(x)
    if x.ndim != 3:
        raise DimensionError("seq_windows expects (N, T, C)")
    n, t, c = x.shape
    half = kernel_size // 2
    pos = np.arange(t)[:, None] + np.arange(kernel_size)[None, :] - half
    valid = (pos >= 0) & (pos < t)
    clipped = np.clip(pos, 0, t - 1)
    out = x.data[:, clipped, :] * valid[None, :, :, None]

    def bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, (slice(None), clipped[valid]), g[:, valid, :])
        return (full,)

    return _make(out, (x,), "seq_windows", bw)


def cross_entropy_loss(logits, targets):
    """Mean negative log-likelihood of integer ``targets`` under ``logits`` rows."""
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise DimensionError("cross_entropy_loss expects logits (B, C) and targets (B,)")
    b, c = logits.shape
    if targets.size and (targets.min() < 0 or targets.max() >= c):
        raise IndexError(f"target index outside [0, {c})")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logsumexp
    rows = np.arange(b)
    loss = -logp[rows, targets].mean()

    def bw(g):
        grad = np.exp(logp)
        grad[rows, targets] -= 1.0
        return (grad * (g / b),)

    return _make(loss, (logits,), "cross_entropy", bw)
