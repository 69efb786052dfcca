"""Reverse-mode differentiation over numpy arrays.

A :class:`Tape` records every operation applied to a :class:`Var` in
execution order; :meth:`Tape.backward` walks the record in reverse and
accumulates adjoints.  The op functions in this module accept either
``Var`` or plain arrays.  When no argument is a ``Var`` they just compute
the value, so the same layer code serves plain evaluation and training.

Matrix ops act on the last two axes and broadcast over leading ones.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Tape",
    "Var",
    "value_of",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "square",
    "matmul",
    "transpose",
    "exp",
    "sinh",
    "cosh",
    "tanh",
    "sigmoid",
    "log",
    "sum",
    "mean",
    "reshape",
    "take",
    "stack",
    "max_entry",
    "max_abs_entry",
    "conv2d_valid",
    "conv1d_valid",
    "log_softmax",
    "softmax",
]


class _Node:
    __slots__ = ("kind", "parents", "vjp")

    def __init__(self, kind, parents, vjp):
        self.kind = kind
        self.parents = parents
        self.vjp = vjp


class Var:
    """A value recorded on a tape."""

    __slots__ = ("value", "tape", "index")
    __array_priority__ = 100

    def __init__(self, value, tape, index):
        self.value = value
        self.tape = tape
        self.index = index

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Var(#{self.index}, shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, index):
        return take(self, index)


class Tape:
    """Ordered record of forward operations.

    ``nodes[i]`` holds the op kind, the tape indices of its ``Var`` inputs
    and the vector-Jacobian product closure.  Parameters are leaf nodes
    created through :meth:`param`.
    """

    def __init__(self):
        self.nodes = []
        self.values = []
        self.params = {}
        self.adjoints = None

    def __len__(self):
        return len(self.nodes)

    def param(self, name, value):
        if name in self.params:
            raise ValueError(f"parameter {name!r} already on tape")
        var = self._push("param", np.array(value, dtype=np.float64), (), None)
        self.params[name] = var
        return var

    def _push(self, kind, value, parents, vjp):
        index = len(self.nodes)
        self.nodes.append(_Node(kind, parents, vjp))
        self.values.append(value)
        return Var(value, self, index)

    def backward(self, loss):
        """Propagate d(loss)/d(node) for every node; return parameter gradients.

        Parameters that the loss does not depend on receive zero arrays.
        """
        if not isinstance(loss, Var) or loss.tape is not self:
            raise ValueError("loss must be a Var recorded on this tape")
        if loss.value.size != 1:
            raise ValueError(f"loss must be scalar, got shape {loss.value.shape}")
        adjoints = [None] * len(self.nodes)
        adjoints[loss.index] = np.ones_like(loss.value)
        for i in range(loss.index, -1, -1):
            g = adjoints[i]
            node = self.nodes[i]
            if g is None or node.vjp is None:
                continue
            for parent in node.parents:
                if parent is not None and parent >= i:
                    raise ValueError(f"tape is not a DAG: node {i} reads node {parent}")
            grads = node.vjp(g)
            for parent, pg in zip(node.parents, grads):
                if parent is None or pg is None:
                    continue
                if adjoints[parent] is None:
                    adjoints[parent] = np.array(pg, dtype=np.float64)
                else:
                    adjoints[parent] = adjoints[parent] + pg
        self.adjoints = adjoints
        return {
            name: adjoints[var.index] if adjoints[var.index] is not None else np.zeros_like(var.value)
            for name, var in self.params.items()
        }


def value_of(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _tape_of(args):
    tape = None
    for a in args:
        if isinstance(a, Var):
            if tape is None:
                tape = a.tape
            elif a.tape is not tape:
                raise ValueError("operands are recorded on different tapes")
    return tape


def _record(kind, value, args, vjp):
    """Wrap ``value`` as a Var if any arg is a Var; else return it bare.

    ``vjp(g, needs)`` returns one gradient per arg; ``needs[k]`` says
    whether arg ``k`` is a Var, so constant branches can be skipped.
    """
    tape = _tape_of(args)
    if tape is None:
        return value
    parents = tuple(a.index if isinstance(a, Var) else None for a in args)
    needs = tuple(p is not None for p in parents)
    return tape._push(kind, value, parents, lambda g: vjp(g, needs))


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- element-wise arithmetic ------------------------------------------------


def add(a, b):
    av, bv = value_of(a), value_of(b)
    return _record(
        "add",
        av + bv,
        (a, b),
        lambda g, n: (
            _unbroadcast(g, av.shape) if n[0] else None,
            _unbroadcast(g, bv.shape) if n[1] else None,
        ),
    )


def sub(a, b):
    av, bv = value_of(a), value_of(b)
    return _record(
        "sub",
        av - bv,
        (a, b),
        lambda g, n: (
            _unbroadcast(g, av.shape) if n[0] else None,
            _unbroadcast(-g, bv.shape) if n[1] else None,
        ),
    )


def mul(a, b):
    """Element-wise product (Hadamard product for matrices)."""
    av, bv = value_of(a), value_of(b)
    return _record(
        "mul",
        av * bv,
        (a, b),
        lambda g, n: (
            _unbroadcast(g * bv, av.shape) if n[0] else None,
            _unbroadcast(g * av, bv.shape) if n[1] else None,
        ),
    )


def div(a, b):
    av, bv = value_of(a), value_of(b)
    out = av / bv
    return _record(
        "div",
        out,
        (a, b),
        lambda g, n: (
            _unbroadcast(g / bv, av.shape) if n[0] else None,
            _unbroadcast(-g * out / bv, bv.shape) if n[1] else None,
        ),
    )


def neg(a):
    return _record("neg", -value_of(a), (a,), lambda g, n: (-g,))


def square(a):
    av = value_of(a)
    return _record("square", av * av, (a,), lambda g, n: (2.0 * av * g,))


def _unary(kind, f, df):
    def op(a):
        av = value_of(a)
        out = f(av)
        return _record(kind, out, (a,), lambda g, n: (g * df(av, out),))

    op.__name__ = kind
    return op


exp = _unary("exp", np.exp, lambda x, y: y)
sinh = _unary("sinh", np.sinh, lambda x, y: np.cosh(x))
cosh = _unary("cosh", np.cosh, lambda x, y: np.sinh(x))
tanh = _unary("tanh", np.tanh, lambda x, y: 1.0 - y * y)
log = _unary("log", np.log, lambda x, y: 1.0 / x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


sigmoid = _unary("sigmoid", _sigmoid, lambda x, y: y * (1.0 - y))


# -- linear algebra and shape ----------------------------------------------


def matmul(a, b):
    av, bv = value_of(a), value_of(b)

    def vjp(g, n):
        ga = gb = None
        if n[0]:
            ga = _unbroadcast(g @ np.swapaxes(bv, -1, -2), av.shape)
        if n[1]:
            gb = _unbroadcast(np.swapaxes(av, -1, -2) @ g, bv.shape)
        return ga, gb

    return _record("matmul", av @ bv, (a, b), vjp)


def transpose(a):
    """Swap the last two axes."""
    return _record(
        "transpose",
        np.swapaxes(value_of(a), -1, -2),
        (a,),
        lambda g, n: (np.swapaxes(g, -1, -2),),
    )


def sum(a, axis=None, keepdims=False):
    av = value_of(a)
    out = np.sum(av, axis=axis, keepdims=keepdims)

    def vjp(g, n):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, av.shape),)

    return _record("sum", out, (a,), vjp)


def mean(a, axis=None, keepdims=False):
    av = value_of(a)
    count = av.size if axis is None else np.prod([av.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a, shape):
    av = value_of(a)
    return _record("reshape", av.reshape(shape), (a,), lambda g, n: (g.reshape(av.shape),))


def take(a, index):
    """Basic (non-fancy) indexing, e.g. ``x[:, t]``."""
    av = value_of(a)

    def vjp(g, n):
        out = np.zeros_like(av)
        out[index] = g
        return (out,)

    return _record("take", av[index], (a,), vjp)


def stack(items, axis=0):
    vals = [value_of(x) for x in items]

    def vjp(g, n):
        parts = np.moveaxis(g, axis, 0)
        return tuple(parts[k] if n[k] else None for k in range(len(items)))

    return _record("stack", np.stack(vals, axis=axis), tuple(items), vjp)


def _argmax_mask(values, magnitude):
    """One-hot mask over the last two axes at the first (row-major) argmax."""
    lead = values.shape[:-2]
    flat = magnitude.reshape(lead + (-1,))
    idx = np.argmax(flat, axis=-1)
    mask = np.zeros_like(flat)
    np.put_along_axis(mask, idx[..., None], 1.0, axis=-1)
    return mask.reshape(values.shape)


def max_entry(a):
    """Largest entry over the last two axes, kept as a (..., 1, 1) array.

    The gradient goes to one entry only: ties resolve to the lowest
    row-major index.
    """
    av = value_of(a)
    out = np.max(av, axis=(-2, -1), keepdims=True)
    return _record("max_entry", out, (a,), lambda g, n: (_argmax_mask(av, av) * g,))


def max_abs_entry(a):
    """Largest ``|entry|`` over the last two axes, kept as (..., 1, 1)."""
    av = value_of(a)
    out = np.max(np.abs(av), axis=(-2, -1), keepdims=True)
    return _record(
        "max_abs_entry",
        out,
        (a,),
        lambda g, n: (_argmax_mask(av, np.abs(av)) * np.sign(av) * g,),
    )


# -- convolutions -------------------------------------------------------------


def conv2d_valid(x, w):
    """Multi-channel valid cross-correlation.

    ``x`` has shape (N, C, D, D) and ``w`` has shape (M, C, K, K); the
    result (N, M, D-K+1, D-K+1) is
    ``out[n, m, i, j] = sum_{c,p,q} w[m, c, p, q] * x[n, c, i+p, j+q]``.
    """
    xv, wv = value_of(x), value_of(w)
    k = wv.shape[-1]
    windows = sliding_window_view(xv, (k, k), axis=(-2, -1))
    out = np.einsum("ncijpq,mcpq->nmij", windows, wv, optimize=True)

    def vjp(g, n):
        gx = gw = None
        if n[1]:
            gw = np.einsum("ncijpq,nmij->mcpq", windows, g, optimize=True)
        if n[0]:
            gx = np.zeros_like(xv)
            size = g.shape[-1]
            for p in range(k):
                for q in range(k):
                    gx[:, :, p : p + size, q : q + size] += np.einsum(
                        "nmij,mc->ncij", g, wv[:, :, p, q], optimize=True
                    )
        return gx, gw

    return _record("conv2d_valid", out, (x, w), vjp)


def conv1d_valid(x, w):
    """Valid 1-d cross-correlation over time.

    ``x`` has shape (N, L, C_in), ``w`` has shape (K, C_in, C_out); the
    result has shape (N, L-K+1, C_out).
    """
    xv, wv = value_of(x), value_of(w)
    k = wv.shape[0]
    windows = sliding_window_view(xv, k, axis=1)  # (N, L', C_in, K)
    out = np.einsum("nlck,kco->nlo", windows, wv, optimize=True)

    def vjp(g, n):
        gx = gw = None
        if n[1]:
            gw = np.einsum("nlck,nlo->kco", windows, g, optimize=True)
        if n[0]:
            gx = np.zeros_like(xv)
            size = g.shape[1]
            for p in range(k):
                gx[:, p : p + size, :] += g @ wv[p].T
        return gx, gw

    return _record("conv1d_valid", out, (x, w), vjp)


# -- classification head ---------------------------------------------------


def log_softmax(a):
    """Log-softmax over the last axis, max-shifted for stability."""
    av = value_of(a)
    shifted = av - np.max(av, axis=-1, keepdims=True)
    out = shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))
    probs = np.exp(out)
    return _record(
        "log_softmax",
        out,
        (a,),
        lambda g, n: (g - probs * np.sum(g, axis=-1, keepdims=True),),
    )


def softmax(a):
    return exp(log_softmax(a))
