"""Array, Parameter and Tape: the reverse-mode core.

An :class:`Array` wraps a row-major numpy buffer. While a :class:`Tape` is
active on the current thread, every primitive whose inputs require a gradient
appends a node to it; :meth:`Tape.backward` walks those nodes newest-first.
"""
from __future__ import annotations

import contextlib
import threading

import numpy as np

_local = threading.local()


class ShapeError(ValueError):
    pass


def get_dtype():
    return getattr(_local, "dtype", np.float32)


@contextlib.contextmanager
def precision(dtype):
    """Temporarily change the dtype new arrays are created with."""
    prev = get_dtype()
    _local.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _local.dtype = prev


def _active_tape():
    stack = getattr(_local, "tapes", None)
    return stack[-1] if stack else None


class Array:
    __slots__ = ("data", "requires_grad", "_parents", "_backward", "__weakref__")

    # make numpy defer to our reflected operators
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=get_dtype())
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

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

    def __repr__(self):
        return f"Array(shape={self.shape}, dtype={self.data.dtype})"

    def __len__(self):
        return self.data.shape[0]

    # operator sugar; the primitives live in ops.py
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)


class Parameter(Array):
    """A learnable leaf. ``grad`` is filled in by :meth:`Tape.backward`."""

    __slots__ = ("name", "grad")

    def __init__(self, data, name=""):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_array(x):
    return x if isinstance(x, Array) else Array(x)


def make_node(data, parents, backward):
    """Wrap ``data`` as the output of a primitive.

    ``backward(g)`` must return one gradient (or None) per parent, each with
    that parent's shape. Nothing is recorded when no tape is active or no
    parent needs a gradient.
    """
    out = Array.__new__(Array)
    out.data = data
    out._parents = ()
    out._backward = None
    tape = _active_tape()
    out.requires_grad = tape is not None and any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
        tape.nodes.append(out)
    return out


class Tape:
    """Ordered record of primitive applications for one forward pass.

    Use as a context manager around the forward computation, then call
    :meth:`backward` on a scalar result. A tape belongs to the thread that
    opened it.
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        stack = getattr(_local, "tapes", None)
        if stack is None:
            stack = _local.tapes = []
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _local.tapes.pop()
        return False

    def backward(self, root, params=None):
        """Reverse sweep from ``root``.

        Returns the gradient of every leaf reached, keyed by ``id(leaf)``. If
        ``params`` is given, their ``.grad`` is overwritten (zero for the ones
        not reachable from ``root``).
        """
        if root.data.size != 1:
            raise ShapeError(f"backward needs a scalar root, got shape {root.shape}")
        if not root.requires_grad:
            raise ValueError("root was not produced on this tape by anything requiring grad")
        grads = {id(root): np.ones_like(root.data)}
        leaves = {}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            contribs = node._backward(g)
            for parent, gp in zip(node._parents, contribs):
                if gp is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if parent._backward is None:
                    leaves[key] = parent
                prev = grads.get(key)
                grads[key] = gp if prev is None else prev + gp
        out = {key: grads[key] for key in leaves}
        if params is not None:
            for p in params:
                g = out.get(id(p))
                p.grad = (np.zeros_like(p.data) if g is None
                          else np.array(g, dtype=p.data.dtype).reshape(p.shape))
        return out


def backward(tape, root, params):
    """Populate ``p.grad`` for every parameter in ``params``."""
    tape.backward(root, params)
    return {p.name: p.grad for p in params}
