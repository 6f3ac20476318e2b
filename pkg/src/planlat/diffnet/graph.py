"""Define-by-run reverse-mode differentiation over small dense tensors.

Values are float64 numpy arrays. Vectors may carry a leading batch axis
(shape ``(B, n)``); a 1-D value of length ``n`` is treated as one row.
Nodes are appended to the graph's tape in creation order, which is a valid
topological order, so ``backward`` simply walks the tape in reverse.
"""
import numpy as np

from ..errors import DimensionError, UsageError
from . import kernels


def as_tensor(data, ndim=None):
    """Convert ``data`` to a finite float64 array, rejecting NaN/Inf."""
    arr = np.array(data, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise DimensionError(f"expected a {ndim}-d tensor, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError("tensor contains non-finite values")
    return arr


class Param:
    """A trainable tensor with its gradient and momentum buffer."""

    __slots__ = ("id", "value", "grad", "momentum_buf")

    def __init__(self, id, value):
        self.id = id
        self.value = np.ascontiguousarray(as_tensor(value))
        if self.value.ndim not in (1, 2):
            raise DimensionError(f"param {id!r} must be 1-d or 2-d")
        self.grad = np.zeros_like(self.value)
        self.momentum_buf = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Param({self.id!r}, shape={self.value.shape})"


class Node:
    __slots__ = ("graph", "op", "inputs", "value", "adjoint", "_backward", "param")

    def __init__(self, graph, op, inputs, value, backward=None, param=None):
        self.graph = graph
        self.op = op
        self.inputs = inputs
        self.value = value
        self.adjoint = None
        self._backward = backward
        self.param = param

    @property
    def shape(self):
        return self.value.shape

    def _accumulate(self, g):
        if self.adjoint is None:
            self.adjoint = np.array(g, dtype=np.float64)
        else:
            self.adjoint = self.adjoint + g

    def __repr__(self):
        return f"Node({self.op}, shape={self.value.shape})"


def _rows(a):
    return a if a.ndim == 2 else a.reshape(1, -1)


class Graph:
    """A tape of nodes built while evaluating an expression."""

    def __init__(self):
        self.tape = []
        self._param_nodes = {}

    def _add(self, op, inputs, value, backward=None, param=None):
        node = Node(self, op, inputs, value, backward, param)
        self.tape.append(node)
        return node

    def _own(self, *nodes):
        for n in nodes:
            if not isinstance(n, Node) or n.graph is not self:
                raise UsageError("node belongs to a different graph")

    # leaves

    def input(self, value):
        return self._add("input", (), as_tensor(value))

    def param(self, p):
        """Reference ``p``; repeated references share one node."""
        node = self._param_nodes.get(id(p))
        if node is None:
            node = self._add("param", (), p.value, param=p)
            self._param_nodes[id(p)] = node
        return node

    # operations

    def affine(self, W, b, x):
        """``W·x + b`` applied to each row of ``x``."""
        W, b = self._ref(W), self._ref(b)
        self._own(W, b, x)
        Wv, bv, xv = W.value, b.value, x.value
        if Wv.ndim != 2 or bv.ndim != 1 or bv.shape[0] != Wv.shape[0]:
            raise DimensionError(f"affine: W {Wv.shape} and b {bv.shape} do not conform")
        if xv.ndim not in (1, 2) or xv.shape[-1] != Wv.shape[1]:
            raise DimensionError(f"affine: W {Wv.shape} cannot apply to x {xv.shape}")
        x2 = np.ascontiguousarray(_rows(xv))
        out = kernels.affine_forward(x2, Wv, bv)
        if xv.ndim == 1:
            out = out[0]

        def backward(node):
            g = np.ascontiguousarray(_rows(node.adjoint))
            dW = np.zeros_like(Wv)
            db = np.zeros_like(bv)
            dx = kernels.affine_backward(g, x2, Wv, dW, db)
            W._accumulate(dW)
            b._accumulate(db)
            x._accumulate(dx.reshape(xv.shape))

        return self._add("affine", (W, b, x), out, backward)

    def relu(self, x):
        self._own(x)
        xv = x.value
        x2 = np.ascontiguousarray(_rows(xv))
        y = kernels.relu_forward(x2).reshape(xv.shape)

        def backward(node):
            g = np.ascontiguousarray(_rows(node.adjoint))
            x._accumulate(kernels.relu_backward(g, _rows(y)).reshape(xv.shape))

        return self._add("relu", (x,), y, backward)

    def concat(self, xs):
        """Concatenate along the feature (last) axis, preserving order."""
        xs = list(xs)
        if not xs:
            raise UsageError("concat needs at least one input")
        self._own(*xs)
        ndims = {x.value.ndim for x in xs}
        if len(ndims) != 1:
            raise DimensionError("concat inputs mix batched and unbatched values")
        if ndims == {2} and len({x.value.shape[0] for x in xs}) != 1:
            raise DimensionError("concat inputs have different batch sizes")
        widths = [x.value.shape[-1] for x in xs]
        out = np.concatenate([x.value for x in xs], axis=-1)

        def backward(node):
            start = 0
            for x, w in zip(xs, widths):
                x._accumulate(node.adjoint[..., start:start + w])
                start += w

        return self._add("concat", tuple(xs), out, backward)

    def column(self, x, j):
        """Select feature ``j`` of every row (shape ``(B,)`` or scalar)."""
        self._own(x)
        xv = x.value
        out = np.array(xv[..., j])

        def backward(node):
            g = np.zeros_like(xv)
            g[..., j] = node.adjoint
            x._accumulate(g)

        return self._add("column", (x,), out, backward)

    def sub(self, a, b):
        a, b = self._ref(a), self._ref(b)
        self._own(a, b)
        if a.value.shape != b.value.shape:
            raise DimensionError(f"sub: shapes {a.value.shape} and {b.value.shape} differ")
        out = a.value - b.value

        def backward(node):
            a._accumulate(node.adjoint)
            b._accumulate(-node.adjoint)

        return self._add("sub", (a, b), out, backward)

    def add(self, a, b):
        self._own(a, b)
        if a.value.shape != b.value.shape:
            raise DimensionError(f"add: shapes {a.value.shape} and {b.value.shape} differ")

        def backward(node):
            a._accumulate(node.adjoint)
            b._accumulate(node.adjoint)

        return self._add("add", (a, b), a.value + b.value, backward)

    def square(self, x):
        self._own(x)
        xv = x.value

        def backward(node):
            x._accumulate(2.0 * xv * node.adjoint)

        return self._add("square", (x,), xv * xv, backward)

    def scale(self, x, c):
        self._own(x)
        c = float(c)

        def backward(node):
            x._accumulate(c * node.adjoint)

        return self._add("scale", (x,), c * x.value, backward)

    def sum(self, x):
        self._own(x)
        xv = x.value

        def backward(node):
            x._accumulate(np.broadcast_to(node.adjoint, xv.shape))

        return self._add("sum", (x,), np.array(xv.sum()), backward)

    def _ref(self, v):
        return self.param(v) if isinstance(v, Param) else v

    # differentiation

    def backward(self, root, seed=1.0, accumulate=True):
        """Propagate ``d root`` back to every reachable :class:`Param`.

        Param gradients are accumulated (``+=``) so several roots can be
        combined; call ``zero_grad`` between independent evaluations. With
        ``accumulate=False`` the gradients are only left on the graph, see
        :meth:`param_grads`.
        """
        self._own(root)
        if root.value.size != 1:
            raise UsageError(f"backward needs a scalar root, got shape {root.value.shape}")
        for node in self.tape:
            node.adjoint = None
        root.adjoint = np.full(root.value.shape, float(seed))
        stop = self.tape.index(root)
        for node in reversed(self.tape[:stop + 1]):
            if node.adjoint is None:
                continue
            if node.param is not None:
                if accumulate:
                    node.param.grad += node.adjoint
            elif node._backward is not None:
                node._backward(node)


    def param_grads(self):
        """``(param, gradient)`` pairs for params reached by the last backward."""
        return [(node.param, node.adjoint) for node in self._param_nodes.values()
                if node.adjoint is not None]


# module-level conveniences mirroring the Graph methods


def affine(W, b, x):
    return x.graph.affine(W, b, x)


def relu(x):
    return x.graph.relu(x)


def concat(xs):
    xs = list(xs)
    if not xs:
        raise UsageError("concat needs at least one input")
    return xs[0].graph.concat(xs)


def backward(root, seed=1.0):
    root.graph.backward(root, seed)
