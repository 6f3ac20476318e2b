"""Pure numpy implementations of the dense kernels.

Every function works on C-contiguous float64 arrays with a leading batch
axis: ``x`` is (B, n), ``W`` is (m, n), ``b`` is (m,).
"""
import numpy as np


def affine_forward(x, W, b):
    return x @ W.T + b


def affine_backward(g, x, W, dW, db):
    """Accumulate into ``dW``/``db`` in place and return the input adjoint."""
    dW += g.T @ x
    db += g.sum(axis=0)
    return g @ W


def relu_forward(x):
    return np.maximum(x, 0.0)


def relu_backward(g, y):
    # subgradient at 0 is 0: only strictly positive outputs pass the adjoint
    return np.where(y > 0.0, g, 0.0)
