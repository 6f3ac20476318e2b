"""SGD with momentum, seeded initialization and a finite-difference oracle."""
import math

import numpy as np

from ..errors import TrainingError, UsageError


def sgd_step(params, lr, momentum=0.0):
    """One momentum step: ``buf = momentum*buf + grad; value -= lr*buf``.

    Gradients are zeroed afterwards. A non-finite gradient aborts before
    any parameter is touched.
    """
    params = list(params)
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise TrainingError(f"non-finite gradient for param {p.id!r}")
    for p in params:
        p.momentum_buf *= momentum
        p.momentum_buf += p.grad
        p.value -= lr * p.momentum_buf
        p.grad[...] = 0.0


def uniform_init(rng, fan_in, shape):
    """Uniform in ``[-sqrt(1/fan_in), +sqrt(1/fan_in)]``."""
    bound = math.sqrt(1.0 / max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


def finite_difference_grad(f, param, h=1e-5):
    """Central differences of the scalar ``f()`` w.r.t. every entry of ``param``.

    ``f`` takes no arguments and reads ``param.value``, which is perturbed in
    place and restored.
    """
    if h <= 0:
        raise UsageError("step h must be positive")
    value = param.value
    grad = np.zeros_like(value)
    flat = value.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f())
        flat[i] = orig - h
        fm = float(f())
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad
