"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the numpy
fallback is loaded. Set ``PLANLAT_KERNELS=python`` to force the fallback.
"""
import os

from . import _kernels_py

BACKENDS = {"python": _kernels_py}

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None
else:
    BACKENDS["compiled"] = _ckernels


def _select():
    wanted = os.environ.get("PLANLAT_KERNELS", "").strip().lower()
    if wanted in BACKENDS:
        return wanted
    return "compiled" if "compiled" in BACKENDS else "python"


BACKEND = _select()
_impl = BACKENDS[BACKEND]

affine_forward = _impl.affine_forward
affine_backward = _impl.affine_backward
relu_forward = _impl.relu_forward
relu_backward = _impl.relu_backward


def get_backend(name):
    """Return the kernel module for ``name`` (``"python"`` or ``"compiled"``)."""
    try:
        return BACKENDS[name]
    except KeyError:
        raise ImportError(f"kernel backend {name!r} is not available") from None


def use_backend(name):
    """Switch the active backend for subsequent graph operations."""
    global BACKEND, _impl, affine_forward, affine_backward, relu_forward, relu_backward
    _impl = get_backend(name)
    BACKEND = name
    affine_forward = _impl.affine_forward
    affine_backward = _impl.affine_backward
    relu_forward = _impl.relu_forward
    relu_backward = _impl.relu_backward
