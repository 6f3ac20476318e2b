"""Dense tensors and reverse-mode differentiation for affine/ReLU networks."""
from . import kernels
from .graph import Graph, Node, Param, affine, as_tensor, backward, concat, relu
from .optim import finite_difference_grad, sgd_step, uniform_init

__all__ = [
    "Graph",
    "Node",
    "Param",
    "affine",
    "as_tensor",
    "backward",
    "concat",
    "finite_difference_grad",
    "kernels",
    "relu",
    "sgd_step",
    "uniform_init",
]
