"""Dense float arrays with reverse-mode differentiation."""
from . import ops
from .array import Array, Parameter, ShapeError, Tape, as_array, backward, get_dtype, make_node, precision
from .gradcheck import grad_check
from .nn import LayerNorm, Linear, Module

__all__ = [
    "Array", "Parameter", "ShapeError", "Tape", "as_array", "backward", "get_dtype",
    "make_node", "precision", "grad_check", "ops", "Module", "Linear", "LayerNorm",
]
