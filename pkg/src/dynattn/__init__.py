"""Dynamic maintenance of row-normalized attention under single-entry K/V updates."""
from .kernels import BACKEND
from .linalg import NonFiniteError, ShapeError
from .static import attention, unnormalized_attention
from .structure import CDelta, DynamicAttention, VDelta

__all__ = [
    "BACKEND",
    "CDelta",
    "DynamicAttention",
    "NonFiniteError",
    "ShapeError",
    "VDelta",
    "attention",
    "unnormalized_attention",
]
