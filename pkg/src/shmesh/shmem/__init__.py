"""PGAS runtime layer for PE programs."""

from .runner import run_spmd
from .runtime import (
    ATOMIC_OPS,
    IPI_GET_TURNOVER_BYTES,
    Cmp,
    PeContext,
    SymAlloc,
)

__all__ = [
    "ATOMIC_OPS",
    "IPI_GET_TURNOVER_BYTES",
    "Cmp",
    "PeContext",
    "SymAlloc",
    "run_spmd",
]
