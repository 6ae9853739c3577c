"""Cycle-approximate simulator of the 2D-mesh many-core fabric."""

from .dma import DMA_CHANNELS, DmaChannel, DmaDescriptor, DmaState
from .sim import FixedOrderPolicy, Mesh, PePort, SchedulePolicy, SeededPolicy
from .store import LocalStore, MemoryLayout

__all__ = [
    "DMA_CHANNELS",
    "DmaChannel",
    "DmaDescriptor",
    "DmaState",
    "FixedOrderPolicy",
    "LocalStore",
    "MemoryLayout",
    "Mesh",
    "PePort",
    "SchedulePolicy",
    "SeededPolicy",
]
