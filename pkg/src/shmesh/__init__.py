"""SHMEM-style PGAS runtime and benchmarks on a simulated 2D-mesh many-core."""

from . import errors
from .addressing import LOCAL_MEM_SIZE, CoreCoord, GlobalAddr
from .config import RuntimeFlags, load_config
from .costmodel import CostModel
from .mesh import DmaDescriptor, DmaState, Mesh

__version__ = "0.1.0"

__all__ = [
    "LOCAL_MEM_SIZE",
    "CoreCoord",
    "CostModel",
    "DmaDescriptor",
    "DmaState",
    "GlobalAddr",
    "Mesh",
    "RuntimeFlags",
    "errors",
    "load_config",
    "__version__",
]
