"""Mesh coordinates and packed global addresses.

A core is named by a 12-bit id holding its (row, col) position in two 6-bit
fields; a global address packs that id above a 20-bit byte offset, so remote
memory locations are reachable with a shift and an OR. The mesh origin is
core (0, 0).
"""

from dataclasses import dataclass

from .errors import BusFault

LOCAL_MEM_SIZE = 32768  # 32 KB flat local store per core

COORD_BITS = 6
OFFSET_BITS = 20
MAX_DIM = 1 << COORD_BITS
OFFSET_MASK = (1 << OFFSET_BITS) - 1
CORE_MASK = (1 << (2 * COORD_BITS)) - 1


@dataclass(frozen=True, order=True)
class CoreCoord:
    """Position of a PE on the 2D mesh (0-based row/col)."""

    row: int
    col: int

    def __post_init__(self):
        if not (0 <= self.row < MAX_DIM and 0 <= self.col < MAX_DIM):
            raise BusFault(f"coordinate {(self.row, self.col)} outside 6-bit range")

    @property
    def core_id(self) -> int:
        return (self.row << COORD_BITS) | self.col

    @classmethod
    def from_core_id(cls, core_id: int) -> "CoreCoord":
        if not 0 <= core_id <= CORE_MASK:
            raise BusFault(f"core id {core_id:#x} outside 12-bit range")
        return cls(core_id >> COORD_BITS, core_id & (MAX_DIM - 1))

    def hops_to(self, other: "CoreCoord") -> int:
        """Manhattan distance (XY-routed mesh)."""
        return abs(self.row - other.row) + abs(self.col - other.col)


@dataclass(frozen=True, order=True)
class GlobalAddr:
    """Packed core-id + byte-offset address for memory-mapped remote access."""

    core_id: int
    offset: int

    def __post_init__(self):
        if not 0 <= self.core_id <= CORE_MASK:
            raise BusFault(f"core id {self.core_id:#x} outside 12-bit range")
        if not 0 <= self.offset <= OFFSET_MASK:
            raise BusFault(f"offset {self.offset:#x} outside 20-bit range")

    @property
    def packed(self) -> int:
        return (self.core_id << OFFSET_BITS) | self.offset

    @classmethod
    def from_packed(cls, packed: int) -> "GlobalAddr":
        if not 0 <= packed < (1 << (2 * COORD_BITS + OFFSET_BITS)):
            raise BusFault(f"packed address {packed:#x} out of range")
        return cls(packed >> OFFSET_BITS, packed & OFFSET_MASK)

    @property
    def coord(self) -> CoreCoord:
        return CoreCoord.from_core_id(self.core_id)

    def add(self, delta: int) -> "GlobalAddr":
        return GlobalAddr(self.core_id, self.offset + delta)
