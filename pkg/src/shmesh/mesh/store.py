"""Flat 32 KB byte-addressable local store with layout region markers."""

from dataclasses import dataclass

from ..addressing import LOCAL_MEM_SIZE
from ..errors import AlignmentFault, BusFault, ConfigError

ACCESS_WIDTHS = (1, 2, 4, 8)


@dataclass(frozen=True)
class MemoryLayout:
    """Region boundaries shared by every core running one program image."""

    program_end: int = 0x400
    heap_base: int = 0x500
    stack_limit: int = 0x7800  # stack grows down from the top of the store

    def __post_init__(self):
        if not (0 <= self.program_end <= self.heap_base <= self.stack_limit <= LOCAL_MEM_SIZE):
            raise ConfigError(f"invalid memory layout {self}")


class LocalStore:
    """One core's SRAM plus its heap-break pointer."""

    __slots__ = ("data", "layout", "heap_brk")

    def __init__(self, layout: MemoryLayout | None = None):
        self.data = bytearray(LOCAL_MEM_SIZE)
        self.layout = layout or MemoryLayout()
        self.heap_brk = self.layout.heap_base

    def check_range(self, offset: int, nbytes: int):
        if nbytes < 0 or offset < 0 or offset + nbytes > LOCAL_MEM_SIZE:
            raise BusFault(f"access [{offset:#x}, {offset + nbytes:#x}) outside local store")

    def check_access(self, offset: int, width: int):
        if width not in ACCESS_WIDTHS:
            raise BusFault(f"unsupported access width {width}")
        self.check_range(offset, width)
        if offset % width:
            raise AlignmentFault(f"offset {offset:#x} not aligned to width {width}")

    def read(self, offset: int, nbytes: int) -> bytes:
        self.check_range(offset, nbytes)
        return bytes(self.data[offset : offset + nbytes])

    def write(self, offset: int, payload: bytes):
        self.check_range(offset, len(payload))
        self.data[offset : offset + len(payload)] = payload
