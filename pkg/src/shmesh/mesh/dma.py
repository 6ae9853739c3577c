"""2D strided DMA descriptors and per-core channel state."""

import enum
from dataclasses import dataclass

from ..addressing import GlobalAddr
from ..errors import AlignmentFault, BusFault

DMA_CHANNELS = 2
DMA_ELEM_SIZES = (1, 2, 4, 8)


class DmaState(enum.Enum):
    IDLE = "idle"
    BUSY = "busy"


@dataclass(frozen=True)
class DmaDescriptor:
    """One transfer: outer_count rows of inner_count elements each.

    A contiguous 1D copy is the special case outer_count=1 with both inner
    strides equal to elem_size.
    """

    channel: int
    src: GlobalAddr
    dst: GlobalAddr
    inner_count: int
    elem_size: int
    outer_count: int = 1
    src_inner_stride: int | None = None
    src_outer_stride: int | None = None
    dst_inner_stride: int | None = None
    dst_outer_stride: int | None = None

    def __post_init__(self):
        if self.channel not in range(DMA_CHANNELS):
            raise BusFault(f"no such DMA channel {self.channel}")
        if self.elem_size not in DMA_ELEM_SIZES:
            raise BusFault(f"bad DMA element size {self.elem_size}")
        if self.inner_count < 1 or self.outer_count < 1:
            raise BusFault("DMA counts must be >= 1")
        # default strides: contiguous elements, contiguous rows
        row_bytes = self.inner_count * self.elem_size
        for name, default in (
            ("src_inner_stride", self.elem_size),
            ("dst_inner_stride", self.elem_size),
            ("src_outer_stride", row_bytes),
            ("dst_outer_stride", row_bytes),
        ):
            if getattr(self, name) is None:
                object.__setattr__(self, name, default)

    @property
    def total_elems(self) -> int:
        return self.inner_count * self.outer_count

    @property
    def total_bytes(self) -> int:
        return self.total_elems * self.elem_size

    def element_offsets(self):
        """Yield (src_offset, dst_offset) for every element, outer-major."""
        for o in range(self.outer_count):
            src_row = self.src.offset + o * self.src_outer_stride
            dst_row = self.dst.offset + o * self.dst_outer_stride
            for i in range(self.inner_count):
                yield (src_row + i * self.src_inner_stride,
                       dst_row + i * self.dst_inner_stride)

    def check_alignment(self):
        for src_off, dst_off in self.element_offsets():
            if src_off % self.elem_size or dst_off % self.elem_size:
                raise AlignmentFault(
                    f"DMA element ({src_off:#x} -> {dst_off:#x}) not aligned "
                    f"to {self.elem_size}"
                )
            if src_off < 0 or dst_off < 0:
                raise BusFault("negative DMA element offset")


def merged_intervals(offsets, width):
    """Merge element byte ranges into sorted disjoint (start, end) intervals."""
    spans = sorted((off, off + width) for off in offsets)
    out = []
    for start, end in spans:
        if out and start <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], end))
        else:
            out.append((start, end))
    return out


class DmaChannel:
    """Busy/idle state of one of a core's two DMA engines."""

    __slots__ = ("state", "completion_time", "descriptor", "src_core", "src_intervals")

    def __init__(self):
        self.state = DmaState.IDLE
        self.completion_time = 0.0
        self.descriptor = None
        self.src_core = None
        self.src_intervals = ()

    @property
    def busy(self) -> bool:
        return self.state is DmaState.BUSY
