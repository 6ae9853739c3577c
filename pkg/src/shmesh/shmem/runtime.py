"""Per-PE PGAS runtime: setup, symmetric heap, RMA, ordering, sync, atomics.

All data lives in the simulated local stores; the context object holds only
what a real implementation would keep in registers or private statics (ids,
the heap bookkeeping, partner tables, stamp counters).
"""

import enum
import math
import struct

from .. import tuning
from ..addressing import LOCAL_MEM_SIZE, GlobalAddr
from ..config import RuntimeFlags
from ..errors import AlignmentFault, AllocationError, ShmemError, StallError
from ..mesh.dma import DmaDescriptor, DmaState

ELEM_SIZES = (1, 2, 4, 8)

# reserved runtime region, relative to layout.program_end (per-PE, symmetric)
RT_BARRIER_SYNC = 0x00          # 12 x 8 B dissemination flags for barrier_all
RT_BARRIER_SYNC_WORDS = 12
RT_COUNTER_WORD = 0x60          # counter-barrier accumulator (lives on PE 0)
RT_LOCKS = 0x68                 # 4 x 4 B per-type atomic locks
RT_IPI_FLAG = 0x78              # IPI-get completion flag (8 B)
RT_IPI_DESC = 0x80              # 4 x 8 B IPI-get request descriptor
RT_SIZE = 0xA0

IPI_GET_TURNOVER_BYTES = 64     # transfers above this use the interrupt path

_INT_CODECS = {(4, True): "<i", (4, False): "<I", (8, True): "<q", (8, False): "<Q"}
_FLOAT_CODECS = {4: "<f", 8: "<d"}

ATOMIC_OPS = ("fetch", "set", "swap", "cswap", "add", "inc", "fetch_add", "fetch_inc")
_LOCK_INDEX = {("int", 4): 0, ("int", 8): 1, ("float", 4): 2, ("float", 8): 3}


class Cmp(enum.Enum):
    """Comparison operators accepted by wait_until."""

    EQ = "=="
    NE = "!="
    LT = "<"
    LE = "<="
    GT = ">"
    GE = ">="

    def check(self, a, b) -> bool:
        if self is Cmp.EQ:
            return a == b
        if self is Cmp.NE:
            return a != b
        if self is Cmp.LT:
            return a < b
        if self is Cmp.LE:
            return a <= b
        if self is Cmp.GT:
            return a > b
        return a >= b


class SymAlloc:
    """A symmetric-heap allocation: same offset on every PE."""

    __slots__ = ("offset", "size", "alignment")

    def __init__(self, offset, size, alignment):
        self.offset = offset
        self.size = size
        self.alignment = alignment

    def __repr__(self):
        return f"SymAlloc(offset={self.offset:#x}, size={self.size}, alignment={self.alignment})"


def _off(x) -> int:
    return x.offset if isinstance(x, SymAlloc) else int(x)


def int_codec(elem_size, signed=True) -> str:
    try:
        return _INT_CODECS[(elem_size, signed)]
    except KeyError:
        raise ShmemError(f"no {elem_size}-byte integer type") from None


class PeContext:
    """One PE's runtime state and API surface."""

    def __init__(self, port, flags: RuntimeFlags | None = None):
        self.port = port
        self.flags = flags or RuntimeFlags()
        self.pe = port.pe
        self.npes = port.n_pes
        self._initialized = False
        self._rt_base = port.store.layout.program_end
        self._allocs = []          # live allocations, ascending offsets
        self._stamps = {}          # private per-pSync-word invocation counters
        self._barrier_gen = 0      # barrier_all generation (internal pSync)
        self._counter_gen = 0      # counter-baseline barrier generation
        self._rr_channel = 0       # DMA channel round-robin for *_nbi
        self.stats = {
            "put": 0, "get_direct": 0, "get_ipi": 0, "put_nbi": 0,
            "get_nbi": 0, "atomic": 0, "barrier": 0,
        }
        self.partners = ()

    # ----------------------------------------------------------- setup ops
    def init(self):
        """Set up ids, barrier arrays, locks, and the heap; once per PE."""
        if self._initialized:
            raise ShmemError(f"PE {self.pe}: runtime initialized twice")
        port = self.port
        rounds = max(1, math.ceil(math.log2(self.npes))) if self.npes > 1 else 0
        self.partners = tuple((self.pe + (1 << r)) % self.npes for r in range(rounds))
        port.idle(tuning.INIT_CALL_CYCLES)
        # zero the sync flags and lock words this runtime relies on
        port.local_store(self.rt_off(RT_BARRIER_SYNC), bytes(8 * RT_BARRIER_SYNC_WORDS))
        port.local_store(self.rt_off(RT_COUNTER_WORD), bytes(8))
        port.local_store(self.rt_off(RT_LOCKS), bytes(16))
        port.local_store(self.rt_off(RT_IPI_FLAG), bytes(8))
        if self.flags.use_ipi_get:
            port.set_irq_handler(_ipi_get_handler)
        self._initialized = True
        return self

    def rt_off(self, rel: int) -> int:
        """Offset of a reserved runtime structure inside every local store."""
        return self._rt_base + rel

    def _require_init(self):
        if not self._initialized:
            raise ShmemError(f"PE {self.pe}: runtime not initialized")

    def my_pe(self) -> int:
        self._require_init()
        return self.pe

    def n_pes(self) -> int:
        self._require_init()
        return self.npes

    def ptr(self, sym_offset, target_pe: int) -> GlobalAddr:
        """Address of a symmetric object on target_pe (shift + OR arithmetic)."""
        return self.port.encode(target_pe, _off(sym_offset))

    @property
    def now(self) -> float:
        return self.port.now

    # ------------------------------------------------------ memory management
    def malloc(self, size: int) -> SymAlloc:
        """Collective bump allocation, 8-byte aligned; implies a barrier."""
        return self._allocate(size, 8)

    def align(self, alignment: int, size: int) -> SymAlloc:
        """Collective aligned allocation; alignment must be a power of 2 >= 8."""
        if alignment < 8 or alignment & (alignment - 1):
            raise AllocationError(f"alignment must be a power of two >= 8, got {alignment}")
        return self._allocate(size, alignment)

    def _allocate(self, size, alignment) -> SymAlloc:
        self._require_init()
        if size < 0:
            raise AllocationError("negative allocation size")
        store = self.port.store
        offset = -(-store.heap_brk // alignment) * alignment
        if offset + size > store.layout.stack_limit:
            raise AllocationError(
                f"out of symmetric-heap memory: need [{offset:#x},{offset + size:#x}) "
                f"but the stack region starts at {store.layout.stack_limit:#x}")
        store.heap_brk = offset + size
        alloc = SymAlloc(offset, size, alignment)
        self._allocs.append(alloc)
        self.port.idle(tuning.ALLOC_CALL_CYCLES)
        from ..collectives import barrier_all  # deferred: collectives builds on this module
        barrier_all(self)
        return alloc

    def free(self, alloc: SymAlloc):
        """Release alloc and everything allocated after it (reverse-order rule).

        Local-only: no synchronization is implied, so freeing while another
        PE still targets the region is a caller hazard.
        """
        self._require_init()
        store = self.port.store
        offset = _off(alloc)
        if offset >= store.heap_brk:
            raise AllocationError(
                f"free of offset {offset:#x} at or above the heap break "
                f"{store.heap_brk:#x} (double free or stale allocation)")
        if offset < store.layout.heap_base:
            raise AllocationError(f"free of offset {offset:#x} below the heap")
        store.heap_brk = offset
        self._allocs = [a for a in self._allocs if a.offset < offset]
        self._stamps = {k: v for k, v in self._stamps.items() if k[0] < offset}
        self.port.idle(tuning.ALLOC_CALL_CYCLES)

    def realloc(self, alloc: SymAlloc, new_size: int) -> SymAlloc:
        """Grow or shrink the most recent live allocation in place."""
        self._require_init()
        if not self._allocs or self._allocs[-1].offset != _off(alloc):
            raise AllocationError("realloc is only valid on the last (re)allocated buffer")
        if new_size < 0:
            raise AllocationError("negative allocation size")
        store = self.port.store
        offset = _off(alloc)
        if offset + new_size > store.layout.stack_limit:
            raise AllocationError("out of symmetric-heap memory on realloc")
        store.heap_brk = offset + new_size
        new = SymAlloc(offset, new_size, self._allocs[-1].alignment)
        self._allocs[-1] = new
        self.port.idle(tuning.ALLOC_CALL_CYCLES)
        from ..collectives import barrier_all
        barrier_all(self)
        return new

    # ----------------------------------------------------------- local data
    def store_local(self, offset, data: bytes):
        """Fill own-store bytes from program data (charged as local stores)."""
        self.port.local_store(_off(offset), data)

    def load_local(self, offset, nbytes: int) -> bytes:
        return self.port.local_load(_off(offset), nbytes)

    # ------------------------------------------------------------- blocking RMA
    def _check_elem(self, dest, src, nelems, elem_size):
        if elem_size not in ELEM_SIZES:
            raise ShmemError(f"unsupported element size {elem_size}")
        if nelems < 0:
            raise ShmemError("negative element count")
        if dest % elem_size or src % elem_size:
            raise AlignmentFault(
                f"offsets ({dest:#x}, {src:#x}) not aligned to element size {elem_size}")

    def put(self, dest, src, nelems, elem_size, target_pe):
        """Blocking contiguous put; data is in flight (per-pair FIFO) on return."""
        self._require_init()
        dest, src = _off(dest), _off(src)
        self._check_elem(dest, src, nelems, elem_size)
        self.port.idle(tuning.PUT_CALL_CYCLES)
        self.port.stream_put(src, self.ptr(dest, target_pe), nelems * elem_size)
        self.stats["put"] += 1

    def get(self, dest, src, nelems, elem_size, source_pe):
        """Blocking contiguous get; local buffer holds the data on return."""
        self._require_init()
        dest, src = _off(dest), _off(src)
        self._check_elem(dest, src, nelems, elem_size)
        nbytes = nelems * elem_size
        if (self.flags.use_ipi_get and nbytes > IPI_GET_TURNOVER_BYTES
                and source_pe != self.pe):
            self._ipi_get(dest, src, nbytes, source_pe)
        else:
            self.port.idle(tuning.GET_CALL_CYCLES)
            self.port.stream_get(dest, self.ptr(src, source_pe), nbytes)
            self.stats["get_direct"] += 1

    def _ipi_get(self, dest, src, nbytes, source_pe):
        """Interrupt the owner so it pushes the data with its fast write path."""
        port = self.port
        flag_off = self.rt_off(RT_IPI_FLAG)
        desc_off = self.rt_off(RT_IPI_DESC)
        port.local_store(flag_off, bytes(8))  # arm the completion flag
        desc = struct.pack(
            "<QQQQ", src, self.ptr(dest, self.pe).packed, nbytes,
            self.ptr(flag_off, self.pe).packed)
        port.local_store(desc_off, desc)
        port.idle(tuning.IPI_REQUEST_CYCLES)
        port.raise_interrupt(source_pe, self.ptr(desc_off, self.pe))
        port.spin_wait(flag_off, 8, lambda b: b != bytes(8))
        self.stats["get_ipi"] += 1

    # --------------------------------------------------------- non-blocking RMA
    def _dma_transfer(self, src_addr, dst_addr, nelems, elem_size):
        port = self.port
        start = port.now
        ch = self._rr_channel
        desc = DmaDescriptor(channel=ch, src=src_addr, dst=dst_addr,
                             inner_count=nelems, elem_size=elem_size)
        if not port.dma_start(desc):
            other_desc = DmaDescriptor(channel=1 - ch, src=src_addr, dst=dst_addr,
                                       inner_count=nelems, elem_size=elem_size)
            if port.dma_start(other_desc):
                ch = 1 - ch
            else:
                # both engines busy: spin on the round-robin channel's status
                while True:
                    if port.dma_poll(ch) is DmaState.IDLE:
                        port.dma_start(desc)
                        break
                    if port.now - start > self.port.mesh.max_spin_cycles:
                        raise StallError(f"PE {self.pe}: DMA channels never freed")
        self._rr_channel = 1 - ch

    def put_nbi(self, dest, src, nelems, elem_size, target_pe):
        """Non-blocking put on a DMA channel; complete only after quiet()."""
        self._require_init()
        dest, src = _off(dest), _off(src)
        self._check_elem(dest, src, nelems, elem_size)
        self.port.idle(tuning.NBI_CALL_CYCLES)
        if nelems:
            self._dma_transfer(self.ptr(src, self.pe), self.ptr(dest, target_pe),
                               nelems, elem_size)
        self.stats["put_nbi"] += 1

    def get_nbi(self, dest, src, nelems, elem_size, source_pe):
        """Non-blocking get on a DMA channel; complete only after quiet()."""
        self._require_init()
        dest, src = _off(dest), _off(src)
        self._check_elem(dest, src, nelems, elem_size)
        self.port.idle(tuning.NBI_CALL_CYCLES)
        if nelems:
            self._dma_transfer(self.ptr(src, source_pe), self.ptr(dest, self.pe),
                               nelems, elem_size)
        self.stats["get_nbi"] += 1

    # ----------------------------------------------------------- ordering ops
    def quiet(self):
        """Wait until both DMA engines are idle and issued stores are delivered."""
        self._require_init()
        port = self.port
        port.idle(tuning.QUIET_CALL_CYCLES)
        pending = max(port.dma_completion_time(0), port.dma_completion_time(1),
                      port.outstanding_store_time)
        if pending > port.now:
            port.idle(pending - port.now)
        while (port.dma_poll(0) is DmaState.BUSY
               or port.dma_poll(1) is DmaState.BUSY):
            pass

    def fence(self):
        """Ordering point; identical to quiet() here (per-pair FIFO delivery)."""
        self.quiet()

    # ------------------------------------------------------- point-to-point sync
    def wait_until(self, offset, cmp: Cmp, value, elem_size=8, signed=True):
        """Spin on an own-store word until `*offset cmp value` holds."""
        self._require_init()
        offset = _off(offset)
        if offset % elem_size:
            raise AlignmentFault(f"wait_until offset {offset:#x} unaligned")
        fmt = int_codec(elem_size, signed)
        self.port.idle(tuning.WAIT_CALL_CYCLES)
        raw = self.port.spin_wait(
            offset, elem_size, lambda b: cmp.check(struct.unpack(fmt, b)[0], value))
        return struct.unpack(fmt, raw)[0]

    # ----------------------------------------------------------------- atomics
    def atomic(self, op, target, target_pe, value=None, cond=None,
               elem_size=4, kind="int"):
        """1.3 atomic set: fetch/set direct, the rest via the per-type lock."""
        self._require_init()
        if op not in ATOMIC_OPS:
            raise ShmemError(f"unknown atomic op {op!r}")
        if kind not in ("int", "float"):
            raise ShmemError(f"unknown atomic kind {kind!r}")
        if kind == "float":
            if elem_size not in (4, 8):
                raise ShmemError(f"no {elem_size}-byte float type")
            if op in ("add", "inc", "fetch_add", "fetch_inc"):
                raise ShmemError(f"atomic {op} is integer-only")
            fmt = _FLOAT_CODECS[elem_size]
        else:
            fmt = int_codec(elem_size, signed=True)
        target = _off(target)
        if target % elem_size:
            raise AlignmentFault(f"atomic target {target:#x} unaligned")
        port = self.port
        addr = self.ptr(target, target_pe)
        port.idle(tuning.ATOMIC_CALL_CYCLES)
        self.stats["atomic"] += 1

        if op == "fetch":
            raw, _ = port.mem_read(addr, elem_size)
            return struct.unpack(fmt, raw)[0]
        if op == "set":
            port.mem_write(addr, struct.pack(fmt, value))
            return None

        lock_off = self.rt_off(RT_LOCKS) + 4 * _LOCK_INDEX[(kind, elem_size)]
        lock_addr = self.ptr(lock_off, target_pe)
        self._spin_lock(lock_addr)
        raw, _ = port.mem_read(addr, elem_size)
        old = struct.unpack(fmt, raw)[0]
        new = None
        if op == "swap":
            new = value
        elif op == "cswap":
            if old == cond:
                new = value
        elif op in ("add", "fetch_add"):
            new = old + value
        elif op in ("inc", "fetch_inc"):
            new = old + 1
        if new is not None:
            if kind == "int":  # wrap like fixed-width registers
                mask = (1 << (8 * elem_size)) - 1
                new &= mask
                if new >= 1 << (8 * elem_size - 1):
                    new -= 1 << (8 * elem_size)
            port.mem_write(addr, struct.pack(fmt, new))
        port.mem_write(lock_addr, bytes(4))  # release
        if op in ("swap", "cswap", "fetch_add", "fetch_inc"):
            return old
        return None

    def _spin_lock(self, lock_addr: GlobalAddr, tag=None):
        port = self.port
        tag = (self.pe + 1) if tag is None else tag
        start = port.now
        while port.testset(lock_addr, tag) != 0:
            if port.now - start > port.mesh.max_spin_cycles:
                raise StallError(
                    f"PE {self.pe}: lock at {lock_addr.packed:#010x} never freed")

    # convenience wrappers
    def fetch(self, target, target_pe, **kw):
        return self.atomic("fetch", target, target_pe, **kw)

    def set(self, target, target_pe, value, **kw):
        return self.atomic("set", target, target_pe, value=value, **kw)

    def swap(self, target, target_pe, value, **kw):
        return self.atomic("swap", target, target_pe, value=value, **kw)

    def cswap(self, target, target_pe, cond, value, **kw):
        return self.atomic("cswap", target, target_pe, value=value, cond=cond, **kw)

    def add(self, target, target_pe, value, **kw):
        return self.atomic("add", target, target_pe, value=value, **kw)

    def inc(self, target, target_pe, **kw):
        return self.atomic("inc", target, target_pe, **kw)

    def fetch_add(self, target, target_pe, value, **kw):
        return self.atomic("fetch_add", target, target_pe, value=value, **kw)

    def fetch_inc(self, target, target_pe, **kw):
        return self.atomic("fetch_inc", target, target_pe, **kw)

    # --------------------------------------------------- pSync stamp bookkeeping
    def next_stamp(self, word_offset: int, tag: str = "", advance: int = 1) -> int:
        """Next invocation stamp for a pSync word (private per-PE counter).

        Models the static private state a real implementation would keep;
        counters stay in lockstep across PEs because collectives are
        collective. Freed heap regions drop their counters.
        """
        key = (word_offset, tag)
        stamp = self._stamps.get(key, 0) + advance
        self._stamps[key] = stamp
        return stamp

    def peek_stamp(self, word_offset: int, tag: str = "") -> int:
        return self._stamps.get((word_offset, tag), 0)


def _ipi_get_handler(port, desc_addr: GlobalAddr):
    """ISR on the data owner: read the request, push data back, signal done."""
    port.idle(tuning.IPI_HANDLER_ENTRY_CYCLES)
    words = []
    for i in range(4):
        raw, _ = port.mem_read(desc_addr.add(8 * i), 8)
        words.append(struct.unpack("<Q", raw)[0])
    src_off, dst_packed, nbytes, flag_packed = words
    port.stream_put(src_off, GlobalAddr.from_packed(dst_packed), nbytes)
    port.mem_write(GlobalAddr.from_packed(flag_packed), (1).to_bytes(8, "little"))
    port.idle(tuning.IPI_HANDLER_EXIT_CYCLES)
