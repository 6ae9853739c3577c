"""Cycle-approximate discrete-event simulator of a 2D mesh of cores.

Each PE runs its program on its own thread, but threads only touch simulated
state through a turnstile that serializes *happenings* (memory-effect
deliveries and sampling operations) in one global order keyed by
(time, tie-rank, pe, seq). A thread may perform a happening at time t only
when every other runnable PE's clock is strictly past t and nothing earlier
is pending, which makes execution deterministic regardless of host thread
scheduling. Fire-and-forget stores never block: they enqueue a delivery
event and advance only the issuer's clock.

Spin loops do not busy-poll the scheduler: a spinning PE goes passive and
registers a watch on the polled byte range. Whoever delivers a write into a
watched range plants the spinner's next poll slot (quantized to its poll
grid) atomically with the delivery, so wake-ups are driven by events while
observable timing matches a poll-every-N-cycles loop exactly.

Tie-ranks come from a schedule policy: the default orders ties by PE id; a
seeded policy hashes (seed, time, pe, seq) to vary interleavings while
staying reproducible.
"""

import heapq
import math
import threading
from collections import deque

from .. import tuning
from ..addressing import LOCAL_MEM_SIZE, CoreCoord, GlobalAddr
from ..costmodel import CostModel
from ..errors import (
    AlignmentFault,
    BusFault,
    ConfigError,
    SpmdError,
    StallError,
    StrictModeViolation,
)
from .dma import DMA_CHANNELS, DmaChannel, DmaDescriptor, DmaState, merged_intervals
from .store import LocalStore, MemoryLayout

INF = float("inf")

_RUNNING, _WAITING, _BLOCKED, _SPINNING, _PARKED, _OFF = range(6)


class _Aborted(BaseException):
    """Internal unwind signal once the simulation has failed elsewhere."""


class SchedulePolicy:
    """Breaks ties between same-cycle happenings by PE id (deterministic)."""

    def rank(self, time, pe, seq):
        return 0


class SeededPolicy(SchedulePolicy):
    """Pseudo-random but reproducible tie-breaking."""

    def __init__(self, seed: int):
        self.seed = int(seed)

    def rank(self, time, pe, seq):
        # hash() is deterministic for numeric tuples (no str hashing involved)
        return hash((self.seed, time, pe, seq)) & 0xFFFFFFFFFFFF


class FixedOrderPolicy(SchedulePolicy):
    """Ties resolved by an explicit PE priority list (for interleaving tests)."""

    def __init__(self, order):
        self._rank = {pe: i for i, pe in enumerate(order)}

    def rank(self, time, pe, seq):
        return self._rank.get(pe, len(self._rank))


class _PeState:
    __slots__ = (
        "pe", "clock", "state", "seq", "wait_key", "watch", "store", "channels",
        "pending_irqs", "in_isr", "irq_handler", "wand_release",
        "last_store_delivery", "result", "thread", "cv",
    )

    def __init__(self, pe, layout):
        self.pe = pe
        self.clock = 0.0
        self.state = _OFF
        self.seq = 0
        self.wait_key = None      # turnstile key while _WAITING
        self.watch = None         # (lo, hi, anchor, poll) while _SPINNING
        self.store = LocalStore(layout)
        self.channels = [DmaChannel() for _ in range(DMA_CHANNELS)]
        self.pending_irqs = deque()
        self.in_isr = False
        self.irq_handler = None
        self.wand_release = None
        self.last_store_delivery = 0.0
        self.result = None
        self.thread = None
        self.cv = None  # per-PE condition sharing the mesh lock


class Mesh:
    """rows x cols mesh of PEs with local stores, DMA engines and a WAND line."""

    def __init__(self, rows, cols, cost=None, *, policy=None, schedule_seed=None,
                 strict=True, layout=None, max_spin_cycles=2e6, trace=None):
        if rows < 1 or cols < 1:
            raise ConfigError("mesh needs at least one PE")
        if rows > 64 or cols > 64:
            raise ConfigError("mesh dimensions overflow the 6-bit coordinate fields")
        self.rows = rows
        self.cols = cols
        self.cost = cost or CostModel()
        self.strict = strict
        self.layout = layout or MemoryLayout()
        self.max_spin_cycles = max_spin_cycles
        self.trace = trace
        if policy is None:
            policy = SeededPolicy(schedule_seed) if schedule_seed is not None else SchedulePolicy()
        self.policy = policy

        self._pes = [_PeState(pe, self.layout) for pe in range(rows * cols)]
        self._lock = threading.Lock()
        self._cv = threading.Condition(self._lock)
        for st in self._pes:
            st.cv = threading.Condition(self._lock)
        self._events = []  # heap of ((time, rank, pe, seq), kind, data)
        self._waiting = 0
        self._draining = False
        self._wand_entries = {}
        self._abort_exc = None  # (pe | None, exception)
        self._shutdown = False
        self._running = False

    # ------------------------------------------------------------------ ids
    @property
    def n_pes(self) -> int:
        return self.rows * self.cols

    def coord_of(self, pe: int) -> CoreCoord:
        if not 0 <= pe < self.n_pes:
            raise BusFault(f"PE {pe} out of range (n_pes={self.n_pes})")
        row, col = divmod(pe, self.cols)
        return CoreCoord(row, col)

    def pe_of_core(self, core_id: int) -> int:
        coord = CoreCoord.from_core_id(core_id)
        if coord.row >= self.rows or coord.col >= self.cols:
            raise BusFault(f"core {core_id:#x} not present on a {self.rows}x{self.cols} mesh")
        return coord.row * self.cols + coord.col

    def encode_addr(self, pe: int, offset: int) -> GlobalAddr:
        """Pack (pe, byte offset) into the flat global address space."""
        return GlobalAddr(self.coord_of(pe).core_id, offset)

    def decode_addr(self, addr: GlobalAddr) -> tuple:
        return self.pe_of_core(addr.core_id), addr.offset

    def hops(self, pe_a: int, pe_b: int) -> int:
        return self.coord_of(pe_a).hops_to(self.coord_of(pe_b))

    def store_of(self, pe: int) -> LocalStore:
        return self._pes[pe].store

    def pe_clock(self, pe: int) -> float:
        return self._pes[pe].clock

    # --------------------------------------------------------- debug access
    def peek(self, pe: int, offset: int, nbytes: int) -> bytes:
        """Zero-time test access; only meaningful outside / after run()."""
        return self._pes[pe].store.read(offset, nbytes)

    def poke(self, pe: int, offset: int, payload: bytes):
        self._pes[pe].store.write(offset, payload)

    # ----------------------------------------------------------- turnstile
    def _rank(self, time, pe, seq):
        return self.policy.rank(time, pe, seq)

    def _lower_bound_locked(self, exclude_pe):
        """Earliest time any PE other than exclude_pe could still act at."""
        lb = INF
        latency = self.cost.interrupt_latency_cycles
        for st in self._pes:
            if st.pe == exclude_pe:
                continue
            if st.state == _RUNNING:
                if st.clock < lb:
                    lb = st.clock
            elif st.state == _PARKED and st.pending_irqs:
                t = st.pending_irqs[0][0] + latency
                if t < lb:
                    lb = t
        if self._wand_entries:
            t = max(self._wand_entries.values()) + self.cost.wand_barrier_cycles
            if t < lb:
                lb = t
        return lb

    def _min_other_wait_key_locked(self, pe):
        mk = None
        for st in self._pes:
            if st.pe != pe and st.wait_key is not None:
                if mk is None or st.wait_key < mk:
                    mk = st.wait_key
        return mk

    def _check_abort_locked(self):
        if self._abort_exc is not None:
            raise _Aborted()

    def _enter_wait_locked(self, st, key, *, planted=False):
        was_spinning = st.state == _SPINNING
        st.state = _WAITING
        st.wait_key = key
        st.watch = None
        self._waiting += 1
        if planted and was_spinning:
            st.cv.notify_all()  # wake the passive spinner whose slot this is
        else:
            # leaving the running set can make another waiter or event eligible
            self._cv.notify_all()

    def _exit_wait_locked(self, st):
        self._waiting -= 1
        st.wait_key = None
        st.state = _RUNNING

    def _await_key_locked(self, st, key):
        """Wait until `key` is the globally next happening; applies due events."""
        pe = st.pe
        t = key[0]
        while True:
            self._check_abort_locked()
            evk = self._events[0][0] if self._events else None
            mwk = self._min_other_wait_key_locked(pe)
            if evk is not None and evk < key and (mwk is None or evk < mwk):
                # the event is globally next; apply it if it is safe
                if self._lower_bound_locked(None) > evk[0]:
                    self._pop_apply_locked()
                    continue
            elif (mwk is None or key < mwk) and (evk is None or key < evk):
                if self._lower_bound_locked(pe) > t:
                    break
            self._cv.wait()

    def _turn(self, pe: int, t: float):
        """Block until PE may perform a sampling/mutating action at time t.

        On return the caller holds the globally next slot: every due event
        has been applied and no other PE can act at or before t. Leaves the
        PE RUNNING with clock >= t.
        """
        st = self._pes[pe]
        with self._cv:
            self._check_abort_locked()
            st.seq += 1
            key = (t, self._rank(t, pe, st.seq), pe, st.seq)
            self._enter_wait_locked(st, key)
            try:
                self._await_key_locked(st, key)
            finally:
                self._exit_wait_locked(st)
            if t > st.clock:
                st.clock = t
            if self._waiting or self._draining:
                self._cv.notify_all()

    def _advance_locked(self, pe, dt):
        st = self._pes[pe]
        st.clock += dt
        if self._waiting or self._draining:
            self._cv.notify_all()

    def _set_clock_locked(self, pe, t):
        st = self._pes[pe]
        if t > st.clock:
            st.clock = t
            if self._waiting or self._draining:
                self._cv.notify_all()

    def _emit_locked(self, pe, time, kind, data):
        st = self._pes[pe]
        st.seq += 1
        key = (time, self._rank(time, pe, st.seq), pe, st.seq)
        heapq.heappush(self._events, (key, kind, data))
        if self._waiting or self._draining:
            self._cv.notify_all()

    # ------------------------------------------------------------- events
    def _pop_apply_locked(self):
        key, kind, data = heapq.heappop(self._events)
        t = key[0]
        if kind == "store":
            src_pe, core_id, offset, payload = data
            self._deliver_store_locked(t, src_pe, core_id, offset, payload)
        elif kind == "dma_done":
            pe, ch_idx = data
            self._finish_dma_locked(t, pe, ch_idx)
        elif kind == "irq":
            src_pe, target, desc_addr = data
            self._deliver_irq_locked(t, src_pe, target, desc_addr)
        else:  # pragma: no cover - internal invariant
            raise AssertionError(f"unknown event kind {kind}")
        self._cv.notify_all()

    def _wake_watcher_locked(self, pe, offset, nbytes, t):
        """Plant the next poll slot of a passive spinner hit by a write."""
        st = self._pes[pe]
        if st.state != _SPINNING or st.watch is None or nbytes == 0:
            return
        lo, hi, anchor, poll = st.watch
        if offset >= hi or offset + nbytes <= lo:
            return
        if t <= anchor:
            wake = anchor
        else:
            wake = anchor + math.ceil((t - anchor) / poll) * poll
            if wake < t:  # float guard
                wake = t
        st.seq += 1
        key = (wake, self._rank(wake, pe, st.seq), pe, st.seq)
        self._enter_wait_locked(st, key, planted=True)

    def _plant_irq_wake_locked(self, pe, t):
        """Wake a passive spinner so it can service a freshly arrived IRQ."""
        st = self._pes[pe]
        if st.state != _SPINNING or st.watch is None:
            return
        lo, hi, anchor, poll = st.watch
        wake = max(t, st.clock)
        st.seq += 1
        key = (wake, self._rank(wake, pe, st.seq), pe, st.seq)
        self._enter_wait_locked(st, key, planted=True)

    def _strict_dma_overlap_locked(self, core_id, offset, nbytes):
        if not self.strict or nbytes == 0:
            return
        for st in self._pes:
            for ch in st.channels:
                if ch.busy and ch.src_core == core_id:
                    for lo, hi in ch.src_intervals:
                        if offset < hi and offset + nbytes > lo:
                            self._record_abort_locked(None, StrictModeViolation(
                                f"write to [{offset:#x},{offset + nbytes:#x}) on core "
                                f"{core_id:#x} overlaps an active DMA source on PE {st.pe}"
                            ))
                            return

    def _deliver_store_locked(self, t, src_pe, core_id, offset, payload):
        self._strict_dma_overlap_locked(core_id, offset, len(payload))
        pe = self.pe_of_core(core_id)
        self._pes[pe].store.write(offset, payload)
        self._wake_watcher_locked(pe, offset, len(payload), t)
        if self.trace:
            self.trace(("store", t, src_pe, pe, offset, len(payload)))

    def _finish_dma_locked(self, t, pe, ch_idx):
        st = self._pes[pe]
        ch = st.channels[ch_idx]
        desc, writes = ch.descriptor
        for core_id, offset, payload in writes:
            self._strict_dma_overlap_locked(core_id, offset, len(payload))
            dst_pe = self.pe_of_core(core_id)
            self._pes[dst_pe].store.write(offset, payload)
            self._wake_watcher_locked(dst_pe, offset, len(payload), t)
        ch.state = DmaState.IDLE
        ch.descriptor = None
        ch.src_core = None
        ch.src_intervals = ()
        if self.trace:
            self.trace(("dma_done", t, pe, ch_idx, desc.total_bytes))

    def _deliver_irq_locked(self, t, src_pe, target, desc_addr):
        st = self._pes[target]
        if st.irq_handler is None:
            self._record_abort_locked(None, BusFault(
                f"interrupt raised on PE {target} with no registered handler"))
            return
        st.pending_irqs.append((t, src_pe, desc_addr))
        self._plant_irq_wake_locked(target, t)
        st.cv.notify_all()
        if self.trace:
            self.trace(("irq", t, src_pe, target))

    # -------------------------------------------------------------- aborts
    def _record_abort_locked(self, pe, exc):
        if self._abort_exc is None:
            self._abort_exc = (pe, exc)
        self._cv.notify_all()
        for st in self._pes:
            st.cv.notify_all()

    def _record_abort(self, pe, exc):
        with self._cv:
            self._record_abort_locked(pe, exc)

    def _pump_locked(self):
        """Apply one due event when no thread is active to do it; True on progress."""
        if not self._events:
            return False
        for st in self._pes:
            if st.state in (_RUNNING, _WAITING):
                return False
        evk = self._events[0][0]
        if self._lower_bound_locked(None) > evk[0]:
            self._pop_apply_locked()
            return True
        return False

    def _check_global_stall_locked(self):
        """Abort when no PE can ever act again but some still wait."""
        stuck = []
        for st in self._pes:
            if st.pending_irqs or st.in_isr:
                return
            if st.state in (_RUNNING, _WAITING):
                return
            if st.state in (_BLOCKED, _SPINNING):
                stuck.append(st.pe)
        if not stuck:
            return
        if self._events and self._lower_bound_locked(None) > self._events[0][0][0]:
            return  # a pending event can still fire and may wake someone
        self._record_abort_locked(None, StallError(
            f"global stall: PEs {stuck} wait forever "
            f"(barrier entries: {sorted(self._wand_entries)})"))

    # ----------------------------------------------------------------- run
    def run(self, program, *, reset_clocks=False):
        """Run `program(port)` on every PE to completion; returns per-PE results.

        The mesh may be run multiple times; memory persists and clocks
        continue unless reset_clocks is set.
        """
        if self._running:
            raise ConfigError("mesh is already running a program")
        self._running = True
        self._shutdown = False
        self._abort_exc = None
        try:
            for st in self._pes:
                if reset_clocks:
                    st.clock = 0.0
                    st.last_store_delivery = 0.0
                st.state = _RUNNING
                st.result = None
                st.wait_key = None
                st.watch = None
                st.pending_irqs.clear()
                st.in_isr = False
                st.wand_release = None
                st.thread = threading.Thread(
                    target=self._pe_main, args=(st.pe, program), daemon=True)
            for st in self._pes:
                st.thread.start()
            self._drain()
        finally:
            with self._cv:
                self._shutdown = True
                self._cv.notify_all()
                for st in self._pes:
                    st.cv.notify_all()
            for st in self._pes:
                st.thread.join()
                st.thread = None
                st.state = _OFF
            self._running = False
        if self._abort_exc is not None:
            pe, exc = self._abort_exc
            if pe is None:
                raise exc
            raise SpmdError(pe, exc) from exc
        return [st.result for st in self._pes]

    def _pe_main(self, pe, program):
        port = PePort(self, pe)
        st = self._pes[pe]
        try:
            st.result = program(port)
        except _Aborted:
            return
        except BaseException as exc:
            self._record_abort(pe, exc)
            return
        try:
            self._park_loop(pe, port)
        except _Aborted:
            return
        except BaseException as exc:  # handler failures while parked
            self._record_abort(pe, exc)

    def _park_loop(self, pe, port):
        st = self._pes[pe]
        while True:
            with self._cv:
                if self._wand_entries and pe not in self._wand_entries:
                    raise StallError(
                        f"PE {pe} exited while {sorted(self._wand_entries)} wait "
                        f"in the hardware barrier")
                st.state = _PARKED
                self._cv.notify_all()
                while not (self._shutdown or self._abort_exc or st.pending_irqs):
                    if self._pump_locked():
                        continue
                    self._check_global_stall_locked()
                    if self._shutdown or self._abort_exc or st.pending_irqs:
                        break
                    st.cv.wait()
                if self._shutdown or self._abort_exc:
                    return
                st.state = _RUNNING
            port._service_irqs()

    def _drain(self):
        """Main-thread loop: apply leftover events once all PEs have parked."""
        with self._cv:
            self._draining = True
            try:
                while True:
                    if self._abort_exc is not None:
                        return
                    busy = any(st.state != _PARKED or st.in_isr or st.pending_irqs
                               for st in self._pes)
                    if not busy and self._events:
                        evk = self._events[0][0]
                        if self._lower_bound_locked(None) > evk[0]:
                            self._pop_apply_locked()
                            continue
                    if not busy and not self._events:
                        return
                    self._cv.wait()
            finally:
                self._draining = False


class PePort:
    """Per-PE handle through which a program interacts with the mesh."""

    __slots__ = ("mesh", "pe", "_st", "_cost")

    def __init__(self, mesh: Mesh, pe: int):
        self.mesh = mesh
        self.pe = pe
        self._st = mesh._pes[pe]
        self._cost = mesh.cost

    # ------------------------------------------------------------- basics
    @property
    def now(self) -> float:
        return self._st.clock

    @property
    def cost(self) -> CostModel:
        return self._cost

    @property
    def n_pes(self) -> int:
        return self.mesh.n_pes

    @property
    def store(self) -> LocalStore:
        return self._st.store

    def encode(self, pe: int, offset: int) -> GlobalAddr:
        return self.mesh.encode_addr(pe, offset)

    def hops_to(self, addr: GlobalAddr) -> int:
        return self.mesh.coord_of(self.pe).hops_to(addr.coord)

    def idle(self, cycles: float):
        """Burn cycles on local computation."""
        self._service_irqs()
        if cycles < 0:
            raise ConfigError("cannot idle a negative amount")
        with self.mesh._cv:
            self.mesh._check_abort_locked()
            self.mesh._advance_locked(self.pe, cycles)

    # ------------------------------------------------------------ interrupts
    def set_irq_handler(self, handler):
        with self.mesh._cv:
            self._st.irq_handler = handler

    def _service_irqs(self):
        st = self._st
        if st.in_isr:
            return
        mesh = self.mesh
        while True:
            with mesh._cv:
                mesh._check_abort_locked()
                if not st.pending_irqs:
                    return
                t_irq, _src, desc_addr = st.pending_irqs.popleft()
                handler = st.irq_handler
                st.in_isr = True
                entry = max(st.clock, t_irq + self._cost.interrupt_latency_cycles)
                mesh._set_clock_locked(self.pe, entry)
            try:
                handler(self, desc_addr)
            finally:
                with mesh._cv:
                    st.in_isr = False
                    mesh._cv.notify_all()

    def raise_interrupt(self, target_pe: int, desc_addr: GlobalAddr):
        """Signal the target's user interrupt; the descriptor address rides along."""
        self._service_irqs()
        mesh = self.mesh
        if not 0 <= target_pe < mesh.n_pes:
            raise BusFault(f"interrupt target PE {target_pe} out of range")
        with mesh._cv:
            mesh._check_abort_locked()
            st = self._st
            d = mesh.hops(self.pe, target_pe)
            arrival = st.clock + self._cost.hop_cycles * d
            mesh._emit_locked(self.pe, arrival, "irq", (self.pe, target_pe, desc_addr))
            mesh._advance_locked(self.pe, self._cost.store_cycles_per_dword)

    # --------------------------------------------------------------- memory
    def _target_store(self, addr: GlobalAddr):
        return self.mesh._pes[self.mesh.pe_of_core(addr.core_id)].store

    def mem_write(self, dst: GlobalAddr, data: bytes) -> float:
        """Fire-and-forget store of 1/2/4/8 bytes; returns cycles charged."""
        self._service_irqs()
        data = bytes(data)
        tstore = self._target_store(dst)
        tstore.check_access(dst.offset, len(data))
        mesh = self.mesh
        with mesh._cv:
            mesh._check_abort_locked()
            st = self._st
            issue = st.clock
            d = self.hops_to(dst)
            deliver = issue + self._cost.hop_cycles * d
            mesh._emit_locked(self.pe, deliver, "store", (self.pe, dst.core_id, dst.offset, data))
            if deliver > st.last_store_delivery:
                st.last_store_delivery = deliver
            mesh._advance_locked(self.pe, self._cost.store_cycles_per_dword)
            return self._cost.store_cycles_per_dword

    def mem_read(self, src: GlobalAddr, width: int) -> tuple:
        """Stalling load; returns (bytes, cycles charged)."""
        self._service_irqs()
        tstore = self._target_store(src)
        tstore.check_access(src.offset, width)
        st = self._st
        issue = st.clock
        d = self.hops_to(src)
        if d == 0:
            cycles = self._cost.load_extra_cycles
            t_access = issue
        else:
            cycles = self._cost.read_roundtrip_base + 2 * self._cost.hop_cycles * d
            t_access = issue + self._cost.hop_cycles * d
        mesh = self.mesh
        mesh._turn(self.pe, t_access)
        with mesh._cv:
            value = tstore.read(src.offset, width)
            mesh._set_clock_locked(self.pe, issue + cycles)
            if mesh.trace:
                mesh.trace(("read", t_access, self.pe, mesh.pe_of_core(src.core_id),
                            src.offset, width))
        return value, cycles

    def local_store(self, offset: int, data: bytes) -> float:
        """Store program-generated bytes into the own local store."""
        self._service_irqs()
        data = bytes(data)
        self._st.store.check_range(offset, len(data))
        mesh = self.mesh
        with mesh._cv:
            mesh._check_abort_locked()
            st = self._st
            mesh._emit_locked(self.pe, st.clock, "store",
                              (self.pe, self.mesh.coord_of(self.pe).core_id, offset, data))
            cycles = math.ceil(len(data) / 8) * self._cost.store_cycles_per_dword
            mesh._advance_locked(self.pe, cycles)
            return cycles

    def local_load(self, offset: int, nbytes: int) -> bytes:
        self._service_irqs()
        self._st.store.check_range(offset, nbytes)
        st = self._st
        self.mesh._turn(self.pe, st.clock)
        with self.mesh._cv:
            value = st.store.read(offset, nbytes)
            cycles = math.ceil(nbytes / 8) * self._cost.load_extra_cycles
            self.mesh._advance_locked(self.pe, cycles)
        return value

    # fast-path block copies (the hand-tuned hardware-loop copy routine)
    def _block_cycles(self, nbytes, aligned8, per_dword):
        cm = self._cost
        if nbytes == 0:
            return 0.0
        if aligned8:
            dwords, tail = divmod(nbytes, 8)
            return dwords * per_dword + tail * cm.alignment_penalty_factor * per_dword / 8
        return nbytes * cm.alignment_penalty_factor * per_dword / 8

    def stream_put(self, src_offset: int, dst: GlobalAddr, nbytes: int) -> float:
        """Copy own-store bytes to dst as one pipelined store stream."""
        self._service_irqs()
        st = self._st
        st.store.check_range(src_offset, nbytes)
        self._target_store(dst).check_range(dst.offset, nbytes)
        mesh = self.mesh
        issue = st.clock
        mesh._turn(self.pe, issue)  # snapshot of the source at issue time
        with mesh._cv:
            aligned8 = src_offset % 8 == 0 and dst.offset % 8 == 0
            cycles = self._block_cycles(nbytes, aligned8, self._cost.fast_path_cycles_per_dword)
            if nbytes:
                payload = st.store.read(src_offset, nbytes)
                d = self.hops_to(dst)
                deliver = issue + cycles + self._cost.hop_cycles * d
                mesh._emit_locked(self.pe, deliver, "store",
                                  (self.pe, dst.core_id, dst.offset, payload))
                if deliver > st.last_store_delivery:
                    st.last_store_delivery = deliver
            mesh._set_clock_locked(self.pe, issue + cycles)
            return cycles

    def stream_get(self, dst_offset: int, src: GlobalAddr, nbytes: int) -> float:
        """Copy from src into the own store with stalling loads."""
        self._service_irqs()
        st = self._st
        st.store.check_range(dst_offset, nbytes)
        sstore = self._target_store(src)
        sstore.check_range(src.offset, nbytes)
        mesh = self.mesh
        issue = st.clock
        d = self.hops_to(src)
        aligned8 = src.offset % 8 == 0 and dst_offset % 8 == 0
        if d == 0:
            per_dword = self._cost.fast_path_cycles_per_dword
        else:
            per_dword = self._cost.read_roundtrip_base + 2 * self._cost.hop_cycles * d
        cycles = self._block_cycles(nbytes, aligned8, per_dword)
        t_access = issue + self._cost.hop_cycles * d
        mesh._turn(self.pe, t_access)
        with mesh._cv:
            if nbytes:
                payload = sstore.read(src.offset, nbytes)
                mesh._emit_locked(self.pe, issue + cycles, "store",
                                  (self.pe, self.mesh.coord_of(self.pe).core_id,
                                   dst_offset, payload))
            if mesh.trace:
                mesh.trace(("read", t_access, self.pe, mesh.pe_of_core(src.core_id),
                            src.offset, nbytes))
            mesh._set_clock_locked(self.pe, issue + cycles)
            return cycles

    # --------------------------------------------------------------- atomic
    def testset(self, target: GlobalAddr, value: int) -> int:
        """Remote atomic conditional write: if *target == 0, store value.

        Operates on a 32-bit word; returns the prior contents.
        """
        self._service_irqs()
        tstore = self._target_store(target)
        tstore.check_access(target.offset, 4)
        if not 0 <= value < (1 << 32):
            raise ConfigError("testset value must fit an unsigned 32-bit word")
        st = self._st
        mesh = self.mesh
        issue = st.clock
        d = self.hops_to(target)
        t_access = issue + self._cost.hop_cycles * d
        cycles = self._cost.testset_roundtrip_cycles + 2 * self._cost.hop_cycles * d
        mesh._turn(self.pe, t_access)
        with mesh._cv:
            old = int.from_bytes(tstore.read(target.offset, 4), "little")
            if old == 0:
                mesh._strict_dma_overlap_locked(target.core_id, target.offset, 4)
                tstore.write(target.offset, value.to_bytes(4, "little"))
                mesh._wake_watcher_locked(mesh.pe_of_core(target.core_id),
                                          target.offset, 4, t_access)
            if mesh.trace:
                mesh.trace(("testset", t_access, self.pe, mesh.pe_of_core(target.core_id),
                            target.offset, old))
            mesh._set_clock_locked(self.pe, issue + cycles)
        return old

    # ------------------------------------------------------------------ DMA
    def dma_start(self, desc: DmaDescriptor) -> bool:
        """Launch a transfer; False when the chosen channel is mid-transfer."""
        self._service_irqs()
        desc.check_alignment()
        src_store = self._target_store(desc.src)
        dst_store = self._target_store(desc.dst)
        mesh = self.mesh
        st = self._st
        issue = st.clock
        mesh._turn(self.pe, issue)  # source is snapshotted at launch
        with mesh._cv:
            ch = st.channels[desc.channel]
            if ch.busy:
                mesh._advance_locked(self.pe, tuning.DMA_START_ISSUE_CYCLES)
                return False
            writes = []
            src_offsets = []
            for src_off, dst_off in desc.element_offsets():
                src_store.check_range(src_off, desc.elem_size)
                dst_store.check_range(dst_off, desc.elem_size)
                payload = src_store.read(src_off, desc.elem_size)
                writes.append((desc.dst.core_id, dst_off, payload))
                src_offsets.append(src_off)
            d = desc.src.coord.hops_to(desc.dst.coord)
            duration = (self._cost.dma_setup_cycles
                        + (desc.total_bytes / 8) * self._cost.dma_cycles_per_dword
                        + self._cost.hop_cycles * d)
            ch.state = DmaState.BUSY
            ch.completion_time = issue + duration
            ch.descriptor = (desc, writes)
            ch.src_core = desc.src.core_id
            ch.src_intervals = tuple(merged_intervals(src_offsets, desc.elem_size))
            mesh._emit_locked(self.pe, ch.completion_time, "dma_done", (self.pe, desc.channel))
            mesh._advance_locked(self.pe, tuning.DMA_START_ISSUE_CYCLES)
            if mesh.trace:
                mesh.trace(("dma_start", issue, self.pe, desc.channel, desc.total_bytes))
            return True

    def dma_poll(self, channel: int) -> DmaState:
        """Poll the channel status register at the current cycle."""
        self._service_irqs()
        if channel not in range(DMA_CHANNELS):
            raise BusFault(f"no such DMA channel {channel}")
        st = self._st
        mesh = self.mesh
        mesh._turn(self.pe, st.clock)
        with mesh._cv:
            state = st.channels[channel].state
            mesh._advance_locked(self.pe, tuning.DMA_POLL_CYCLES)
        return state

    def dma_completion_time(self, channel: int) -> float:
        ch = self._st.channels[channel]
        return ch.completion_time if ch.busy else 0.0

    @property
    def outstanding_store_time(self) -> float:
        return self._st.last_store_delivery

    # ------------------------------------------------------------- spinning
    def spin_wait(self, offset: int, width: int, predicate,
                  poll_cycles: float = tuning.SPIN_POLL_CYCLES,
                  budget: float | None = None) -> bytes:
        """Spin on an own-store range until predicate(bytes) holds.

        Models a poll loop sampling every poll_cycles: the PE goes passive
        between polls and is woken by writes landing in the watched range,
        observing them at the next point of its poll grid.
        """
        st = self._st
        st.store.check_range(offset, width)
        if width in (1, 2, 4, 8):
            st.store.check_access(offset, width)
        mesh = self.mesh
        budget = mesh.max_spin_cycles if budget is None else budget
        anchor = st.clock
        t = st.clock
        planted = False
        while True:
            if not planted:
                self._service_irqs()
                if st.clock > t:
                    t = st.clock
                mesh._turn(self.pe, t)
            with mesh._cv:
                if planted:  # the waking writer planted our poll slot
                    key = st.wait_key
                    try:
                        mesh._await_key_locked(st, key)
                    finally:
                        mesh._exit_wait_locked(st)
                    t = key[0]
                    if t > st.clock:
                        st.clock = t
                    planted = False
                value = st.store.read(offset, width)
                if predicate(value):
                    return value
                if t - anchor > budget:
                    raise StallError(
                        f"PE {self.pe} exceeded the spin budget ({budget:g} cycles) "
                        f"waiting on offset {offset:#x}")
                if st.pending_irqs:
                    continue  # service, then re-poll
                # go passive: watch the range, wake on a hit
                st.state = _SPINNING
                st.watch = (offset, offset + width, anchor, poll_cycles)
                mesh._cv.notify_all()
                while st.state == _SPINNING and mesh._abort_exc is None:
                    if mesh._pump_locked():
                        continue
                    mesh._check_global_stall_locked()
                    if st.state != _SPINNING or mesh._abort_exc is not None:
                        break
                    st.cv.wait()
                mesh._check_abort_locked()
                # a writer moved us to _WAITING with a planted key
                planted = True

    # ------------------------------------------------------------- barrier
    def wand_barrier(self) -> float:
        """Whole-chip hardware barrier; returns the completion cycle."""
        self._service_irqs()
        mesh = self.mesh
        st = self._st
        with mesh._cv:
            mesh._check_abort_locked()
            for other in mesh._pes:
                if other.pe != self.pe and other.state == _PARKED:
                    raise StallError(
                        f"PE {other.pe} already exited and can never enter the "
                        f"hardware barrier")
            mesh._wand_entries[self.pe] = st.clock
            if len(mesh._wand_entries) == mesh.n_pes:
                t_done = max(mesh._wand_entries.values()) + self._cost.wand_barrier_cycles
                for other in mesh._pes:
                    if other.pe != self.pe and other.pe in mesh._wand_entries:
                        other.wand_release = t_done
                        other.cv.notify_all()
                mesh._wand_entries.clear()
                mesh._set_clock_locked(self.pe, t_done)
                mesh._cv.notify_all()
                return t_done
            st.state = _BLOCKED
            mesh._cv.notify_all()
            while st.wand_release is None:
                mesh._check_abort_locked()
                if mesh._pump_locked():
                    continue
                mesh._check_global_stall_locked()
                mesh._check_abort_locked()
                if st.wand_release is not None:
                    break
                st.cv.wait()
            t_done = st.wand_release
            st.wand_release = None
            st.state = _RUNNING
            st.clock = t_done
            mesh._cv.notify_all()
            return t_done
