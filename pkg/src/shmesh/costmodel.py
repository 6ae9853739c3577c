"""Calibration constants that turn simulated events into cycles.

All values are per-chip calibration parameters, not measurements: the
defaults are chosen so that the well-known magnitudes of this device class
come out of the simulator (8 bytes per 2 clocks on the store fast path at
600 MHz -> 2.4 GB/s, a DMA engine throttled below half of the 8 B/clock
peak, a ~10x read/write throughput asymmetry, a 0.1 us hardware barrier).
"""

from dataclasses import dataclass, fields

from .errors import ConfigError


@dataclass(frozen=True)
class CostModel:
    """Cycle costs of the mesh fabric and per-core engines.

    clock_hz                 core/NoC clock (both are pinned to one clock)
    store_cycles_per_dword   issue cost of one (remote) store instruction
    load_extra_cycles        extra cycle an 8-byte load spends vs. a store
    hop_cycles               transit cost per mesh hop (may be fractional)
    read_roundtrip_base      stall cycles of a remote load before hop costs
    dma_setup_cycles         fixed cost to program and launch a descriptor
    dma_cycles_per_dword     DMA transfer cost per 8 bytes (errata throttle)
    interrupt_latency_cycles delay from interrupt arrival to handler entry
    testset_roundtrip_cycles remote atomic test-and-set round trip base
    wand_barrier_cycles      hardware barrier cost after the last arrival
    alignment_penalty_factor slowdown of the byte-wise unaligned copy path
    """

    clock_hz: float = 600e6
    store_cycles_per_dword: float = 1.0
    load_extra_cycles: float = 1.0
    hop_cycles: float = 1.5
    read_roundtrip_base: float = 17.0
    dma_setup_cycles: float = 40.0
    dma_cycles_per_dword: float = 2.5
    interrupt_latency_cycles: float = 25.0
    testset_roundtrip_cycles: float = 30.0
    wand_barrier_cycles: float = 60.0
    alignment_penalty_factor: float = 8.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, float)) or not v > 0:
                raise ConfigError(f"cost model field {f.name!r} must be > 0, got {v!r}")
        # DMA must stay below half of the 8 B/clock fabric peak.
        if self.dma_cycles_per_dword <= 2.0:
            raise ConfigError(
                "dma_cycles_per_dword must exceed 2.0 (DMA throttled below half peak)"
            )

    @property
    def fast_path_cycles_per_dword(self) -> float:
        """Cost of moving 8 bytes on the aligned load+store fast path."""
        return self.store_cycles_per_dword + self.load_extra_cycles

    def cycles_to_seconds(self, cycles: float) -> float:
        return cycles / self.clock_hz

    def seconds_to_cycles(self, seconds: float) -> float:
        return seconds * self.clock_hz


COST_FIELD_NAMES = tuple(f.name for f in fields(CostModel))
