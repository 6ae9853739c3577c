"""Exception types shared across the simulator and the runtime."""


class SimulationError(Exception):
    """Base class for every error raised by this package."""


class MeshFault(SimulationError):
    """Hardware-level access fault raised by the mesh model."""


class AlignmentFault(MeshFault):
    """Load/store/DMA address not aligned to the access width."""


class BusFault(MeshFault):
    """Access to an invalid core id or outside a local store."""


class StallError(SimulationError):
    """The simulation can no longer make progress (deadlock / lost PE)."""


class StrictModeViolation(SimulationError):
    """A caller-contract violation detected in strict mode."""


class ConfigError(SimulationError):
    """Bad configuration value, file, or CLI argument."""


class ShmemError(SimulationError):
    """Misuse of the PE runtime API."""


class AllocationError(ShmemError):
    """Symmetric-heap rule violation or out-of-memory."""


class SpmdError(SimulationError):
    """A PE program raised; carries the failing PE id."""

    def __init__(self, pe, cause):
        super().__init__(f"PE {pe} failed: {cause!r}")
        self.pe = pe
        self.cause = cause
