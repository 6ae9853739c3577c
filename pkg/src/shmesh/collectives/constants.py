"""Sizing constants for caller-provided symmetric arrays, and active sets.

All sizes are in 8-byte words. The layouts below are what the algorithms in
this package actually use (word indexes into the caller's pSync):

  barrier:   [0 .. 12)   dissemination flags, one word per round
  broadcast: [0]         receive flag; [4 .. 16) closing sync
  collect:   [0 .. 4)    data flags (cycling window); [4] ack; [5] prefix
             token; [6 .. 18) closing sync
  fcollect:  [0 .. 12)   round flags (doubling) or [0] ring flag;
             [12 .. 24) closing sync
  reduce:    [0 .. 12)   round flags; [12 .. 24) acks; [24 .. 36) closing sync
  alltoall:  [0]         arrival counter; [4 .. 16) closing sync
"""

from dataclasses import dataclass

from ..errors import ShmemError

BARRIER_SYNC_SIZE = 12
BCAST_SYNC_SIZE = 16
COLLECT_SYNC_SIZE = 32
REDUCE_SYNC_SIZE = 40
ALLTOALL_SYNC_SIZE = 16
REDUCE_MIN_WRKDATA_SIZE = 16  # elements, OpenSHMEM 1.3 minimum pWrk size
SYNC_VALUE = 0                # initial pSync word value ("never used")


@dataclass(frozen=True)
class ActiveSet:
    """The (start, log-stride, size) triple naming a collective's members."""

    pe_start: int
    log_pe_stride: int
    pe_size: int

    def __post_init__(self):
        if self.pe_size < 1 or self.pe_start < 0 or self.log_pe_stride < 0:
            raise ShmemError(f"invalid active set {self}")

    def member(self, k: int) -> int:
        return self.pe_start + k * (1 << self.log_pe_stride)

    def members(self):
        return [self.member(k) for k in range(self.pe_size)]

    def rank_of(self, pe: int) -> int:
        stride = 1 << self.log_pe_stride
        k, rem = divmod(pe - self.pe_start, stride)
        if rem or not 0 <= k < self.pe_size:
            raise ShmemError(f"PE {pe} is not a member of {self}")
        return k


def world_set(ctx) -> ActiveSet:
    return ActiveSet(0, 0, ctx.npes)


def check_set(ctx, aset: ActiveSet) -> int:
    """Validate the set against the mesh and return the caller's rank."""
    last = aset.member(aset.pe_size - 1)
    if last >= ctx.npes:
        raise ShmemError(f"{aset} exceeds n_pes={ctx.npes}")
    return aset.rank_of(ctx.pe)
