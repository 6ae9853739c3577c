"""Instruction-path cycle counts of the runtime code itself.

These are not hardware calibration knobs (those live in CostModel): they
model how many instructions the library's own code spends per call, loop
iteration, or poll, and are fixed alongside the code they describe. Values
are cycles at one instruction per clock.
"""

# mesh-level engines
SPIN_POLL_CYCLES = 4.0        # local flag poll: load, compare, branch
DMA_POLL_CYCLES = 2.0         # DMA status register read + test
DMA_START_ISSUE_CYCLES = 8.0  # descriptor register writes

# blocking RMA entry paths (argument checks, alignment dispatch, loop setup)
PUT_CALL_CYCLES = 20.0
GET_CALL_CYCLES = 20.0
NBI_CALL_CYCLES = 10.0
QUIET_CALL_CYCLES = 2.0
WAIT_CALL_CYCLES = 2.0

# IPI-assisted get
IPI_REQUEST_CYCLES = 10.0     # build + publish the request descriptor
IPI_HANDLER_ENTRY_CYCLES = 16.0
IPI_HANDLER_EXIT_CYCLES = 8.0

# atomics and locks
ATOMIC_CALL_CYCLES = 8.0
LOCK_CALL_CYCLES = 6.0

# collectives (per-call and per-round bookkeeping: partner/stamp arithmetic)
BARRIER_CALL_CYCLES = 10.0
BARRIER_ROUND_CYCLES = 16.0
COUNTER_BARRIER_CALL_CYCLES = 14.0
BCAST_ROUND_CYCLES = 14.0
COLLECT_STEP_CYCLES = 14.0
REDUCE_ROUND_CYCLES = 16.0
REDUCE_COMBINE_CYCLES_PER_ELEM = 2.0
ALLTOALL_CALL_CYCLES = 14.0

# allocator / setup paths (charged once, magnitude never benchmarked)
ALLOC_CALL_CYCLES = 12.0
INIT_CALL_CYCLES = 50.0
