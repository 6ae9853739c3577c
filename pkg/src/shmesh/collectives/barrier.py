"""Barriers: hardware WAND, software dissemination, and the counter baseline."""

from .. import tuning
from ..shmem.runtime import RT_BARRIER_SYNC, RT_COUNTER_WORD, _off
from .constants import ActiveSet, check_set, world_set


def dissemination_sync(ctx, aset: ActiveSet, psync_off: int):
    """Log-round signal/spin barrier over the active set.

    Round r: member i stamps the flag word r of member (i + 2^r) mod P and
    spins on its own word r, so exactly ceil(log2 P) pSync words (8 bytes
    each) are touched per member. Flags carry monotonically increasing
    stamps, so no reset is needed between invocations.
    """
    P = aset.pe_size
    if P == 1:
        return
    rank = aset.rank_of(ctx.pe)
    port = ctx.port
    rounds = (P - 1).bit_length()
    for r in range(rounds):
        port.idle(tuning.BARRIER_ROUND_CYCLES)
        partner = aset.member((rank + (1 << r)) % P)
        woff = psync_off + 8 * r
        stamp = ctx.next_stamp(woff)
        port.mem_write(ctx.ptr(woff, partner), stamp.to_bytes(8, "little"))
        port.spin_wait(woff, 8,
                       lambda b, s=stamp: int.from_bytes(b, "little") >= s)


def barrier(ctx, aset: ActiveSet, psync):
    """Active-set barrier (dissemination); quiets the calling PE first."""
    check_set(ctx, aset)
    ctx.quiet()
    ctx.port.idle(tuning.BARRIER_CALL_CYCLES)
    dissemination_sync(ctx, aset, _off(psync))
    ctx.stats["barrier"] += 1


def barrier_all(ctx):
    """Whole-chip barrier: WAND when enabled, else dissemination; implies quiet."""
    ctx._require_init()
    ctx.quiet()
    ctx.stats["barrier"] += 1
    if ctx.npes == 1:
        return
    if ctx.flags.use_wand_barrier:
        ctx.port.idle(tuning.BARRIER_CALL_CYCLES)
        ctx.port.wand_barrier()
    else:
        ctx.port.idle(tuning.BARRIER_CALL_CYCLES)
        dissemination_sync(ctx, world_set(ctx), ctx.rt_off(RT_BARRIER_SYNC))


def counter_barrier_all(ctx):
    """Counter-based baseline: atomically bump a counter on PE 0 and spin-read
    it remotely until everyone arrived. Linear cost; modeled for comparison
    benchmarks only."""
    ctx._require_init()
    ctx.quiet()
    ctx.stats["barrier"] += 1
    if ctx.npes == 1:
        return
    port = ctx.port
    port.idle(tuning.COUNTER_BARRIER_CALL_CYCLES)
    ctx._counter_gen += 1
    target = ctx._counter_gen * ctx.npes
    counter_off = ctx.rt_off(RT_COUNTER_WORD)
    ctx.atomic("add", counter_off, 0, value=1, elem_size=8)
    addr = ctx.ptr(counter_off, 0)
    while True:
        raw, _ = port.mem_read(addr, 8)
        if int.from_bytes(raw, "little") >= target:
            return
        port.idle(2)  # loop overhead between remote reads
