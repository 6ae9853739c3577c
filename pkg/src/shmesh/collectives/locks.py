"""Distributed locks backed by the remote test-and-set primitive.

A lock is named by a symmetric 8-byte word; the actual lock cell is the
32-bit word at that offset on the first PE. Holders stamp the word with
pe+1, so a free lock reads 0.
"""

from .. import tuning
from ..errors import ShmemError
from ..shmem.runtime import _off

_LOCK_HOME_PE = 0


def set_lock(ctx, lock):
    """Acquire: spin test-and-set against the word on the first PE."""
    ctx._require_init()
    ctx.port.idle(tuning.LOCK_CALL_CYCLES)
    ctx._spin_lock(ctx.ptr(_off(lock), _LOCK_HOME_PE), tag=ctx.pe + 1)


def test_lock(ctx, lock) -> bool:
    """One acquisition attempt, no spin; True when the lock was taken."""
    ctx._require_init()
    ctx.port.idle(tuning.LOCK_CALL_CYCLES)
    old = ctx.port.testset(ctx.ptr(_off(lock), _LOCK_HOME_PE), ctx.pe + 1)
    return old == 0


def clear_lock(ctx, lock):
    """Release: a plain remote write of zero; strict mode verifies ownership."""
    ctx._require_init()
    port = ctx.port
    port.idle(tuning.LOCK_CALL_CYCLES)
    addr = ctx.ptr(_off(lock), _LOCK_HOME_PE)
    if port.mesh.strict:
        raw, _ = port.mem_read(addr, 4)
        holder = int.from_bytes(raw, "little")
        if holder != ctx.pe + 1:
            raise ShmemError(
                f"PE {ctx.pe} clearing a lock held by "
                f"{'nobody' if holder == 0 else f'PE {holder - 1}'}")
    port.mem_write(addr, bytes(4))
