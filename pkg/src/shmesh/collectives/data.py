"""Data-movement collectives: broadcast, collect, fcollect, alltoall."""

from .. import tuning
from ..errors import ShmemError
from ..shmem.runtime import _off
from .barrier import dissemination_sync
from .constants import ActiveSet, check_set

_BCAST_SYNC_AT = 4 * 8      # closing-sync slice inside the broadcast pSync
_COLLECT_FLAGS = 4          # cycling data-flag window for unequal collect
_COLLECT_ACK_AT = 4 * 8
_COLLECT_PREFIX_AT = 5 * 8
_COLLECT_SYNC_AT = 6 * 8
_FCOLLECT_SYNC_AT = 12 * 8
_A2A_SYNC_AT = 4 * 8


def _stamp_word(stamp16: int, off: int, nbytes: int) -> int:
    # 16-bit stamp | 24-bit destination byte offset | 24-bit length
    return ((stamp16 & 0xFFFF) << 48) | ((off & 0xFFFFFF) << 24) | (nbytes & 0xFFFFFF)


def _split_word(word: int):
    return (word >> 48) & 0xFFFF, (word >> 24) & 0xFFFFFF, word & 0xFFFFFF


def broadcast(ctx, dest, src, nelems, elem_size, pe_root, aset: ActiveSet, psync):
    """Binary-tree broadcast sending over the longest distance first.

    Data moves root -> rank root+P/2, then each holder covers the farthest
    half of its remaining range, halving the gap every round; 1.3 semantics:
    the root's dest is not written.
    """
    rank = check_set(ctx, aset)
    if elem_size not in (4, 8):
        raise ShmemError(f"broadcast supports 4/8-byte elements, not {elem_size}")
    if not 0 <= pe_root < aset.pe_size:
        raise ShmemError(f"broadcast root {pe_root} outside the active set")
    dest, src, psync = _off(dest), _off(src), _off(psync)
    P = aset.pe_size
    port = ctx.port
    nbytes = nelems * elem_size
    if P > 1:
        v = (rank - pe_root) % P  # root-relative rank
        flag_off = psync
        stamp = ctx.next_stamp(flag_off)
        d = 1 << (P - 1).bit_length() - 1
        got = v == 0
        while d >= 1:
            port.idle(tuning.BCAST_ROUND_CYCLES)
            if not got and v % (2 * d) == d:
                port.spin_wait(flag_off, 8,
                               lambda b, s=stamp: int.from_bytes(b, "little") >= s)
                got = True
            elif got and v % (2 * d) == 0 and v + d < P:
                peer = aset.member((v + d + pe_root) % P)
                src_off = src if v == 0 else dest
                if nbytes:
                    port.stream_put(src_off, ctx.ptr(dest, peer), nbytes)
                port.mem_write(ctx.ptr(flag_off, peer), stamp.to_bytes(8, "little"))
            d //= 2
    dissemination_sync(ctx, aset, psync + _BCAST_SYNC_AT)


def fcollect(ctx, dest, src, nelems, elem_size, aset: ActiveSet, psync):
    """Concatenate equal-size blocks on every member, ordered by rank.

    Power-of-two sets use recursive doubling (exchanged block doubles per
    round); other sizes fall back to the ring pass.
    """
    rank = check_set(ctx, aset)
    dest, src, psync = _off(dest), _off(src), _off(psync)
    P = aset.pe_size
    port = ctx.port
    B = nelems * elem_size
    if B:
        port.stream_put(src, ctx.ptr(dest + rank * B, ctx.pe), B)  # own block
    if P > 1 and P & (P - 1) == 0:
        for r in range((P - 1).bit_length()):
            port.idle(tuning.COLLECT_STEP_CYCLES)
            partner = aset.member(rank ^ (1 << r))
            base = rank & ~((1 << r) - 1)
            span = (1 << r) * B
            woff = psync + 8 * r
            stamp = ctx.next_stamp(woff)
            if span:
                port.stream_put(dest + base * B, ctx.ptr(dest + base * B, partner), span)
            port.mem_write(ctx.ptr(woff, partner), stamp.to_bytes(8, "little"))
            port.spin_wait(woff, 8,
                           lambda b, s=stamp: int.from_bytes(b, "little") >= s)
    elif P > 1:
        _ring_collect_equal(ctx, dest, B, rank, aset, psync)
    dissemination_sync(ctx, aset, psync + _FCOLLECT_SYNC_AT)


def _ring_collect_equal(ctx, dest, B, rank, aset, psync):
    """Ring pass for equal blocks: step s forwards block (rank - s) mod P."""
    P = aset.pe_size
    port = ctx.port
    nxt = aset.member((rank + 1) % P)
    flag_off = psync
    for s in range(P - 1):
        port.idle(tuning.COLLECT_STEP_CYCLES)
        blk = (rank - s) % P
        stamp = ctx.next_stamp(flag_off)
        if B:
            port.stream_put(dest + blk * B, ctx.ptr(dest + blk * B, nxt), B)
        port.mem_write(ctx.ptr(flag_off, nxt), stamp.to_bytes(8, "little"))
        port.spin_wait(flag_off, 8,
                       lambda b, s=stamp: int.from_bytes(b, "little") >= s)


def collect(ctx, dest, src, nelems, elem_size, aset: ActiveSet, psync):
    """Concatenate possibly-unequal blocks, ordered by rank.

    Ring algorithm: destination offsets are discovered by a serialized
    prefix-token lap, then blocks circle the ring with their (offset, size)
    riding in the flag word; a window ACK paces flag-word reuse.
    """
    rank = check_set(ctx, aset)
    dest, src, psync = _off(dest), _off(src), _off(psync)
    P = aset.pe_size
    port = ctx.port
    my_bytes = nelems * elem_size
    if P == 1:
        if my_bytes:
            port.stream_put(src, ctx.ptr(dest, ctx.pe), my_bytes)
        return
    nxt = aset.member((rank + 1) % P)
    prev = aset.member((rank - 1) % P)
    prefix_off = psync + _COLLECT_PREFIX_AT
    ack_off = psync + _COLLECT_ACK_AT

    # phase 1: learn my block's destination offset (serialized around the ring)
    port.idle(tuning.COLLECT_STEP_CYCLES)
    pstamp = ctx.next_stamp(prefix_off) & 0xFFFF  # one per invocation, every rank
    if rank == 0:
        my_off = 0
    else:
        raw = port.spin_wait(prefix_off, 8,
                             lambda b, s=pstamp: (int.from_bytes(b, "little") >> 48) == s)
        my_off = int.from_bytes(raw, "little") & 0xFFFFFFFFFFFF
    if rank < P - 1:
        token = (pstamp << 48) | ((my_off + my_bytes) & 0xFFFFFFFFFFFF)
        port.mem_write(ctx.ptr(prefix_off, nxt), token.to_bytes(8, "little"))
    if my_bytes:
        port.stream_put(src, ctx.ptr(dest + my_off, ctx.pe), my_bytes)

    # phase 2: every block travels P-1 hops; (offset, size) rides the flag
    # word; the receiver acks each consumed message so a flag word is only
    # rewritten once its previous use has been read (window backpressure)
    ack_base = ctx.next_stamp(ack_off, tag="base", advance=P - 1) - (P - 1)
    blk_off, blk_bytes = my_off, my_bytes
    for s in range(P - 1):
        port.idle(tuning.COLLECT_STEP_CYCLES)
        woff = psync + 8 * (s % _COLLECT_FLAGS)
        if s >= _COLLECT_FLAGS:
            want = ack_base + (s - _COLLECT_FLAGS + 1)
            port.spin_wait(ack_off, 8,
                           lambda b, w=want: int.from_bytes(b, "little") >= w)
        if blk_bytes:
            port.stream_put(dest + blk_off, ctx.ptr(dest + blk_off, nxt), blk_bytes)
        stamp = ctx.next_stamp(woff, tag="send") & 0xFFFF
        port.mem_write(ctx.ptr(woff, nxt),
                       _stamp_word(stamp, blk_off, blk_bytes).to_bytes(8, "little"))
        # consume my predecessor's step-s message (data landed before its flag)
        want16 = ctx.next_stamp(woff, tag="recv") & 0xFFFF
        raw = port.spin_wait(woff, 8,
                             lambda b, w=want16: _split_word(int.from_bytes(b, "little"))[0] == w)
        _, blk_off, blk_bytes = _split_word(int.from_bytes(raw, "little"))
        ack = ctx.next_stamp(ack_off, tag="ack")
        port.mem_write(ctx.ptr(ack_off, prev), ack.to_bytes(8, "little"))
    dissemination_sync(ctx, aset, psync + _COLLECT_SYNC_AT)


def alltoall(ctx, dest, src, nelems, elem_size, aset: ActiveSet, psync):
    """Total exchange: dest block j on member i = src block i of member j.

    Each member puts block (rank + r) mod P at round r (rotation spreads the
    destinations) and bumps an atomic arrival counter on the target, whose
    total signals completion; latency is dominated by the P-1 counter bumps.
    """
    rank = check_set(ctx, aset)
    dest, src, psync = _off(dest), _off(src), _off(psync)
    P = aset.pe_size
    port = ctx.port
    B = nelems * elem_size
    port.idle(tuning.ALLTOALL_CALL_CYCLES)
    if B:
        port.stream_put(src + rank * B, ctx.ptr(dest + rank * B, ctx.pe), B)
    if P == 1:
        return
    counter_off = psync
    gen = ctx.next_stamp(counter_off)
    for r in range(1, P):
        t = (rank + r) % P
        peer = aset.member(t)
        if B:
            port.stream_put(src + t * B, ctx.ptr(dest + rank * B, peer), B)
        ctx.atomic("add", counter_off, peer, value=1, elem_size=8)
    port.spin_wait(counter_off, 8,
                   lambda b, w=gen * (P - 1): int.from_bytes(b, "little") >= w)
    dissemination_sync(ctx, aset, psync + _A2A_SYNC_AT)
