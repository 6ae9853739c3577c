"""Elementwise reductions across an active set.

Power-of-two sets combine by recursive doubling (exchange + local combine
each round); other sizes reduce along a ring to the last member and pass
the result back. Data wider than the caller's work array is processed in
work-array-sized chunks, which is what makes small reductions that fit in
one chunk noticeably cheaper.
"""

import struct

from .. import tuning
from ..errors import ShmemError
from ..shmem.runtime import _off
from .barrier import dissemination_sync
from .constants import REDUCE_MIN_WRKDATA_SIZE, ActiveSet, check_set

_ACK_AT = 12 * 8
_SYNC_AT = 24 * 8

REDUCE_OPS = ("sum", "prod", "min", "max", "and", "or", "xor")

_DTYPES = {
    "int32": ("<i", 4, True),
    "int64": ("<q", 8, True),
    "float32": ("<f", 4, False),
    "float64": ("<d", 8, False),
}


def pwrk_elems(nreduce: int) -> int:
    """Required work-array capacity in elements for an nreduce-wide call."""
    return max(nreduce // 2 + 1, REDUCE_MIN_WRKDATA_SIZE)


def _combine(op, a, b, nbits, is_int):
    if op == "sum":
        r = a + b
    elif op == "prod":
        r = a * b
    elif op == "min":
        return min(a, b)
    elif op == "max":
        return max(a, b)
    elif op == "and":
        r = a & b
    elif op == "or":
        r = a | b
    else:
        r = a ^ b
    if is_int:  # wrap like fixed-width registers
        r &= (1 << nbits) - 1
        if r >= 1 << (nbits - 1):
            r -= 1 << nbits
    return r


def reduce(ctx, op, dtype, dest, src, nreduce, aset: ActiveSet, pwrk, psync):
    """dest[i] = op over all members' src[i]; every member gets the result."""
    if op not in REDUCE_OPS:
        raise ShmemError(f"unknown reduction op {op!r}")
    if dtype not in _DTYPES:
        raise ShmemError(f"unknown reduction dtype {dtype!r}")
    fmt, elem, is_int = _DTYPES[dtype]
    if not is_int and op in ("and", "or", "xor"):
        raise ShmemError(f"bitwise reduction {op!r} undefined for {dtype}")
    rank = check_set(ctx, aset)
    dest, src, psync = _off(dest), _off(src), _off(psync)
    pwrk_off = _off(pwrk)
    cap = getattr(pwrk, "size", None)
    need = pwrk_elems(nreduce) * elem
    if cap is not None and cap < need:
        raise ShmemError(f"work array holds {cap} bytes, call needs {need}")
    port = ctx.port
    P = aset.pe_size

    chunk = max(1, need // elem)
    for base in range(0, max(nreduce, 1), chunk):
        cnt = min(chunk, nreduce - base) if nreduce else 0
        cbytes = cnt * elem
        coff = base * elem
        if cbytes:
            port.stream_put(src + coff, ctx.ptr(dest + coff, ctx.pe), cbytes)
        if P == 1 or cnt == 0:
            if nreduce == 0:
                break
            continue
        ci = base // chunk
        if P & (P - 1) == 0:
            _doubling_chunk(ctx, op, fmt, elem, is_int, dest + coff, pwrk_off,
                            cnt, rank, aset, psync, ci)
        else:
            _ring_chunk(ctx, op, fmt, elem, is_int, dest + coff, src + coff,
                        pwrk_off, cnt, rank, aset, psync)
        if nreduce == 0:
            break
    dissemination_sync(ctx, aset, psync + _SYNC_AT)


def _apply(ctx, op, fmt, elem, is_int, acc_off, in_off, cnt):
    """Elementwise combine of own-store regions: acc = acc op in."""
    port = ctx.port
    nbits = 8 * elem
    a = struct.unpack(f"{fmt[0]}{cnt}{fmt[1]}", port.local_load(acc_off, cnt * elem))
    b = struct.unpack(f"{fmt[0]}{cnt}{fmt[1]}", port.local_load(in_off, cnt * elem))
    out = [_combine(op, x, y, nbits, is_int) for x, y in zip(a, b)]
    port.local_store(acc_off, struct.pack(f"{fmt[0]}{cnt}{fmt[1]}", *out))
    port.idle(tuning.REDUCE_COMBINE_CYCLES_PER_ELEM * cnt)


def _doubling_chunk(ctx, op, fmt, elem, is_int, acc_off, pwrk_off, cnt,
                    rank, aset, psync, chunk_index):
    """One chunk of recursive-doubling allreduce (pow2 members)."""
    port = ctx.port
    P = aset.pe_size
    for r in range((P - 1).bit_length()):
        port.idle(tuning.REDUCE_ROUND_CYCLES)
        partner = aset.member(rank ^ (1 << r))
        woff = psync + 8 * r
        aoff = psync + _ACK_AT + 8 * r
        # partner must have combined the previous chunk out of its pWrk
        # before this one may land there (counter kept in lockstep even on
        # chunk 0, where the closing sync of the previous call is the guard)
        want = ctx.next_stamp(aoff, tag="need") - 1
        if chunk_index > 0:
            port.spin_wait(aoff, 8,
                           lambda b, w=want: int.from_bytes(b, "little") >= w)
        port.stream_put(acc_off, ctx.ptr(pwrk_off, partner), cnt * elem)
        stamp = ctx.next_stamp(woff)
        port.mem_write(ctx.ptr(woff, partner), stamp.to_bytes(8, "little"))
        port.spin_wait(woff, 8,
                       lambda b, s=stamp: int.from_bytes(b, "little") >= s)
        _apply(ctx, op, fmt, elem, is_int, acc_off, pwrk_off, cnt)
        ack = ctx.next_stamp(aoff, tag="ack")
        port.mem_write(ctx.ptr(aoff, partner), ack.to_bytes(8, "little"))


def _ring_chunk(ctx, op, fmt, elem, is_int, acc_off, src_off, pwrk_off, cnt,
                rank, aset, psync):
    """One chunk of the non-pow2 ring: reduce towards the last member, then
    circulate the result back around."""
    port = ctx.port
    P = aset.pe_size
    f1 = psync
    f2 = psync + 8
    cbytes = cnt * elem
    port.idle(tuning.REDUCE_ROUND_CYCLES)
    # phase 1: partials travel rank 0 -> 1 -> ... -> P-1
    if rank > 0:
        stamp = ctx.next_stamp(f1)
        port.spin_wait(f1, 8, lambda b, s=stamp: int.from_bytes(b, "little") >= s)
        _apply(ctx, op, fmt, elem, is_int, acc_off, pwrk_off, cnt)
    else:
        ctx.next_stamp(f1)  # keep the stamp counter in lockstep
    if rank < P - 1:
        nxt = aset.member(rank + 1)
        port.stream_put(acc_off, ctx.ptr(pwrk_off, nxt), cbytes)
        port.mem_write(ctx.ptr(f1, nxt), ctx.peek_stamp(f1).to_bytes(8, "little"))
    # phase 2: the full result circulates P-1 -> 0 -> 1 -> ... -> P-2
    port.idle(tuning.REDUCE_ROUND_CYCLES)
    stamp2 = ctx.next_stamp(f2)
    if rank != P - 1:
        port.spin_wait(f2, 8, lambda b, s=stamp2: int.from_bytes(b, "little") >= s)
    if rank != P - 2:
        nxt = aset.member((rank + 1) % P)
        port.stream_put(acc_off, ctx.ptr(acc_off, nxt), cbytes)
        port.mem_write(ctx.ptr(f2, nxt), stamp2.to_bytes(8, "little"))
