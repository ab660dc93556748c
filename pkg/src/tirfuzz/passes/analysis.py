"""Conservative program analyses shared by the optimization passes."""

from __future__ import annotations

from ..tir import (
    Broadcast,
    BufferLoad,
    BufferStore,
    FloorDiv,
    FloorMod,
    IntImm,
    IrNode,
    PrimExpr,
    PrimFunc,
    VarRef,
    children,
    walk,
)


def const_int(e: PrimExpr) -> int | None:
    """Value of an integer immediate, else None."""
    if isinstance(e, IntImm):
        return e.value
    return None


def _nonzero_const_divisor(d: PrimExpr) -> bool:
    if isinstance(d, IntImm):
        return d.value != 0
    if isinstance(d, Broadcast) and isinstance(d.value, IntImm):
        return d.value.value != 0
    return False


def trap_free(e: PrimExpr) -> bool:
    """True when evaluating `e` can never trap in any state.

    Conservative: rejects every BufferLoad (out-of-bounds is state
    dependent) and any division whose divisor is not a non-zero constant.
    """
    cls = e.__class__
    if cls is BufferLoad:
        return False
    if cls is FloorDiv or cls is FloorMod:
        if not _nonzero_const_divisor(e.rhs):
            return False
    for _, child in children(e):
        if not trap_free(child):
            return False
    return True


def count_var_uses(node: IrNode, uid: int) -> int:
    n = 0
    for cur in walk(node):
        if cur.__class__ is VarRef and cur.var.uid == uid:
            n += 1
    return n


def loads_buffer(e: IrNode, buf_uid: int) -> bool:
    for cur in walk(e):
        if cur.__class__ is BufferLoad and cur.buffer.var.uid == buf_uid:
            return True
    return False


def contains_store(node: IrNode) -> bool:
    for cur in walk(node):
        if cur.__class__ is BufferStore:
            return True
    return False


def observable_buffer_uids(func: PrimFunc) -> frozenset[int]:
    """Buffers whose final contents are execution outputs."""
    uids = {b.var.uid for b in func.buffers}
    if func.ret_buffer is not None:
        uids.add(func.ret_buffer.var.uid)
    return frozenset(uids)


def use_inside_observable_store_value(node: IrNode, uid: int,
                                      observable: frozenset[int]) -> bool:
    """Does some use of `uid` sit inside the value of a store to an
    observable buffer? Used by the inliner's planted-bug gate."""
    cls = node.__class__
    if cls is BufferStore and node.buffer.var.uid in observable:
        if count_var_uses(node.value, uid) > 0:
            return True
        # fall through: indices may contain nested stores? they cannot,
        # but sub-expressions cannot contain statements either.
        return False
    for _, child in children(node):
        if use_inside_observable_store_value(child, uid, observable):
            return True
    return False
