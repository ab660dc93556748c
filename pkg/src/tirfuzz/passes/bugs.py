"""Planted-fault catalog for the pass library.

Each bug is a deterministically gated fault living inside one host pass:
it fires only when that pass actually processes an IR satisfying the
trigger predicate, so finding it requires the right IR feature *and* the
host pass in the sequence. The catalog is the ground truth for
bug-detection measurements; with every bug disabled the passes are
semantics preserving.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .. import coverage
from ..tir import (
    FLOAT32,
    INT32,
    Add,
    AttrKey,
    AttrStmt,
    Broadcast,
    Buffer,
    BufferStore,
    Call,
    Evaluate,
    FloatImm,
    FloorDiv,
    FloorMod,
    For,
    ForKind,
    GT,
    IfThenElse,
    IntImm,
    IntrinsicId,
    Let,
    LetStmt,
    LT,
    PrimFunc,
    Ramp,
    SeqStmt,
    Var,
    VarRef,
    walk,
)
from .analysis import (
    count_var_uses,
    observable_buffer_uids,
    trap_free,
    use_inside_observable_store_value,
)
from .base import PassId, PassSequence


class BugEffect(Enum):
    MISCOMPILE = "miscompile"
    SLOWDOWN = "slowdown"
    TRAP = "trap"


@dataclass(frozen=True)
class PlantedBug:
    bug_id: str
    host_pass: PassId
    effect: BugEffect
    description: str
    trigger: Callable[[PrimFunc], bool]
    make_witness: Callable[[], tuple[PrimFunc, PassSequence]]
    site: int = field(init=False, default=0)

    def __post_init__(self):
        object.__setattr__(self, "site", coverage.register_site(f"bug/{self.bug_id}/fired"))


@dataclass(frozen=True)
class BugPlan:
    """Which catalog bugs are switched on for a campaign."""

    enabled_bugs: frozenset[str] = frozenset()

    def active(self, bug_id: str) -> bool:
        return bug_id in self.enabled_bugs


NO_BUGS = BugPlan()


def plan_for(*bug_ids: str) -> BugPlan:
    for b in bug_ids:
        if b not in CATALOG:
            raise KeyError(f"unknown bug id {b!r}")
    return BugPlan(frozenset(bug_ids))


def default_plan() -> BugPlan:
    return BugPlan(frozenset(CATALOG))


# --------------------------------------------------------------------------
# Trigger predicates (written against the input IR, independently of the
# pass implementations they describe)
# --------------------------------------------------------------------------


def _is_ramp_div_zero(func: PrimFunc) -> bool:
    for n in walk(func.body):
        if n.__class__ in (FloorDiv, FloorMod):
            if (isinstance(n.lhs, Ramp) and isinstance(n.lhs.stride, IntImm)
                    and isinstance(n.rhs, Broadcast)
                    and isinstance(n.rhs.value, IntImm)
                    and n.rhs.value.value == 0):
                return True
    return False


def _has_vthread_store(func: PrimFunc) -> bool:
    for n in walk(func.body):
        if n.__class__ is AttrStmt and n.key is AttrKey.VIRTUAL_THREAD:
            for inner in walk(n.body):
                if inner.__class__ is BufferStore:
                    return True
    return False


def _has_vthread(func: PrimFunc) -> bool:
    for n in walk(func.body):
        if n.__class__ is AttrStmt and n.key is AttrKey.VIRTUAL_THREAD:
            return True
    return False


def _has_adjacent_twin_stores(func: PrimFunc) -> bool:
    for n in walk(func.body):
        if n.__class__ is SeqStmt:
            for a, b in zip(n.stmts, n.stmts[1:]):
                if (a.__class__ is BufferStore and b.__class__ is BufferStore
                        and a.buffer.var.uid == b.buffer.var.uid
                        and a.indices == b.indices):
                    return True
    return False


def _has_unroll_16(func: PrimFunc) -> bool:
    for n in walk(func.body):
        if (n.__class__ is For and n.kind is ForKind.UNROLL
                and isinstance(n.extent, IntImm) and n.extent.value == 16):
            return True
    return False


def _has_bad_domain_call(func: PrimFunc) -> bool:
    for n in walk(func.body):
        if n.__class__ is Call and len(n.args) == 1 and isinstance(n.args[0], FloatImm):
            x = n.args[0].value
            if n.intrinsic is IntrinsicId.SQRT and x < 0.0:
                return True
            if n.intrinsic is IntrinsicId.LOG and x <= 0.0 and x == x:
                return True
    return False


def _has_observable_twin_add_store(func: PrimFunc) -> bool:
    observable = observable_buffer_uids(func)
    for n in walk(func.body):
        if n.__class__ is BufferStore and n.buffer.var.uid in observable:
            v = n.value
            if (v.__class__ is Add and isinstance(v.lhs, IntImm)
                    and isinstance(v.rhs, IntImm) and v.lhs.dtype.is_int
                    and v.lhs.dtype == v.rhs.dtype
                    and v.lhs.value == v.rhs.value):
                return True
    return False


def _has_inlinable_store_let(func: PrimFunc) -> bool:
    observable = observable_buffer_uids(func)
    for n in walk(func.body):
        if n.__class__ in (Let, LetStmt):
            if (n.var.dtype == INT32 and trap_free(n.value)
                    and count_var_uses(n.body, n.var.uid) == 1
                    and use_inside_observable_store_value(n.body, n.var.uid, observable)):
                return True
    return False


def _vectorizable_const_store(func: PrimFunc) -> bool:
    # mirrors the vectorizer's applicability tests for the corrupted shape:
    # a vectorize loop whose body is one store of an int constant to an
    # observable int32 buffer, all exprs lane-free and division free.
    from .transforms import vectorize_checks  # late: transforms imports bugs

    observable = observable_buffer_uids(func)
    for n in walk(func.body):
        if n.__class__ is For and n.kind is ForKind.VECTORIZE:
            ok, store = vectorize_checks(n)
            if (ok and isinstance(store.value, IntImm)
                    and store.value.dtype == INT32
                    and store.buffer.dtype == INT32
                    and store.buffer.var.uid in observable):
                return True
    return False


def _has_partitionable_loop(func: PrimFunc) -> bool:
    for n in walk(func.body):
        if (n.__class__ is For and isinstance(n.min, IntImm)
                and isinstance(n.extent, IntImm)
                and n.body.__class__ is IfThenElse):
            cond = n.body.cond
            if (cond.__class__ in (LT, GT) and cond.lhs.__class__ is VarRef
                    and cond.lhs.var.uid == n.loop_var.uid
                    and isinstance(cond.rhs, IntImm)):
                return True
    return False


# --------------------------------------------------------------------------
# Witness constructors: minimal IR + pass sequence that detects each bug
# via the differential oracle at opt level 0 vs 4.
# --------------------------------------------------------------------------


def _i(v: int) -> IntImm:
    return IntImm(INT32, v)


def _int_buffer_func(shape=(4,), extra_params=()) -> tuple[PrimFunc, Var, Buffer]:
    handle = Var("buf", INT32, 0)
    buf = Buffer(handle, shape, INT32)
    params = (handle,) + tuple(extra_params)
    return params, handle, buf


def _padding_loop(uid: int, trips: int = 40) -> For:
    v = Var("pad", INT32, uid)
    return For(v, _i(0), _i(trips), ForKind.SERIAL, Evaluate(VarRef(v)))


def _witness_ramp_div_zero():
    handle = Var("buf", INT32, 0)
    buf = Buffer(handle, (4,), INT32)
    body = Evaluate(FloorDiv(Ramp(_i(0), _i(1), 4), Broadcast(_i(0), 4)))
    func = PrimFunc((handle,), (buf,), body)
    return func, PassSequence((PassId.SIMPLIFY,))


def _witness_vthread_store():
    handle = Var("buf", INT32, 0)
    buf = Buffer(handle, (4,), INT32)
    tv = Var("vt", INT32, 1)
    body = AttrStmt(AttrKey.VIRTUAL_THREAD, _i(2),
                    BufferStore(buf, VarRef(tv), (VarRef(tv),)), tv)
    func = PrimFunc((handle,), (buf,), body)
    return func, PassSequence((PassId.INJECT_VIRTUAL_THREAD,))


def _witness_twin_store_chain():
    handle = Var("buf", INT32, 0)
    buf = Buffer(handle, (4,), INT32)
    body = SeqStmt((BufferStore(buf, _i(1), (_i(0),)),
                    BufferStore(buf, _i(2), (_i(0),))))
    func = PrimFunc((handle,), (buf,), body)
    return func, PassSequence((PassId.DEAD_STORE_ELIM,))


def _witness_unroll_16():
    v = Var("i", INT32, 0)
    body = For(v, _i(0), _i(16), ForKind.UNROLL, Evaluate(VarRef(v)))
    func = PrimFunc((), (), body)
    return func, PassSequence((PassId.UNROLL_LOOP,))


def _witness_domain_call():
    body = Evaluate(Call(FLOAT32, IntrinsicId.SQRT, (FloatImm(FLOAT32, -2.0),)))
    func = PrimFunc((), (), body)
    return func, PassSequence((PassId.CONSTANT_FOLD,))


def _witness_twin_add_store():
    handle = Var("buf", INT32, 0)
    buf = Buffer(handle, (4,), INT32)
    body = BufferStore(buf, Add(_i(3), _i(3)), (_i(0),))
    func = PrimFunc((handle,), (buf,), body)
    return func, PassSequence((PassId.CONSTANT_FOLD,))


def _witness_inline_store_let():
    handle = Var("buf", INT32, 0)
    buf = Buffer(handle, (4,), INT32)
    a = Var("a", INT32, 1)
    c = Var("c", INT32, 2)
    body = LetStmt(c, Add(VarRef(a), _i(2)),
                   BufferStore(buf, VarRef(c), (_i(0),)))
    func = PrimFunc((handle, a), (buf,), body)
    return func, PassSequence((PassId.LET_INLINE,))


def _witness_vectorized_const_store():
    handle = Var("buf", INT32, 0)
    buf = Buffer(handle, (4,), INT32)
    v = Var("i", INT32, 1)
    body = For(v, _i(0), _i(4), ForKind.VECTORIZE,
               BufferStore(buf, _i(7), (VarRef(v),)))
    func = PrimFunc((handle,), (buf,), body)
    return func, PassSequence((PassId.VECTORIZE_LOWER,))


def _witness_partitionable_loop():
    v = Var("i", INT32, 0)
    body = For(v, _i(0), _i(30), ForKind.SERIAL,
               IfThenElse(LT(VarRef(v), _i(15)),
                          Evaluate(_i(1)), Evaluate(_i(2))))
    func = PrimFunc((), (), body)
    return func, PassSequence((PassId.LOOP_PARTITION,))


def _witness_vthread_busy():
    tv = Var("vt", INT32, 0)
    body = SeqStmt((
        _padding_loop(1),
        AttrStmt(AttrKey.VIRTUAL_THREAD, _i(2), Evaluate(VarRef(tv)), tv),
    ))
    func = PrimFunc((), (), body)
    return func, PassSequence((PassId.INJECT_VIRTUAL_THREAD,))


CATALOG: dict[str, PlantedBug] = {}


def _register(bug: PlantedBug) -> None:
    CATALOG[bug.bug_id] = bug


_register(PlantedBug(
    "ae_ramp_div_zero", PassId.SIMPLIFY, BugEffect.TRAP,
    "ramp/broadcast division folding takes the stride modulo the divisor "
    "without checking it for zero",
    _is_ramp_div_zero, _witness_ramp_div_zero))

_register(PlantedBug(
    "ivt_store_unbounded", PassId.INJECT_VIRTUAL_THREAD, BugEffect.TRAP,
    "virtual-thread expansion reads the back of its per-variable scope "
    "stack without checking for emptiness when the body stores",
    _has_vthread_store, _witness_vthread_store))

_register(PlantedBug(
    "dse_chain_null", PassId.DEAD_STORE_ELIM, BugEffect.TRAP,
    "store-chain analysis dereferences a missing chain entry when two "
    "adjacent stores hit the same address",
    _has_adjacent_twin_stores, _witness_twin_store_chain))

_register(PlantedBug(
    "unroll_budget_overflow", PassId.UNROLL_LOOP, BugEffect.TRAP,
    "unroll budget bookkeeping overflows on loops of extent exactly 16",
    _has_unroll_16, _witness_unroll_16))

_register(PlantedBug(
    "cf_domain_error", PassId.CONSTANT_FOLD, BugEffect.TRAP,
    "constant folding evaluates sqrt/log on out-of-domain literals "
    "without the domain guard",
    _has_bad_domain_call, _witness_domain_call))

_register(PlantedBug(
    "cf_fold_twin_add", PassId.CONSTANT_FOLD, BugEffect.MISCOMPILE,
    "folding a stored sum of two equal integer literals adds one",
    _has_observable_twin_add_store, _witness_twin_add_store))

_register(PlantedBug(
    "li_inline_off_by_one", PassId.LET_INLINE, BugEffect.MISCOMPILE,
    "inlining a single-use int32 binding into a store value substitutes "
    "value+1",
    _has_inlinable_store_let, _witness_inline_store_let))

_register(PlantedBug(
    "vec_const_ramp", PassId.VECTORIZE_LOWER, BugEffect.MISCOMPILE,
    "vectorizing a constant store emits a ramp instead of a broadcast",
    _vectorizable_const_store, _witness_vectorized_const_store))

_register(PlantedBug(
    "lp_partition_busy", PassId.LOOP_PARTITION, BugEffect.SLOWDOWN,
    "partitioning prepends a leftover debug warm-up loop",
    _has_partitionable_loop, _witness_partitionable_loop))

_register(PlantedBug(
    "ivt_replicate_busy", PassId.INJECT_VIRTUAL_THREAD, BugEffect.SLOWDOWN,
    "virtual-thread expansion prepends a leftover calibration loop",
    _has_vthread, _witness_vthread_busy))


def bug_for_site(site: int):
    for bug in CATALOG.values():
        if bug.site == site:
            return bug
    return None


def fired_bugs(cov_bits: int) -> list[PlantedBug]:
    """Catalog bugs whose probe bit is set in a coverage snapshot."""
    out = []
    for bug in CATALOG.values():
        if cov_bits >> bug.site & 1:
            out.append(bug)
    return out


def catalog_stats() -> dict[str, int]:
    stats = {e.value: 0 for e in BugEffect}
    for bug in CATALOG.values():
        stats[bug.effect.value] += 1
    return stats
