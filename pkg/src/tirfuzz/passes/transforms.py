"""The optimizing pass library (the fuzz target).

Every pass is a pure IR-to-IR function instrumented with coverage probes at
each internal decision. All rewrites are trap-order preserving: an
expression evaluation is only dropped or moved when a conservative analysis
proves it cannot trap, so with the planted bugs disabled each pass keeps the
interpreter outcome bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import replace

from .. import coverage
from ..interp import cast_scalar, eval_const_binop, eval_intrinsic
from ..tir import (
    expr_dtype,
    ARITH_OPS,
    BINOPS,
    BOOL,
    FLOAT32,
    INT32,
    Add,
    And,
    AttrKey,
    AttrStmt,
    Broadcast,
    BufferLoad,
    BufferStore,
    Call,
    Cast,
    DTypeKind,
    EQ,
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
    Mul,
    NOP,
    Or,
    PrimExpr,
    PrimFunc,
    Ramp,
    SeqStmt,
    Stmt,
    Sub,
    UidGen,
    Var,
    VarRef,
    children,
    clone_fresh,
    f32,
    rewrite,
    seq,
    substitute,
    with_child,
    wrap_i32,
)
from .analysis import (
    contains_store,
    count_var_uses,
    loads_buffer,
    observable_buffer_uids,
    trap_free,
    use_inside_observable_store_value,
)
from .base import PassId, PassPanic
from .bugs import BugPlan, CATALOG

BUSY_LOOP_TRIPS = 512


def _site(label: str) -> int:
    return coverage.register_site(label)


def _sites(prefix: str, names) -> dict[str, int]:
    return {n: _site(f"{prefix}/{n}") for n in names}


def _fire_bug(bug_id: str, cov) -> None:
    cov.hit(CATALOG[bug_id].site)


def _busy_loop(uids: UidGen) -> For:
    v = Var("warm", INT32, uids.fresh())
    return For(v, IntImm(INT32, 0), IntImm(INT32, BUSY_LOOP_TRIPS),
               ForKind.SERIAL, Evaluate(IntImm(INT32, 0)))


def _int_imm(value: int, dtype) -> IntImm:
    if dtype.kind is DTypeKind.INT32:
        return IntImm(dtype, wrap_i32(value))
    if dtype.kind is DTypeKind.UINT32:
        return IntImm(dtype, value & 0xFFFFFFFF)
    return IntImm(dtype, 1 if value else 0)


def _const_imm(value, dtype) -> PrimExpr:
    if dtype.kind is DTypeKind.FLOAT32:
        return FloatImm(dtype, f32(value))
    return _int_imm(value, dtype)


# ===========================================================================
# ConstantFold
# ===========================================================================

_CF_OP_NAMES = {cls: name for cls, name in zip(
    BINOPS, ("add", "sub", "mul", "floordiv", "floormod",
             "and", "or", "eq", "gt", "lt"))}
_CF_FOLD = {}
_CF_NOFOLD = {}
for _cls, _name in _CF_OP_NAMES.items():
    for _kind in DTypeKind:
        _CF_FOLD[(_cls, _kind)] = _site(f"constant_fold/fold/{_name}/{_kind.value}")
    _CF_NOFOLD[_cls] = _site(f"constant_fold/nofold/{_name}")
_CF = _sites("constant_fold", [
    "div_zero_guard", "nan_skip",
    "cast/fold/int32", "cast/fold/uint32", "cast/fold/float32", "cast/fold/bool",
    "cast/nofold",
    "call/nofold", "call/domain_guard/sqrt", "call/domain_guard/log",
    "twin_add/fired", "twin_add/clean",
])
_CF_CALL_FOLD = {i: _site(f"constant_fold/call/fold/{i.value}") for i in IntrinsicId}


def _is_imm(e) -> bool:
    cls = e.__class__
    return cls is IntImm or cls is FloatImm


def _fold_binop(e, cov):
    lhs, rhs = e.lhs, e.rhs
    cls = e.__class__
    if not (_is_imm(lhs) and _is_imm(rhs)):
        return e
    if lhs.dtype != rhs.dtype:
        return e  # invalid anyway; do not touch
    out_kind = DTypeKind.BOOL if cls not in ARITH_OPS else lhs.dtype.kind
    value = eval_const_binop(cls, out_kind, lhs.value, rhs.value)
    if value is None:
        cov.hit(_CF["div_zero_guard"])  # leave the runtime trap in place
        return e
    if isinstance(value, float) and value != value:
        cov.hit(_CF["nan_skip"])
        return e
    cov.hit(_CF_FOLD[(cls, lhs.dtype.kind)])
    dtype = BOOL if cls not in ARITH_OPS else lhs.dtype
    return _const_imm(value, dtype)


def _fold_call(e: Call, cov, bugs: BugPlan):
    if not all(_is_imm(a) for a in e.args):
        cov.hit(_CF["call/nofold"])
        return e
    args = [a.value for a in e.args]
    if e.intrinsic is IntrinsicId.SQRT and args[0] < 0.0:
        if bugs.active("cf_domain_error"):
            _fire_bug("cf_domain_error", cov)
            try:
                math.sqrt(args[0])
            except ValueError:
                raise PassPanic(PassId.CONSTANT_FOLD, "bug:cf_domain_error",
                                "math domain error while folding sqrt") from None
        cov.hit(_CF["call/domain_guard/sqrt"])
        return e
    if e.intrinsic is IntrinsicId.LOG and args[0] == args[0] and args[0] <= 0.0:
        if bugs.active("cf_domain_error"):
            _fire_bug("cf_domain_error", cov)
            try:
                math.log(args[0])
            except ValueError:
                raise PassPanic(PassId.CONSTANT_FOLD, "bug:cf_domain_error",
                                "math domain error while folding log") from None
        cov.hit(_CF["call/domain_guard/log"])
        return e
    value = eval_intrinsic(e.intrinsic, e.dtype.kind, args)
    if isinstance(value, float) and (value != value):
        cov.hit(_CF["nan_skip"])
        return e
    cov.hit(_CF_CALL_FOLD[e.intrinsic])
    return _const_imm(value, e.dtype)


def _fold_cast(e: Cast, cov):
    v = e.value
    if not _is_imm(v) or e.dtype.lanes != 1:
        cov.hit(_CF["cast/nofold"])
        return e
    value = cast_scalar(v.value, v.dtype.kind, e.dtype.kind)
    cov.hit(_CF[f"cast/fold/{e.dtype.kind.value}"])
    return _const_imm(value, e.dtype)


def _twin_add(e) -> bool:
    return (e.__class__ is Add and isinstance(e.lhs, IntImm)
            and isinstance(e.rhs, IntImm) and e.lhs.dtype.is_int
            and e.lhs.dtype == e.rhs.dtype and e.lhs.value == e.rhs.value)


def constant_fold(func: PrimFunc, opt_level: int, bugs: BugPlan, cov) -> PrimFunc:
    """Fold operator/intrinsic/cast applications with all-immediate operands."""
    twin_bug = bugs.active("cf_fold_twin_add")
    observable = observable_buffer_uids(func)

    def fold_expr(e):
        cls = e.__class__
        if cls in BINOPS:
            return _fold_binop(e, cov)
        if cls is Call:
            return _fold_call(e, cov, bugs)
        if cls is Cast:
            return _fold_cast(e, cov)
        return e

    def go_expr(e, observable_store_value: bool):
        updates = None
        for slot, child in children(e):
            nc = go_expr(child, False)
            if nc is not child:
                if updates is None:
                    updates = []
                updates.append((slot, nc))
        if updates is not None:
            for slot, nc in updates:
                e = with_child(e, slot, nc)
        if observable_store_value and _twin_add(e):
            if twin_bug:
                _fire_bug("cf_fold_twin_add", cov)
                cov.hit(_CF["twin_add/fired"])
                return _int_imm(e.lhs.value + e.rhs.value + 1, e.lhs.dtype)
            cov.hit(_CF["twin_add/clean"])
        return fold_expr(e)

    def go_stmt(s):
        if s.__class__ is BufferStore:
            obs = s.buffer.var.uid in observable
            value = go_expr(s.value, obs)
            indices = tuple(go_expr(i, False) for i in s.indices)
            if value is s.value and indices == s.indices:
                return s
            return BufferStore(s.buffer, value, indices)
        updates = None
        for slot, child in children(s):
            nc = go_stmt(child) if isinstance(child, Stmt) else go_expr(child, False)
            if nc is not child:
                if updates is None:
                    updates = []
                updates.append((slot, nc))
        if updates is not None:
            for slot, nc in updates:
                s = with_child(s, slot, nc)
        return s

    body = go_stmt(func.body)
    return func if body is func.body else replace(func, body=body)


# ===========================================================================
# Simplify
# ===========================================================================

_SIMP = _sites("simplify", [
    "add_zero", "sub_zero", "sub_self", "sub_self_blocked",
    "mul_one", "mul_zero", "mul_zero_blocked",
    "and_true", "and_false", "and_false_blocked", "and_self",
    "or_false", "or_true", "or_true_blocked", "or_self",
    "cmp_imm", "eq_self", "eq_self_blocked", "eq_self_float_skip",
    "div_one", "mod_one", "mod_one_blocked",
    "ramp_div", "ramp_div_guard", "ramp_div_nofit",
    "ramp_mod", "ramp_mod_guard", "ramp_mod_nofit",
])
_SIMP_BCAST = {cls: _site(f"simplify/bcast_pair/{_CF_OP_NAMES[cls]}") for cls in BINOPS}
_SIMP_SEEN = {}


def _register_seen_sites():
    from ..tir import nodes as _n

    classes = [
        _n.VarRef, _n.IntImm, _n.FloatImm, _n.Add, _n.Sub, _n.Mul, _n.FloorDiv,
        _n.FloorMod, _n.And, _n.Or, _n.EQ, _n.GT, _n.LT, _n.Call, _n.Cast,
        _n.Let, _n.BufferLoad, _n.Ramp, _n.Broadcast, _n.While, _n.For,
        _n.IfThenElse, _n.LetStmt, _n.SeqStmt, _n.BufferStore, _n.Allocate,
        _n.AttrStmt, _n.Evaluate, _n.Nop,
    ]
    for cls in classes:
        _SIMP_SEEN[cls] = _site(f"simplify/seen/{cls.__name__}")


_register_seen_sites()


def _is_int_const(e, value: int) -> bool:
    return e.__class__ is IntImm and e.dtype.is_int and e.value == value


def _is_bool_const(e, value: int) -> bool:
    return e.__class__ is IntImm and e.dtype.is_bool and e.value == value


def simplify(func: PrimFunc, opt_level: int, bugs: BugPlan, cov) -> PrimFunc:
    """Algebraic identities plus ramp/broadcast division rules."""
    ae_bug = bugs.active("ae_ramp_div_zero")
    hit = cov.hit

    def rule(e):
        cls = e.__class__
        hit(_SIMP_SEEN[cls])
        if not isinstance(e, PrimExpr):
            return e
        if cls is Add:
            if _is_int_const(e.rhs, 0):
                hit(_SIMP["add_zero"])
                return e.lhs
            if _is_int_const(e.lhs, 0):
                hit(_SIMP["add_zero"])
                return e.rhs
        elif cls is Sub:
            if _is_int_const(e.rhs, 0):
                hit(_SIMP["sub_zero"])
                return e.lhs
            if (e.lhs == e.rhs and e.lhs.__class__ is not FloatImm):
                if trap_free(e.lhs):
                    dt = expr_dtype(e.lhs)
                    if dt is not None and dt.lanes == 1 and dt.is_int:
                        hit(_SIMP["sub_self"])
                        return _int_imm(0, dt)
                hit(_SIMP["sub_self_blocked"])
        elif cls is Mul:
            if _is_int_const(e.rhs, 1) or _is_float_const(e.rhs, 1.0):
                hit(_SIMP["mul_one"])
                return e.lhs
            if _is_int_const(e.lhs, 1) or _is_float_const(e.lhs, 1.0):
                hit(_SIMP["mul_one"])
                return e.rhs
            for zero, other in ((e.rhs, e.lhs), (e.lhs, e.rhs)):
                if _is_int_const(zero, 0):
                    if trap_free(other):
                        hit(_SIMP["mul_zero"])
                        return zero
                    hit(_SIMP["mul_zero_blocked"])
        elif cls is And:
            for const, other in ((e.lhs, e.rhs), (e.rhs, e.lhs)):
                if _is_bool_const(const, 1):
                    hit(_SIMP["and_true"])
                    return other
                if _is_bool_const(const, 0):
                    if trap_free(other):
                        hit(_SIMP["and_false"])
                        return const
                    hit(_SIMP["and_false_blocked"])
            if e.lhs == e.rhs:
                hit(_SIMP["and_self"])
                return e.lhs
        elif cls is Or:
            for const, other in ((e.lhs, e.rhs), (e.rhs, e.lhs)):
                if _is_bool_const(const, 0):
                    hit(_SIMP["or_false"])
                    return other
                if _is_bool_const(const, 1):
                    if trap_free(other):
                        hit(_SIMP["or_true"])
                        return const
                    hit(_SIMP["or_true_blocked"])
            if e.lhs == e.rhs:
                hit(_SIMP["or_self"])
                return e.lhs
        elif cls is EQ:
            if _is_imm(e.lhs) and _is_imm(e.rhs) and e.lhs.dtype == e.rhs.dtype:
                hit(_SIMP["cmp_imm"])
                return IntImm(BOOL, 1 if e.lhs.value == e.rhs.value else 0)
            if e.lhs == e.rhs:
                if e.lhs.__class__ is FloatImm or _float_kinded(e.lhs):
                    hit(_SIMP["eq_self_float_skip"])  # NaN != NaN
                elif trap_free(e.lhs):
                    dt = expr_dtype(e.lhs)
                    if dt is not None and dt.lanes == 1:
                        hit(_SIMP["eq_self"])
                        return IntImm(BOOL, 1)
                else:
                    hit(_SIMP["eq_self_blocked"])
        elif cls in (GT, LT):
            if _is_imm(e.lhs) and _is_imm(e.rhs) and e.lhs.dtype == e.rhs.dtype:
                hit(_SIMP["cmp_imm"])
                op = (lambda a, b: a > b) if cls is GT else (lambda a, b: a < b)
                return IntImm(BOOL, 1 if op(e.lhs.value, e.rhs.value) else 0)
        elif cls is FloorDiv:
            if _is_int_const(e.rhs, 1):
                hit(_SIMP["div_one"])
                return e.lhs
            out = _ramp_div_rule(e, True, ae_bug, cov)
            if out is not None:
                return out
        elif cls is FloorMod:
            if _is_int_const(e.rhs, 1):
                if trap_free(e.lhs):
                    dt = expr_dtype(e.lhs)
                    if dt is not None and dt.lanes == 1 and dt.is_int:
                        hit(_SIMP["mod_one"])
                        return _int_imm(0, dt)
                hit(_SIMP["mod_one_blocked"])
            out = _ramp_div_rule(e, False, ae_bug, cov)
            if out is not None:
                return out
        if cls in BINOPS:
            lhs, rhs = e.lhs, e.rhs
            if lhs.__class__ is Broadcast and rhs.__class__ is Broadcast:
                hit(_SIMP_BCAST[cls])
                return Broadcast(cls(lhs.value, rhs.value), lhs.lanes)
        return e

    body = rewrite(func.body, rule)
    return func if body is func.body else replace(func, body=body)


def _float_kinded(e) -> bool:
    dt = expr_dtype(e)
    return dt is not None and dt.is_float


def _is_float_const(e, value: float) -> bool:
    return e.__class__ is FloatImm and e.value == value


def _ramp_div_rule(e, is_div: bool, ae_bug: bool, cov):
    """(base + i*stride) div/mod broadcast(c) when c divides stride."""
    lhs, rhs = e.lhs, e.rhs
    if not (lhs.__class__ is Ramp and isinstance(lhs.stride, IntImm)
            and rhs.__class__ is Broadcast and isinstance(rhs.value, IntImm)):
        return None
    stride = lhs.stride.value
    c = rhs.value.value
    if ae_bug:
        try:
            fits = stride % c == 0
        except ZeroDivisionError:
            _fire_bug("ae_ramp_div_zero", cov)
            raise PassPanic(PassId.SIMPLIFY, "bug:ae_ramp_div_zero",
                            "div by zero in ramp simplify") from None
    else:
        if c == 0:
            cov.hit(_SIMP["ramp_div_guard" if is_div else "ramp_mod_guard"])
            return None
        fits = stride % c == 0
    if not fits:
        cov.hit(_SIMP["ramp_div_nofit" if is_div else "ramp_mod_nofit"])
        return None
    divisor = IntImm(INT32, c)
    if is_div:
        cov.hit(_SIMP["ramp_div"])
        return Ramp(FloorDiv(lhs.base, divisor), IntImm(INT32, stride // c), lhs.lanes)
    cov.hit(_SIMP["ramp_mod"])
    return Broadcast(FloorMod(lhs.base, divisor), lhs.lanes)


# ===========================================================================
# UnrollLoop
# ===========================================================================

_UNROLL = _sites("unroll_loop", [
    "kind/serial", "kind/vectorize", "kind/unroll", "kind/parallel",
    "kind/virtual_thread_bound",
    "min_nonconst", "extent_nonconst", "negative_extent",
    "cap/attr", "cap/level_high", "cap/level_low",
    "within_cap", "over_cap", "attr_override",
    "expanded/0", "expanded/1", "expanded/small", "expanded/large",
])


def unroll_loop(func: PrimFunc, opt_level: int, bugs: BugPlan, cov) -> PrimFunc:
    """Expand unroll-kind loops with constant bounds up to the active cap."""
    uids = UidGen.for_func(func)
    budget_bug = bugs.active("unroll_budget_overflow")
    level_cap = 16 if opt_level >= 3 else 4
    level_cap_site = _UNROLL["cap/level_high" if opt_level >= 3 else "cap/level_low"]
    hit = cov.hit

    def go(s, attr_cap):
        cls = s.__class__
        if cls is AttrStmt and s.key is AttrKey.UNROLL_MAX_STEPS \
                and isinstance(s.value, IntImm):
            hit(_UNROLL["attr_override"])
            body = go(s.body, s.value.value)
            return s if body is s.body else replace(s, body=body)
        updates = None
        for slot, child in children(s):
            if not isinstance(child, Stmt):
                continue
            nc = go(child, attr_cap)
            if nc is not child:
                if updates is None:
                    updates = []
                updates.append((slot, nc))
        if updates is not None:
            for slot, nc in updates:
                s = with_child(s, slot, nc)
        if cls is not For:
            return s
        hit(_UNROLL[f"kind/{s.kind.value}"])
        if s.kind is not ForKind.UNROLL:
            return s
        if budget_bug and isinstance(s.extent, IntImm) and s.extent.value == 16:
            _fire_bug("unroll_budget_overflow", cov)
            raise PassPanic(PassId.UNROLL_LOOP, "bug:unroll_budget_overflow",
                            "unroll budget overflow at extent 16")
        if not isinstance(s.min, IntImm):
            hit(_UNROLL["min_nonconst"])
            return s
        if not isinstance(s.extent, IntImm):
            hit(_UNROLL["extent_nonconst"])
            return s
        n = s.extent.value
        if n < 0:
            hit(_UNROLL["negative_extent"])
            n = 0
        else:
            if s.attrs.unroll_max_steps is not None:
                cap = s.attrs.unroll_max_steps
                hit(_UNROLL["cap/attr"])
            elif attr_cap is not None:
                cap = attr_cap
                hit(_UNROLL["cap/attr"])
            else:
                cap = level_cap
                hit(level_cap_site)
            if n > cap:
                hit(_UNROLL["over_cap"])
                return s
            hit(_UNROLL["within_cap"])
        lo = s.min.value
        uid = s.loop_var.uid
        copies = []
        for k in range(n):
            body_k = s.body if k == 0 else clone_fresh(s.body, uids)
            copies.append(substitute(body_k, {uid: IntImm(INT32, wrap_i32(lo + k))}))
        bucket = "0" if n == 0 else "1" if n == 1 else "small" if n <= 4 else "large"
        hit(_UNROLL[f"expanded/{bucket}"])
        return seq(*copies)

    body = go(func.body, None)
    return func if body is func.body else replace(func, body=body)


# ===========================================================================
# LoopPartition
# ===========================================================================

_LP = _sites("loop_partition", [
    "no_if", "cond/lt", "cond/gt", "cond/other", "var_mismatch",
    "bounds_nonconst", "split/all_then", "split/all_else", "split/mixed",
    "hint/on", "hint/off",
])


def loop_partition(func: PrimFunc, opt_level: int, bugs: BugPlan, cov) -> PrimFunc:
    """Split loops whose body is a loop-var/constant comparison branch."""
    uids = UidGen.for_func(func)
    busy_bug = bugs.active("lp_partition_busy")
    hit = cov.hit

    def rule(s):
        if s.__class__ is not For:
            return s
        body = s.body
        if body.__class__ is not IfThenElse:
            hit(_LP["no_if"])
            return s
        cond = body.cond
        if cond.__class__ is LT:
            hit(_LP["cond/lt"])
        elif cond.__class__ is GT:
            hit(_LP["cond/gt"])
        else:
            hit(_LP["cond/other"])
            return s
        if not (cond.lhs.__class__ is VarRef and cond.lhs.var.uid == s.loop_var.uid
                and isinstance(cond.rhs, IntImm)):
            hit(_LP["var_mismatch"])
            return s
        if not (isinstance(s.min, IntImm) and isinstance(s.extent, IntImm)):
            hit(_LP["bounds_nonconst"])
            return s
        hit(_LP["hint/on" if s.attrs.partition_hint else "hint/off"])
        lo = s.min.value
        hi = lo + max(s.extent.value, 0)
        c = cond.rhs.value
        if cond.__class__ is LT:
            split = min(max(c, lo), hi)
            first_body, second_body = body.then_body, body.else_body
        else:  # GT: true for i > c, i.e. from c+1 on
            split = min(max(c + 1, lo), hi)
            first_body, second_body = body.else_body, body.then_body
        if split == lo:
            hit(_LP["split/all_else" if cond.__class__ is LT else "split/all_then"])
        elif split == hi:
            hit(_LP["split/all_then" if cond.__class__ is LT else "split/all_else"])
        else:
            hit(_LP["split/mixed"])
        first = first_body if first_body is not None else NOP
        second = second_body if second_body is not None else NOP
        v2 = Var(s.loop_var.name, INT32, uids.fresh())
        second = substitute(clone_fresh(second, uids), {s.loop_var.uid: VarRef(v2)})
        loop1 = For(s.loop_var, IntImm(INT32, lo), IntImm(INT32, split - lo),
                    s.kind, first, s.attrs)
        loop2 = For(v2, IntImm(INT32, split), IntImm(INT32, hi - split),
                    s.kind, second, s.attrs)
        out = seq(loop1, loop2)
        if busy_bug:
            _fire_bug("lp_partition_busy", cov)
            out = seq(_busy_loop(uids), out)
        return out

    body = rewrite(func.body, lambda n: rule(n) if isinstance(n, Stmt) else n)
    return func if body is func.body else replace(func, body=body)


# ===========================================================================
# DeadStoreElim
# ===========================================================================

_DSE = _sites("dead_store_elim", [
    "pair", "other_buffer", "index_differs", "index_not_pure",
    "value_not_pure", "value_reads_target", "removed",
])


def dead_store_elim(func: PrimFunc, opt_level: int, bugs: BugPlan, cov) -> PrimFunc:
    """Drop stores provably overwritten by the immediately following store."""
    chain_bug = bugs.active("dse_chain_null")
    hit = cov.hit

    def rule(s):
        if s.__class__ is not SeqStmt:
            return s
        stmts = list(s.stmts)
        out = []
        i = 0
        while i < len(stmts):
            cur = stmts[i]
            nxt = stmts[i + 1] if i + 1 < len(stmts) else None
            if cur.__class__ is BufferStore and nxt is not None \
                    and nxt.__class__ is BufferStore:
                hit(_DSE["pair"])
                if cur.buffer.var.uid != nxt.buffer.var.uid:
                    hit(_DSE["other_buffer"])
                elif cur.indices != nxt.indices:
                    hit(_DSE["index_differs"])
                else:
                    if chain_bug:
                        _fire_bug("dse_chain_null", cov)
                        raise PassPanic(
                            PassId.DEAD_STORE_ELIM, "bug:dse_chain_null",
                            "missing store-chain entry for repeated address")
                    if not all(trap_free(ix) for ix in cur.indices):
                        hit(_DSE["index_not_pure"])
                    elif not trap_free(cur.value):
                        hit(_DSE["value_not_pure"])
                    elif loads_buffer(nxt.value, cur.buffer.var.uid):
                        hit(_DSE["value_reads_target"])
                    else:
                        hit(_DSE["removed"])
                        i += 1  # skip cur; nxt reconsidered next round
                        continue
            out.append(cur)
            i += 1
        if len(out) == len(stmts):
            return s
        return seq(*out)

    body = rewrite(func.body, lambda n: rule(n) if isinstance(n, Stmt) else n)
    return func if body is func.body else replace(func, body=body)


# ===========================================================================
# VectorizeLower
# ===========================================================================

_VEC = _sites("vectorize_lower", [
    "extent_bad", "min_nonconst", "body_not_store",
    "reject/self_load", "reject/division", "reject/call", "reject/let",
    "reject/vector_node", "reject/other",
    "value/const", "value/expr", "lowered", "bug_ramp",
])

_VEC_ALLOWED_BINOPS = (Add, Sub, Mul, And, Or, EQ, GT, LT)


def _vectorizable_expr(e, target_uid: int, cov) -> bool:
    cls = e.__class__
    if cls is VarRef or cls is IntImm or cls is FloatImm:
        return True
    if cls in _VEC_ALLOWED_BINOPS:
        return (_vectorizable_expr(e.lhs, target_uid, cov)
                and _vectorizable_expr(e.rhs, target_uid, cov))
    if cls is Cast:
        return _vectorizable_expr(e.value, target_uid, cov)
    if cls is BufferLoad:
        if e.buffer.var.uid == target_uid:
            if cov is not None:
                cov.hit(_VEC["reject/self_load"])
            return False
        return all(_vectorizable_expr(ix, target_uid, cov) for ix in e.indices)
    if cov is not None:
        if cls in (FloorDiv, FloorMod):
            cov.hit(_VEC["reject/division"])
        elif cls is Call:
            cov.hit(_VEC["reject/call"])
        elif cls is Let:
            cov.hit(_VEC["reject/let"])
        elif cls in (Ramp, Broadcast):
            cov.hit(_VEC["reject/vector_node"])
        else:
            cov.hit(_VEC["reject/other"])
    return False


def vectorize_checks(loop: For, cov=None):
    """Applicability tests for lowering one vectorize loop.

    Returns (ok, store). Shared with the planted-bug trigger so the
    predicate and the pass cannot drift apart.
    """
    if not (isinstance(loop.extent, IntImm) and 2 <= loop.extent.value <= 16):
        if cov is not None:
            cov.hit(_VEC["extent_bad"])
        return False, None
    if not isinstance(loop.min, IntImm):
        if cov is not None:
            cov.hit(_VEC["min_nonconst"])
        return False, None
    store = loop.body
    if store.__class__ is not BufferStore:
        if cov is not None:
            cov.hit(_VEC["body_not_store"])
        return False, None
    target = store.buffer.var.uid
    if not _vectorizable_expr(store.value, target, cov):
        return False, None
    for ix in store.indices:
        if not _vectorizable_expr(ix, target, cov):
            return False, None
    return True, store


def vectorize_lower(func: PrimFunc, opt_level: int, bugs: BugPlan, cov) -> PrimFunc:
    """Rewrite vectorize loops over a single store into ramp/broadcast form."""
    ramp_bug = bugs.active("vec_const_ramp")
    observable = observable_buffer_uids(func)
    hit = cov.hit

    def vec(e, lanes, lo, loop_uid):
        if count_var_uses(e, loop_uid) == 0:
            return Broadcast(e, lanes)
        cls = e.__class__
        if cls is VarRef:  # the loop variable itself
            return Ramp(IntImm(INT32, lo), IntImm(INT32, 1), lanes)
        if cls is Cast:
            return Cast(e.dtype.with_lanes(lanes), vec(e.value, lanes, lo, loop_uid))
        if cls is BufferLoad:
            return BufferLoad(e.buffer,
                              tuple(vec(ix, lanes, lo, loop_uid) for ix in e.indices))
        return cls(vec(e.lhs, lanes, lo, loop_uid), vec(e.rhs, lanes, lo, loop_uid))

    def rule(s):
        if s.__class__ is not For or s.kind is not ForKind.VECTORIZE:
            return s
        ok, store = vectorize_checks(s, cov)
        if not ok:
            return s
        lanes = s.extent.value
        lo = s.min.value
        uid = s.loop_var.uid
        if isinstance(store.value, IntImm):
            hit(_VEC["value/const"])
            if (ramp_bug and store.value.dtype == INT32
                    and store.buffer.dtype == INT32
                    and store.buffer.var.uid in observable):
                _fire_bug("vec_const_ramp", cov)
                hit(_VEC["bug_ramp"])
                value = Ramp(store.value, IntImm(INT32, 1), lanes)
            else:
                value = Broadcast(store.value, lanes)
        else:
            hit(_VEC["value/expr"])
            value = vec(store.value, lanes, lo, uid)
        indices = tuple(vec(ix, lanes, lo, uid) for ix in store.indices)
        hit(_VEC["lowered"])
        return BufferStore(store.buffer, value, indices)

    body = rewrite(func.body, lambda n: rule(n) if isinstance(n, Stmt) else n)
    return func if body is func.body else replace(func, body=body)


# ===========================================================================
# InjectVirtualThread
# ===========================================================================

_IVT = _sites("inject_virtual_thread", [
    "found", "k/2", "k/4", "k/other", "body_store", "body_pure", "expanded",
])


def inject_virtual_thread(func: PrimFunc, opt_level: int, bugs: BugPlan, cov) -> PrimFunc:
    """Replicate virtual-thread bodies once per thread index."""
    uids = UidGen.for_func(func)
    oob_bug = bugs.active("ivt_store_unbounded")
    busy_bug = bugs.active("ivt_replicate_busy")
    hit = cov.hit

    def rule(s):
        if s.__class__ is not AttrStmt or s.key is not AttrKey.VIRTUAL_THREAD:
            return s
        if not isinstance(s.value, IntImm):
            return s
        hit(_IVT["found"])
        k = s.value.value
        hit(_IVT["k/2" if k == 2 else "k/4" if k == 4 else "k/other"])
        if contains_store(s.body):
            hit(_IVT["body_store"])
            if oob_bug:
                _fire_bug("ivt_store_unbounded", cov)
                raise PassPanic(
                    PassId.INJECT_VIRTUAL_THREAD, "bug:ivt_store_unbounded",
                    "scope stack back() on empty entry during SSA conversion")
        else:
            hit(_IVT["body_pure"])
        uid = s.thread_var.uid
        copies = []
        for vt in range(k):
            body = s.body if vt == 0 else clone_fresh(s.body, uids)
            copies.append(substitute(body, {uid: IntImm(INT32, vt)}))
        hit(_IVT["expanded"])
        out = seq(*copies)
        if busy_bug:
            _fire_bug("ivt_replicate_busy", cov)
            out = seq(_busy_loop(uids), out)
        return out

    body = rewrite(func.body, lambda n: rule(n) if isinstance(n, Stmt) else n)
    return func if body is func.body else replace(func, body=body)


# ===========================================================================
# LetInline
# ===========================================================================

_LI = _sites("let_inline", [
    "expr/unused", "expr/single", "expr/multi", "expr/blocked",
    "stmt/unused", "stmt/single", "stmt/multi", "stmt/blocked",
    "dropped", "inlined", "bug_off_by_one",
])


def let_inline(func: PrimFunc, opt_level: int, bugs: BugPlan, cov) -> PrimFunc:
    """Inline let bindings used at most once (pure, trap-free values only)."""
    off_bug = bugs.active("li_inline_off_by_one")
    observable = observable_buffer_uids(func)
    hit = cov.hit

    def rule(e):
        cls = e.__class__
        if cls is Let:
            prefix = "expr"
        elif cls is LetStmt:
            prefix = "stmt"
        else:
            return e
        uses = count_var_uses(e.body, e.var.uid)
        if not trap_free(e.value):
            hit(_LI[f"{prefix}/blocked"])
            return e
        if uses == 0:
            hit(_LI[f"{prefix}/unused"])
            hit(_LI["dropped"])
            return e.body
        if uses > 1:
            hit(_LI[f"{prefix}/multi"])
            return e
        hit(_LI[f"{prefix}/single"])
        value = e.value
        if (off_bug and e.var.dtype == INT32
                and use_inside_observable_store_value(e.body, e.var.uid, observable)):
            _fire_bug("li_inline_off_by_one", cov)
            hit(_LI["bug_off_by_one"])
            value = Add(value, IntImm(INT32, 1))
        hit(_LI["inlined"])
        return substitute(e.body, {e.var.uid: value})

    body = rewrite(func.body, rule)
    return func if body is func.body else replace(func, body=body)


PASS_IMPLS = {
    PassId.CONSTANT_FOLD: constant_fold,
    PassId.SIMPLIFY: simplify,
    PassId.UNROLL_LOOP: unroll_loop,
    PassId.LOOP_PARTITION: loop_partition,
    PassId.DEAD_STORE_ELIM: dead_store_elim,
    PassId.VECTORIZE_LOWER: vectorize_lower,
    PassId.INJECT_VIRTUAL_THREAD: inject_virtual_thread,
    PassId.LET_INLINE: let_inline,
}
