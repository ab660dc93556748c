"""Holes, contexts, and the constraints a hole imposes on what may fill it."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from random import Random
from typing import Optional

from ..tir import (
    BOOL,
    INT32,
    MAX_UNROLL_ATTR,
    MAX_VTHREADS,
    Allocate,
    AttrKey,
    AttrStmt,
    Broadcast,
    Buffer,
    BufferLoad,
    BufferStore,
    Call,
    Cast,
    DataType,
    Evaluate,
    For,
    IfThenElse,
    IntImm,
    IrNode,
    Let,
    LetStmt,
    NodePath,
    PrimExpr,
    PrimFunc,
    Ramp,
    Scope,
    SeqStmt,
    Stmt,
    Var,
    VarRef,
    While,
    child_at,
    collect_nodes,
    expr_dtype,
    free_var_uids,
    infer_dtype,
    used_buffer_uids,
    TypeError_,
)
from ..tir.validate import _check_stmt


class NodeKind(Enum):
    STMT = "stmt"
    EXPR = "expr"
    VAR = "var"


@dataclass(frozen=True)
class Constraints:
    """What a hole demands of its filler.

    `expr_dtype` is present exactly when node_kind is EXPR. `int_const`
    narrows an expression slot to a literal integer in a closed range
    (thread counts, unroll caps). Variables must always be bound here.
    """

    node_kind: NodeKind
    expr_dtype: Optional[DataType]
    vars_in_scope: tuple[Var, ...]
    buffers_in_scope: tuple[Buffer, ...]
    require_bound: bool = True
    int_const: Optional[tuple[int, int]] = None

    def vars_of(self, dtype: DataType) -> list[Var]:
        return [v for v in self.vars_in_scope if v.dtype == dtype]

    def buffers_of_kind(self, kind) -> list[Buffer]:
        return [b for b in self.buffers_in_scope if b.dtype.kind is kind]


@dataclass(frozen=True)
class Context:
    """A function with one designated hole position."""

    func: PrimFunc
    hole: NodePath


def pick_hole(func: PrimFunc, rng: Random) -> Context:
    """Uniformly choose one AST position of the body as the hole."""
    paths = collect_nodes(func)
    return Context(func, paths[rng.randrange(len(paths))])


def scope_at(func: PrimFunc, path: NodePath) -> tuple[list[Var], list[Buffer]]:
    """Variables and buffers visible at a hole, outermost first."""
    handles = {b.var.uid for b in func.buffers}
    vars_in_scope = [p for p in func.params if p.uid not in handles]
    buffers = list(func.buffers)
    if func.ret_buffer is not None and func.ret_buffer.var.uid not in handles:
        buffers.append(func.ret_buffer)
    node: IrNode = func.body
    for slot in path:
        cls = node.__class__
        if cls is For and slot == "body":
            vars_in_scope.append(node.loop_var)
        elif (cls is Let or cls is LetStmt) and slot == "body":
            vars_in_scope.append(node.var)
        elif cls is AttrStmt and slot == "body" and node.thread_var is not None:
            vars_in_scope.append(node.thread_var)
        elif cls is Allocate and slot == "body":
            buffers.append(node.buffer)
        node = child_at(node, slot)
    return vars_in_scope, buffers


def _slot_shape(parent: IrNode, slot) -> tuple[NodeKind, Optional[DataType],
                                               Optional[tuple[int, int]]]:
    """Kind/dtype requirement imposed by a parent slot on its occupant."""
    cls = parent.__class__
    field = slot[0] if isinstance(slot, tuple) else slot
    current = child_at(parent, slot)
    if cls is While or cls is IfThenElse:
        if field == "cond":
            return NodeKind.EXPR, BOOL, None
        return NodeKind.STMT, None, None
    if cls is For:
        if field in ("min", "extent"):
            return NodeKind.EXPR, INT32, None
        return NodeKind.STMT, None, None
    if cls is LetStmt:
        if field == "value":
            return NodeKind.EXPR, parent.var.dtype, None
        return NodeKind.STMT, None, None
    if cls is Let:
        if field == "value":
            return NodeKind.EXPR, parent.var.dtype, None
        return NodeKind.EXPR, expr_dtype(parent.body), None
    if cls is SeqStmt or cls is Allocate:
        return NodeKind.STMT, None, None
    if cls is AttrStmt:
        if field == "value":
            rng = (1, MAX_VTHREADS) if parent.key is AttrKey.VIRTUAL_THREAD \
                else (0, MAX_UNROLL_ATTR)
            return NodeKind.EXPR, INT32, rng
        return NodeKind.STMT, None, None
    if cls is BufferStore:
        value_dt = expr_dtype(parent.value)
        lanes = value_dt.lanes if value_dt is not None else 1
        if field == "value":
            idx_lanes = 1
            for ix in parent.indices:
                dt = expr_dtype(ix)
                if dt is not None and dt.lanes > idx_lanes:
                    idx_lanes = dt.lanes
            return NodeKind.EXPR, parent.buffer.dtype.with_lanes(idx_lanes), None
        return NodeKind.EXPR, INT32.with_lanes(lanes), None
    if cls is BufferLoad:
        dt = expr_dtype(parent)
        return NodeKind.EXPR, INT32.with_lanes(dt.lanes if dt else 1), None
    if cls is Evaluate:
        dt = expr_dtype(parent.expr)
        return NodeKind.EXPR, dt if dt is not None else INT32, None
    if cls is Call:
        dt = expr_dtype(current)
        return NodeKind.EXPR, dt if dt is not None else INT32, None
    if cls is Cast:
        dt = expr_dtype(parent.value)
        return NodeKind.EXPR, dt if dt is not None else INT32, None
    if cls is Ramp:
        return NodeKind.EXPR, INT32, None
    if cls is Broadcast:
        dt = expr_dtype(parent.value)
        return NodeKind.EXPR, (dt if dt is not None else INT32).scalar, None
    # binary operators: the replacement must match the sibling operand
    sibling = parent.rhs if field == "lhs" else parent.lhs
    dt = expr_dtype(sibling)
    return NodeKind.EXPR, dt if dt is not None else INT32, None


def derive_constraints(ctx: Context) -> Constraints:
    """Constraints induced by the hole's parent slot and enclosing scope."""
    vars_in_scope, buffers = scope_at(ctx.func, ctx.hole)
    if not ctx.hole:
        kind, dtype, int_const = NodeKind.STMT, None, None
    else:
        parent = ctx.func.body
        for slot in ctx.hole[:-1]:
            parent = child_at(parent, slot)
        kind, dtype, int_const = _slot_shape(parent, ctx.hole[-1])
    return Constraints(kind, dtype, tuple(vars_in_scope), tuple(buffers),
                       True, int_const)


def check_constraints(node, c: Constraints) -> list[str]:
    """Independent verification that `node` satisfies `c`.

    Used as the oracle side of generation: kind, dtype, binding of every
    free variable, and buffer declarations are all rechecked from scratch.
    """
    out: list[str] = []
    if c.node_kind is NodeKind.VAR:
        if not isinstance(node, Var):
            out.append(f"expected a variable, got {type(node).__name__}")
        return out
    if c.node_kind is NodeKind.STMT:
        if not isinstance(node, Stmt):
            out.append(f"expected a statement, got {type(node).__name__}")
            return out
    else:
        if not isinstance(node, PrimExpr):
            out.append(f"expected an expression, got {type(node).__name__}")
            return out

    scope = Scope()
    for v in c.vars_in_scope:
        scope.bind_var(v)
    for b in c.buffers_in_scope:
        scope.bind_buffer(b)

    if c.require_bound:
        known = {v.uid for v in c.vars_in_scope}
        free = free_var_uids(node)
        if not free <= known:
            out.append(f"free variables not in scope: {sorted(free - known)}")
        declared = {b.var.uid for b in c.buffers_in_scope}
        used = used_buffer_uids(node)
        if not used <= declared:
            out.append(f"undeclared buffers used: {sorted(used - declared)}")

    if c.node_kind is NodeKind.EXPR:
        try:
            dt = infer_dtype(node, scope)
            if dt != c.expr_dtype:
                out.append(f"dtype {dt} does not satisfy required {c.expr_dtype}")
        except TypeError_ as exc:
            out.append(f"dtype inference failed: {exc}")
        if c.int_const is not None:
            lo, hi = c.int_const
            if not (isinstance(node, IntImm) and lo <= node.value <= hi):
                out.append(f"slot requires an integer literal in [{lo}, {hi}]")
    else:
        _check_stmt(node, scope, set(), out)
    return out
