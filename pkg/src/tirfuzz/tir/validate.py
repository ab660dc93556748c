"""Whole-function validation: scoping, typing, buffer declarations, limits.

`validate` never raises; every problem becomes a violation string so callers
can treat arbitrary trees as data.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .nodes import (
    BOOL,
    INT32,
    MAX_BUFFER_ELEMS,
    MAX_UNROLL_ATTR,
    MAX_VTHREADS,
    Allocate,
    AttrKey,
    AttrStmt,
    Buffer,
    BufferStore,
    DTypeKind,
    Evaluate,
    For,
    IfThenElse,
    IntImm,
    LetStmt,
    Nop,
    PrimFunc,
    SeqStmt,
    Stmt,
    Var,
    While,
)
from .typing import Scope, TypeError_, infer_dtype

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


@dataclass
class ValidationResult:
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def _check_var(var: Var, seen_uids: set[int], out: list[str]) -> None:
    if not var.name or not _NAME_RE.match(var.name):
        out.append(f"bad variable name {var.name!r}")
    if var.uid in seen_uids:
        out.append(f"duplicate binder uid {var.uid} ('{var.name}')")
    seen_uids.add(var.uid)
    if var.dtype.lanes != 1:
        out.append(f"variable '{var.name}' has vector dtype {var.dtype}")


def _check_buffer(buf: Buffer, out: list[str]) -> None:
    if not buf.shape:
        out.append(f"buffer '{buf.var.name}' has empty shape")
    for d in buf.shape:
        if d < 1:
            out.append(f"buffer '{buf.var.name}' has non-positive dimension {d}")
            return
    if buf.size > MAX_BUFFER_ELEMS:
        out.append(f"buffer '{buf.var.name}' exceeds {MAX_BUFFER_ELEMS} elements")
    if buf.dtype.lanes != 1:
        out.append(f"buffer '{buf.var.name}' element dtype must be scalar, got {buf.dtype}")


def _expr_dtype(expr, scope: Scope, out: list[str], what: str):
    try:
        return infer_dtype(expr, scope)
    except TypeError_ as exc:
        out.append(f"{what}: {exc}")
        return None


def _check_const_imm(expr, lo: int, hi: int, what: str, out: list[str]) -> None:
    if not isinstance(expr, IntImm) or not expr.dtype.is_int:
        out.append(f"{what} must be an integer constant")
    elif not lo <= expr.value <= hi:
        out.append(f"{what} must be in [{lo}, {hi}], got {expr.value}")


def validate(func: PrimFunc) -> ValidationResult:
    """Check all structural invariants of a function."""
    out: list[str] = []
    seen_uids: set[int] = set()

    handles = {b.var.uid for b in func.buffers}
    for p in func.params:
        _check_var(p, seen_uids, out)
    for b in func.buffers:
        if b.var.uid not in {p.uid for p in func.params}:
            out.append(f"buffer '{b.var.name}' is not bound to a parameter")
        _check_buffer(b, out)
    if func.ret_buffer is not None:
        rb = func.ret_buffer
        if rb.var.uid not in handles:
            # standalone return buffer: its handle is a fresh binder
            _check_var(rb.var, seen_uids, out)
            _check_buffer(rb, out)

    scope = Scope()
    for p in func.params:
        if p.uid not in handles:
            scope.bind_var(p)
    for b in func.buffers:
        scope.bind_buffer(b)
    if func.ret_buffer is not None and func.ret_buffer.var.uid not in handles:
        scope.bind_buffer(func.ret_buffer)

    _check_stmt(func.body, scope, seen_uids, out)
    return ValidationResult(out)


def _check_stmt(stmt: Stmt, scope: Scope, seen_uids: set[int], out: list[str]) -> None:
    cls = stmt.__class__
    if cls is Nop:
        return
    if cls is Evaluate:
        _expr_dtype(stmt.expr, scope, out, "Evaluate operand")
        return
    if cls is SeqStmt:
        if not stmt.stmts:
            out.append("SeqStmt must have at least one child")
        for s in stmt.stmts:
            _check_stmt(s, scope, seen_uids, out)
        return
    if cls is While:
        dt = _expr_dtype(stmt.cond, scope, out, "While condition")
        if dt is not None and dt != BOOL:
            out.append(f"While condition must be bool, got {dt}")
        _check_stmt(stmt.body, scope, seen_uids, out)
        return
    if cls is IfThenElse:
        dt = _expr_dtype(stmt.cond, scope, out, "If condition")
        if dt is not None and dt != BOOL:
            out.append(f"If condition must be bool, got {dt}")
        _check_stmt(stmt.then_body, scope, seen_uids, out)
        if stmt.else_body is not None:
            _check_stmt(stmt.else_body, scope, seen_uids, out)
        return
    if cls is For:
        for what, e in (("For min", stmt.min), ("For extent", stmt.extent)):
            dt = _expr_dtype(e, scope, out, what)
            if dt is not None and dt != INT32:
                out.append(f"{what} must be int32, got {dt}")
        _check_var(stmt.loop_var, seen_uids, out)
        if stmt.loop_var.dtype != INT32:
            out.append(f"loop var '{stmt.loop_var.name}' must be int32")
        a = stmt.attrs
        if a.unroll_max_steps is not None and not 0 <= a.unroll_max_steps <= MAX_UNROLL_ATTR:
            out.append(f"unroll_max_steps must be in [0, {MAX_UNROLL_ATTR}]")
        inner = scope.child()
        inner.bind_var(stmt.loop_var)
        _check_stmt(stmt.body, inner, seen_uids, out)
        return
    if cls is LetStmt:
        dt = _expr_dtype(stmt.value, scope, out, f"let '{stmt.var.name}' value")
        _check_var(stmt.var, seen_uids, out)
        if dt is not None and dt != stmt.var.dtype:
            out.append(f"let value dtype {dt} does not match '{stmt.var.name}': {stmt.var.dtype}")
        inner = scope.child()
        inner.bind_var(stmt.var)
        _check_stmt(stmt.body, inner, seen_uids, out)
        return
    if cls is BufferStore:
        buf = scope.buffers.get(stmt.buffer.var.uid)
        if buf is None:
            out.append(f"store to undeclared buffer '{stmt.buffer.var.name}'")
            buf = stmt.buffer  # still check the component expressions
        elif buf != stmt.buffer:
            out.append(f"store disagrees with declaration of '{buf.var.name}'")
        if len(stmt.indices) != len(buf.shape):
            out.append(f"store to '{buf.var.name}' uses {len(stmt.indices)} indices, "
                       f"rank is {len(buf.shape)}")
        lanes = None
        for idx in stmt.indices:
            dt = _expr_dtype(idx, scope, out, f"store index of '{buf.var.name}'")
            if dt is None:
                continue
            if dt.kind is not DTypeKind.INT32:
                out.append(f"store index of '{buf.var.name}' must be int32, got {dt}")
            elif lanes is None:
                lanes = dt.lanes
            elif dt.lanes != lanes:
                out.append(f"store indices of '{buf.var.name}' mix lanes")
        vt = _expr_dtype(stmt.value, scope, out, f"store value for '{buf.var.name}'")
        if vt is not None:
            if vt.kind is not buf.dtype.kind:
                out.append(f"store value dtype {vt} does not match buffer "
                           f"'{buf.var.name}' ({buf.dtype})")
            elif lanes is not None and vt.lanes != lanes:
                out.append(f"store value lanes {vt.lanes} do not match index lanes {lanes}")
        return
    if cls is Allocate:
        _check_var(stmt.buffer.var, seen_uids, out)
        _check_buffer(stmt.buffer, out)
        inner = scope.child()
        inner.bind_buffer(stmt.buffer)
        _check_stmt(stmt.body, inner, seen_uids, out)
        return
    if cls is AttrStmt:
        if stmt.key is AttrKey.VIRTUAL_THREAD:
            _check_const_imm(stmt.value, 1, MAX_VTHREADS, "virtual_thread count", out)
            inner = scope.child()
            if stmt.thread_var is None:
                out.append("virtual_thread attr must bind a thread variable")
            else:
                _check_var(stmt.thread_var, seen_uids, out)
                if stmt.thread_var.dtype != INT32:
                    out.append(f"thread var '{stmt.thread_var.name}' must be int32")
                inner.bind_var(stmt.thread_var)
            _check_stmt(stmt.body, inner, seen_uids, out)
        else:
            _check_const_imm(stmt.value, 0, MAX_UNROLL_ATTR, "unroll_max_steps attr", out)
            if stmt.thread_var is not None:
                out.append("unroll_max_steps attr must not bind a variable")
            _check_stmt(stmt.body, scope, seen_uids, out)
        return
    out.append(f"not a statement node: {cls.__name__}")
