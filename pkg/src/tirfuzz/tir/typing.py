"""Expression dtype inference and lexical scopes."""

from __future__ import annotations

from typing import Optional

from .nodes import (
    ARITH_OPS,
    BOOL,
    BOOL_OPS,
    CMP_OPS,
    EQ,
    FLOAT32,
    INT32,
    MAX_VECTOR_LANES,
    Broadcast,
    Buffer,
    BufferLoad,
    Call,
    Cast,
    DataType,
    DTypeKind,
    FloatImm,
    FloorDiv,
    FloorMod,
    IntImm,
    IntrinsicId,
    Let,
    PrimExpr,
    Ramp,
    Var,
    VarRef,
)


class TypeError_(Exception):
    """Base class for inference failures."""


class TypeMismatch(TypeError_):
    pass


class UnboundVariable(TypeError_):
    pass


class Scope:
    """Variables and buffers visible at a program point.

    Scopes are persistent-ish: `child()` shares parent bindings, so pushing
    is cheap during traversal.
    """

    __slots__ = ("vars", "buffers")

    def __init__(self, vars: Optional[dict[int, Var]] = None,
                 buffers: Optional[dict[int, Buffer]] = None):
        self.vars: dict[int, Var] = vars if vars is not None else {}
        self.buffers: dict[int, Buffer] = buffers if buffers is not None else {}

    def child(self) -> "Scope":
        return Scope(dict(self.vars), dict(self.buffers))

    def bind_var(self, var: Var) -> None:
        self.vars[var.uid] = var

    def bind_buffer(self, buf: Buffer) -> None:
        self.buffers[buf.var.uid] = buf

    def has_var(self, var: Var) -> bool:
        return var.uid in self.vars

    def has_buffer(self, buf: Buffer) -> bool:
        return buf.var.uid in self.buffers

    @classmethod
    def for_func(cls, func) -> "Scope":
        scope = cls()
        handles = {b.var.uid for b in func.buffers}
        for p in func.params:
            if p.uid not in handles:
                scope.bind_var(p)
        for b in func.buffers:
            scope.bind_buffer(b)
        return scope


# intrinsic -> (list of accepted scalar arg kinds per position, or None for
# "same numeric kind everywhere"), result rule
_UNARY_FLOAT = (IntrinsicId.SQRT, IntrinsicId.SIN, IntrinsicId.COS,
                IntrinsicId.EXP, IntrinsicId.LOG, IntrinsicId.FLOOR,
                IntrinsicId.CEIL)
_UNARY_BITS = (IntrinsicId.CLZ, IntrinsicId.POPCOUNT)


def intrinsic_arity(intrinsic: IntrinsicId) -> int:
    return 2 if intrinsic in (IntrinsicId.MIN, IntrinsicId.MAX) else 1


def intrinsic_result(intrinsic: IntrinsicId, arg_dtypes: list[DataType]) -> DataType:
    """Result dtype of an intrinsic call, or raise TypeMismatch."""
    arity = intrinsic_arity(intrinsic)
    if len(arg_dtypes) != arity:
        raise TypeMismatch(f"{intrinsic.value} expects {arity} args, got {len(arg_dtypes)}")
    for dt in arg_dtypes:
        if dt.lanes != 1:
            raise TypeMismatch(f"{intrinsic.value} takes scalar args, got {dt}")
    if intrinsic in _UNARY_FLOAT:
        if arg_dtypes[0] != FLOAT32:
            raise TypeMismatch(f"{intrinsic.value} requires float32, got {arg_dtypes[0]}")
        return FLOAT32
    if intrinsic in _UNARY_BITS:
        if not arg_dtypes[0].is_int:
            raise TypeMismatch(f"{intrinsic.value} requires an int type, got {arg_dtypes[0]}")
        return INT32
    if intrinsic is IntrinsicId.ABS:
        if arg_dtypes[0].is_bool:
            raise TypeMismatch("abs does not accept bool")
        return arg_dtypes[0]
    # min/max
    if arg_dtypes[0] != arg_dtypes[1]:
        raise TypeMismatch(f"{intrinsic.value} operands differ: "
                           f"{arg_dtypes[0]} vs {arg_dtypes[1]}")
    if arg_dtypes[0].is_bool:
        raise TypeMismatch(f"{intrinsic.value} does not accept bool")
    return arg_dtypes[0]


def infer_dtype(expr: PrimExpr, scope: Scope) -> DataType:
    """Infer the unique dtype of `expr` under `scope`.

    Arithmetic requires equal operand dtypes (no implicit promotion);
    comparisons and boolean connectives yield bool of the operand lanes.
    Raises TypeMismatch or UnboundVariable.
    """
    cls = expr.__class__
    if cls is VarRef:
        var = expr.var
        bound = scope.vars.get(var.uid)
        if bound is None:
            if var.uid in scope.buffers:
                raise TypeMismatch(f"variable '{var.name}' is a buffer handle")
            raise UnboundVariable(f"unbound variable '{var.name}'")
        return bound.dtype
    if cls is IntImm:
        if expr.dtype.lanes != 1 or expr.dtype.is_float:
            raise TypeMismatch(f"bad IntImm dtype {expr.dtype}")
        return expr.dtype
    if cls is FloatImm:
        if expr.dtype != FLOAT32:
            raise TypeMismatch(f"bad FloatImm dtype {expr.dtype}")
        return expr.dtype
    if cls in ARITH_OPS:
        lt = infer_dtype(expr.lhs, scope)
        rt = infer_dtype(expr.rhs, scope)
        if lt != rt:
            raise TypeMismatch(f"{cls.__name__} operands differ: {lt} vs {rt}")
        if lt.is_bool:
            raise TypeMismatch(f"{cls.__name__} does not accept bool operands")
        if cls in (FloorDiv, FloorMod) and not lt.is_int:
            raise TypeMismatch(f"{cls.__name__} requires integer operands, got {lt}")
        return lt
    if cls in CMP_OPS:
        lt = infer_dtype(expr.lhs, scope)
        rt = infer_dtype(expr.rhs, scope)
        if lt != rt:
            raise TypeMismatch(f"{cls.__name__} operands differ: {lt} vs {rt}")
        if lt.is_bool and cls is not EQ:
            raise TypeMismatch(f"{cls.__name__} does not order bool operands")
        return BOOL.with_lanes(lt.lanes)
    if cls in BOOL_OPS:
        lt = infer_dtype(expr.lhs, scope)
        rt = infer_dtype(expr.rhs, scope)
        if lt != rt:
            raise TypeMismatch(f"{cls.__name__} operands differ: {lt} vs {rt}")
        if not lt.is_bool:
            raise TypeMismatch(f"{cls.__name__} requires bool operands, got {lt}")
        return lt
    if cls is Call:
        arg_dtypes = [infer_dtype(a, scope) for a in expr.args]
        result = intrinsic_result(expr.intrinsic, arg_dtypes)
        if expr.dtype != result:
            raise TypeMismatch(
                f"call {expr.intrinsic.value} declared {expr.dtype}, computes {result}")
        return result
    if cls is Cast:
        src = infer_dtype(expr.value, scope)
        if src.lanes != expr.dtype.lanes:
            raise TypeMismatch(f"cast cannot change lanes: {src} -> {expr.dtype}")
        return expr.dtype
    if cls is Let:
        vt = infer_dtype(expr.value, scope)
        if vt != expr.var.dtype:
            raise TypeMismatch(
                f"let value dtype {vt} does not match '{expr.var.name}': {expr.var.dtype}")
        inner = scope.child()
        inner.bind_var(expr.var)
        return infer_dtype(expr.body, inner)
    if cls is BufferLoad:
        buf = scope.buffers.get(expr.buffer.var.uid)
        if buf is None:
            raise UnboundVariable(f"undeclared buffer '{expr.buffer.var.name}'")
        if len(expr.indices) != len(buf.shape):
            raise TypeMismatch(
                f"load of '{buf.var.name}' uses {len(expr.indices)} indices, rank is {len(buf.shape)}")
        lanes = _index_lanes(expr.indices, scope, buf.var.name)
        return buf.dtype.with_lanes(lanes)
    if cls is Ramp:
        bt = infer_dtype(expr.base, scope)
        st = infer_dtype(expr.stride, scope)
        if bt != INT32 or st != INT32:
            raise TypeMismatch(f"ramp base/stride must be scalar int32, got {bt}/{st}")
        _check_lanes(expr.lanes)
        return INT32.with_lanes(expr.lanes)
    if cls is Broadcast:
        vt = infer_dtype(expr.value, scope)
        if vt.lanes != 1:
            raise TypeMismatch(f"broadcast value must be scalar, got {vt}")
        _check_lanes(expr.lanes)
        return vt.with_lanes(expr.lanes)
    raise TypeMismatch(f"not an expression node: {cls.__name__}")


def _check_lanes(lanes: int) -> None:
    if not 2 <= lanes <= MAX_VECTOR_LANES:
        raise TypeMismatch(f"vector lanes must be in [2, {MAX_VECTOR_LANES}], got {lanes}")


def _index_lanes(indices, scope: Scope, bufname: str) -> int:
    lanes = None
    for idx in indices:
        it = infer_dtype(idx, scope)
        if it.kind is not DTypeKind.INT32:
            raise TypeMismatch(f"index into '{bufname}' must be int32, got {it}")
        if lanes is None:
            lanes = it.lanes
        elif it.lanes != lanes:
            raise TypeMismatch(f"indices into '{bufname}' mix lanes {lanes} and {it.lanes}")
    return lanes if lanes is not None else 1


def expr_dtype(e: PrimExpr) -> Optional[DataType]:
    """Bottom-up dtype of an already-validated expression (no scope needed:
    variables carry their dtype). Returns None on non-expression input."""
    cls = e.__class__
    if cls is VarRef:
        return e.var.dtype
    if cls in (IntImm, FloatImm, Call, Cast):
        return e.dtype
    if cls in ARITH_OPS:
        return expr_dtype(e.lhs)
    if cls in BOOL_OPS or cls in CMP_OPS:
        dt = expr_dtype(e.lhs)
        return None if dt is None else BOOL.with_lanes(dt.lanes)
    if cls is Let:
        return expr_dtype(e.body)
    if cls is BufferLoad:
        lanes = 1
        for ix in e.indices:
            dt = expr_dtype(ix)
            if dt is not None and dt.lanes > lanes:
                lanes = dt.lanes
        return e.buffer.dtype.with_lanes(lanes)
    if cls is Ramp:
        return INT32.with_lanes(e.lanes)
    if cls is Broadcast:
        dt = expr_dtype(e.value)
        return None if dt is None else dt.with_lanes(e.lanes)
    return None
