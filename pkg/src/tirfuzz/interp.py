"""Reference big-step interpreter defining IR semantics.

Execution is a pure function of (func, inputs, limits): outputs, traps and
the step count are all deterministic, so the step count doubles as the
performance-oracle clock.

Cost table (documented contract, regression-tested):
  * every executed Stmt / evaluated PrimExpr node costs 1 step, each time
    control reaches it (vector nodes still cost 1 regardless of lanes);
  * For adds 1 step per iteration (loop bookkeeping); min/extent are
    evaluated once;
  * While adds 1 step per iteration; its condition is re-evaluated (and
    re-counted) every trip;
  * a virtual_thread attr executes its body once per thread index.

int32/uint32 arithmetic wraps (two's complement); FloorDiv/FloorMod by zero
traps; float32 follows IEEE semantics with NaN propagation, values quantized
to float32 after every operation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from random import Random
from typing import Optional

import operator

from . import coverage as cov_mod
from .tir import (
    Add,
    Allocate,
    And,
    AttrKey,
    AttrStmt,
    Broadcast,
    Buffer,
    BufferLoad,
    BufferStore,
    Call,
    Cast,
    DataType,
    DTypeKind,
    EQ,
    Evaluate,
    FloatImm,
    FloorDiv,
    FloorMod,
    For,
    GT,
    IfThenElse,
    IntImm,
    IntrinsicId,
    Let,
    LetStmt,
    LT,
    Mul,
    Nop,
    Or,
    PrimFunc,
    Ramp,
    SeqStmt,
    Sub,
    VarRef,
    While,
    f32,
    wrap_i32,
    wrap_u32,
)


class TrapKind(Enum):
    OUT_OF_BOUNDS = "out_of_bounds"
    DIV_BY_ZERO = "div_by_zero"
    OVERFLOW_CHECKED = "overflow_checked"
    UNBOUND_INTRINSIC = "unbound_intrinsic"
    STEP_LIMIT = "step_limit"
    ALLOC_LIMIT = "alloc_limit"


class Status(Enum):
    OK = "ok"
    TRAP = "trap"
    RESOURCE_EXCEEDED = "resource_exceeded"


@dataclass(frozen=True)
class TensorValue:
    dtype: DataType
    shape: tuple[int, ...]
    data: list

    @property
    def size(self) -> int:
        n = 1
        for d in self.shape:
            n *= d
        return n


@dataclass(frozen=True)
class ExecOutcome:
    status: Status
    outputs: list[TensorValue] = field(default_factory=list)
    step_count: int = 0
    trap_kind: Optional[TrapKind] = None
    trap_detail: Optional[str] = None


@dataclass(frozen=True)
class ExecLimits:
    max_steps: int = 1_000_000
    max_alloc: int = 1 << 22


DEFAULT_LIMITS = ExecLimits()

_SITE_OK = cov_mod.register_site("interp/status/ok")
_SITE_RESOURCE = cov_mod.register_site("interp/status/resource_exceeded")
_TRAP_SITES = {kind: cov_mod.register_site(f"interp/trap/{kind.value}") for kind in TrapKind}


class _Trap(Exception):
    def __init__(self, kind: TrapKind, detail: str):
        self.kind = kind
        self.detail = detail


class _Resource(Exception):
    def __init__(self, kind: TrapKind, detail: str):
        self.kind = kind
        self.detail = detail


def _zero(dtype: DataType):
    return 0.0 if dtype.kind is DTypeKind.FLOAT32 else 0


def gen_inputs(func: PrimFunc, rng_seed: int) -> list[TensorValue]:
    """Deterministic random inputs matching the function's parameters.

    int32 values are uniform in [-64, 63], uint32 in [0, 127], float32
    uniform in [-2, 2], bool uniform. Scalar parameters become rank-0
    tensors holding one element.
    """
    rng = Random(rng_seed)
    by_handle = {b.var.uid: b for b in func.buffers}
    out: list[TensorValue] = []
    for p in func.params:
        buf = by_handle.get(p.uid)
        if buf is not None:
            dtype, shape, size = buf.dtype, buf.shape, buf.size
        else:
            dtype, shape, size = p.dtype, (), 1
        kind = dtype.kind
        if kind is DTypeKind.INT32:
            data = [rng.randint(-64, 63) for _ in range(size)]
        elif kind is DTypeKind.UINT32:
            data = [rng.randint(0, 127) for _ in range(size)]
        elif kind is DTypeKind.FLOAT32:
            data = [f32(rng.uniform(-2.0, 2.0)) for _ in range(size)]
        else:
            data = [rng.randint(0, 1) for _ in range(size)]
        out.append(TensorValue(dtype, shape, data))
    return out


def _strides(shape: tuple[int, ...]) -> tuple[int, ...]:
    out = [1] * len(shape)
    for i in range(len(shape) - 2, -1, -1):
        out[i] = out[i + 1] * shape[i + 1]
    return tuple(out)


class _Machine:
    __slots__ = ("env", "store", "buf_shapes", "buf_strides", "steps",
                 "max_steps", "max_alloc", "alloc_total", "kinds")

    def __init__(self, limits: ExecLimits):
        self.env: dict[int, object] = {}
        self.store: dict[int, list] = {}
        self.buf_shapes: dict[int, tuple[int, ...]] = {}
        self.buf_strides: dict[int, tuple[int, ...]] = {}
        self.steps = 0
        self.max_steps = limits.max_steps
        self.max_alloc = limits.max_alloc
        self.alloc_total = 0
        self.kinds: dict[int, DTypeKind] = {}

    def tick(self, n: int = 1) -> None:
        self.steps += n
        if self.steps > self.max_steps:
            raise _Resource(TrapKind.STEP_LIMIT, f"step count exceeded {self.max_steps}")

    def bind_buffer(self, buf: Buffer, data: list) -> None:
        uid = buf.var.uid
        self.store[uid] = data
        self.buf_shapes[uid] = buf.shape
        self.buf_strides[uid] = _strides(buf.shape)

    # dtype kind of an expression, memoized by node identity; assumes the
    # tree already validated so no scope is needed (vars carry their dtype).
    def kind_of(self, e) -> DTypeKind:
        k = self.kinds.get(id(e))
        if k is None:
            cls = e.__class__
            if cls is VarRef:
                k = e.var.dtype.kind
            elif cls is IntImm or cls is FloatImm or cls is Call or cls is Cast:
                k = e.dtype.kind
            elif cls in (And, Or, EQ, GT, LT):
                k = DTypeKind.BOOL
            elif cls is BufferLoad:
                k = e.buffer.dtype.kind
            elif cls is Let:
                k = self.kind_of(e.body)
            elif cls is Ramp:
                k = DTypeKind.INT32
            elif cls is Broadcast:
                k = self.kind_of(e.value)
            else:  # arithmetic binop
                k = self.kind_of(e.lhs)
            self.kinds[id(e)] = k
        return k

    # ---- expressions ----

    def eval(self, e):
        self.tick()
        cls = e.__class__
        if cls is VarRef:
            return self.env[e.var.uid]
        if cls is IntImm or cls is FloatImm:
            return e.value
        if cls is BufferLoad:
            return self._load(e)
        handler = _EXPR_DISPATCH.get(cls)
        if handler is None:
            raise AssertionError(f"no interpreter rule for {cls.__name__}")
        return handler(self, e)

    def _arith(self, e, op):
        lhs = self.eval(e.lhs)
        rhs = self.eval(e.rhs)
        kind = self.kind_of(e)
        if kind is DTypeKind.INT32:
            fix = wrap_i32
        elif kind is DTypeKind.UINT32:
            fix = wrap_u32
        else:
            fix = f32
        if type(lhs) is list:
            return [fix(op(a, b)) for a, b in zip(lhs, rhs)]
        return fix(op(lhs, rhs))

    def _divmod(self, e, op):
        lhs = self.eval(e.lhs)
        rhs = self.eval(e.rhs)
        kind = self.kind_of(e)
        fix = wrap_i32 if kind is DTypeKind.INT32 else wrap_u32
        if type(lhs) is list:
            out = []
            for a, b in zip(lhs, rhs):
                if b == 0:
                    raise _Trap(TrapKind.DIV_BY_ZERO, "division by zero (vector lane)")
                out.append(fix(op(a, b)))
            return out
        if rhs == 0:
            raise _Trap(TrapKind.DIV_BY_ZERO, "division by zero")
        return fix(op(lhs, rhs))

    def _cmp(self, e, op):
        lhs = self.eval(e.lhs)
        rhs = self.eval(e.rhs)
        if type(lhs) is list:
            return [1 if op(a, b) else 0 for a, b in zip(lhs, rhs)]
        return 1 if op(lhs, rhs) else 0

    def _bool(self, e, op):
        lhs = self.eval(e.lhs)
        rhs = self.eval(e.rhs)
        if type(lhs) is list:
            return [op(a, b) for a, b in zip(lhs, rhs)]
        return op(lhs, rhs)

    def _call(self, e: Call):
        args = [self.eval(a) for a in e.args]
        try:
            return eval_intrinsic(e.intrinsic, e.dtype.kind, args)
        except KeyError:
            raise _Trap(TrapKind.UNBOUND_INTRINSIC,
                        f"no binding for {e.intrinsic.value}") from None

    def _cast(self, e: Cast):
        value = self.eval(e.value)
        src = self.kind_of(e.value)
        dst = e.dtype.kind
        if type(value) is list:
            return [cast_scalar(v, src, dst) for v in value]
        return cast_scalar(value, src, dst)

    def _let(self, e: Let):
        value = self.eval(e.value)
        self.env[e.var.uid] = value
        try:
            return self.eval(e.body)
        finally:
            del self.env[e.var.uid]

    def _ramp(self, e: Ramp):
        base = self.eval(e.base)
        stride = self.eval(e.stride)
        return [wrap_i32(base + i * stride) for i in range(e.lanes)]

    def _broadcast(self, e: Broadcast):
        value = self.eval(e.value)
        return [value] * e.lanes

    def _offsets(self, node) -> list[int] | int:
        """Flat element offset(s) for a load/store; traps when out of range."""
        uid = node.buffer.var.uid
        shape = self.buf_shapes[uid]
        strides = self.buf_strides[uid]
        idx_values = [self.eval(i) for i in node.indices]
        lanes = 0
        for v in idx_values:
            if type(v) is list:
                lanes = len(v)
                break
        name = node.buffer.var.name
        if lanes == 0:
            off = 0
            for v, dim, stride in zip(idx_values, shape, strides):
                if v < 0 or v >= dim:
                    raise _Trap(TrapKind.OUT_OF_BOUNDS,
                                f"index {v} out of range [0, {dim}) in '{name}'")
                off += v * stride
            return off
        offs = []
        for lane in range(lanes):
            off = 0
            for v, dim, stride in zip(idx_values, shape, strides):
                x = v[lane] if type(v) is list else v
                if x < 0 or x >= dim:
                    raise _Trap(TrapKind.OUT_OF_BOUNDS,
                                f"index {x} out of range [0, {dim}) in '{name}' (lane {lane})")
                off += x * stride
            offs.append(off)
        return offs

    def _load(self, e: BufferLoad):
        data = self.store[e.buffer.var.uid]
        off = self._offsets(e)
        if type(off) is list:
            return [data[o] for o in off]
        return data[off]

    # ---- statements ----

    def exec(self, s) -> None:
        self.tick()
        cls = s.__class__
        if cls is BufferStore:
            value = self.eval(s.value)
            data = self.store[s.buffer.var.uid]
            off = self._offsets(s)
            if type(off) is list:
                for o, v in zip(off, value):
                    data[o] = v
            else:
                data[off] = value
            return
        if cls is SeqStmt:
            for child in s.stmts:
                self.exec(child)
            return
        if cls is For:
            lo = self.eval(s.min)
            extent = self.eval(s.extent)
            uid = s.loop_var.uid
            env = self.env
            for i in range(lo, lo + extent):
                self.tick()
                env[uid] = wrap_i32(i)
                self.exec(s.body)
            env.pop(uid, None)
            return
        if cls is Evaluate:
            self.eval(s.expr)
            return
        if cls is IfThenElse:
            if self.eval(s.cond):
                self.exec(s.then_body)
            elif s.else_body is not None:
                self.exec(s.else_body)
            return
        if cls is LetStmt:
            self.env[s.var.uid] = self.eval(s.value)
            self.exec(s.body)
            del self.env[s.var.uid]
            return
        if cls is While:
            while self.eval(s.cond):
                self.tick()
                self.exec(s.body)
            return
        if cls is Nop:
            return
        if cls is Allocate:
            size = s.buffer.size
            self.alloc_total += size
            if self.alloc_total > self.max_alloc:
                raise _Resource(TrapKind.ALLOC_LIMIT,
                                f"allocation exceeded {self.max_alloc} elements")
            self.bind_buffer(s.buffer, [_zero(s.buffer.dtype)] * size)
            self.exec(s.body)
            del self.store[s.buffer.var.uid]
            return
        if cls is AttrStmt:
            if s.key is AttrKey.VIRTUAL_THREAD:
                k = self.eval(s.value)
                uid = s.thread_var.uid
                for vt in range(k):
                    self.env[uid] = vt
                    self.exec(s.body)
                self.env.pop(uid, None)
            else:
                self.eval(s.value)
                self.exec(s.body)
            return
        raise AssertionError(f"no interpreter rule for {cls.__name__}")


# ---------------------------------------------------------------------------
# Scalar semantics, shared with the constant folder so compile-time and
# run-time arithmetic can never disagree.
# ---------------------------------------------------------------------------


def cast_scalar(value, src: DTypeKind, dst: DTypeKind):
    if dst is DTypeKind.FLOAT32:
        return f32(float(value))
    if dst is DTypeKind.BOOL:
        return 1 if value != 0 else 0
    if src is DTypeKind.FLOAT32:
        if value != value or value in (float("inf"), float("-inf")):
            iv = 0  # undefined in C; pinned to 0 here for determinism
        else:
            iv = int(value)  # truncation toward zero
    else:
        iv = int(value)
    return wrap_i32(iv) if dst is DTypeKind.INT32 else wrap_u32(iv)


def _clz32(v: int) -> int:
    return 32 - (v & 0xFFFFFFFF).bit_length()


def _safe_float(fn, x: float) -> float:
    if x != x:
        return x
    try:
        return f32(fn(x))
    except (ValueError, OverflowError):
        return float("nan")


def _log_f32(x: float) -> float:
    if x != x or x < 0.0:
        return float("nan")
    if x == 0.0:
        return float("-inf")
    return _safe_float(math.log, x)


def eval_intrinsic(intrinsic: IntrinsicId, result_kind: DTypeKind, args: list):
    """Apply an intrinsic to scalar argument values."""
    fn = _INTRINSICS[intrinsic]
    return fn(result_kind, args)


def _abs_value(kind: DTypeKind, a):
    v = a[0]
    if type(v) is float:
        return f32(abs(v))
    if kind is DTypeKind.UINT32:
        return v
    return wrap_i32(abs(v))


_INTRINSICS = {
    IntrinsicId.ABS: _abs_value,
    IntrinsicId.MIN: lambda k, a: min(a[0], a[1]),
    IntrinsicId.MAX: lambda k, a: max(a[0], a[1]),
    IntrinsicId.CLZ: lambda k, a: _clz32(a[0]),
    IntrinsicId.POPCOUNT: lambda k, a: (a[0] & 0xFFFFFFFF).bit_count(),
    IntrinsicId.SQRT: lambda k, a: _safe_float(math.sqrt, a[0]),
    IntrinsicId.SIN: lambda k, a: _safe_float(math.sin, a[0]),
    IntrinsicId.COS: lambda k, a: _safe_float(math.cos, a[0]),
    IntrinsicId.EXP: lambda k, a: _safe_float(math.exp, a[0]),
    IntrinsicId.LOG: lambda k, a: _log_f32(a[0]),
    IntrinsicId.FLOOR: lambda k, a: _safe_float(math.floor, a[0]),
    IntrinsicId.CEIL: lambda k, a: _safe_float(math.ceil, a[0]),
}

_SCALAR_OPS = {
    Add: operator.add,
    Sub: operator.sub,
    Mul: operator.mul,
    FloorDiv: operator.floordiv,
    FloorMod: operator.mod,
}


def eval_const_binop(op_cls, kind: DTypeKind, a, b):
    """Fold one binary op on scalar constants; returns None when the result
    is a runtime trap (division by zero) that must be left in place."""
    if op_cls is EQ:
        return 1 if a == b else 0
    if op_cls is GT:
        return 1 if a > b else 0
    if op_cls is LT:
        return 1 if a < b else 0
    if op_cls is And:
        return a & b
    if op_cls is Or:
        return a | b
    if op_cls in (FloorDiv, FloorMod):
        if b == 0:
            return None
    raw = _SCALAR_OPS[op_cls](a, b)
    if kind is DTypeKind.INT32:
        return wrap_i32(raw)
    if kind is DTypeKind.UINT32:
        return wrap_u32(raw)
    return f32(raw)


_EXPR_DISPATCH = {
    Call: _Machine._call,
    Cast: _Machine._cast,
    Let: _Machine._let,
    Ramp: _Machine._ramp,
    Broadcast: _Machine._broadcast,
    Add: lambda self, e: self._arith(e, operator.add),
    Sub: lambda self, e: self._arith(e, operator.sub),
    Mul: lambda self, e: self._arith(e, operator.mul),
    FloorDiv: lambda self, e: self._divmod(e, operator.floordiv),
    FloorMod: lambda self, e: self._divmod(e, operator.mod),
    EQ: lambda self, e: self._cmp(e, operator.eq),
    GT: lambda self, e: self._cmp(e, operator.gt),
    LT: lambda self, e: self._cmp(e, operator.lt),
    And: lambda self, e: self._bool(e, operator.and_),
    Or: lambda self, e: self._bool(e, operator.or_),
}


def execute(func: PrimFunc, inputs: list[TensorValue],
            limits: ExecLimits = DEFAULT_LIMITS,
            cov: Optional[cov_mod.CoverageHandle] = None) -> ExecOutcome:
    """Run a validated function on concrete inputs.

    Loop kinds all execute sequentially with identical semantics; the kinds
    only matter to the optimizer. Outputs are the final contents of every
    parameter (buffers by content, scalars passed through) plus a standalone
    return buffer when declared; a parameterless function yields one unit
    tensor so `ok` outcomes always carry an output.
    """
    if len(inputs) != len(func.params):
        raise ValueError(f"expected {len(func.params)} inputs, got {len(inputs)}")
    machine = _Machine(limits)
    by_handle = {b.var.uid: b for b in func.buffers}
    for p, tv in zip(func.params, inputs):
        buf = by_handle.get(p.uid)
        if buf is not None:
            if tv.shape != buf.shape or tv.dtype != buf.dtype:
                raise ValueError(f"input for '{p.name}' must be {buf.dtype} {buf.shape}")
            machine.bind_buffer(buf, list(tv.data))
        else:
            if tv.shape != () or tv.dtype != p.dtype:
                raise ValueError(f"input for '{p.name}' must be a {p.dtype} scalar")
            machine.env[p.uid] = tv.data[0]
    ret = func.ret_buffer
    standalone_ret = ret is not None and ret.var.uid not in by_handle
    if standalone_ret:
        machine.bind_buffer(ret, [_zero(ret.dtype)] * ret.size)

    try:
        machine.exec(func.body)
    except _Trap as trap:
        if cov is not None:
            cov.hit(_TRAP_SITES[trap.kind])
        return ExecOutcome(Status.TRAP, [], machine.steps, trap.kind, trap.detail)
    except _Resource as res:
        if cov is not None:
            cov.hit(_SITE_RESOURCE)
        return ExecOutcome(Status.RESOURCE_EXCEEDED, [], machine.steps,
                           res.kind, res.detail)

    outputs: list[TensorValue] = []
    for p, tv in zip(func.params, inputs):
        buf = by_handle.get(p.uid)
        if buf is not None:
            outputs.append(TensorValue(buf.dtype, buf.shape, list(machine.store[p.uid])))
        else:
            outputs.append(TensorValue(p.dtype, (), [machine.env[p.uid]]))
    if standalone_ret:
        outputs.append(TensorValue(ret.dtype, ret.shape, list(machine.store[ret.var.uid])))
    if not outputs:
        outputs.append(TensorValue(DataType(DTypeKind.INT32), (), [0]))
    if cov is not None:
        cov.hit(_SITE_OK)
    return ExecOutcome(Status.OK, outputs, machine.steps)
