"""Size-bounded random construction of constraint-satisfying IR fragments.

The generator never emits While (nothing in the IR can prove an arbitrary
condition terminates; bounded loops come from For) and prefers small
integer literals and in-bounds index shapes, leaving out-of-bounds
discovery to the runtime oracle.
"""

from __future__ import annotations

from random import Random
from typing import Optional

from ..tir import (
    BOOL,
    FLOAT32,
    INT32,
    MAX_VTHREADS,
    UINT32,
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
    ForKind,
    GT,
    IfThenElse,
    IntImm,
    IntrinsicId,
    IrNode,
    Let,
    LetStmt,
    LoopAttrs,
    LT,
    Mul,
    NOP,
    Or,
    PrimFunc,
    Ramp,
    SeqStmt,
    Stmt,
    Sub,
    UidGen,
    Var,
    VarRef,
    f32,
    intrinsic_arity,
    validate,
)
from .constraints import Constraints, NodeKind


class Unsatisfiable(Exception):
    """No node can satisfy the requested constraints within the size."""


_NUMERIC_SCALARS = (INT32, UINT32, FLOAT32)
_EVAL_DTYPES = (INT32, INT32, INT32, UINT32, FLOAT32, FLOAT32, BOOL,
                DataType(DTypeKind.INT32, 4), DataType(DTypeKind.FLOAT32, 4),
                DataType(DTypeKind.INT32, 2))
_SHAPES = ((4,), (8,), (16,), (2, 2), (4, 4), (2, 3), (64,))
_FLOAT_INTRINSICS = (IntrinsicId.SQRT, IntrinsicId.SIN, IntrinsicId.COS,
                     IntrinsicId.EXP, IntrinsicId.LOG, IntrinsicId.FLOOR,
                     IntrinsicId.CEIL)


class _Gen:
    def __init__(self, constraints: Constraints, rng: Random, uids: UidGen):
        self.rng = rng
        self.uids = uids
        self.vars = list(constraints.vars_in_scope)
        self.buffers = list(constraints.buffers_in_scope)

    def fresh_var(self, dtype: DataType, prefix: str = "t") -> Var:
        uid = self.uids.fresh()
        return Var(f"{prefix}{uid}", dtype, uid)

    # ---- immediates ----

    def imm(self, dtype: DataType):
        rng = self.rng
        kind = dtype.kind
        if kind is DTypeKind.INT32:
            if rng.random() < 0.4:
                return IntImm(dtype, rng.choice((0, 1, 2, 4, -1, 16)))
            return IntImm(dtype, rng.randint(-64, 63))
        if kind is DTypeKind.UINT32:
            if rng.random() < 0.4:
                return IntImm(dtype, rng.choice((0, 1, 2, 4, 16)))
            return IntImm(dtype, rng.randint(0, 127))
        if kind is DTypeKind.BOOL:
            return IntImm(dtype, rng.getrandbits(1))
        if rng.random() < 0.3:
            return FloatImm(dtype, rng.choice((0.0, 1.0, -1.0, 0.5, 2.0)))
        return FloatImm(dtype, f32(rng.uniform(-2.0, 2.0)))

    def leaf(self, dtype: DataType):
        if dtype.lanes > 1:
            return Broadcast(self.leaf(dtype.scalar), dtype.lanes)
        candidates = [v for v in self.vars if v.dtype == dtype]
        if candidates and self.rng.random() < 0.5:
            return VarRef(self.rng.choice(candidates))
        return self.imm(dtype)

    # ---- expressions ----

    def expr(self, dtype: DataType, budget: int):
        if dtype.lanes > 1:
            return self._vector_expr(dtype, budget)
        return self._scalar_expr(dtype, budget)

    def _scalar_expr(self, dtype: DataType, budget: int):
        rng = self.rng
        if budget <= 1:
            return self.leaf(dtype)
        options = ["leaf"]
        if dtype.is_bool:
            options += ["boolop", "cmp"] * 2
            if budget >= 4:
                options.append("let")
        else:
            options += ["arith"] * 3
            if budget >= 2:
                options.append("cast")
            if budget >= 3 and not dtype.is_bool:
                options.append("call")
            if budget >= 4:
                options.append("let")
        loadable = [b for b in self.buffers if b.dtype == dtype.scalar]
        if loadable and budget >= 2 + max(len(b.shape) for b in loadable):
            options += ["load"] * 2
        choice = rng.choice(options)
        if choice == "leaf":
            return self.leaf(dtype)
        if choice == "arith":
            half = (budget - 1) // 2
            ops = (Add, Sub, Mul, FloorDiv, FloorMod) if dtype.is_int \
                else (Add, Sub, Mul)
            cls = rng.choice(ops)
            return cls(self.expr(dtype, half), self.expr(dtype, budget - 1 - half))
        if choice == "boolop":
            half = (budget - 1) // 2
            cls = rng.choice((And, Or))
            return cls(self.expr(BOOL, half), self.expr(BOOL, budget - 1 - half))
        if choice == "cmp":
            half = (budget - 1) // 2
            cls = rng.choice((EQ, GT, LT))
            operand = rng.choice(_NUMERIC_SCALARS)
            return cls(self.expr(operand, half), self.expr(operand, budget - 1 - half))
        if choice == "cast":
            src = rng.choice([d for d in _NUMERIC_SCALARS + (BOOL,) if d != dtype])
            return Cast(dtype, self.expr(src, budget - 1))
        if choice == "call":
            return self._call_expr(dtype, budget)
        if choice == "let":
            aux_dtype = rng.choice(_NUMERIC_SCALARS)
            var = self.fresh_var(aux_dtype)
            half = (budget - 1) // 2
            value = self.expr(aux_dtype, half)
            self.vars.append(var)
            try:
                body = self.expr(dtype, budget - 1 - half)
            finally:
                self.vars.pop()
            return Let(var, value, body)
        # load
        buf = rng.choice(loadable)
        per_index = max(1, (budget - 1) // len(buf.shape))
        indices = tuple(self.index(dim, per_index) for dim in buf.shape)
        return BufferLoad(buf, indices)

    def _call_expr(self, dtype: DataType, budget: int):
        rng = self.rng
        if dtype.is_float:
            intrinsic = rng.choice(_FLOAT_INTRINSICS + (IntrinsicId.ABS,
                                                        IntrinsicId.MIN,
                                                        IntrinsicId.MAX))
            arg_dtype = FLOAT32
            result = FLOAT32
        else:
            intrinsic = rng.choice((IntrinsicId.ABS, IntrinsicId.MIN,
                                    IntrinsicId.MAX, IntrinsicId.CLZ,
                                    IntrinsicId.POPCOUNT))
            if intrinsic in (IntrinsicId.CLZ, IntrinsicId.POPCOUNT):
                arg_dtype = dtype if dtype.is_int else INT32
                result = INT32
            else:
                arg_dtype = dtype if dtype.is_int else INT32
                result = arg_dtype
        arity = intrinsic_arity(intrinsic)
        per_arg = max(1, (budget - 1) // (arity + 1))
        args = tuple(self.expr(arg_dtype, per_arg) for _ in range(arity))
        call = Call(result, intrinsic, args)
        if result != dtype:
            # opaque intrinsic signatures are reconciled with a cast
            return Cast(dtype, call)
        return call

    def _vector_expr(self, dtype: DataType, budget: int):
        rng = self.rng
        lanes = dtype.lanes
        if budget <= 2:
            return Broadcast(self.leaf(dtype.scalar), lanes)
        options = ["broadcast", "binop"]
        if dtype == INT32.with_lanes(lanes):
            options += ["ramp", "ramp"]
        if dtype.is_bool:
            options = ["broadcast", "cmp"]
        choice = rng.choice(options)
        if choice == "broadcast":
            return Broadcast(self._scalar_expr(dtype.scalar, budget - 1), lanes)
        if choice == "ramp":
            half = (budget - 1) // 2
            return Ramp(self._scalar_expr(INT32, half),
                        self._scalar_expr(INT32, budget - 1 - half), lanes)
        if choice == "cmp":
            half = (budget - 1) // 2
            cls = rng.choice((EQ, GT, LT))
            operand = rng.choice((INT32, FLOAT32)).with_lanes(lanes)
            return cls(self._vector_expr(operand, half),
                       self._vector_expr(operand, budget - 1 - half))
        half = (budget - 1) // 2
        ops = (Add, Sub, Mul, FloorDiv, FloorMod) if dtype.is_int else (Add, Sub, Mul)
        cls = rng.choice(ops)
        return cls(self._vector_expr(dtype, half),
                   self._vector_expr(dtype, budget - 1 - half))

    def index(self, dim: int, budget: int):
        """Mostly in-bounds scalar int32 index expression."""
        rng = self.rng
        int_vars = [v for v in self.vars if v.dtype == INT32]
        roll = rng.random()
        if int_vars and budget >= 3 and roll < 0.35:
            return FloorMod(VarRef(rng.choice(int_vars)), IntImm(INT32, dim))
        if int_vars and roll < 0.6:
            return VarRef(rng.choice(int_vars))
        if int_vars and budget >= 4 and roll < 0.7:
            a = rng.choice(int_vars)
            return Add(Mul(VarRef(rng.choice(int_vars)), IntImm(INT32, rng.choice((2, 4, 16)))),
                       VarRef(a))
        return IntImm(INT32, rng.randrange(dim))

    # ---- statements ----

    def stmt(self, budget: int) -> Stmt:
        rng = self.rng
        if budget <= 1:
            return NOP
        options = ["evaluate", "evaluate", "seq"]
        if budget >= 3:
            options += ["if", "letstmt", "for", "for"]
        if budget >= 4:
            options.append("alloc")
            options.append("attr")
        storable = self.buffers
        if storable:
            min_store = 2 + min(len(b.shape) for b in storable)
            if budget >= min_store:
                options += ["store"] * 4
        choice = rng.choice(options)
        if choice == "evaluate":
            dtype = rng.choice(_EVAL_DTYPES)
            return Evaluate(self.expr(dtype, budget - 1))
        if choice == "seq":
            n = 2 if budget < 6 else rng.choice((2, 2, 3))
            per = max(1, (budget - 1) // n)
            stmts = tuple(self.stmt(per) for _ in range(n))
            return SeqStmt(stmts) if stmts else NOP
        if choice == "if":
            third = max(1, (budget - 1) // 3)
            cond = self.expr(BOOL, third)
            then_body = self.stmt(third)
            else_body = self.stmt(third) if rng.random() < 0.4 else None
            return IfThenElse(cond, then_body, else_body)
        if choice == "letstmt":
            dtype = rng.choice(_NUMERIC_SCALARS)
            var = self.fresh_var(dtype)
            half = (budget - 1) // 2
            value = self.expr(dtype, half)
            self.vars.append(var)
            try:
                body = self.stmt(budget - 1 - half)
            finally:
                self.vars.pop()
            return LetStmt(var, value, body)
        if choice == "for":
            return self._for_stmt(budget)
        if choice == "alloc":
            dtype = rng.choice(_NUMERIC_SCALARS)
            shape = rng.choice(((16,), (64,), (4, 8), (2, 2), (256,)))
            buf = Buffer(self.fresh_var(dtype, "m"), shape, dtype)
            self.buffers.append(buf)
            try:
                body = self.stmt(budget - 1)
            finally:
                self.buffers.pop()
            return Allocate(buf, body)
        if choice == "attr":
            if rng.random() < 0.5:
                tv = self.fresh_var(INT32, "vt")
                k = rng.choice((2, 2, 4))
                self.vars.append(tv)
                try:
                    body = self.stmt(budget - 2)
                finally:
                    self.vars.pop()
                return AttrStmt(AttrKey.VIRTUAL_THREAD, IntImm(INT32, k), body, tv)
            cap = rng.choice((0, 4, 16, 64))
            return AttrStmt(AttrKey.UNROLL_MAX_STEPS, IntImm(INT32, cap),
                            self.stmt(budget - 2))
        # store
        eligible = [b for b in storable if budget >= 2 + len(b.shape)]
        buf = rng.choice(eligible if eligible else storable)
        rank = len(buf.shape)
        remaining = budget - 1
        per_index = max(1, remaining // (rank + 2))
        indices = tuple(self.index(dim, per_index) for dim in buf.shape)
        value = self.expr(buf.dtype, max(1, remaining - rank * per_index))
        return BufferStore(buf, value, indices)

    def _for_stmt(self, budget: int) -> Stmt:
        rng = self.rng
        var = self.fresh_var(INT32, "i")
        kind = rng.choice((ForKind.SERIAL, ForKind.SERIAL, ForKind.SERIAL,
                           ForKind.UNROLL, ForKind.VECTORIZE, ForKind.PARALLEL,
                           ForKind.VIRTUAL_THREAD_BOUND))
        extent = rng.choice((1, 2, 2, 3, 4, 4, 8, 16))
        attrs = LoopAttrs()
        if rng.random() < 0.15:
            attrs = LoopAttrs(unroll_max_steps=rng.choice((0, 4, 16)))
        self.vars.append(var)
        try:
            body = self.stmt(budget - 3)
        finally:
            self.vars.pop()
        return For(var, IntImm(INT32, 0), IntImm(INT32, extent), kind, body, attrs)


def generate(constraints: Constraints, size: int, rng: Random,
             uids: Optional[UidGen] = None) -> IrNode:
    """Produce a node satisfying `constraints` with node count <= 2*size.

    Callers splicing the result into an existing function must pass a
    UidGen seeded past that function's uids so fresh binders cannot
    collide.
    """
    if size < 1:
        raise Unsatisfiable("size must be >= 1")
    if uids is None:
        top = max((v.uid for v in constraints.vars_in_scope), default=-1)
        top = max(top, max((b.var.uid for b in constraints.buffers_in_scope), default=-1))
        uids = UidGen(top + 1)
    gen = _Gen(constraints, rng, uids)
    if constraints.int_const is not None:
        lo, hi = constraints.int_const
        return IntImm(INT32, rng.randint(lo, hi))
    if constraints.node_kind is NodeKind.VAR:
        return gen.fresh_var(rng.choice(_NUMERIC_SCALARS))
    if constraints.node_kind is NodeKind.STMT:
        return gen.stmt(size)
    return gen.expr(constraints.expr_dtype, size)


def random_primfunc(rng: Random, body_size: Optional[int] = None) -> PrimFunc:
    """A fresh valid function with a random signature and generated body."""
    uid = 0
    params: list[Var] = []
    buffers: list[Buffer] = []
    for _ in range(rng.randint(0, 2)):
        dtype = rng.choice(_NUMERIC_SCALARS)
        var = Var(f"buf{uid}", dtype, uid)
        uid += 1
        params.append(var)
        buffers.append(Buffer(var, rng.choice(_SHAPES), dtype))
    for _ in range(rng.randint(0, 2)):
        dtype = rng.choice((INT32, INT32, FLOAT32, BOOL, UINT32))
        params.append(Var(f"p{uid}", dtype, uid))
        uid += 1
    scratch = Constraints(NodeKind.STMT, None,
                          tuple(p for p in params if all(b.var.uid != p.uid for b in buffers)),
                          tuple(buffers))
    size = body_size if body_size is not None else rng.randint(6, 18)
    body = generate(scratch, size, rng, UidGen(uid))
    func = PrimFunc(tuple(params), tuple(buffers), body)
    result = validate(func)
    if not result.ok:
        raise AssertionError(f"generator produced invalid function: {result.violations}")
    return func
