"""AST node definitions for the low-level tensor IR.

Nodes are immutable dataclasses; mutation always builds new trees (structural
sharing is fine and heavily used by the passes). Variables are identified by
``uid`` so shadowed names never alias.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterator, Optional, Union

MAX_BUFFER_ELEMS = 1 << 20
MAX_VECTOR_LANES = 16
MAX_UNROLL_ATTR = 1024
MAX_VTHREADS = 8

_F32 = struct.Struct("<f")


def f32(value: float) -> float:
    """Quantize a python float to float32 precision."""
    if value != value:  # NaN
        return value
    try:
        return _F32.unpack(_F32.pack(value))[0]
    except (OverflowError, struct.error):
        return float("inf") if value > 0 else float("-inf")


def wrap_i32(value: int) -> int:
    return ((value + 0x80000000) & 0xFFFFFFFF) - 0x80000000


def wrap_u32(value: int) -> int:
    return value & 0xFFFFFFFF


class DTypeKind(Enum):
    INT32 = "int32"
    UINT32 = "uint32"
    FLOAT32 = "float32"
    BOOL = "bool"


@dataclass(frozen=True, slots=True)
class DataType:
    kind: DTypeKind
    lanes: int = 1

    def __str__(self) -> str:
        if self.lanes == 1:
            return self.kind.value
        return f"{self.kind.value}x{self.lanes}"

    @property
    def is_int(self) -> bool:
        return self.kind in (DTypeKind.INT32, DTypeKind.UINT32)

    @property
    def is_float(self) -> bool:
        return self.kind is DTypeKind.FLOAT32

    @property
    def is_bool(self) -> bool:
        return self.kind is DTypeKind.BOOL

    @property
    def scalar(self) -> "DataType":
        return self if self.lanes == 1 else DataType(self.kind, 1)

    def with_lanes(self, lanes: int) -> "DataType":
        return self if self.lanes == lanes else DataType(self.kind, lanes)


INT32 = DataType(DTypeKind.INT32)
UINT32 = DataType(DTypeKind.UINT32)
FLOAT32 = DataType(DTypeKind.FLOAT32)
BOOL = DataType(DTypeKind.BOOL)

SCALAR_DTYPES = (INT32, UINT32, FLOAT32, BOOL)


def parse_dtype(text: str) -> DataType:
    base, _, lanes = text.partition("x")
    kind = DTypeKind(base)
    return DataType(kind, int(lanes) if lanes else 1)


@dataclass(frozen=True, slots=True)
class Var:
    name: str
    dtype: DataType
    uid: int

    def ref(self) -> "VarRef":
        return VarRef(self)


@dataclass(frozen=True, slots=True)
class Buffer:
    var: Var  # handle naming the storage
    shape: tuple[int, ...]
    dtype: DataType

    @property
    def size(self) -> int:
        n = 1
        for d in self.shape:
            n *= d
        return n


# --------------------------------------------------------------------------
# Expressions
# --------------------------------------------------------------------------


class PrimExpr:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class VarRef(PrimExpr):
    """Injects a Var into expression position."""

    var: Var


@dataclass(frozen=True, slots=True)
class IntImm(PrimExpr):
    dtype: DataType  # int32, uint32 or bool
    value: int


@dataclass(frozen=True, slots=True)
class FloatImm(PrimExpr):
    dtype: DataType
    value: float


class _BinOp(PrimExpr):
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class Add(_BinOp):
    lhs: PrimExpr
    rhs: PrimExpr


@dataclass(frozen=True, slots=True)
class Sub(_BinOp):
    lhs: PrimExpr
    rhs: PrimExpr


@dataclass(frozen=True, slots=True)
class Mul(_BinOp):
    lhs: PrimExpr
    rhs: PrimExpr


@dataclass(frozen=True, slots=True)
class FloorDiv(_BinOp):
    lhs: PrimExpr
    rhs: PrimExpr


@dataclass(frozen=True, slots=True)
class FloorMod(_BinOp):
    lhs: PrimExpr
    rhs: PrimExpr


@dataclass(frozen=True, slots=True)
class And(_BinOp):
    lhs: PrimExpr
    rhs: PrimExpr


@dataclass(frozen=True, slots=True)
class Or(_BinOp):
    lhs: PrimExpr
    rhs: PrimExpr


@dataclass(frozen=True, slots=True)
class EQ(_BinOp):
    lhs: PrimExpr
    rhs: PrimExpr


@dataclass(frozen=True, slots=True)
class GT(_BinOp):
    lhs: PrimExpr
    rhs: PrimExpr


@dataclass(frozen=True, slots=True)
class LT(_BinOp):
    lhs: PrimExpr
    rhs: PrimExpr


ARITH_OPS = (Add, Sub, Mul, FloorDiv, FloorMod)
BOOL_OPS = (And, Or)
CMP_OPS = (EQ, GT, LT)
BINOPS = ARITH_OPS + BOOL_OPS + CMP_OPS


class IntrinsicId(Enum):
    ABS = "abs"
    MIN = "min"
    MAX = "max"
    CLZ = "clz"
    POPCOUNT = "popcount"
    SQRT = "sqrt"
    SIN = "sin"
    COS = "cos"
    EXP = "exp"
    LOG = "log"
    FLOOR = "floor"
    CEIL = "ceil"


@dataclass(frozen=True, slots=True)
class Call(PrimExpr):
    dtype: DataType
    intrinsic: IntrinsicId
    args: tuple[PrimExpr, ...]


@dataclass(frozen=True, slots=True)
class Cast(PrimExpr):
    dtype: DataType
    value: PrimExpr


@dataclass(frozen=True, slots=True)
class Let(PrimExpr):
    var: Var
    value: PrimExpr
    body: PrimExpr


@dataclass(frozen=True, slots=True)
class BufferLoad(PrimExpr):
    buffer: Buffer
    indices: tuple[PrimExpr, ...]


@dataclass(frozen=True, slots=True)
class Ramp(PrimExpr):
    base: PrimExpr
    stride: PrimExpr
    lanes: int


@dataclass(frozen=True, slots=True)
class Broadcast(PrimExpr):
    value: PrimExpr
    lanes: int


# --------------------------------------------------------------------------
# Statements
# --------------------------------------------------------------------------


class Stmt:
    __slots__ = ()


class ForKind(Enum):
    SERIAL = "serial"
    VECTORIZE = "vectorize"
    UNROLL = "unroll"
    PARALLEL = "parallel"
    VIRTUAL_THREAD_BOUND = "virtual_thread_bound"


@dataclass(frozen=True, slots=True)
class LoopAttrs:
    unroll_max_steps: Optional[int] = None
    partition_hint: Optional[bool] = None

    def is_default(self) -> bool:
        return self.unroll_max_steps is None and self.partition_hint is None


DEFAULT_LOOP_ATTRS = LoopAttrs()


class AttrKey(Enum):
    VIRTUAL_THREAD = "virtual_thread"
    UNROLL_MAX_STEPS = "unroll_max_steps"


@dataclass(frozen=True, slots=True)
class While(Stmt):
    cond: PrimExpr
    body: Stmt


@dataclass(frozen=True, slots=True)
class For(Stmt):
    loop_var: Var
    min: PrimExpr
    extent: PrimExpr
    kind: ForKind
    body: Stmt
    attrs: LoopAttrs = DEFAULT_LOOP_ATTRS


@dataclass(frozen=True, slots=True)
class IfThenElse(Stmt):
    cond: PrimExpr
    then_body: Stmt
    else_body: Optional[Stmt] = None


@dataclass(frozen=True, slots=True)
class LetStmt(Stmt):
    var: Var
    value: PrimExpr
    body: Stmt


@dataclass(frozen=True, slots=True)
class SeqStmt(Stmt):
    stmts: tuple[Stmt, ...]


@dataclass(frozen=True, slots=True)
class BufferStore(Stmt):
    buffer: Buffer
    value: PrimExpr
    indices: tuple[PrimExpr, ...]


@dataclass(frozen=True, slots=True)
class Allocate(Stmt):
    buffer: Buffer
    body: Stmt


@dataclass(frozen=True, slots=True)
class AttrStmt(Stmt):
    key: AttrKey
    value: PrimExpr
    body: Stmt
    # Virtual-thread attrs bind an index variable over the body; other keys
    # leave it None.
    thread_var: Optional[Var] = None


@dataclass(frozen=True, slots=True)
class Evaluate(Stmt):
    expr: PrimExpr


@dataclass(frozen=True, slots=True)
class Nop(Stmt):
    pass


NOP = Nop()

IrNode = Union[PrimExpr, Stmt]


@dataclass(frozen=True, slots=True)
class PrimFunc:
    params: tuple[Var, ...]
    buffers: tuple[Buffer, ...]  # bound to param handles, in param order
    body: Stmt
    ret_buffer: Optional[Buffer] = None

    def buffer_of(self, var: Var) -> Optional[Buffer]:
        for b in self.buffers:
            if b.var.uid == var.uid:
                return b
        return None


def seq(*stmts: Stmt) -> Stmt:
    """Build a SeqStmt, flattening nested sequences and dropping Nops."""
    out: list[Stmt] = []
    for s in stmts:
        if isinstance(s, SeqStmt):
            out.extend(s.stmts)
        elif not isinstance(s, Nop):
            out.append(s)
    if not out:
        return NOP
    if len(out) == 1:
        return out[0]
    return SeqStmt(tuple(out))


# --------------------------------------------------------------------------
# Generic traversal helpers
# --------------------------------------------------------------------------

# Slot: either a field name, or (field name, index) for tuple fields.
Slot = Union[str, tuple[str, int]]

_TUPLE_SLOTS = {
    Call: ("args",),
    BufferLoad: ("indices",),
    BufferStore: ("indices",),
    SeqStmt: ("stmts",),
}

_NODE_FIELDS: dict[type, tuple[str, ...]] = {
    VarRef: (),
    IntImm: (),
    FloatImm: (),
    Add: ("lhs", "rhs"),
    Sub: ("lhs", "rhs"),
    Mul: ("lhs", "rhs"),
    FloorDiv: ("lhs", "rhs"),
    FloorMod: ("lhs", "rhs"),
    And: ("lhs", "rhs"),
    Or: ("lhs", "rhs"),
    EQ: ("lhs", "rhs"),
    GT: ("lhs", "rhs"),
    LT: ("lhs", "rhs"),
    Call: ("args",),
    Cast: ("value",),
    Let: ("value", "body"),
    BufferLoad: ("indices",),
    Ramp: ("base", "stride"),
    Broadcast: ("value",),
    While: ("cond", "body"),
    For: ("min", "extent", "body"),
    IfThenElse: ("cond", "then_body", "else_body"),
    LetStmt: ("value", "body"),
    SeqStmt: ("stmts",),
    BufferStore: ("value", "indices"),
    Allocate: ("body",),
    AttrStmt: ("value", "body"),
    Evaluate: ("expr",),
    Nop: (),
}


def children(node: IrNode) -> list[tuple[Slot, IrNode]]:
    """Enumerate direct child nodes with the slot addressing each one."""
    out: list[tuple[Slot, IrNode]] = []
    for name in _NODE_FIELDS[node.__class__]:
        value = getattr(node, name)
        if value is None:
            continue
        if isinstance(value, tuple):
            for i, item in enumerate(value):
                out.append(((name, i), item))
        else:
            out.append((name, value))
    return out


def child_at(node: IrNode, slot: Slot) -> IrNode:
    if isinstance(slot, tuple):
        name, idx = slot
        return getattr(node, name)[idx]
    return getattr(node, slot)


def with_child(node: IrNode, slot: Slot, new: IrNode) -> IrNode:
    """Copy `node` with the child at `slot` replaced."""
    if isinstance(slot, tuple):
        name, idx = slot
        items = list(getattr(node, name))
        items[idx] = new
        return replace(node, **{name: tuple(items)})
    return replace(node, **{slot: new})


def node_count(node: IrNode) -> int:
    """Number of Stmt/PrimExpr nodes in the subtree, leaves included."""
    n = 1
    stack = [node]
    pop = stack.pop
    while stack:
        cur = pop()
        for name in _NODE_FIELDS[cur.__class__]:
            value = getattr(cur, name)
            if value is None:
                continue
            if isinstance(value, tuple):
                n += len(value)
                stack.extend(value)
            else:
                n += 1
                stack.append(value)
    return n


def walk(node: IrNode) -> Iterator[IrNode]:
    """Pre-order iteration over all Stmt/PrimExpr nodes of a subtree."""
    stack = [node]
    while stack:
        cur = stack.pop()
        yield cur
        for _, child in children(cur):
            stack.append(child)


def binders_of(node: IrNode) -> tuple[Var, ...]:
    """Variables bound by this single node over (part of) its subtree."""
    cls = node.__class__
    if cls is For:
        return (node.loop_var,)
    if cls is Let or cls is LetStmt:
        return (node.var,)
    if cls is AttrStmt and node.thread_var is not None:
        return (node.thread_var,)
    if cls is Allocate:
        return (node.buffer.var,)
    return ()


def max_uid(func: PrimFunc) -> int:
    best = -1
    for p in func.params:
        best = max(best, p.uid)
    if func.ret_buffer is not None:
        best = max(best, func.ret_buffer.var.uid)
    for n in walk(func.body):
        for v in binders_of(n):
            best = max(best, v.uid)
    return best


class UidGen:
    """Monotonic source of fresh variable uids."""

    def __init__(self, start: int):
        self._next = start

    @classmethod
    def for_func(cls, func: PrimFunc) -> "UidGen":
        return cls(max_uid(func) + 1)

    def fresh(self) -> int:
        uid = self._next
        self._next += 1
        return uid


def substitute(node: IrNode, mapping: dict[int, PrimExpr]) -> IrNode:
    """Replace VarRefs whose uid appears in `mapping` with the given exprs.

    The caller guarantees capture-freedom (fresh uids never collide).
    """
    if not mapping:
        return node
    cls = node.__class__
    if cls is VarRef:
        return mapping.get(node.var.uid, node)
    changed = False
    new_node = node
    for slot, child in children(node):
        new_child = substitute(child, mapping)
        if new_child is not child:
            new_node = with_child(new_node, slot, new_child)
            changed = True
    return new_node if changed else node


def clone_fresh(node: IrNode, uids: UidGen) -> IrNode:
    """Deep-copy a subtree giving every binder inside a fresh uid.

    Needed when a pass replicates a body (unroll, thread injection): the
    copies must not share binder uids or function-level uniqueness breaks.
    """
    renames: dict[int, PrimExpr] = {}

    def go(n: IrNode) -> IrNode:
        cls = n.__class__
        if cls is VarRef:
            repl = renames.get(n.var.uid)
            return repl if repl is not None else n
        bound = binders_of(n)
        fresh_vars = {}
        for v in bound:
            nv = Var(v.name, v.dtype, uids.fresh())
            renames[v.uid] = VarRef(nv)
            fresh_vars[v.uid] = nv
        out = n
        if fresh_vars:
            if cls is For:
                out = replace(out, loop_var=fresh_vars[n.loop_var.uid])
            elif cls is Let or cls is LetStmt:
                out = replace(out, var=fresh_vars[n.var.uid])
            elif cls is AttrStmt:
                out = replace(out, thread_var=fresh_vars[n.thread_var.uid])
            elif cls is Allocate:
                nv = fresh_vars[n.buffer.var.uid]
                out = replace(out, buffer=Buffer(nv, n.buffer.shape, n.buffer.dtype))
        for slot, child in children(n):
            new_child = go(child)
            if new_child is not child:
                out = with_child(out, slot, new_child)
        # Allocate rewires loads/stores on the renamed buffer below.
        if cls is Allocate and fresh_vars:
            out = _retarget_buffer(out, n.buffer, out.buffer)
        return out

    return go(node)


def _retarget_buffer(node: IrNode, old: Buffer, new: Buffer) -> IrNode:
    def go(n: IrNode) -> IrNode:
        out = n
        cls = n.__class__
        if (cls is BufferLoad or cls is BufferStore) and n.buffer.var.uid == old.var.uid:
            out = replace(out, buffer=new)
        for slot, child in children(out):
            new_child = go(child)
            if new_child is not child:
                out = with_child(out, slot, new_child)
        return out

    return go(node)


def structural_eq(a: IrNode, b: IrNode) -> bool:
    """Dataclass equality; uids participate, so this is exact identity."""
    return a == b


def rewrite(node: IrNode, fn) -> IrNode:
    """Post-order rewrite: children first, then `fn` on the rebuilt node.

    Subtrees are shared whenever `fn` and the recursion leave them unchanged,
    so untouched regions cost no allocation.
    """
    names = _NODE_FIELDS[node.__class__]
    if names:
        updates = None
        for name in names:
            value = getattr(node, name)
            if value is None:
                continue
            if type(value) is tuple:
                new_items = None
                for i, item in enumerate(value):
                    ni = rewrite(item, fn)
                    if ni is not item:
                        if new_items is None:
                            new_items = list(value)
                        new_items[i] = ni
                if new_items is not None:
                    if updates is None:
                        updates = {}
                    updates[name] = tuple(new_items)
            else:
                nv = rewrite(value, fn)
                if nv is not value:
                    if updates is None:
                        updates = {}
                    updates[name] = nv
        if updates is not None:
            node = replace(node, **updates)
    return fn(node)
