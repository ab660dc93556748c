"""Miniature low-level tensor IR: nodes, typing, validation, text format."""

from .nodes import (  # noqa: F401
    ARITH_OPS,
    BINOPS,
    BOOL,
    BOOL_OPS,
    CMP_OPS,
    DEFAULT_LOOP_ATTRS,
    FLOAT32,
    INT32,
    MAX_BUFFER_ELEMS,
    MAX_UNROLL_ATTR,
    MAX_VECTOR_LANES,
    MAX_VTHREADS,
    NOP,
    SCALAR_DTYPES,
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
    Nop,
    Or,
    PrimExpr,
    PrimFunc,
    Ramp,
    SeqStmt,
    Slot,
    Stmt,
    Sub,
    UidGen,
    Var,
    VarRef,
    While,
    binders_of,
    child_at,
    children,
    clone_fresh,
    f32,
    max_uid,
    node_count,
    parse_dtype,
    rewrite,
    seq,
    structural_eq,
    substitute,
    walk,
    with_child,
    wrap_i32,
    wrap_u32,
)
from .sexpr import FILE_EXTENSION, ParseError, canonicalize, parse, serialize  # noqa: F401
from .traverse import (  # noqa: F401
    NodePath,
    collect_nodes,
    collect_with_nodes,
    free_var_uids,
    node_at,
    node_replace,
    replace_at,
    stmt_paths,
    subtree_paths,
    used_buffer_uids,
)
from .typing import (  # noqa: F401
    Scope,
    TypeError_,
    TypeMismatch,
    UnboundVariable,
    expr_dtype,
    infer_dtype,
    intrinsic_arity,
    intrinsic_result,
)
from .validate import ValidationResult, validate  # noqa: F401
