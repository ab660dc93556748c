"""Canonical S-expression text format for `.tir` files.

`serialize` renumbers variable uids canonically (params first, then binding
occurrences in pre-order) and emits a deterministic indented layout, so
parse(serialize(f)) == canonicalize(f) and serialization is bit-exact.
Variables print as ``name.uid``; the dot suffix is file syntax, not part of
the name.
"""

from __future__ import annotations

from dataclasses import replace as _dc_replace

from .nodes import (
    AttrKey,
    AttrStmt,
    Allocate,
    BINOPS,
    Broadcast,
    Buffer,
    BufferLoad,
    BufferStore,
    Call,
    Cast,
    DEFAULT_LOOP_ATTRS,
    Evaluate,
    FloatImm,
    For,
    ForKind,
    IfThenElse,
    IntImm,
    IntrinsicId,
    IrNode,
    Let,
    LetStmt,
    LoopAttrs,
    Nop,
    NOP,
    PrimExpr,
    PrimFunc,
    Ramp,
    SeqStmt,
    Stmt,
    Var,
    VarRef,
    While,
    binders_of,
    children,
    parse_dtype,
    with_child,
)

FILE_EXTENSION = ".tir"

_BINOP_NAMES = {
    "Add": "add", "Sub": "sub", "Mul": "mul", "FloorDiv": "floordiv",
    "FloorMod": "floormod", "And": "and", "Or": "or", "EQ": "eq",
    "GT": "gt", "LT": "lt",
}
_BINOP_BY_NAME = {_BINOP_NAMES[cls.__name__]: cls for cls in BINOPS}


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


# --------------------------------------------------------------------------
# Canonical uid renumbering
# --------------------------------------------------------------------------


def canonicalize(func: PrimFunc) -> PrimFunc:
    """Renumber all uids densely: params (and return buffer) first, then
    binders in pre-order over the body."""
    mapping: dict[int, int] = {}

    def remap(var: Var) -> Var:
        if var.uid not in mapping:
            mapping[var.uid] = len(mapping)
        return Var(var.name, var.dtype, mapping[var.uid])

    params = tuple(remap(p) for p in func.params)
    buffers = tuple(Buffer(remap(b.var), b.shape, b.dtype) for b in func.buffers)
    ret = func.ret_buffer
    if ret is not None:
        ret = Buffer(remap(ret.var), ret.shape, ret.dtype)

    def go(node: IrNode) -> IrNode:
        out = node
        cls = node.__class__
        if cls is VarRef:
            return VarRef(remap(node.var))
        for v in binders_of(node):
            remap(v)  # assign ids in binder-before-children order
        if cls is For:
            out = _dc_replace(out, loop_var=remap(node.loop_var))
        elif cls is Let or cls is LetStmt:
            out = _dc_replace(out, var=remap(node.var))
        elif cls is AttrStmt and node.thread_var is not None:
            out = _dc_replace(out, thread_var=remap(node.thread_var))
        elif cls is Allocate:
            out = _dc_replace(out, buffer=Buffer(remap(node.buffer.var),
                                                 node.buffer.shape, node.buffer.dtype))
        elif cls is BufferLoad or cls is BufferStore:
            out = _dc_replace(out, buffer=Buffer(remap(node.buffer.var),
                                                 node.buffer.shape, node.buffer.dtype))
        for slot, child in children(node):
            new_child = go(child)
            if new_child is not child:
                out = with_child(out, slot, new_child)
        return out

    return PrimFunc(params, buffers, go(func.body), ret)


# --------------------------------------------------------------------------
# Serializer
# --------------------------------------------------------------------------


def _vtok(var: Var) -> str:
    return f"{var.name}.{var.uid}"


def _ftok(value: float) -> str:
    if value != value:
        return "nan"
    if value == float("inf"):
        return "inf"
    if value == float("-inf"):
        return "-inf"
    return repr(value)


def _buffer_decl(buf: Buffer) -> str:
    dims = " ".join(str(d) for d in buf.shape)
    return f"({_vtok(buf.var)} ({dims}) {buf.dtype})"


def serialize(func: PrimFunc) -> str:
    """Render a validated function as canonical `.tir` text."""
    func = canonicalize(func)
    by_handle = {b.var.uid: b for b in func.buffers}
    params = []
    for p in func.params:
        buf = by_handle.get(p.uid)
        if buf is not None:
            params.append(_buffer_decl(buf))
        else:
            params.append(f"({_vtok(p)} {p.dtype})")
    lines = ["(primfunc", "  (params " + " ".join(params) + ")"]
    if func.ret_buffer is not None:
        rb = func.ret_buffer
        if rb.var.uid in by_handle:
            lines.append(f"  (ret {_vtok(rb.var)})")
        else:
            lines.append(f"  (ret {_buffer_decl(rb)})")
    lines.append("  (body")
    _emit(func.body, lines, 4)
    lines.append("  ))")
    return "\n".join(lines) + "\n"


def _emit_expr(e: PrimExpr) -> str:
    cls = e.__class__
    if cls is VarRef:
        return _vtok(e.var)
    if cls is IntImm:
        return f"(int {e.value} {e.dtype})"
    if cls is FloatImm:
        return f"(float {_ftok(e.value)} {e.dtype})"
    name = _BINOP_NAMES.get(cls.__name__)
    if name is not None:
        return f"({name} {_emit_expr(e.lhs)} {_emit_expr(e.rhs)})"
    if cls is Call:
        args = " ".join(_emit_expr(a) for a in e.args)
        return f"(call {e.dtype} {e.intrinsic.value} {args})"
    if cls is Cast:
        return f"(cast {e.dtype} {_emit_expr(e.value)})"
    if cls is Let:
        return (f"(let ({_vtok(e.var)} {e.var.dtype}) {_emit_expr(e.value)} "
                f"{_emit_expr(e.body)})")
    if cls is BufferLoad:
        idx = " ".join(_emit_expr(i) for i in e.indices)
        return f"(load {_vtok(e.buffer.var)} {idx})"
    if cls is Ramp:
        return f"(ramp {_emit_expr(e.base)} {_emit_expr(e.stride)} {e.lanes})"
    if cls is Broadcast:
        return f"(broadcast {_emit_expr(e.value)} {e.lanes})"
    raise TypeError(f"cannot serialize expression {cls.__name__}")


def _emit(s: Stmt, lines: list[str], indent: int) -> None:
    pad = " " * indent
    cls = s.__class__
    if cls is Nop:
        lines.append(pad + "(nop)")
    elif cls is Evaluate:
        lines.append(pad + f"(eval {_emit_expr(s.expr)})")
    elif cls is SeqStmt:
        lines.append(pad + "(seq")
        for child in s.stmts:
            _emit(child, lines, indent + 2)
        lines.append(pad + ")")
    elif cls is BufferStore:
        idx = " ".join(_emit_expr(i) for i in s.indices)
        lines.append(pad + f"(store {_vtok(s.buffer.var)} {_emit_expr(s.value)} {idx})")
    elif cls is While:
        lines.append(pad + f"(while {_emit_expr(s.cond)}")
        _emit(s.body, lines, indent + 2)
        lines.append(pad + ")")
    elif cls is IfThenElse:
        lines.append(pad + f"(if {_emit_expr(s.cond)}")
        _emit(s.then_body, lines, indent + 2)
        if s.else_body is not None:
            _emit(s.else_body, lines, indent + 2)
        lines.append(pad + ")")
    elif cls is For:
        head = (f"(for ({_vtok(s.loop_var)}) {_emit_expr(s.min)} "
                f"{_emit_expr(s.extent)} {s.kind.value}")
        attrs = []
        if s.attrs.unroll_max_steps is not None:
            attrs.append(f"(unroll_max_steps {s.attrs.unroll_max_steps})")
        if s.attrs.partition_hint is not None:
            attrs.append(f"(partition_hint {'1' if s.attrs.partition_hint else '0'})")
        if attrs:
            head += " (attrs " + " ".join(attrs) + ")"
        lines.append(pad + head)
        _emit(s.body, lines, indent + 2)
        lines.append(pad + ")")
    elif cls is LetStmt:
        lines.append(pad + f"(letstmt ({_vtok(s.var)} {s.var.dtype}) {_emit_expr(s.value)}")
        _emit(s.body, lines, indent + 2)
        lines.append(pad + ")")
    elif cls is Allocate:
        lines.append(pad + f"(alloc {_buffer_decl(s.buffer)}")
        _emit(s.body, lines, indent + 2)
        lines.append(pad + ")")
    elif cls is AttrStmt:
        if s.key is AttrKey.VIRTUAL_THREAD:
            lines.append(pad + f"(attr virtual_thread ({_vtok(s.thread_var)}) "
                         f"{_emit_expr(s.value)}")
        else:
            lines.append(pad + f"(attr unroll_max_steps {_emit_expr(s.value)}")
        _emit(s.body, lines, indent + 2)
        lines.append(pad + ")")
    else:
        raise TypeError(f"cannot serialize statement {cls.__name__}")


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


class _Tok:
    __slots__ = ("text", "line", "col")

    def __init__(self, text: str, line: int, col: int):
        self.text = text
        self.line = line
        self.col = col


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
        elif ch in " \t\r":
            i += 1
            col += 1
        elif ch in "()":
            toks.append(_Tok(ch, line, col))
            i += 1
            col += 1
        else:
            j = i
            while j < n and text[j] not in " \t\r\n()":
                j += 1
            toks.append(_Tok(text[i:j], line, col))
            col += j - i
            i = j
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.pos = 0
        # token "name.uid" -> Var / Buffer, filled by declarations
        self.vars: dict[str, Var] = {}
        self.buffers: dict[str, Buffer] = {}

    def _err(self, message: str) -> ParseError:
        if self.pos < len(self.toks):
            t = self.toks[self.pos]
            return ParseError(message, t.line, t.col)
        if self.toks:
            t = self.toks[-1]
            return ParseError(message + " (at end of input)", t.line, t.col)
        return ParseError(message, 1, 1)

    def peek(self) -> str:
        if self.pos >= len(self.toks):
            raise self._err("unexpected end of input")
        return self.toks[self.pos].text

    def next(self) -> str:
        tok = self.peek()
        self.pos += 1
        return tok

    def expect(self, text: str) -> None:
        tok = self.next()
        if tok != text:
            self.pos -= 1
            raise self._err(f"expected {text!r}, got {tok!r}")

    def int_tok(self, what: str) -> int:
        tok = self.next()
        try:
            return int(tok)
        except ValueError:
            self.pos -= 1
            raise self._err(f"expected {what}, got {tok!r}") from None

    def dtype_tok(self):
        tok = self.next()
        try:
            return parse_dtype(tok)
        except ValueError:
            self.pos -= 1
            raise self._err(f"unknown dtype {tok!r}") from None

    def declare_var(self, tok: str, dtype) -> Var:
        name, dot, uid = tok.rpartition(".")
        if not dot or not uid.isdigit():
            raise self._err(f"variable token must be name.uid, got {tok!r}")
        var = Var(name, dtype, int(uid))
        self.vars[tok] = var
        return var

    def var_ref(self, tok: str) -> Var:
        var = self.vars.get(tok)
        if var is None:
            raise self._err(f"reference to undeclared variable {tok!r}")
        return var

    def buffer_ref(self, tok: str) -> Buffer:
        buf = self.buffers.get(tok)
        if buf is None:
            raise self._err(f"reference to undeclared buffer {tok!r}")
        return buf

    # ---- grammar ----

    def parse_func(self) -> PrimFunc:
        self.expect("(")
        self.expect("primfunc")
        self.expect("(")
        self.expect("params")
        params: list[Var] = []
        buffers: list[Buffer] = []
        while self.peek() == "(":
            var, buf = self.parse_param()
            params.append(var)
            if buf is not None:
                buffers.append(buf)
        self.expect(")")
        ret_buffer = None
        body = None
        while self.peek() == "(":
            self.expect("(")
            section = self.next()
            if section == "ret":
                if self.peek() == "(":
                    var, buf = self.parse_param()
                    if buf is None:
                        raise self._err("standalone ret must declare a buffer")
                    ret_buffer = buf
                else:
                    ret_buffer = self.buffer_ref(self.next())
                self.expect(")")
            elif section == "body":
                body = self.parse_stmt()
                self.expect(")")
            else:
                self.pos -= 1
                raise self._err(f"unknown primfunc section {section!r}")
        self.expect(")")
        if self.pos != len(self.toks):
            raise self._err("trailing content after primfunc")
        if body is None:
            raise self._err("primfunc has no body")
        return PrimFunc(tuple(params), tuple(buffers), body, ret_buffer)

    def parse_param(self) -> tuple[Var, "Buffer | None"]:
        self.expect("(")
        tok = self.next()
        if self.peek() == "(":  # buffer: (name.uid (dims...) dtype)
            self.expect("(")
            dims = []
            while self.peek() != ")":
                dims.append(self.int_tok("dimension"))
            self.expect(")")
            dtype = self.dtype_tok()
            var = self.declare_var(tok, dtype)
            buf = Buffer(var, tuple(dims), dtype)
            self.buffers[tok] = buf
            self.expect(")")
            return var, buf
        dtype = self.dtype_tok()
        var = self.declare_var(tok, dtype)
        self.expect(")")
        return var, None

    def parse_binding(self) -> Var:
        """(name.uid dtype) binder form used by let/letstmt."""
        self.expect("(")
        tok = self.next()
        dtype = self.dtype_tok()
        var = self.declare_var(tok, dtype)
        self.expect(")")
        return var

    def parse_expr(self) -> PrimExpr:
        if self.peek() != "(":
            return VarRef(self.var_ref(self.next()))
        self.expect("(")
        head = self.next()
        if head == "int":
            tok = self.next()
            try:
                value = int(tok)
            except ValueError:
                self.pos -= 1
                raise self._err(f"expected integer, got {tok!r}") from None
            dtype = self.dtype_tok()
            out: PrimExpr = IntImm(dtype, value)
        elif head == "float":
            tok = self.next()
            try:
                value = float(tok)
            except ValueError:
                self.pos -= 1
                raise self._err(f"expected float, got {tok!r}") from None
            dtype = self.dtype_tok()
            out = FloatImm(dtype, value)
        elif head in _BINOP_BY_NAME:
            lhs = self.parse_expr()
            rhs = self.parse_expr()
            out = _BINOP_BY_NAME[head](lhs, rhs)
        elif head == "call":
            dtype = self.dtype_tok()
            name = self.next()
            try:
                intrinsic = IntrinsicId(name)
            except ValueError:
                self.pos -= 1
                raise self._err(f"unknown intrinsic {name!r}") from None
            args = []
            while self.peek() != ")":
                args.append(self.parse_expr())
            out = Call(dtype, intrinsic, tuple(args))
        elif head == "cast":
            dtype = self.dtype_tok()
            out = Cast(dtype, self.parse_expr())
        elif head == "let":
            var = self.parse_binding()
            value = self.parse_expr()
            body = self.parse_expr()
            out = Let(var, value, body)
        elif head == "load":
            buf = self.buffer_ref(self.next())
            indices = []
            while self.peek() != ")":
                indices.append(self.parse_expr())
            out = BufferLoad(buf, tuple(indices))
        elif head == "ramp":
            base = self.parse_expr()
            stride = self.parse_expr()
            out = Ramp(base, stride, self.int_tok("lanes"))
        elif head == "broadcast":
            value = self.parse_expr()
            out = Broadcast(value, self.int_tok("lanes"))
        else:
            self.pos -= 1
            raise self._err(f"unknown expression head {head!r}")
        self.expect(")")
        return out

    def parse_stmt(self) -> Stmt:
        self.expect("(")
        head = self.next()
        if head == "nop":
            out: Stmt = NOP
        elif head == "eval":
            out = Evaluate(self.parse_expr())
        elif head == "seq":
            stmts = []
            while self.peek() != ")":
                stmts.append(self.parse_stmt())
            if not stmts:
                raise self._err("seq requires at least one statement")
            out = SeqStmt(tuple(stmts))
        elif head == "store":
            buf = self.buffer_ref(self.next())
            value = self.parse_expr()
            indices = []
            while self.peek() != ")":
                indices.append(self.parse_expr())
            out = BufferStore(buf, value, tuple(indices))
        elif head == "while":
            cond = self.parse_expr()
            out = While(cond, self.parse_stmt())
        elif head == "if":
            cond = self.parse_expr()
            then_body = self.parse_stmt()
            else_body = self.parse_stmt() if self.peek() == "(" else None
            out = IfThenElse(cond, then_body, else_body)
        elif head == "for":
            self.expect("(")
            tok = self.next()
            var = self.declare_var(tok, parse_dtype("int32"))
            self.expect(")")
            lo = self.parse_expr()
            extent = self.parse_expr()
            kind_tok = self.next()
            try:
                kind = ForKind(kind_tok)
            except ValueError:
                self.pos -= 1
                raise self._err(f"unknown loop kind {kind_tok!r}") from None
            attrs = DEFAULT_LOOP_ATTRS
            if self.peek() == "(" and self._lookahead_is("attrs"):
                attrs = self.parse_attrs()
            body = self.parse_stmt()
            out = For(var, lo, extent, kind, body, attrs)
        elif head == "letstmt":
            var = self.parse_binding()
            value = self.parse_expr()
            out = LetStmt(var, value, self.parse_stmt())
        elif head == "alloc":
            var, buf = self.parse_param()
            if buf is None:
                raise self._err("alloc requires a buffer declaration")
            out = Allocate(buf, self.parse_stmt())
        elif head == "attr":
            key_tok = self.next()
            if key_tok == "virtual_thread":
                self.expect("(")
                tv = self.declare_var(self.next(), parse_dtype("int32"))
                self.expect(")")
                value = self.parse_expr()
                out = AttrStmt(AttrKey.VIRTUAL_THREAD, value, self.parse_stmt(), tv)
            elif key_tok == "unroll_max_steps":
                value = self.parse_expr()
                out = AttrStmt(AttrKey.UNROLL_MAX_STEPS, value, self.parse_stmt())
            else:
                self.pos -= 1
                raise self._err(f"unknown attr key {key_tok!r}")
        else:
            self.pos -= 1
            raise self._err(f"unknown statement head {head!r}")
        self.expect(")")
        return out

    def _lookahead_is(self, word: str) -> bool:
        return (self.pos + 1 < len(self.toks)
                and self.toks[self.pos + 1].text == word)

    def parse_attrs(self) -> LoopAttrs:
        self.expect("(")
        self.expect("attrs")
        unroll = None
        hint = None
        while self.peek() == "(":
            self.expect("(")
            key = self.next()
            if key == "unroll_max_steps":
                unroll = self.int_tok("unroll_max_steps")
            elif key == "partition_hint":
                hint = self.int_tok("partition_hint") != 0
            else:
                self.pos -= 1
                raise self._err(f"unknown loop attr {key!r}")
            self.expect(")")
        self.expect(")")
        return LoopAttrs(unroll, hint)


def parse(text: str) -> PrimFunc:
    """Parse `.tir` text; raises ParseError with line/column info."""
    return _Parser(text).parse_func()
