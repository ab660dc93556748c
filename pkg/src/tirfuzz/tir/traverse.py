"""Node addressing: enumerate, fetch and replace subtrees by path.

A NodePath is the slot sequence leading from the function body root to a
node; the body root itself is the empty path.
"""

from __future__ import annotations

from .nodes import IrNode, PrimFunc, Slot, child_at, children, with_child
from dataclasses import replace as _dc_replace

NodePath = tuple[Slot, ...]


def collect_nodes(func: PrimFunc) -> list[NodePath]:
    """Post-order enumeration of every Stmt/PrimExpr position in the body.

    Primitive-like nodes (VarRef, IntImm, FloatImm) are included as leaves.
    The PrimFunc itself is not a position.
    """
    out: list[NodePath] = []

    def go(node: IrNode, path: NodePath) -> None:
        for slot, child in children(node):
            go(child, path + (slot,))
        out.append(path)

    go(func.body, ())
    return out


def node_at(func: PrimFunc, path: NodePath) -> IrNode:
    node: IrNode = func.body
    for slot in path:
        node = child_at(node, slot)
    return node


def replace_at(func: PrimFunc, path: NodePath, new: IrNode) -> PrimFunc:
    """Rebuild the function with the node at `path` swapped for `new`."""
    return _dc_replace(func, body=_replace_in(func.body, path, 0, new))


def _replace_in(node: IrNode, path: NodePath, depth: int, new: IrNode) -> IrNode:
    if depth == len(path):
        return new
    slot = path[depth]
    rebuilt = _replace_in(child_at(node, slot), path, depth + 1, new)
    return with_child(node, slot, rebuilt)


def collect_with_nodes(func: PrimFunc) -> list[tuple[NodePath, IrNode]]:
    """Like collect_nodes but pairing each path with its node."""
    out: list[tuple[NodePath, IrNode]] = []

    def go(node: IrNode, path: NodePath) -> None:
        for slot, child in children(node):
            go(child, path + (slot,))
        out.append((path, node))

    go(func.body, ())
    return out


def stmt_paths(func: PrimFunc) -> list[NodePath]:
    """Paths of statement positions only (always non-empty: the body root)."""
    from .nodes import Stmt

    return [p for p, n in collect_with_nodes(func) if isinstance(n, Stmt)]


def node_replace(node: IrNode, path: NodePath, new: IrNode) -> IrNode:
    """replace_at for a bare subtree instead of a whole function."""
    return _replace_in(node, path, 0, new)


def subtree_paths(node: IrNode) -> list[tuple[NodePath, IrNode]]:
    """Post-order (path, node) pairs of a bare subtree."""
    out: list[tuple[NodePath, IrNode]] = []

    def go(cur: IrNode, path: NodePath) -> None:
        for slot, child in children(cur):
            go(child, path + (slot,))
        out.append((path, cur))

    go(node, ())
    return out


def free_var_uids(node: IrNode) -> set[int]:
    """Uids of variables referenced but not bound within the subtree."""
    from .nodes import VarRef, binders_of

    free: set[int] = set()

    def go(cur: IrNode, bound: frozenset[int]) -> None:
        if cur.__class__ is VarRef:
            if cur.var.uid not in bound:
                free.add(cur.var.uid)
            return
        inner = bound
        binders = binders_of(cur)
        if binders:
            inner = bound | {v.uid for v in binders}
        for slot, child in children(cur):
            # binders scope only over the body/value-after slots; being
            # sloppy here only ever *shrinks* the reported free set, so be
            # precise: min/extent of For and value of Let are outside.
            go(child, _slot_scope(cur, slot, bound, inner))

    go(node, frozenset())
    return free


def _slot_scope(node: IrNode, slot, outer: frozenset[int], inner: frozenset[int]):
    from .nodes import Allocate, AttrStmt, For, Let, LetStmt

    cls = node.__class__
    if cls is For:
        return inner if slot == "body" else outer
    if cls is Let or cls is LetStmt:
        return inner if slot == "body" else outer
    if cls is AttrStmt:
        return inner if slot == "body" else outer
    if cls is Allocate:
        return inner
    return inner


def used_buffer_uids(node: IrNode) -> set[int]:
    """Handle uids of buffers accessed but not allocated within the subtree."""
    from .nodes import Allocate, BufferLoad, BufferStore

    used: set[int] = set()
    local: set[int] = set()
    stack = [node]
    while stack:
        cur = stack.pop()
        cls = cur.__class__
        if cls is Allocate:
            local.add(cur.buffer.var.uid)
        elif cls is BufferLoad or cls is BufferStore:
            used.add(cur.buffer.var.uid)
        for _, child in children(cur):
            stack.append(child)
    return used - local
