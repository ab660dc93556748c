"""Pass identities, sequences and the panic signal raised by planted faults."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from random import Random
from typing import Optional

MAX_PASS_SEQ_LEN = 12
MAX_OPT_LEVEL = 4


class PassId(Enum):
    CONSTANT_FOLD = "constant_fold"
    SIMPLIFY = "simplify"
    UNROLL_LOOP = "unroll_loop"
    LOOP_PARTITION = "loop_partition"
    DEAD_STORE_ELIM = "dead_store_elim"
    VECTORIZE_LOWER = "vectorize_lower"
    INJECT_VIRTUAL_THREAD = "inject_virtual_thread"
    LET_INLINE = "let_inline"


# Minimum opt_level at which a pass transforms at all; below it the pass is
# the identity. Level 0 therefore compiles without any transformation.
MIN_OPT_LEVEL = {
    PassId.CONSTANT_FOLD: 1,
    PassId.LET_INLINE: 1,
    PassId.UNROLL_LOOP: 1,
    PassId.SIMPLIFY: 2,
    PassId.VECTORIZE_LOWER: 2,
    PassId.INJECT_VIRTUAL_THREAD: 2,
    PassId.LOOP_PARTITION: 3,
    PassId.DEAD_STORE_ELIM: 3,
}

ALL_PASSES = tuple(PassId)


@dataclass(frozen=True)
class PassSequence:
    passes: tuple[PassId, ...] = ()
    opt_level: int = MAX_OPT_LEVEL

    def __post_init__(self):
        if len(self.passes) > MAX_PASS_SEQ_LEN:
            raise ValueError(f"pass sequence longer than {MAX_PASS_SEQ_LEN}")
        if not 0 <= self.opt_level <= MAX_OPT_LEVEL:
            raise ValueError(f"opt_level must be in [0, {MAX_OPT_LEVEL}]")

    def with_opt_level(self, level: int) -> "PassSequence":
        return replace(self, opt_level=level)

    def names(self) -> list[str]:
        return [p.value for p in self.passes]


class PassPanic(Exception):
    """Crash signal from inside a pass (the crash-oracle event)."""

    def __init__(self, pass_id: PassId, label: str, detail: str,
                 index: Optional[int] = None):
        super().__init__(f"{pass_id.value}: {detail}")
        self.pass_id = pass_id
        self.label = label
        self.detail = detail
        self.index = index  # position in the failing pipeline, set by the runner


def random_pass_sequence(rng: Random, opt_level: int = MAX_OPT_LEVEL) -> PassSequence:
    length = rng.randint(0, MAX_PASS_SEQ_LEN)
    return PassSequence(tuple(rng.choice(ALL_PASSES) for _ in range(length)), opt_level)


def mutate_pass_seq(seq: PassSequence, rng: Random) -> PassSequence:
    """One uniformly chosen edit: insert, delete, swap, replace or resample.

    The opt_level is preserved; length stays within bounds (a full sequence
    re-rolls insert into a non-growing edit, an empty one degrades shrinking
    edits to insert).
    """
    passes = list(seq.passes)
    edit = rng.randrange(5)
    if edit == 0 and len(passes) >= MAX_PASS_SEQ_LEN:
        edit = 1 + rng.randrange(4)
    if edit in (1, 2, 3) and not passes:
        edit = 0
    if edit == 0:  # insert
        passes.insert(rng.randint(0, len(passes)), rng.choice(ALL_PASSES))
    elif edit == 1:  # delete
        passes.pop(rng.randrange(len(passes)))
    elif edit == 2:  # swap
        i = rng.randrange(len(passes))
        j = rng.randrange(len(passes))
        passes[i], passes[j] = passes[j], passes[i]
    elif edit == 3:  # replace
        passes[rng.randrange(len(passes))] = rng.choice(ALL_PASSES)
    else:  # resample the whole list
        passes = [rng.choice(ALL_PASSES) for _ in range(rng.randint(0, MAX_PASS_SEQ_LEN))]
    return PassSequence(tuple(passes), seq.opt_level)
