"""Pass pipeline: identities, gating, planted bugs and sequence mutation."""

from __future__ import annotations

from .. import coverage
from ..tir import PrimFunc
from .base import (  # noqa: F401
    ALL_PASSES,
    MAX_OPT_LEVEL,
    MAX_PASS_SEQ_LEN,
    MIN_OPT_LEVEL,
    PassId,
    PassPanic,
    PassSequence,
    mutate_pass_seq,
    random_pass_sequence,
)
from .bugs import (  # noqa: F401
    CATALOG,
    NO_BUGS,
    BugEffect,
    BugPlan,
    PlantedBug,
    catalog_stats,
    default_plan,
    fired_bugs,
    plan_for,
)
from .transforms import PASS_IMPLS  # noqa: F401

_SITE_PIPELINE = coverage.register_site("pipeline/run")
_SITE_ENTRY = {p: coverage.register_site(f"pipeline/{p.value}/entry") for p in PassId}
_SITE_GATED = {p: coverage.register_site(f"pipeline/{p.value}/gated") for p in PassId}
_SITE_ACTIVE = {p: coverage.register_site(f"pipeline/{p.value}/active") for p in PassId}


def apply_pass(pass_id: PassId, func: PrimFunc, opt_level: int,
               bugs: BugPlan, cov: coverage.CoverageHandle) -> PrimFunc:
    """Run one pass; a pass gated above `opt_level` is the identity."""
    cov.hit(_SITE_ENTRY[pass_id])
    if opt_level < MIN_OPT_LEVEL[pass_id]:
        cov.hit(_SITE_GATED[pass_id])
        return func
    cov.hit(_SITE_ACTIVE[pass_id])
    return PASS_IMPLS[pass_id](func, opt_level, bugs, cov)


def run_pipeline(func: PrimFunc, seq: PassSequence, bugs: BugPlan,
                 cov: coverage.CoverageHandle) -> PrimFunc:
    """Left-fold of apply_pass over the sequence at its opt_level.

    PassPanic propagates with the index of the failing pass attached.
    """
    cov.hit(_SITE_PIPELINE)
    out = func
    for i, pass_id in enumerate(seq.passes):
        try:
            out = apply_pass(pass_id, out, seq.opt_level, bugs, cov)
        except PassPanic as panic:
            panic.index = i
            raise
    return out
