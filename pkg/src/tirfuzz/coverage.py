"""In-memory edge-coverage collector.

Probe sites are registered once at import time by the pass library and the
interpreter; each site owns one bit. A CoverageHandle accumulates hits for
one execution (bits only ever turn on), and snapshots fold into immutable
CoverageMap bit vectors supporting merge and new-coverage tests.
"""

from __future__ import annotations

from dataclasses import dataclass

SiteId = int


class DuplicateLabel(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class _Registry:
    def __init__(self) -> None:
        self.labels: list[str] = []
        self.by_label: dict[str, SiteId] = {}

    def register(self, label: str) -> SiteId:
        if label in self.by_label:
            raise DuplicateLabel(label)
        site = len(self.labels)
        self.labels.append(label)
        self.by_label[label] = site
        return site


_REGISTRY = _Registry()


def register_site(label: str) -> SiteId:
    """Register a probe site during library initialization.

    Ids are dense and stable for a given import order; labels are unique.
    """
    return _REGISTRY.register(label)


def total_sites() -> int:
    return len(_REGISTRY.labels)


def site_label(site: SiteId) -> str:
    return _REGISTRY.labels[site]


def site_id(label: str) -> SiteId:
    return _REGISTRY.by_label[label]


@dataclass(frozen=True)
class CoverageMap:
    """Fixed-length bit vector over registered probe sites."""

    bits: int
    length: int

    def popcount(self) -> int:
        return self.bits.bit_count()

    def sites(self) -> list[SiteId]:
        bits, out, i = self.bits, [], 0
        while bits:
            if bits & 1:
                out.append(i)
            bits >>= 1
            i += 1
        return out

    def to_hex(self) -> str:
        width = (self.length + 3) // 4
        return format(self.bits, f"0{max(width, 1)}x")


def empty_map(length: int | None = None) -> CoverageMap:
    return CoverageMap(0, total_sites() if length is None else length)


class CoverageHandle:
    """Hit accumulator bound to one execution; probes only set bits."""

    __slots__ = ("hits", "length")

    def __init__(self) -> None:
        self.length = total_sites()
        self.hits = bytearray(self.length)

    def hit(self, site: SiteId) -> None:
        self.hits[site] = 1

    def snapshot(self) -> CoverageMap:
        bits = 0
        for i, h in enumerate(self.hits):
            if h:
                bits |= 1 << i
        return CoverageMap(bits, self.length)


def snapshot(handle: CoverageHandle) -> CoverageMap:
    return handle.snapshot()


def merge(total: CoverageMap, cov: CoverageMap) -> CoverageMap:
    """Bitwise union of two maps from the same campaign."""
    if total.length != cov.length:
        raise LengthMismatch(f"{total.length} != {cov.length}")
    return CoverageMap(total.bits | cov.bits, total.length)


def has_new(cov: CoverageMap, total: CoverageMap) -> bool:
    """True iff `cov` sets a bit that `total` does not."""
    if total.length != cov.length:
        raise LengthMismatch(f"{total.length} != {cov.length}")
    return bool(cov.bits & ~total.bits)
