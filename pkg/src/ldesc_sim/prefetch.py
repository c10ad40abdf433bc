"""Descriptor-guided prefetching for inter-thread data.

NEARBY sharing gets plain nextline prefetching. COACCESSED sharing with a
regular stride gets a computed lookahead: the distance shrinks as more data
tiles stream concurrently, so the prefetched lines still fit in L1:

    target = addr + (l1_size // (active_tiles * dtile_width)) * stride

A zero distance factor (tiny cache, many streams) falls back to nextline.
Requests that would land outside the data structure are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .descriptor import LocalityDescriptor, LocalityType, SharingType
from .errors import UnknownStream
from .grid import dtile_of_address


class PrefetchKind(Enum):
    NONE = "NONE"
    NEXTLINE = "NEXTLINE"
    STRIDE = "STRIDE"


@dataclass(frozen=True)
class PrefetchRequest:
    addr: int
    trigger_addr: int
    kind: PrefetchKind


@dataclass
class StreamState:
    """Per-context prefetcher state for one descriptor."""

    dtile_width: int
    active_dtiles: set[int] = field(default_factory=set)

    @classmethod
    def for_descriptor(cls, desc: LocalityDescriptor) -> "StreamState":
        return cls(dtile_width=desc.tiles.dtile_dims[0] * desc.data.elem_size)


def on_miss(
    addr: int,
    desc: LocalityDescriptor,
    l1_size: int,
    state: StreamState,
    line_size: int = 128,
) -> list[PrefetchRequest]:
    """React to a demand miss: track the stream and emit at most one request."""
    if desc.ltype is not LocalityType.INTER_THREAD:
        return []
    state.active_dtiles.add(dtile_of_address(addr, desc).flat)
    if desc.sharing is SharingType.NEARBY:
        target, kind = addr + line_size, PrefetchKind.NEXTLINE
    elif desc.sharing is SharingType.COACCESSED and desc.pattern.regular:
        factor = l1_size // (len(state.active_dtiles) * state.dtile_width)
        if factor == 0:
            target, kind = addr + line_size, PrefetchKind.NEXTLINE
        else:
            target, kind = addr + factor * desc.pattern.stride_bytes, PrefetchKind.STRIDE
    else:
        return []  # COACCESSED irregular: retention is the cache's job
    if not desc.data.contains(target):
        return []
    return [PrefetchRequest(target, addr, kind)]


def retire_stream(dtile_flat: int, state: StreamState) -> None:
    """Drop a finished data tile from the active set, widening later distances."""
    try:
        state.active_dtiles.remove(dtile_flat)
    except KeyError:
        raise UnknownStream(f"data tile {dtile_flat} has no active stream") from None
