"""NUMA zone mapping, CTA partitioning and the placement search.

Data structures are interleaved across zones by a consecutive bit field of
the physical address (BITRANGE), by a fold-XOR hash (the randomizing
baseline), or by first-touch page placement (the 64 KiB paging baseline).
The placement search jointly picks the top descriptor's bit field and the
CTA partition, then fits every remaining structure to that partition.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .descriptor import LocalityDescriptor, ctile_count, log2_exact
from .errors import NoFeasiblePartition, UnplacedPage
from .grid import (
    CtaGrid,
    TileIndex,
    cta_flat,
    ctas_in_ctile,
    ctas_in_grid,
    dtile_byte_runs,
    dtile_of_ctile,
    unflatten_xyz,
)
from .sched import Schedule

PAGE_BITS = 16  # 64 KiB first-touch pages
LOW_BIT_MIN = 7  # never split a 128 B burst across zones
LOW_BIT_MAX = 16

BALANCE_SLACK = 1.25


class MappingScheme(Enum):
    BITRANGE = "BITRANGE"
    XOR_HASH = "XOR_HASH"
    FIRST_TOUCH = "FIRST_TOUCH"


@dataclass
class ZoneMapping:
    """How one data structure's addresses resolve to NUMA zones."""

    scheme: MappingScheme
    num_bits: int
    low_bit: int = LOW_BIT_MIN
    page_table: dict[int, int] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"scheme": self.scheme.value, "low_bit": self.low_bit}


def bitrange(low_bit: int, zone_count: int) -> ZoneMapping:
    if not LOW_BIT_MIN <= low_bit <= LOW_BIT_MAX:
        raise ValueError(f"low_bit {low_bit} outside [{LOW_BIT_MIN}, {LOW_BIT_MAX}]")
    return ZoneMapping(MappingScheme.BITRANGE, log2_exact(zone_count), low_bit)


def xor_hash(zone_count: int) -> ZoneMapping:
    return ZoneMapping(MappingScheme.XOR_HASH, log2_exact(zone_count))


def first_touch(zone_count: int) -> ZoneMapping:
    return ZoneMapping(MappingScheme.FIRST_TOUCH, log2_exact(zone_count))


def zone_of_address(addr: int, mapping: ZoneMapping, zone_count: int) -> int:
    """Resolve a byte address to its NUMA zone under a mapping."""
    if zone_count == 1:
        return 0
    if mapping.scheme is MappingScheme.BITRANGE:
        return (addr >> mapping.low_bit) % zone_count
    if mapping.scheme is MappingScheme.XOR_HASH:
        n = mapping.num_bits
        return ((addr >> 7) ^ (addr >> (7 + n)) ^ (addr >> (7 + 2 * n))) % zone_count
    page = addr >> PAGE_BITS
    try:
        return mapping.page_table[page]
    except KeyError:
        raise UnplacedPage(f"page {page:#x} has never been touched") from None


def _zone_bytes_of_runs(runs, low_bit: int, zone_count: int) -> list[int]:
    stripe = 1 << low_bit
    out = [0] * zone_count
    for run in runs:
        pos = run.start
        end = run.start + run.length
        while pos < end:
            take = min(end, (pos // stripe + 1) * stripe) - pos
            out[(pos >> low_bit) % zone_count] += take
            pos += take
    return out


def _majority_zone(zone_bytes: list[int]) -> int:
    return zone_bytes.index(max(zone_bytes))


def numa_part(
    desc: LocalityDescriptor, low_bit: int, grid: CtaGrid, zone_count: int
) -> dict[int, int]:
    """Partition CTAs by data affinity: each C-tile goes to the zone that
    holds the majority of its D-tile's bytes (ties to the lowest zone)."""
    counts = ctile_count(desc, grid)
    part: dict[int, int] = {}
    for k in range(counts[0] * counts[1] * counts[2]):
        ctile = TileIndex(unflatten_xyz(k, counts), k)
        runs = dtile_byte_runs(dtile_of_ctile(ctile, desc, grid), desc)
        zone = _majority_zone(_zone_bytes_of_runs(runs, low_bit, zone_count))
        for cta in ctas_in_ctile(ctile.coords, desc, grid):
            part[cta_flat(cta, grid)] = zone
    return part


def comp_util(
    weight: int,
    desc: LocalityDescriptor,
    cta_partition: dict[int, int],
    low_bit: int,
    grid: CtaGrid,
    zone_count: int,
) -> float:
    """Priority-weighted fraction of the structure's bytes that are local.

    A C-tile's zone is the majority zone of its CTAs under the partition
    (ties to the lowest zone); its D-tile's bytes inside that zone count as
    local.
    """
    counts = ctile_count(desc, grid)
    total = desc.data.total_bytes
    local = 0
    for k in range(counts[0] * counts[1] * counts[2]):
        ctile = TileIndex(unflatten_xyz(k, counts), k)
        votes = [0] * zone_count
        for cta in ctas_in_ctile(ctile.coords, desc, grid):
            votes[cta_partition[cta_flat(cta, grid)]] += 1
        zone = votes.index(max(votes))
        runs = dtile_byte_runs(dtile_of_ctile(ctile, desc, grid), desc)
        local += _zone_bytes_of_runs(runs, low_bit, zone_count)[zone]
    return weight * local / total


@dataclass
class NumaPlan:
    """Joint CTA partition and per-structure zone mappings."""

    cta_partition: dict[int, int]
    per_structure: dict[str, ZoneMapping]
    utility: float
    balance_guard_failed: bool = False

    def to_json(self) -> dict:
        flats = sorted(self.cta_partition)
        return {
            "partition": [self.cta_partition[f] for f in flats],
            "mappings": {
                name: m.to_json() for name, m in sorted(self.per_structure.items())
            },
            "utility": self.utility,
        }


def _is_balanced(part: dict[int, int], zone_count: int) -> bool:
    loads = [0] * zone_count
    for zone in part.values():
        loads[zone] += 1
    ideal = -(-len(part) // zone_count)
    return max(loads) <= ideal * BALANCE_SLACK


def _fit_remaining(
    descs: list[LocalityDescriptor],
    part: dict[int, int],
    grid: CtaGrid,
    zone_count: int,
    chosen: dict[str, int],
) -> float:
    """Best low_bit per remaining descriptor under a fixed partition."""
    n = len(descs)
    added = 0.0
    for i in range(1, n):
        desc = descs[i]
        weight = n - i  # alg position i+1 -> weight n - (i+1) + 1
        name = desc.data.name
        if name in chosen:
            added += comp_util(weight, desc, part, chosen[name], grid, zone_count)
            continue
        best_bit, best = LOW_BIT_MIN, 0.0
        for b_lo in range(LOW_BIT_MIN, LOW_BIT_MAX + 1):
            util = comp_util(weight, desc, part, b_lo, grid, zone_count)
            if util > best:
                best_bit, best = b_lo, util
        chosen[name] = best_bit
        added += best
    return added


def place_and_partition(
    descs: list[LocalityDescriptor], grid: CtaGrid, zone_count: int
) -> NumaPlan:
    """Search all candidate bit fields for the top descriptor, partition the
    CTAs by data affinity, and fit every other structure to that partition.

    Candidates whose partition overloads a zone past 125% of the ideal load
    are rejected; should every candidate be rejected, the guard is dropped
    and the best unguarded plan is returned with ``balance_guard_failed``
    set.
    """
    n = len(descs)
    if zone_count == 1:
        part = {cta_flat(c, grid): 0 for c in ctas_in_grid(grid)}
        mappings = {}
        for d in descs:
            mappings.setdefault(d.data.name, bitrange(LOW_BIT_MIN, 1))
        return NumaPlan(part, mappings, float(n * (n + 1) // 2))

    def search(guard: bool) -> NumaPlan | None:
        best: NumaPlan | None = None
        for b_hi in range(LOW_BIT_MIN, LOW_BIT_MAX + 1):
            part = numa_part(descs[0], b_hi, grid, zone_count)
            if guard and not _is_balanced(part, zone_count):
                continue
            chosen = {descs[0].data.name: b_hi}
            util = comp_util(n, descs[0], part, b_hi, grid, zone_count)
            util += _fit_remaining(descs, part, grid, zone_count, chosen)
            if best is None or util > best.utility:
                mappings = {
                    name: bitrange(bit, zone_count) for name, bit in chosen.items()
                }
                best = NumaPlan(part, mappings, util)
        return best

    plan = search(guard=True)
    if plan is None:
        plan = search(guard=False)
        if plan is None:  # descs is never empty, so search always yields
            raise NoFeasiblePartition("no candidate mapping at all")
        plan.balance_guard_failed = True
    return plan


def contiguous_zone_partition(grid: CtaGrid, zone_count: int) -> dict[int, int]:
    """Split the flat CTA order into zone_count equal contiguous ranges."""
    total = grid.total_ctas
    span = -(-total // zone_count)
    return {
        cta_flat(c, grid): min(cta_flat(c, grid) // span, zone_count - 1)
        for c in ctas_in_grid(grid)
    }


def distributed_schedule(grid: CtaGrid, zone_count: int, sm_count: int) -> Schedule:
    """Contiguous CTA ranges per zone, round-robined over each zone's SMs."""
    zones = contiguous_zone_partition(grid, zone_count)
    sm_per_zone = sm_count // zone_count
    next_slot = [0] * zone_count
    assignment: dict[int, int] = {}
    for c in ctas_in_grid(grid):
        flat = cta_flat(c, grid)
        zone = zones[flat]
        assignment[flat] = zone * sm_per_zone + next_slot[zone] % sm_per_zone
        next_slot[zone] += 1
    return Schedule(assignment, sm_count, zones)


def baseline_first_touch(
    grid: CtaGrid,
    zone_count: int,
    trace: list[tuple[int, int]],
    sm_count: int,
) -> tuple[ZoneMapping, Schedule]:
    """First-touch paging baseline with distributed contiguous scheduling.

    ``trace`` is (cta_flat, addr) pairs in execution order; each 64 KiB page
    lands in the zone of the CTA that touches it first. CTAs are split into
    contiguous zone ranges and round-robined over each zone's SMs.
    """
    schedule = distributed_schedule(grid, zone_count, sm_count)
    mapping = first_touch(zone_count)
    for flat, addr in trace:
        mapping.page_table.setdefault(addr >> PAGE_BITS, schedule.cta_zones[flat])
    return mapping, schedule
