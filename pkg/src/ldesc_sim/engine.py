"""Synthetic workload generation and the cycle-based multi-SM simulation.

The simulation is deliberately approximate in timing (one outstanding
access per warp, flat latencies, a per-zone-pair link rate limit) but exact
in counting: hit/miss/inflight conservation, per-SM working sets and NUMA
locality fractions are the quantities the test suite pins down.

A run is strictly single-threaded and deterministic: identical workload,
configuration and seed produce bit-identical metrics. A recorded demand
trace can be replayed through the same pipeline and reproduces the same
metrics because every downstream decision (caches, prefetcher, placement)
is a deterministic function of the issue sequence.
"""

from __future__ import annotations

import heapq
import json
import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, TextIO

from . import prefetch as pf
from .cache import AccessOutcome, CacheConfig, CacheModel, InsertionClass
from .descriptor import (
    DataStructureRef,
    LocalityDescriptor,
    LocalityType,
    SharingType,
)
from .errors import ConfigMismatch, MshrFull
from .grid import (
    CtaGrid,
    cta_flat,
    ctas_in_ctile,
    ctas_in_grid,
    ctile_of_cta,
    dtile_byte_runs,
    dtile_of_ctile,
)
from .numa import PAGE_BITS, MappingScheme, NumaPlan, ZoneMapping, zone_of_address
from .prefetch import PrefetchKind, StreamState


@dataclass(frozen=True)
class Latencies:
    l1_hit: int = 1
    l2_hit: int = 30
    local_mem: int = 200
    remote_mem: int = 300


@dataclass(frozen=True)
class SystemConfig:
    sm_count: int = 8
    zone_count: int = 1
    l1: CacheConfig = field(default_factory=lambda: CacheConfig(32 * 1024, ways=4))
    l2: CacheConfig = field(default_factory=lambda: CacheConfig(256 * 1024, ways=8))
    latencies: Latencies = field(default_factory=Latencies)
    remote_link_capacity: float = 0.5
    max_resident_ctas_per_sm: int = 4

    def sm_zone(self, sm: int) -> int:
        return sm // (self.sm_count // self.zone_count)


PRESETS = {
    "desk": lambda: SystemConfig(),
    "desk-numa": lambda: SystemConfig(sm_count=16, zone_count=4),
    "paper-single": lambda: SystemConfig(
        sm_count=15,
        zone_count=1,
        l2=CacheConfig(768 * 1024, ways=16),
    ),
    "paper-numa": lambda: SystemConfig(
        sm_count=64,
        zone_count=4,
        l2=CacheConfig(4 * 1024 * 1024, ways=16),
    ),
}


def preset(name: str) -> SystemConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigMismatch(
            f"unknown preset {name!r}; choose from {sorted(PRESETS)}"
        ) from None


@dataclass(frozen=True)
class DescriptorPolicy:
    schedule_with_clusters: bool
    insertion: InsertionClass
    prefetch: PrefetchKind


@dataclass
class PolicySet:
    by_desc: dict[LocalityDescriptor, DescriptorPolicy]

    def wants_clusters(self) -> bool:
        return any(p.schedule_with_clusters for p in self.by_desc.values())


def select_policies(descs: list[LocalityDescriptor]) -> PolicySet:
    """Map each descriptor's locality type to its architectural levers.

    Inter-thread data is soft pinned and scheduled in clusters, with stride
    prefetch for regular co-access and nextline for nearby sharing.
    Intra-thread data is hard pinned against thrash; no-reuse data bypasses
    the cache. Conflicts between overlapping descriptors resolve by
    priority at access time.
    """
    out: dict[LocalityDescriptor, DescriptorPolicy] = {}
    for d in descs:
        if d.ltype is LocalityType.INTER_THREAD:
            if d.sharing is SharingType.NEARBY:
                kind = PrefetchKind.NEXTLINE
            elif d.pattern.regular:
                kind = PrefetchKind.STRIDE
            else:
                kind = PrefetchKind.NONE
            out[d] = DescriptorPolicy(True, InsertionClass.SOFT_PIN, kind)
        elif d.ltype is LocalityType.INTRA_THREAD:
            out[d] = DescriptorPolicy(False, InsertionClass.HARD_PIN, PrefetchKind.NONE)
        else:
            out[d] = DescriptorPolicy(False, InsertionClass.BYPASS, PrefetchKind.NONE)
    return PolicySet(out)


def normal_policies(descs: list[LocalityDescriptor]) -> PolicySet:
    """Baseline cache behaviour: plain LRU insertion, no prefetching."""
    return PolicySet(
        {
            d: DescriptorPolicy(False, InsertionClass.NORMAL, PrefetchKind.NONE)
            for d in descs
        }
    )


# ---------------------------------------------------------------------------
# Workload synthesis


@dataclass
class Workload:
    grid: CtaGrid
    descs: list[LocalityDescriptor]  # validated, priority order
    seed: int = 1

    def structures(self) -> list[DataStructureRef]:
        seen: dict[str, DataStructureRef] = {}
        for d in self.descs:
            seen.setdefault(d.data.name, d.data)
        return list(seen.values())


def _lines_of_runs(runs, line_size: int) -> list[int]:
    lines: list[int] = []
    seen = set()
    for run in runs:
        first = run.start // line_size
        last = (run.start + run.length - 1) // line_size
        for ln in range(first, last + 1):
            if ln not in seen:
                seen.add(ln)
                lines.append(ln * line_size)
    return lines


def _slice(items: list[int], index: int, parts: int) -> list[int]:
    width = -(-len(items) // parts) if items else 0
    return items[index * width : (index + 1) * width]


def _rng(seed: int, *salt: int) -> random.Random:
    mixed = seed
    for s in salt:
        mixed = mixed * 1_000_003 + s + 1
    return random.Random(mixed)


def generate_accesses(
    desc: LocalityDescriptor,
    cta: tuple[int, int, int],
    grid: CtaGrid,
    seed: int,
    line_size: int = 128,
) -> list[tuple[int, int]]:
    """Deterministic (warp, address) stream of one CTA over one descriptor.

    Co-accessed tiles are walked in full by every CTA of the C-tile; nearby
    sharing gives each CTA a window overlapping its neighbours by one line;
    intra-thread reuse walks per-warp private sub-ranges twice; no-reuse
    data is streamed through once. Irregular patterns are seeded
    permutations, so equal seeds reproduce equal sequences.
    """
    ctile = ctile_of_cta(cta, desc, grid)
    dtile = dtile_of_ctile(ctile, desc, grid)
    runs = dtile_byte_runs(dtile, desc)
    lines = _lines_of_runs(runs, line_size)
    members = ctas_in_ctile(ctile.coords, desc, grid)
    rank = members.index(cta)
    warps = grid.warps_per_cta
    flat = cta_flat(cta, grid)

    def deal(addrs: Iterable[int]) -> list[tuple[int, int]]:
        return [(i % warps, a) for i, a in enumerate(addrs)]

    if desc.ltype is LocalityType.INTER_THREAD:
        if desc.sharing is SharingType.COACCESSED:
            if desc.pattern.regular:
                stride = desc.pattern.stride_bytes
                addrs = [
                    a
                    for run in runs
                    for a in range(run.start, run.start + run.length, stride)
                ]
            else:
                addrs = list(lines)
                _rng(seed, dtile.flat, flat).shuffle(addrs)
            return deal(addrs)
        window = _slice(lines, rank, len(members))
        if not window:
            return []
        lo = max(0, lines.index(window[0]) - 1)
        hi = min(len(lines), lines.index(window[-1]) + 2)
        return deal(lines[lo:hi])

    share = _slice(lines, rank, len(members))
    if desc.ltype is LocalityType.INTRA_THREAD:
        per_warp = []
        for w in range(warps):
            sub = _slice(share, w, warps)
            if not sub:
                continue
            if not desc.pattern.regular:
                sub = list(sub)
                _rng(seed, dtile.flat, flat, w).shuffle(sub)
            per_warp.append((w, sub + sub))  # two passes: the declared reuse
        out: list[tuple[int, int]] = []
        depth = max(len(s) for _, s in per_warp) if per_warp else 0
        for i in range(depth):
            for w, s in per_warp:
                if i < len(s):
                    out.append((w, s[i]))
        return out

    # NO_REUSE: one streaming pass over this CTA's share
    if not desc.pattern.regular:
        share = list(share)
        _rng(seed, dtile.flat, flat).shuffle(share)
    return deal(share)


def cta_warp_queues(
    workload: Workload, cta: tuple[int, int, int], line_size: int
) -> dict[int, deque[int]]:
    """Per-warp address queues for one CTA, interleaving its descriptors."""
    streams = [
        generate_accesses(d, cta, workload.grid, workload.seed, line_size)
        for d in workload.descs
    ]
    queues: dict[int, deque[int]] = {w: deque() for w in range(workload.grid.warps_per_cta)}
    depth = max((len(s) for s in streams), default=0)
    for i in range(depth):
        for s in streams:
            if i < len(s):
                w, addr = s[i]
                queues[w].append(addr)
    return queues


# ---------------------------------------------------------------------------
# Metrics


@dataclass(frozen=True)
class AccessEvent:
    sm: int
    cta: int
    warp: int
    addr: int
    issue_cycle: int


def dump_trace(events: Iterable[AccessEvent], fp: TextIO) -> None:
    for ev in events:
        fp.write(
            json.dumps(
                {
                    "sm": ev.sm,
                    "cta": ev.cta,
                    "warp": ev.warp,
                    "addr": f"{ev.addr:#x}",
                    "cycle": ev.issue_cycle,
                },
                sort_keys=True,
            )
            + "\n"
        )


def load_trace(fp: TextIO) -> list[AccessEvent]:
    events = []
    for line in fp:
        line = line.strip()
        if not line:
            continue
        raw = json.loads(line)
        events.append(
            AccessEvent(raw["sm"], raw["cta"], raw["warp"], int(raw["addr"], 16), raw["cycle"])
        )
    return events


@dataclass
class SimMetrics:
    demand_accesses: int
    hits: int
    inflight_hits: int
    misses: int
    l1_hit_rate: float
    inflight_hit_rate: float
    working_set: list[int]
    avg_working_set: float
    access_efficiency: float
    zone_access_distribution: list[float]
    total_cycles: int
    prefetch_accuracy: float
    prefetches_issued: int
    prefetches_useful: int
    remote_traffic: int

    def to_json_dict(self) -> dict:
        return {
            "access_efficiency": self.access_efficiency,
            "avg_working_set": self.avg_working_set,
            "demand_accesses": self.demand_accesses,
            "hits": self.hits,
            "inflight_hit_rate": self.inflight_hit_rate,
            "inflight_hits": self.inflight_hits,
            "l1_hit_rate": self.l1_hit_rate,
            "misses": self.misses,
            "prefetch_accuracy": self.prefetch_accuracy,
            "prefetches_issued": self.prefetches_issued,
            "prefetches_useful": self.prefetches_useful,
            "remote_traffic": self.remote_traffic,
            "total_cycles": self.total_cycles,
            "working_set": self.working_set,
            "zone_access_distribution": self.zone_access_distribution,
        }

    def json_str(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"


def working_set(events: Iterable[AccessEvent], line_size: int = 128) -> dict[int, int]:
    """Distinct-line count per SM over a demand trace."""
    per_sm: dict[int, set[int]] = {}
    for ev in events:
        per_sm.setdefault(ev.sm, set()).add(ev.addr // line_size)
    return {sm: len(lines) for sm, lines in per_sm.items()}


# ---------------------------------------------------------------------------
# Simulation core


class _Cta:
    __slots__ = ("flat", "queues", "remaining", "inflight", "started")

    def __init__(self, flat: int, queues: dict[int, deque[int]] | None, remaining: int):
        self.flat = flat
        self.queues = queues
        self.remaining = remaining
        self.inflight = 0
        self.started = False

    def finished(self) -> bool:
        return self.remaining == 0 and self.inflight == 0


class _WarpSlot:
    __slots__ = ("cta", "warp", "ready_at")

    def __init__(self, cta: _Cta, warp: int):
        self.cta = cta
        self.warp = warp
        self.ready_at = 0


class _Sm:
    __slots__ = ("sm", "zone", "l1", "pending", "resident", "slots", "ptr")

    def __init__(self, sm: int, zone: int, l1: CacheModel, pending: deque[int]):
        self.sm = sm
        self.zone = zone
        self.l1 = l1
        self.pending = pending
        self.resident: list[_Cta] = []
        self.slots: list[_WarpSlot] = []
        self.ptr = 0


class _Simulation:
    def __init__(
        self,
        workload: Workload,
        config: SystemConfig,
        schedule,
        placement,
        policies: PolicySet,
        trace_sink: list[AccessEvent] | None,
    ):
        self.workload = workload
        self.config = config
        self.schedule = schedule
        self.policies = policies
        self.trace_sink = trace_sink
        self.line_size = config.l1.line_size
        self._check_consistency()

        grid = workload.grid
        self.l2 = [CacheModel(config.l2) for _ in range(config.zone_count)]
        self.sms = []
        per_sm_ctas: dict[int, list[int]] = {s: [] for s in range(config.sm_count)}
        for flat in sorted(schedule.assignment):
            per_sm_ctas[schedule.assignment[flat]].append(flat)
        for s in range(config.sm_count):
            self.sms.append(
                _Sm(s, config.sm_zone(s), CacheModel(config.l1), deque(per_sm_ctas[s]))
            )
        self.cta_coords = {cta_flat(c, grid): c for c in ctas_in_grid(grid)}

        # Address resolution tables
        self.structures = workload.structures()
        self.mappings: dict[str, ZoneMapping] | None = None
        self.global_mapping: ZoneMapping | None = None
        if isinstance(placement, NumaPlan):
            self.mappings = placement.per_structure
            for ds in self.structures:
                if ds.name not in self.mappings:
                    raise ConfigMismatch(f"placement plan lacks structure {ds.name!r}")
        elif isinstance(placement, ZoneMapping):
            self.global_mapping = placement
        elif placement is not None or config.zone_count != 1:
            raise ConfigMismatch("zone_count > 1 requires a placement")

        # Prefetcher state, keyed by (sm, descriptor index)
        self.desc_order = list(workload.descs)
        self.streams: dict[tuple[int, int], StreamState] = {}
        self.dtile_users: dict[tuple[int, int, int], int] = {}
        self._cta_dtile: dict[tuple[int, int], int] = {}

        # Event plumbing
        self.fills: dict[int, list[tuple[int, int]]] = {}  # cycle -> (sm, line_addr)
        self.comps: dict[int, list[tuple[_Sm, _Cta]]] = {}
        self.wake: list[int] = []
        self.inflight_fill: dict[tuple[int, int], int] = {}
        self.link_free: dict[tuple[int, int], float] = {}

        # Metrics
        self.demand = 0
        self.hits = 0
        self.inflight_hits = 0
        self.misses = 0
        self.local_accesses = 0
        self.zone_counts = [0] * config.zone_count
        self.ws: list[set[int]] = [set() for _ in range(config.sm_count)]
        self.remote_traffic = 0
        self.pf_issued = 0
        self.pf_useful = 0
        self.pf_pending: set[int] = set()
        self.last_completion = 0
        self.unfinished = 0
        self._last_tick = 0

    def _check_consistency(self) -> None:
        grid = self.workload.grid
        cfg = self.config
        expect = set(range(grid.total_ctas))
        if set(self.schedule.assignment) != expect:
            raise ConfigMismatch("schedule does not cover the workload grid")
        if self.schedule.sm_count != cfg.sm_count:
            raise ConfigMismatch(
                f"schedule built for {self.schedule.sm_count} SMs, system has "
                f"{cfg.sm_count}"
            )
        if any(not 0 <= s < cfg.sm_count for s in self.schedule.assignment.values()):
            raise ConfigMismatch("schedule assigns an SM outside the system")
        if cfg.sm_count % cfg.zone_count != 0:
            raise ConfigMismatch("sm_count must divide evenly into zones")
        lat = cfg.latencies
        if min(lat.l1_hit, lat.l2_hit, lat.local_mem, lat.remote_mem) < 1:
            raise ConfigMismatch("latencies must be at least one cycle")
        if cfg.remote_link_capacity <= 0 or cfg.max_resident_ctas_per_sm < 1:
            raise ConfigMismatch("link capacity and residency must be positive")

    # -- address resolution ------------------------------------------------

    def _structure_of(self, addr: int) -> DataStructureRef:
        for ds in self.structures:
            if ds.contains(addr):
                return ds
        raise ConfigMismatch(f"address {addr:#x} belongs to no data structure")

    def _desc_of(self, addr: int) -> tuple[int, LocalityDescriptor]:
        for i, d in enumerate(self.desc_order):
            if d.data.contains(addr):
                return i, d
        raise ConfigMismatch(f"address {addr:#x} matches no descriptor")

    def _home_zone(self, addr: int, toucher_zone: int) -> int:
        if self.config.zone_count == 1:
            return 0
        mapping = (
            self.global_mapping
            if self.global_mapping is not None
            else self.mappings[self._structure_of(addr).name]  # type: ignore[index]
        )
        if mapping.scheme is MappingScheme.FIRST_TOUCH:
            return mapping.page_table.setdefault(addr >> PAGE_BITS, toucher_zone)
        return zone_of_address(addr, mapping, self.config.zone_count)

    # -- memory path -------------------------------------------------------

    def _memory_latency(self, sm_zone: int, line_addr: int, home: int, cycle: int) -> int:
        lat = self.config.latencies
        l2 = self.l2[home]
        out = l2.access(line_addr, InsertionClass.NORMAL, cycle)
        if out is AccessOutcome.MISS:
            l2.fill(line_addr, cycle)
        else:
            return lat.l2_hit
        if home == sm_zone:
            return lat.local_mem
        start = max(float(cycle), self.link_free.get((sm_zone, home), 0.0))
        self.link_free[(sm_zone, home)] = start + 1.0 / self.config.remote_link_capacity
        self.remote_traffic += 1
        return lat.remote_mem + math.ceil(start) - cycle

    def _schedule_fill(self, sm: _Sm, line_addr: int, at: int) -> None:
        self.fills.setdefault(at, []).append((sm.sm, line_addr))
        self.inflight_fill[(sm.sm, line_addr)] = at
        heapq.heappush(self.wake, at)

    # -- prefetching ---------------------------------------------------------

    def _maybe_prefetch(self, sm: _Sm, addr: int, idx: int, desc, cycle: int) -> None:
        policy = self.policies.by_desc[desc]
        if policy.prefetch is PrefetchKind.NONE:
            return
        state = self.streams.get((sm.sm, idx))
        if state is None:
            state = StreamState.for_descriptor(desc)
            self.streams[(sm.sm, idx)] = state
        for req in pf.on_miss(addr, desc, self.config.l1.capacity, state, self.line_size):
            line_addr = sm.l1.line_addr(req.addr)
            if sm.l1.contains(line_addr) or sm.l1.inflight(line_addr):
                continue
            try:
                sm.l1.access(line_addr, InsertionClass.SOFT_PIN, cycle)
            except MshrFull:
                continue
            home = self._home_zone(line_addr, sm.zone)
            latency = self._memory_latency(sm.zone, line_addr, home, cycle)
            self._schedule_fill(sm, line_addr, cycle + latency)
            self.pf_issued += 1
            self.pf_pending.add(line_addr)

    # -- CTA lifecycle -------------------------------------------------------

    def _cta_dtile_flat(self, idx: int, flat: int) -> int:
        key = (idx, flat)
        cached = self._cta_dtile.get(key)
        if cached is None:
            desc = self.desc_order[idx]
            grid = self.workload.grid
            ctile = ctile_of_cta(self.cta_coords[flat], desc, grid)
            cached = dtile_of_ctile(ctile, desc, grid).flat
            self._cta_dtile[key] = cached
        return cached

    def _prefetch_descs(self) -> list[int]:
        return [
            i
            for i, d in enumerate(self.desc_order)
            if self.policies.by_desc[d].prefetch is not PrefetchKind.NONE
        ]

    def _mark_started(self, sm: _Sm, cta: _Cta) -> None:
        cta.started = True
        for idx in self._prefetch_descs():
            dt = self._cta_dtile_flat(idx, cta.flat)
            key = (sm.sm, idx, dt)
            self.dtile_users[key] = self.dtile_users.get(key, 0) + 1

    def _complete_cta(self, sm: _Sm, cta: _Cta) -> None:
        self.unfinished -= 1
        if cta.started:
            for idx in self._prefetch_descs():
                dt = self._cta_dtile_flat(idx, cta.flat)
                key = (sm.sm, idx, dt)
                self.dtile_users[key] -= 1
                if self.dtile_users[key] == 0:
                    state = self.streams.get((sm.sm, idx))
                    if state is not None and dt in state.active_dtiles:
                        pf.retire_stream(dt, state)
        if cta in sm.resident:
            sm.resident.remove(cta)
            sm.slots = [s for s in sm.slots if s.cta is not cta]
            if sm.slots:
                sm.ptr %= len(sm.slots)
            else:
                sm.ptr = 0
            self._refill(sm)

    def _refill(self, sm: _Sm) -> None:
        while sm.pending and len(sm.resident) < self.config.max_resident_ctas_per_sm:
            flat = sm.pending.popleft()
            queues = cta_warp_queues(self.workload, self.cta_coords[flat], self.line_size)
            remaining = sum(len(q) for q in queues.values())
            cta = _Cta(flat, queues, remaining)
            if remaining == 0:
                self.unfinished -= 1
                continue
            sm.resident.append(cta)
            for w in sorted(queues):
                if queues[w]:
                    sm.slots.append(_WarpSlot(cta, w))

    # -- issue path ----------------------------------------------------------

    def _issue(self, sm: _Sm, cta: _Cta, warp: int, addr: int, cycle: int) -> int | None:
        """Run one demand access; returns its completion cycle, or None on stall."""
        idx, desc = self._desc_of(addr)
        iclass = self.policies.by_desc[desc].insertion
        try:
            outcome = sm.l1.access(addr, iclass, cycle)
        except MshrFull:
            return None

        self.demand += 1
        home = self._home_zone(addr, sm.zone)
        self.zone_counts[home] += 1
        if home == sm.zone:
            self.local_accesses += 1
        line_addr = sm.l1.line_addr(addr)
        self.ws[sm.sm].add(line_addr // self.line_size)
        if not cta.started:
            self._mark_started(sm, cta)
        if self.trace_sink is not None:
            self.trace_sink.append(AccessEvent(sm.sm, cta.flat, warp, addr, cycle))

        if outcome is AccessOutcome.HIT:
            self.hits += 1
            completion = cycle + self.config.latencies.l1_hit
            if line_addr in self.pf_pending:
                self.pf_useful += 1
                self.pf_pending.discard(line_addr)
        elif outcome is AccessOutcome.INFLIGHT_HIT:
            self.inflight_hits += 1
            completion = self.inflight_fill[(sm.sm, line_addr)]
            if line_addr in self.pf_pending:
                self.pf_useful += 1
                self.pf_pending.discard(line_addr)
        else:
            self.misses += 1
            self.pf_pending.discard(line_addr)  # evicted before use: not useful
            latency = self._memory_latency(sm.zone, line_addr, home, cycle)
            completion = cycle + latency
            self._schedule_fill(sm, line_addr, completion)
            self._maybe_prefetch(sm, addr, idx, desc, cycle)

        cta.remaining -= 1
        cta.inflight += 1
        self.comps.setdefault(completion, []).append((sm, cta))
        heapq.heappush(self.wake, completion)
        self.last_completion = max(self.last_completion, completion)
        return completion

    # -- main loops ------------------------------------------------------------

    def _tick_caches(self, now: int) -> None:
        # Visited cycles can jump over idle stretches; apply any pin-reset
        # boundary crossed since the last visit (no accesses happened in
        # between, so one reset is equivalent to several).
        for cache in [sm.l1 for sm in self.sms] + self.l2:
            period = cache.config.pin_reset_period
            if period <= 0:
                continue
            boundary = (now // period) * period
            if boundary > self._last_tick:
                cache.tick(boundary)
        self._last_tick = now

    def _process_due(self, cycle: int) -> None:
        for sm_id, line_addr in self.fills.pop(cycle, ()):  # fills before issues
            self.sms[sm_id].l1.fill(line_addr, cycle)
            self.inflight_fill.pop((sm_id, line_addr), None)
        for sm, cta in self.comps.pop(cycle, ()):
            cta.inflight -= 1
            if cta.remaining == 0 and cta.inflight == 0:
                self._complete_cta(sm, cta)

    def _next_cycle(self, cycle: int, active: bool) -> int:
        if active:
            return cycle + 1
        while self.wake:
            nxt = heapq.heappop(self.wake)
            if nxt > cycle:
                return nxt
        return cycle + 1

    def run_live(self) -> None:
        self.unfinished = self.workload.grid.total_ctas
        for sm in self.sms:
            self._refill(sm)
        cycle = 0
        while self.unfinished > 0:
            self._tick_caches(cycle)
            self._process_due(cycle)
            active = False
            for sm in self.sms:
                n = len(sm.slots)
                for i in range(n):
                    slot = sm.slots[(sm.ptr + i) % n]
                    if slot.ready_at > cycle:
                        continue
                    queue = slot.cta.queues[slot.warp]  # type: ignore[index]
                    if not queue:
                        continue
                    completion = self._issue(sm, slot.cta, slot.warp, queue[0], cycle)
                    active = True
                    if completion is not None:
                        queue.popleft()
                        slot.ready_at = completion
                        sm.ptr = ((sm.ptr + i) % n + 1) % n
                    else:
                        sm.ptr = (sm.ptr + i) % n  # stalled: retry this warp first
                    break
            if self.unfinished == 0:
                break
            cycle = self._next_cycle(cycle, active)

    def run_replay(self, events: list[AccessEvent]) -> None:
        by_cycle: dict[int, list[AccessEvent]] = {}
        totals: dict[int, int] = {}
        for ev in events:
            if ev.sm >= self.config.sm_count or ev.cta not in self.cta_coords:
                raise ConfigMismatch(
                    f"trace event (sm={ev.sm}, cta={ev.cta}) outside this "
                    "system/grid"
                )
            by_cycle.setdefault(ev.issue_cycle, []).append(ev)
            totals[ev.cta] = totals.get(ev.cta, 0) + 1
        ctas = {flat: _Cta(flat, None, total) for flat, total in totals.items()}
        self.unfinished = len(ctas)
        for c in by_cycle:
            heapq.heappush(self.wake, c)
        cycle = 0
        while self.unfinished > 0:
            self._tick_caches(cycle)
            self._process_due(cycle)
            for ev in by_cycle.pop(cycle, ()):
                sm = self.sms[ev.sm]
                cta = ctas[ev.cta]
                completion = self._issue(sm, cta, ev.warp, ev.addr, cycle)
                if completion is None:
                    raise ConfigMismatch(
                        "trace replay stalled on a full MSHR; the trace does not "
                        "match this configuration"
                    )
            if self.unfinished == 0:
                break
            cycle = self._next_cycle(cycle, active=False)

    def metrics(self) -> SimMetrics:
        demand = self.demand
        counts = [len(s) for s in self.ws]
        dist = [
            (z / demand) if demand else 0.0 for z in self.zone_counts
        ]
        return SimMetrics(
            demand_accesses=demand,
            hits=self.hits,
            inflight_hits=self.inflight_hits,
            misses=self.misses,
            l1_hit_rate=self.hits / demand if demand else 0.0,
            inflight_hit_rate=self.inflight_hits / demand if demand else 0.0,
            working_set=counts,
            avg_working_set=sum(counts) / len(counts) if counts else 0.0,
            access_efficiency=self.local_accesses / demand if demand else 0.0,
            zone_access_distribution=dist,
            total_cycles=self.last_completion,
            prefetch_accuracy=self.pf_useful / self.pf_issued if self.pf_issued else 0.0,
            prefetches_issued=self.pf_issued,
            prefetches_useful=self.pf_useful,
            remote_traffic=self.remote_traffic,
        )


def simulate(
    workload: Workload,
    config: SystemConfig,
    schedule,
    placement=None,
    policies: PolicySet | None = None,
    trace_sink: list[AccessEvent] | None = None,
    trace_in: list[AccessEvent] | None = None,
) -> SimMetrics:
    """Run the cycle loop and return counting metrics.

    ``placement`` is a NumaPlan (per-structure mappings), a single
    ZoneMapping applied to every structure, or None for single-zone
    systems. ``trace_in`` replays a previously recorded demand trace
    through the same pipeline instead of generating and scheduling
    accesses.
    """
    if policies is None:
        policies = select_policies(workload.descs)
    sim = _Simulation(workload, config, schedule, placement, policies, trace_sink)
    if trace_in is not None:
        sim.run_replay(trace_in)
    else:
        sim.run_live()
    return sim.metrics()
