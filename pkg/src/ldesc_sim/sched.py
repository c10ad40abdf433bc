"""CTA cluster formation and the scheduling baselines.

Cluster formation works on priority-ordered descriptors: C-tiles are split
in half along their largest axis until every descriptor offers at least one
C-tile per SM, then lower-priority C-tiles are merged into the top
descriptor's cluster shape whenever the grid still yields enough clusters
to occupy all SMs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .descriptor import LocalityDescriptor, Triple
from .grid import CtaGrid, cta_flat, ctas_in_grid, unflatten_xyz


@dataclass(frozen=True)
class ClusterDims:
    """CTAs per cluster along each grid axis."""

    dims: Triple

    def count_in(self, grid: CtaGrid) -> Triple:
        g, d = grid.dims, self.dims
        return (-(-g[0] // d[0]), -(-g[1] // d[1]), -(-g[2] // d[2]))

    def total_in(self, grid: CtaGrid) -> int:
        c = self.count_in(grid)
        return c[0] * c[1] * c[2]


@dataclass
class Schedule:
    """CTA flat id -> SM id, for ``sm_count`` SMs."""

    assignment: dict[int, int]
    sm_count: int
    cta_zones: dict[int, int] = field(default_factory=dict)

    def ctas_of_sm(self, sm: int) -> list[int]:
        return sorted(c for c, s in self.assignment.items() if s == sm)


def _ct_num(grid: CtaGrid, dims: list[int]) -> int:
    n = 1
    for i in range(3):
        n *= -(-grid.dims[i] // dims[i])
    return n


def _split_largest(dims: list[int]) -> None:
    # Largest extent wins; ties break X before Y before Z via first index.
    axis = dims.index(max(dims))
    dims[axis] = -(-dims[axis] // 2)


def form_clusters(
    descs: list[LocalityDescriptor], grid: CtaGrid, sm_num: int
) -> ClusterDims:
    """Derive cluster dimensions from priority-ordered descriptors.

    Works on per-descriptor copies of the C-tile dims; the descriptors
    themselves stay untouched.
    """
    work = [list(d.tiles.ctile_dims) for d in descs]
    for dims in work:
        while _ct_num(grid, dims) < sm_num and dims != [1, 1, 1]:
            _split_largest(dims)
    cls = work[0]
    for dims in work[1:]:
        merged = [cls[i] * max(dims[i] // cls[i], 1) for i in range(3)]
        if _ct_num(grid, merged) >= sm_num:
            cls = merged
    return ClusterDims((cls[0], cls[1], cls[2]))


def _cluster_members(
    cluster: Triple, cls: ClusterDims, grid: CtaGrid
) -> list[int]:
    base = tuple(cluster[i] * cls.dims[i] for i in range(3))
    ext = tuple(min(cls.dims[i], grid.dims[i] - base[i]) for i in range(3))
    members = []
    for z in range(ext[2]):
        for y in range(ext[1]):
            for x in range(ext[0]):
                members.append(
                    cta_flat((base[0] + x, base[1] + y, base[2] + z), grid)
                )
    return members


def assign_clusters(cls: ClusterDims, grid: CtaGrid, sm_num: int) -> Schedule:
    """Round-robin whole clusters (X->Y->Z order) over the SMs."""
    counts = cls.count_in(grid)
    assignment: dict[int, int] = {}
    for k in range(counts[0] * counts[1] * counts[2]):
        cluster = unflatten_xyz(k, counts)
        sm = k % sm_num
        for cta in _cluster_members(cluster, cls, grid):
            assignment[cta] = sm
    return Schedule(assignment, sm_num)


def assign_clusters_by_zone(
    cls: ClusterDims,
    grid: CtaGrid,
    cta_zones: dict[int, int],
    sm_count: int,
    zone_count: int,
) -> Schedule:
    """NUMA variant: keep each cluster inside its zone's SMs.

    A cluster's zone is the majority zone of its CTAs (ties to the lowest
    zone id); clusters are then round-robined over that zone's SM range.
    """
    sm_per_zone = sm_count // zone_count
    counts = cls.count_in(grid)
    next_slot = [0] * zone_count
    assignment: dict[int, int] = {}
    for k in range(counts[0] * counts[1] * counts[2]):
        members = _cluster_members(unflatten_xyz(k, counts), cls, grid)
        votes = [0] * zone_count
        for cta in members:
            votes[cta_zones[cta]] += 1
        zone = votes.index(max(votes))
        sm = zone * sm_per_zone + next_slot[zone] % sm_per_zone
        next_slot[zone] += 1
        for cta in members:
            assignment[cta] = sm
    return Schedule(assignment, sm_count, dict(cta_zones))


def baseline_round_robin(grid: CtaGrid, sm_num: int) -> Schedule:
    """Default scheduler: CTA k (X->Y->Z flat) lands on SM k mod sm_num."""
    assignment = {
        cta_flat(cta, grid): cta_flat(cta, grid) % sm_num
        for cta in ctas_in_grid(grid)
    }
    return Schedule(assignment, sm_num)


def baseline_bcs(grid: CtaGrid, sm_num: int) -> Schedule:
    """Pairwise scheduler: consecutive CTAs (2k, 2k+1) share SM k mod sm_num."""
    assignment = {}
    for cta in ctas_in_grid(grid):
        flat = cta_flat(cta, grid)
        assignment[flat] = (flat // 2) % sm_num
    return Schedule(assignment, sm_num)
