"""CTA grid geometry: tile indexing, traversal orders, byte decomposition.

Everything here is pure arithmetic over validated descriptors. CTAs, C-tiles
and D-tiles all flatten in X->Y->Z order (X fastest) unless the descriptor's
compute-data map says otherwise for the C-tile enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass

from .descriptor import (
    LocalityDescriptor,
    Triple,
    ctile_count,
    dtile_count,
)
from .errors import OutOfGrid, OutOfRange


@dataclass(frozen=True)
class CtaGrid:
    """3D grid of CTAs; each CTA runs ``warps_per_cta`` warps."""

    dims: Triple
    warps_per_cta: int = 8
    threads_per_warp: int = 32

    @property
    def total_ctas(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]


@dataclass(frozen=True)
class TileIndex:
    """Tile coordinates plus their X->Y->Z flat linearization."""

    coords: Triple
    flat: int


@dataclass(frozen=True)
class ByteRun:
    """A contiguous byte range [start, start+length) of one data structure."""

    start: int
    length: int


def flatten_xyz(coords: Triple, counts: Triple) -> int:
    x, y, z = coords
    return x + counts[0] * (y + counts[1] * z)


def unflatten_xyz(flat: int, counts: Triple) -> Triple:
    x = flat % counts[0]
    rest = flat // counts[0]
    return (x, rest % counts[1], rest // counts[1])


def cta_flat(cta: Triple, grid: CtaGrid) -> int:
    """X->Y->Z flat index of a CTA in the grid."""
    return flatten_xyz(cta, grid.dims)


def ctas_in_grid(grid: CtaGrid):
    """All CTA coordinates in flat (X fastest) order."""
    gx, gy, gz = grid.dims
    for z in range(gz):
        for y in range(gy):
            for x in range(gx):
                yield (x, y, z)


def ctile_of_cta(cta: Triple, desc: LocalityDescriptor, grid: CtaGrid) -> TileIndex:
    """C-tile containing a CTA: componentwise floor division by the C-tile dims."""
    if any(not 0 <= cta[i] < grid.dims[i] for i in range(3)):
        raise OutOfGrid(f"CTA {cta} outside grid {grid.dims}")
    c = desc.tiles.ctile_dims
    coords = (cta[0] // c[0], cta[1] // c[1], cta[2] // c[2])
    return TileIndex(coords, flatten_xyz(coords, ctile_count(desc, grid)))


def _enumeration_index(ctile: Triple, counts: Triple, ranks: Triple) -> int:
    # Axes are consumed fastest-first: rank 1, then 2, then 3. Rank-0 axes
    # always hold index 0 (validation pins their count to 1).
    axes = sorted((a for a in range(3) if ranks[a] != 0), key=lambda a: ranks[a])
    index = 0
    scale = 1
    for axis in axes:
        index += ctile[axis] * scale
        scale *= counts[axis]
    return index


def dtile_of_ctile(
    ctile: TileIndex, desc: LocalityDescriptor, grid: CtaGrid
) -> TileIndex:
    """The D-tile a C-tile accesses under the descriptor's compute-data map.

    The k-th C-tile in map-ranked traversal order pairs with the k-th D-tile
    in X->Y->Z order; validation guarantees the counts match, so this is a
    bijection.
    """
    c_counts = ctile_count(desc, grid)
    if any(not 0 <= ctile.coords[i] < c_counts[i] for i in range(3)):
        raise OutOfRange(f"C-tile {ctile.coords} outside counts {c_counts}")
    k = _enumeration_index(ctile.coords, c_counts, desc.tiles.compute_data_map)
    d_counts = dtile_count(desc)
    return TileIndex(unflatten_xyz(k, d_counts), k)


def dtile_byte_runs(dtile: TileIndex, desc: LocalityDescriptor) -> list[ByteRun]:
    """Row-major decomposition of a D-tile into contiguous byte runs.

    One run per (y, z) line inside the tile, ordered and disjoint; edge
    tiles are clipped to the data structure's extent.
    """
    ds = desc.data
    dx, dy, dz = desc.tiles.dtile_dims
    lenx, leny, lenz = ds.dims
    ix, iy, iz = dtile.coords
    x0 = ix * dx
    run_elems = min(dx, lenx - x0)
    runs = []
    for z in range(min(dz, lenz - iz * dz)):
        for y in range(min(dy, leny - iy * dy)):
            elem = ((iz * dz + z) * leny + (iy * dy + y)) * lenx + x0
            runs.append(
                ByteRun(ds.base_addr + elem * ds.elem_size, run_elems * ds.elem_size)
            )
    return runs


def dtile_of_address(addr: int, desc: LocalityDescriptor) -> TileIndex:
    """D-tile containing a byte address of the descriptor's structure."""
    ds = desc.data
    if not ds.contains(addr):
        raise OutOfRange(f"address {addr:#x} outside {ds.name}")
    elem = (addr - ds.base_addr) // ds.elem_size
    lenx, leny, _ = ds.dims
    ex = elem % lenx
    ey = (elem // lenx) % leny
    ez = elem // (lenx * leny)
    d = desc.tiles.dtile_dims
    coords = (ex // d[0], ey // d[1], ez // d[2])
    return TileIndex(coords, flatten_xyz(coords, dtile_count(desc)))


def ctas_in_ctile(
    ctile: Triple, desc: LocalityDescriptor, grid: CtaGrid
) -> list[Triple]:
    """CTA coordinates inside a C-tile, clipped to the grid, X->Y->Z order."""
    c = desc.tiles.ctile_dims
    base = tuple(ctile[i] * c[i] for i in range(3))
    ext = tuple(min(c[i], grid.dims[i] - base[i]) for i in range(3))
    out = []
    for z in range(ext[2]):
        for y in range(ext[1]):
            for x in range(ext[0]):
                out.append((base[0] + x, base[1] + y, base[2] + z))
    return out
