"""Rectangular workspace partitions.

A workspace is split by axis-aligned grid cuts into closed cells
``{x : a_i <= x_i <= b_i}``.  Atomic propositions are attached to unions of
whole cells, so every proposition is constant over each cell; a region whose
boundary falls strictly inside a cell is rejected.  Walls block the shared
facet between two adjacent cells without changing the cells themselves.
"""

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import EmptyPartition, RegionMisaligned

GEOM_TOL = 1e-9


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned closed rectangle with lower corner ``a`` and upper corner ``b``."""

    a: tuple
    b: tuple
    id: int = -1

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        object.__setattr__(self, "b", tuple(float(v) for v in self.b))
        if len(self.a) != len(self.b):
            raise ValueError("corner vectors differ in dimension")
        for lo, hi in zip(self.a, self.b):
            if not lo < hi:
                raise ValueError(f"degenerate rectangle: a={self.a} b={self.b}")

    @property
    def dim(self) -> int:
        return len(self.a)

    def vertices(self):
        """All 2^p corner points, in lexicographic (low/high per axis) order."""
        for choice in product(*zip(self.a, self.b)):
            yield np.array(choice)

    def contains(self, x, tol: float = GEOM_TOL) -> bool:
        return all(lo - tol <= xi <= hi + tol
                   for lo, xi, hi in zip(self.a, x, self.b))

    def contains_rect(self, other: "Rectangle", tol: float = GEOM_TOL) -> bool:
        return all(slo - tol <= olo and ohi <= shi + tol
                   for slo, shi, olo, ohi in zip(self.a, self.b, other.a, other.b))

    def overlaps_interior(self, other: "Rectangle", tol: float = GEOM_TOL) -> bool:
        return all(max(slo, olo) + tol < min(shi, ohi)
                   for slo, shi, olo, ohi in zip(self.a, self.b, other.a, other.b))

    def width(self, axis: int) -> float:
        return self.b[axis] - self.a[axis]


@dataclass
class Wall:
    """A blocked facet slab: the plane ``x_axis == at`` over ``[lo, hi]`` in the other axes."""

    axis: int
    at: float
    lo: tuple
    hi: tuple


@dataclass
class Partition:
    """Grid partition of a workspace with per-cell proposition labels.

    ``adjacency`` maps an unordered cell pair to the axis of its shared facet;
    ``blocked_facets`` is the subset of those pairs closed off by walls.
    """

    bounds: Rectangle
    cells: list
    labels: dict
    adjacency: dict = field(default_factory=dict)
    blocked_facets: set = field(default_factory=set)

    @property
    def dim(self) -> int:
        return self.bounds.dim

    @property
    def ap(self) -> frozenset:
        out = set()
        for props in self.labels.values():
            out |= props
        return frozenset(out)

    def open_neighbors(self, cell_id: int):
        """(neighbor id, axis, sign) triples for unblocked facets, sorted by neighbor id."""
        out = []
        for (i, j), axis in self.adjacency.items():
            if (i, j) in self.blocked_facets:
                continue
            if i == cell_id:
                other = j
            elif j == cell_id:
                other = i
            else:
                continue
            sign = 1 if self.cells[other].a[axis] >= self.cells[cell_id].a[axis] else -1
            out.append((other, axis, sign))
        out.sort()
        return out

    def cells_containing(self, x) -> list:
        return [c.id for c in self.cells if c.contains(x)]


def _facet_axis(r1: Rectangle, r2: Rectangle, tol: float = GEOM_TOL):
    """Axis of the common facet of two cells, or None.

    Two cells share a facet when they touch along exactly one axis and their
    intervals coincide on every other axis (grid cells never partially overlap).
    """
    touch_axis = None
    for k in range(r1.dim):
        if abs(r1.b[k] - r2.a[k]) <= tol or abs(r2.b[k] - r1.a[k]) <= tol:
            lo = max(r1.a[k], r2.a[k])
            hi = min(r1.b[k], r2.b[k])
            if hi - lo <= tol:  # touching, not overlapping, on this axis
                if touch_axis is not None:
                    return None
                touch_axis = k
                continue
        if abs(r1.a[k] - r2.a[k]) > tol or abs(r1.b[k] - r2.b[k]) > tol:
            return None
    return touch_axis


def build_partition(bounds: Rectangle, cuts, regions=None, walls=None) -> Partition:
    """Cut ``bounds`` along grid lines and attach labels and walls.

    ``cuts`` holds one strictly increasing list of interior cut positions per
    axis.  ``regions`` is a list of ``(label, Rectangle)`` pairs, each of which
    must be a union of whole cells.  ``walls`` is a list of Wall slabs lying on
    grid planes.
    """
    regions = regions or []
    walls = walls or []
    p = bounds.dim

    coords = []
    for k in range(p):
        axis_cuts = sorted(cuts[k]) if k < len(cuts) else []
        for c in axis_cuts:
            if not bounds.a[k] < c < bounds.b[k]:
                raise ValueError(f"cut {c} outside bounds on axis {k}")
        if len(set(axis_cuts)) != len(axis_cuts):
            raise ValueError(f"repeated cut on axis {k}")
        coords.append([bounds.a[k]] + axis_cuts + [bounds.b[k]])

    shape = tuple(len(c) - 1 for c in coords)
    cells = []
    for idx in np.ndindex(*shape):
        lo = tuple(coords[k][idx[k]] for k in range(p))
        hi = tuple(coords[k][idx[k] + 1] for k in range(p))
        cells.append(Rectangle(lo, hi, id=len(cells)))
    if not cells:
        raise EmptyPartition("partition has no cells")

    labels = {c.id: set() for c in cells}
    for label, region in regions:
        hit = False
        for cell in cells:
            if region.contains_rect(cell):
                labels[cell.id].add(label)
                hit = True
            elif region.overlaps_interior(cell):
                raise RegionMisaligned(
                    f"region {label!r} splits cell {cell.id}: its boundary "
                    "must lie on grid lines")
        if not hit:
            raise RegionMisaligned(f"region {label!r} covers no cell")
    labels = {cid: frozenset(props) for cid, props in labels.items()}

    adjacency = {}
    for i, ri in enumerate(cells):
        for j in range(i + 1, len(cells)):
            axis = _facet_axis(ri, cells[j])
            if axis is not None:
                adjacency[(i, j)] = axis

    blocked = set()
    for wall in walls:
        matched = False
        for (i, j), axis in adjacency.items():
            if axis != wall.axis:
                continue
            plane = cells[j].a[axis] if cells[j].a[axis] > cells[i].a[axis] else cells[i].a[axis]
            if abs(plane - wall.at) > GEOM_TOL:
                continue
            inside = all(
                wall.lo[k] - GEOM_TOL <= cells[i].a[k]
                and cells[i].b[k] <= wall.hi[k] + GEOM_TOL
                for k in range(p) if k != axis)
            if inside:
                blocked.add((i, j))
                matched = True
        if not matched:
            raise ValueError(
                f"wall on axis {wall.axis} at {wall.at} blocks no facet")

    return Partition(bounds=bounds, cells=cells, labels=labels,
                     adjacency=adjacency, blocked_facets=blocked)
