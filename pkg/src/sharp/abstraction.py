"""Region Voronoi partition of free space and its derived threshold regions.

Every free cell is assigned to the critical region with the smallest geodesic
(obstacle-aware, 4-neighbor, cell_size-weighted) distance; ties go to the
lower region id. Geodesic distance keeps each partition cell connected, which
straight-line distance cannot guarantee across walls. Cells no region can
reach geodesically stay unassigned (id NO_STATE).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import (EmptyRegion, InCollision, NotNeighbors, TooFewRegions,
                     UnassignedCell)
from .regions import NEIGHBORS4, CriticalRegion, connected_components
from .world import Configuration, OccupancyWorld, collision

NO_STATE = -1


@dataclass(frozen=True)
class Region:
    """A nonempty set of free cells with a representative point inside it."""

    cells: frozenset
    representative: Configuration


@dataclass(frozen=True)
class AbstractState:
    id: int
    anchor: CriticalRegion
    cells: frozenset


@dataclass
class RegionVoronoi:
    """Immutable partition of free space into abstract states.

    assignment[iy, ix] holds the owning state id for free cells, NO_STATE for
    obstacles and for free cells unreachable from every anchor region.
    """

    world: OccupancyWorld
    states: list[AbstractState]
    assignment: np.ndarray
    adjacency: frozenset = field(default_factory=frozenset)  # of (i, j) pairs, i < j

    def state_id_of_cell(self, cell) -> int:
        ix, iy = cell
        return int(self.assignment[iy, ix])

    def state_of(self, c: Configuration) -> AbstractState:
        """Abstract state containing a free configuration."""
        if collision(self.world, c):
            raise InCollision(f"({c.x:.3f}, {c.y:.3f}) is not in free space")
        sid = self.state_id_of_cell(self.world.cell_of(c.x, c.y))
        if sid == NO_STATE:
            raise UnassignedCell("no anchor region reaches this cell geodesically")
        return self.states[sid]

    def adjacent(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.adjacency

    def neighbors(self, i: int) -> list[int]:
        out = [b if a == i else a for a, b in self.adjacency if i in (a, b)]
        return sorted(out)


def build_region_voronoi(world: OccupancyWorld,
                         regions: list[CriticalRegion]) -> RegionVoronoi:
    """Partition free space among the given anchor regions.

    Layered multi-source BFS: all sources start at distance 0; each layer's
    claims are resolved to the lowest claiming region id before expanding, so
    the result equals the per-region single-source argmin with min-id ties.
    """
    if len(regions) < 2:
        raise TooFewRegions(f"need >= 2 regions, got {len(regions)}")
    assignment = np.full((world.height, world.width), NO_STATE, dtype=np.int64)
    frontier = []
    for rid, region in enumerate(regions):
        for cell in sorted(region.cells):
            ix, iy = cell
            if assignment[iy, ix] != NO_STATE:
                raise ValueError("anchor regions must be disjoint")
            assignment[iy, ix] = rid
            frontier.append(cell)
    while frontier:
        claims: dict = {}
        for cx, cy in frontier:
            rid = int(assignment[cy, cx])
            for dx, dy in NEIGHBORS4:
                nb = (cx + dx, cy + dy)
                if not world.cell_free(nb) or assignment[nb[1], nb[0]] != NO_STATE:
                    continue
                prev = claims.get(nb)
                if prev is None or rid < prev:
                    claims[nb] = rid
        for (ix, iy), rid in claims.items():
            assignment[iy, ix] = rid
        frontier = sorted(claims)

    cells_per_state: list[set] = [set() for _ in regions]
    for iy in range(world.height):
        for ix in range(world.width):
            rid = int(assignment[iy, ix])
            if rid != NO_STATE:
                cells_per_state[rid].add((ix, iy))
    states = [AbstractState(id=rid, anchor=regions[rid], cells=frozenset(cells))
              for rid, cells in enumerate(cells_per_state)]

    pairs = set()
    for iy in range(world.height):
        for ix in range(world.width):
            a = int(assignment[iy, ix])
            if a == NO_STATE:
                continue
            for nb in ((ix + 1, iy), (ix, iy + 1)):
                if world.in_bounds(nb):
                    b = int(assignment[nb[1], nb[0]])
                    if b != NO_STATE and b != a:
                        pairs.add((min(a, b), max(a, b)))
    return RegionVoronoi(world=world, states=states, assignment=assignment,
                         adjacency=frozenset(pairs))


def geodesic_distances(world: OccupancyWorld, sources: set) -> dict:
    """Single-source-set BFS distances over free cells (meters)."""
    dist = {}
    queue = deque()
    for cell in sorted(sources):
        if world.cell_free(cell):
            dist[cell] = 0.0
            queue.append(cell)
    while queue:
        cur = queue.popleft()
        for dx, dy in NEIGHBORS4:
            nb = (cur[0] + dx, cur[1] + dy)
            if world.cell_free(nb) and nb not in dist:
                dist[nb] = dist[cur] + world.cell_size
                queue.append(nb)
    return dist


def centroid_region(rbvd: RegionVoronoi, state: AbstractState, t: float) -> Region:
    """Cells of the state within Euclidean t of its anchor centroid."""
    if t <= 0:
        raise EmptyRegion("threshold must be positive")
    center = state.anchor.centroid
    world = rbvd.world
    cells = frozenset(c for c in state.cells
                      if center.distance_to(world.cell_center(c)) < t)
    if not cells:
        raise EmptyRegion(f"no cell of state {state.id} within {t:g} of its centroid")
    return Region(cells=cells, representative=center)


def _border_midpoint(rbvd: RegionVoronoi, si: AbstractState,
                     sj: AbstractState) -> Configuration:
    """Midpoint of the geometrically closest border-cell pair, canonical order."""
    world = rbvd.world
    border_i = [c for c in sorted(si.cells)
                if any((c[0] + dx, c[1] + dy) in sj.cells for dx, dy in NEIGHBORS4)]
    border_j = [c for c in sorted(sj.cells)
                if any((c[0] + dx, c[1] + dy) in si.cells for dx, dy in NEIGHBORS4)]
    best = None
    for a in border_i:
        ax, ay = world.cell_center(a)
        for b in border_j:
            bx, by = world.cell_center(b)
            key = (math.hypot(ax - bx, ay - by), min(a, b), max(a, b))
            if best is None or key < best[0]:
                best = (key, ((ax + bx) / 2.0, (ay + by) / 2.0))
    return Configuration(*best[1])


def interface_region(rbvd: RegionVoronoi, i: int, j: int, t: float) -> Region:
    """Threshold ball, within the two states, around their shared border point.

    Symmetric in (i, j): both orders return identical cells and representative.
    """
    if not rbvd.adjacent(i, j):
        raise NotNeighbors(f"states {i} and {j} share no boundary")
    if t <= 0:
        raise EmptyRegion("threshold must be positive")
    si, sj = rbvd.states[min(i, j)], rbvd.states[max(i, j)]
    p = _border_midpoint(rbvd, si, sj)
    world = rbvd.world
    cells = frozenset(c for c in (si.cells | sj.cells)
                      if p.distance_to(world.cell_center(c)) < t)
    if not cells:
        raise EmptyRegion(f"no cell of states ({i}, {j}) within {t:g} of the border")
    return Region(cells=cells, representative=p)


def render_assignment(rbvd: RegionVoronoi) -> str:
    """Text grid of the partition (top row first): state ids, '#', '.'=unassigned."""
    digits = "0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    world = rbvd.world
    rows = []
    for row in range(world.height):
        iy = world.height - 1 - row
        chars = []
        for ix in range(world.width):
            if world.occupancy[iy, ix]:
                chars.append("#")
            else:
                sid = int(rbvd.assignment[iy, ix])
                chars.append("." if sid == NO_STATE else digits[sid % len(digits)])
        rows.append("".join(chars))
    return "\n".join(rows) + "\n"
