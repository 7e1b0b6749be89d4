"""Data-driven critical-region extraction.

Criticality is measured directly from solved motion-planning problems: a
cell's score is the fraction of solution paths that sweep through it. Cells
that many solutions share (doorways, corridor mouths) score high while being
rare under uniform sampling, which is exactly the property the downstream
abstraction needs from its anchor regions.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientData, NoFreeSpace, NoRegions, Unreachable
from .motion import MotionPlan, RrtParams, rrt_plan, shortcut
from .world import Configuration, OccupancyWorld, SWEEP_FRACTION, sample_free

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CriticalRegion:
    """A 4-connected blob of free cells with a usable interior point."""

    cells: frozenset
    centroid: Configuration
    score: float


def swept_cells(world: OccupancyWorld, plan: MotionPlan) -> set:
    """Cells visited by the plan's swept segments, at sub-cell resolution."""
    out: set = set()
    pts = plan.waypoints
    if len(pts) == 1:
        out.add(world.cell_of(pts[0].x, pts[0].y))
        return out
    for a, b in zip(pts, pts[1:]):
        dist = a.distance_to(b)
        n = max(1, int(math.ceil(dist / (SWEEP_FRACTION * world.cell_size))))
        for i in range(n + 1):
            t = i / n
            out.add(world.cell_of(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)))
    return out


def collect_solution_density(world: OccupancyWorld, n_goals: int, inits_per_goal: int,
                             rng: np.random.Generator,
                             params: RrtParams | None = None,
                             return_traces: bool = False):
    """Estimate per-cell solution density from random planning problems.

    Solves n_goals * inits_per_goal problems (random goal, random start);
    density[iy, ix] = (#solution traces visiting the cell) / (#solved).
    Unsolved problems are skipped. Raises InsufficientData when fewer than
    10% of the problems solve. With return_traces=True also returns the list
    of (start, goal, visited-cell set) per solved problem, for auditing.
    """
    if n_goals < 1 or inits_per_goal < 1:
        raise ValueError("n_goals and inits_per_goal must be >= 1")
    total = n_goals * inits_per_goal
    counts = np.zeros((world.height, world.width), dtype=np.int64)
    traces = []
    solved = 0
    for _ in range(n_goals):
        try:
            goal = sample_free(world, rng)
        except NoFreeSpace:
            break
        for _ in range(inits_per_goal):
            start = sample_free(world, rng)
            try:
                plan = shortcut(world, rrt_plan(world, start, goal, params, rng))
            except Unreachable:
                continue
            visited = swept_cells(world, plan)
            solved += 1
            for ix, iy in visited:
                counts[iy, ix] += 1
            if return_traces:
                traces.append((start, goal, visited))
    if solved < 0.1 * total:
        raise InsufficientData(f"solved {solved}/{total} problems")
    density = counts.astype(np.float64) / solved
    if return_traces:
        return density, traces
    return density


NEIGHBORS4 = ((1, 0), (-1, 0), (0, 1), (0, -1))


def connected_components(cells: set) -> list[set]:
    """4-connected components of a cell set, in deterministic order."""
    remaining = set(cells)
    comps = []
    for seed in sorted(cells):
        if seed not in remaining:
            continue
        comp = {seed}
        remaining.discard(seed)
        queue = deque([seed])
        while queue:
            cx, cy = queue.popleft()
            for dx, dy in NEIGHBORS4:
                nb = (cx + dx, cy + dy)
                if nb in remaining:
                    remaining.discard(nb)
                    comp.add(nb)
                    queue.append(nb)
        comps.append(comp)
    return comps


def _medoid(world: OccupancyWorld, comp: set) -> tuple[int, int]:
    """Component cell minimizing summed within-component BFS distance."""
    best = None
    best_sum = math.inf
    for cell in sorted(comp):
        dist = {cell: 0}
        queue = deque([cell])
        total = 0
        while queue:
            cur = queue.popleft()
            for dx, dy in NEIGHBORS4:
                nb = (cur[0] + dx, cur[1] + dy)
                if nb in comp and nb not in dist:
                    dist[nb] = dist[cur] + 1
                    total += dist[nb]
                    queue.append(nb)
        if total < best_sum:
            best_sum = total
            best = cell
    return best


def extract_critical_regions(world: OccupancyWorld, density: np.ndarray,
                             threshold: float | None = None,
                             min_cells: int = 3) -> list[CriticalRegion]:
    """Threshold the density grid into scored critical regions.

    threshold defaults to the 80th percentile of nonzero density. Components
    smaller than min_cells are dropped; each survivor gets its mean density as
    score and a centroid that is guaranteed free and inside the component
    (falls back to the component medoid when the geometric centroid is not).
    Result is sorted by descending score, ties by cell count then position.
    """
    if density.shape != (world.height, world.width):
        raise ValueError("density grid shape does not match the world")
    values = density[density > 0]
    if values.size == 0:
        raise NoRegions("density grid is identically zero")
    if threshold is None:
        threshold = float(np.percentile(values, 80.0))
    over = {(int(ix), int(iy))
            for iy, ix in zip(*np.nonzero(density > threshold))
            if world.cell_free((int(ix), int(iy)))}
    regions = []
    for comp in connected_components(over):
        if len(comp) < min_cells:
            continue
        score = float(np.mean([density[iy, ix] for ix, iy in comp]))
        xs = [world.cell_center(c)[0] for c in sorted(comp)]
        ys = [world.cell_center(c)[1] for c in sorted(comp)]
        cx, cy = float(np.mean(xs)), float(np.mean(ys))
        if world.cell_of(cx, cy) not in comp:
            cx, cy = world.cell_center(_medoid(world, comp))
        regions.append(CriticalRegion(cells=frozenset(comp),
                                      centroid=Configuration(cx, cy),
                                      score=score))
    if not regions:
        raise NoRegions(f"no component of >= {min_cells} cells above {threshold:g}")
    regions.sort(key=lambda r: (-r.score, -len(r.cells), sorted(r.cells)[0]))
    return regions
