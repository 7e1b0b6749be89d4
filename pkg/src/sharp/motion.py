"""Sampling-based motion planning: RRT, shortcutting, and a replanning executor.

Plans are geometric (x, y); the unicycle's heading is handled by the tracking
law when a plan is executed. ``mask``, where accepted, is a set of (ix, iy)
cells; sampling, steering, and shortcutting then never leave those cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import Unreachable
from .world import (Configuration, Kinematics, OccupancyWorld, SWEEP_FRACTION,
                    collision, sample_free, steer_toward, step)


@dataclass(frozen=True)
class RrtParams:
    max_iters: int = 4000
    step_len: float | None = None   # default: 2 * cell_size
    goal_bias: float = 0.1
    goal_tol: float | None = None   # default: 1 * cell_size

    def resolved(self, world: OccupancyWorld) -> "RrtParams":
        return RrtParams(
            max_iters=self.max_iters,
            step_len=self.step_len if self.step_len is not None else 2.0 * world.cell_size,
            goal_bias=self.goal_bias,
            goal_tol=self.goal_tol if self.goal_tol is not None else world.cell_size,
        )


@dataclass
class MotionPlan:
    """Ordered collision-free waypoints; consecutive segments are free."""

    waypoints: list[Configuration]

    def length(self) -> float:
        return sum(a.distance_to(b) for a, b in zip(self.waypoints, self.waypoints[1:]))


def _segment_ok(world: OccupancyWorld, a: tuple[float, float], b: tuple[float, float],
                mask: set | None) -> bool:
    """Collision-free and, when masked, cell-confined along the swept segment."""
    if mask is None:
        return world.segment_free(a, b)
    ax, ay = a
    bx, by = b
    dist = math.hypot(bx - ax, by - ay)
    n = max(1, int(math.ceil(dist / (SWEEP_FRACTION * world.cell_size))))
    for i in range(n + 1):
        t = i / n
        px, py = ax + t * (bx - ax), ay + t * (by - ay)
        if world.collision_xy(px, py) or world.cell_of(px, py) not in mask:
            return False
    return True


def _sample_point(world: OccupancyWorld, rng: np.random.Generator,
                  mask_cells: np.ndarray | None) -> tuple[float, float]:
    if mask_cells is None:
        c = sample_free(world, rng)
        return (c.x, c.y)
    ix, iy = mask_cells[int(rng.integers(len(mask_cells)))]
    jx, jy = rng.uniform(0.0, 1.0, size=2)
    return ((ix + jx) * world.cell_size, (iy + jy) * world.cell_size)


def rrt_plan(world: OccupancyWorld, x_i: Configuration, x_g: Configuration,
             params: RrtParams | None = None, rng: np.random.Generator | None = None,
             mask: set | None = None,
             work_counter: list | None = None) -> MotionPlan:
    """Plan a collision-free path from x_i to within goal_tol of x_g.

    With a mask, samples and swept segments are confined to the masked cells.
    Raises Unreachable when max_iters tree extensions fail to reach the goal.
    work_counter, when given, is a single-element list incremented once per
    extension attempt so callers can charge planning effort to a budget.
    """
    if rng is None:
        rng = np.random.default_rng()
    p = (params or RrtParams()).resolved(world)
    if collision(world, x_i) or collision(world, x_g):
        raise Unreachable("endpoint in collision")
    if x_i.distance_to(x_g) <= p.goal_tol:
        return MotionPlan([x_i])

    mask_cells = None
    if mask is not None:
        mask_cells = np.array(sorted(c for c in mask if world.cell_free(c)))
        if len(mask_cells) == 0:
            raise Unreachable("mask contains no free cell")

    nodes_x = np.empty(p.max_iters + 1)
    nodes_y = np.empty(p.max_iters + 1)
    parents = np.empty(p.max_iters + 1, dtype=np.int64)
    nodes_x[0], nodes_y[0] = x_i.x, x_i.y
    parents[0] = -1
    n = 1

    for _ in range(p.max_iters):
        if work_counter is not None:
            work_counter[0] += 1
        if rng.uniform() < p.goal_bias:
            sx, sy = x_g.x, x_g.y
        else:
            sx, sy = _sample_point(world, rng, mask_cells)
        d2 = (nodes_x[:n] - sx) ** 2 + (nodes_y[:n] - sy) ** 2
        near = int(np.argmin(d2))
        nx, ny = nodes_x[near], nodes_y[near]
        dist = math.hypot(sx - nx, sy - ny)
        if dist < 1e-12:
            continue
        scale = min(1.0, p.step_len / dist)
        tx, ty = nx + scale * (sx - nx), ny + scale * (sy - ny)
        if not _segment_ok(world, (nx, ny), (tx, ty), mask):
            continue
        nodes_x[n], nodes_y[n] = tx, ty
        parents[n] = near
        n += 1
        if math.hypot(tx - x_g.x, ty - x_g.y) <= p.goal_tol:
            waypoints = []
            i = n - 1
            while i >= 0:
                waypoints.append(Configuration(float(nodes_x[i]), float(nodes_y[i])))
                i = int(parents[i])
            waypoints.reverse()
            # keep the exact start configuration object (heading included)
            waypoints[0] = x_i
            return MotionPlan(waypoints)
    raise Unreachable(f"no path after {p.max_iters} iterations")


def shortcut(world: OccupancyWorld, plan: MotionPlan,
             mask: set | None = None) -> MotionPlan:
    """Greedy deterministic shortcutting; never lengthens, keeps endpoints."""
    pts = plan.waypoints
    if len(pts) <= 2:
        return MotionPlan(list(pts))
    out = [pts[0]]
    i = 0
    while i < len(pts) - 1:
        j = len(pts) - 1
        while j > i + 1 and not _segment_ok(world, pts[i].xy, pts[j].xy, mask):
            j -= 1
        out.append(pts[j])
        i = j
    return MotionPlan(out)


def resample_polyline(points: list[Configuration], spacing: float) -> list[Configuration]:
    """Subdivide each segment so consecutive points are strictly closer than spacing."""
    if len(points) <= 1:
        return list(points)
    out = [points[0]]
    for a, b in zip(points, points[1:]):
        seg = a.distance_to(b)
        n = int(math.floor(seg / spacing)) + 1
        for k in range(1, n + 1):
            t = k / n
            out.append(Configuration(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)))
    return out


@dataclass
class ExecutionResult:
    """Outcome of a (re)planning execution.

    ``steps`` counts simulator steps; ``work`` additionally charges one unit
    per planner tree extension, the desk-scale stand-in for the planning time
    a wall-clock timeout would consume. The budget limits ``work``.
    """

    success: bool
    steps: int
    trace: list[Configuration] = field(default_factory=list)
    replans: int = 0
    work: int = 0


def track_waypoint(world: OccupancyWorld, c: Configuration, target: tuple[float, float],
                   tol: float, rng: np.random.Generator, max_attempts: int,
                   budget_left: int, trace: list[Configuration]) -> tuple[Configuration, int]:
    """Step toward target until within tol, attempts or budget run out."""
    used = 0
    attempts = 0
    while (c.distance_to(target) > tol and attempts < max_attempts
           and used < budget_left):
        c = step(world, c, steer_toward(world, c, target), rng)
        trace.append(c)
        used += 1
        attempts += 1
    return c, used


def execute_with_replan(world: OccupancyWorld, x_i: Configuration, x_g: Configuration,
                        params: RrtParams | None = None, budget: int = 4000,
                        rng: np.random.Generator | None = None) -> ExecutionResult:
    """Plan with RRT and track waypoints under noise, replanning on a miss.

    Each simulator step and each planner tree extension consumes one unit of
    budget. Terminates with success once within goal_tol of x_g, or failure
    when the budget is exhausted or planning fails.
    """
    if rng is None:
        rng = np.random.default_rng()
    p = (params or RrtParams()).resolved(world)
    c = x_i
    trace = [c]
    steps = 0
    work = 0
    replans = 0
    first = True
    while work < budget:
        if c.distance_to(x_g) <= p.goal_tol:
            return ExecutionResult(True, steps, trace, replans, work)
        counter = [0]
        try:
            cap = RrtParams(max_iters=min(p.max_iters, budget - work),
                            step_len=p.step_len, goal_bias=p.goal_bias,
                            goal_tol=p.goal_tol)
            plan = shortcut(world, rrt_plan(world, c, x_g, cap, rng,
                                            work_counter=counter))
        except Unreachable:
            work += counter[0]
            return ExecutionResult(False, steps, trace, replans, work)
        work += counter[0]
        if not first:
            replans += 1
        first = False
        wp_tol = 0.5 * world.cell_size
        step_scale = (world.max_step if world.kinematics is Kinematics.HOLONOMIC
                      else world.v_max)
        for k, wp in enumerate(plan.waypoints[1:], start=1):
            tol = p.goal_tol if k == len(plan.waypoints) - 1 else wp_tol
            est = int(math.ceil(wp.distance_to(c) / max(step_scale, 1e-9)))
            attempts = 2 * est + 10  # slack for heading alignment and noise
            c, used = track_waypoint(world, c, wp.xy, tol, rng, attempts,
                                     budget - work, trace)
            steps += used
            work += used
            if work >= budget:
                break
    success = c.distance_to(x_g) <= p.goal_tol
    return ExecutionResult(success, steps, trace, replans, work)
