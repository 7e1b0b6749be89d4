"""Pipeline orchestration: abstract search over options, training with a
policy cache, rollout-based cost updates, and composed-policy execution.

A solve maps the endpoints into abstract states, searches the option graph,
trains (or reuses) one policy per option plus entry/exit bridge policies, and
chains everything into a finite-state controller whose stage advances when
the robot enters the next option's initiation region.
"""

from __future__ import annotations

import hashlib
import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .abstraction import Region, RegionVoronoi, centroid_region, interface_region
from .errors import (DivergedTraining, EmptyLibrary, GuideUnreachable,
                     NoAbstractPath, NoSuccessfulRollouts)
from .learn import TrainConfig, train_option_policy
from .motion import RrtParams
from .options import (OptionGuide, OptionKind, OptionSpec, build_guide,
                      compute_guide_path)
from .seeding import derive_rng, spawn
from .world import Configuration, OccupancyWorld, collision, step, world_hash

ENTRY = "__entry__"
EXIT = "__exit__"


@dataclass
class OptionLibrary:
    """Synthesized options for one world/kind, bound to their partition.

    guide_seed pins the guide construction stream per option, so a guide (and
    its fingerprint, which keys the policy cache) is identical every time it
    is recomputed for this library.
    """

    kind: str
    threshold: float
    guide_spacing: float
    guide_seed: int
    options: list
    rbvd: RegionVoronoi

    def by_id(self, option_id: str) -> OptionSpec:
        for o in self.options:
            if o.id == option_id:
                return o
        raise KeyError(option_id)


def guide_fingerprint(guide: OptionGuide) -> str:
    h = hashlib.sha256()
    for p in guide.points:
        h.update(f"{p.x:.9f},{p.y:.9f};".encode())
    h.update(f"{guide.terminal_reward:.9f};{guide.penalty_reward:.9f};".encode())
    h.update(",".join(str(s) for s in sorted(guide.allowed_states)).encode())
    return h.hexdigest()[:16]


# -- abstract graph ------------------------------------------------------------------


@dataclass
class AbstractGraph:
    """Search graph whose edges are options.

    Centroid libraries give one node per abstract state; interface libraries
    give one node per ordered adjacent state pair, and queries splice in
    virtual entry/exit nodes for the start and goal states.
    """

    kind: str
    edges: dict            # node -> list of (dst_node, OptionSpec)
    positions: dict        # node -> (x, y) used by the heuristic
    state_positions: dict  # state id -> anchor centroid (x, y)

    def nodes(self):
        return sorted(self.edges.keys(), key=str)


def build_abstract_graph(rbvd: RegionVoronoi, options: list) -> AbstractGraph:
    if not options:
        raise EmptyLibrary("cannot build a graph from zero options")
    kinds = {o.kind for o in options}
    if len(kinds) != 1:
        raise ValueError("option library mixes kinds")
    kind = kinds.pop()
    edges: dict = {}
    positions: dict = {}
    state_positions = {s.id: (s.anchor.centroid.x, s.anchor.centroid.y)
                       for s in rbvd.states}
    for o in sorted(options, key=lambda o: o.id):
        if kind == OptionKind.CENTROID:
            src, dst = o.states
        else:
            src, dst = o.states[:2], o.states[1:]
        edges.setdefault(src, []).append((dst, o))
        edges.setdefault(dst, edges.get(dst, []))
        positions[src] = (o.initiation.representative.x, o.initiation.representative.y)
        positions[dst] = (o.termination.representative.x, o.termination.representative.y)
    return AbstractGraph(kind=kind, edges=edges, positions=positions,
                         state_positions=state_positions)


def astar(edges, start, goal, heuristic):
    """Generic A*: edges maps node -> [(dst, cost, payload)]. Returns
    (cost, [payloads]) or None. Deterministic tie-breaking by push order."""
    counter = 0
    open_heap: list = [(heuristic(start), counter, start)]
    g = {start: 0.0}
    parent: dict = {}
    closed: set = set()
    while open_heap:
        f, _, node = heapq.heappop(open_heap)
        if node in closed:
            continue
        if node == goal:
            payloads = []
            while node in parent:
                node, payload = parent[node]
                payloads.append(payload)
            return g[goal], payloads[::-1]
        closed.add(node)
        for dst, cost, payload in edges.get(node, ()):
            cand = g[node] + cost
            if cand < g.get(dst, math.inf) - 1e-15:
                g[dst] = cand
                parent[dst] = (node, payload)
                counter += 1
                heapq.heappush(open_heap, (cand + heuristic(dst), counter, dst))
    return None


def dijkstra_cost(edges, start, goal):
    """Oracle shortest-path cost with zero heuristic."""
    res = astar(edges, start, goal, lambda n: 0.0)
    return None if res is None else res[0]


def _query_edges(graph: AbstractGraph, s_start: int, s_goal: int,
                 goal_xy: tuple) -> tuple[dict, object, object]:
    """Edge table in (dst, cost, payload) form, with virtual nodes for
    interface graphs; payload None marks virtual edges."""
    edges: dict = {}
    for node, lst in graph.edges.items():
        edges[node] = [(dst, o.cost, o) for dst, o in lst]
    if graph.kind == OptionKind.CENTROID:
        return edges, s_start, s_goal
    spos = graph.state_positions
    entry: list = []
    for node in graph.edges:
        if node[0] == s_start:
            d = math.dist(spos[s_start], graph.positions[node])
            entry.append((node, max(d, 1e-9), None))
        if node[1] == s_goal:
            d = math.dist(graph.positions[node], goal_xy)
            edges.setdefault(node, []).append((EXIT, max(d, 1e-9), None))
    edges[ENTRY] = entry
    edges.setdefault(EXIT, [])
    return edges, ENTRY, EXIT


def _admissible_scale(edges: dict, positions) -> float:
    """min over edges of cost / endpoint distance keeps h * distance a lower
    bound on each edge cost; fresh libraries have ratio 1 everywhere."""
    scale = 1.0
    for node, lst in edges.items():
        for dst, cost, payload in lst:
            a, b = positions(node), positions(dst)
            if a is None or b is None:
                continue
            d = math.dist(a, b)
            if d > 1e-12:
                scale = min(scale, cost / d)
    return scale


def plan_abstract(graph: AbstractGraph, s_start: int, s_goal: int,
                  goal_cfg: Configuration) -> list:
    """Cost-minimal option sequence from s_start to s_goal under current costs."""
    goal_xy = (goal_cfg.x, goal_cfg.y)
    if graph.kind == OptionKind.CENTROID and s_start == s_goal:
        return []
    if graph.kind == OptionKind.INTERFACE and s_start == s_goal:
        return []
    edges, start, goal = _query_edges(graph, s_start, s_goal, goal_xy)
    if graph.kind == OptionKind.CENTROID and (
            s_start not in edges or s_goal not in graph.edges):
        raise NoAbstractPath(f"state {s_start} or {s_goal} has no options")

    def pos(node):
        if node == ENTRY:
            return graph.state_positions.get(s_start)
        if node == EXIT:
            return goal_xy
        return graph.positions.get(node)

    scale = _admissible_scale(edges, pos)

    def h(node):
        p = pos(node)
        return 0.0 if p is None else scale * math.dist(p, goal_xy)

    res = astar(edges, start, goal, h)
    if res is None:
        raise NoAbstractPath(f"no option path from state {s_start} to {s_goal}")
    _, payloads = res
    return [p for p in payloads if p is not None]


def update_option_cost(option: OptionSpec, traces) -> float:
    """Replace the Euclidean cost prior with the mean rollout step count."""
    counts = list(traces)
    if not counts:
        raise NoSuccessfulRollouts(f"option {option.id} has no successful rollout")
    option.cost = max(float(np.mean(counts)), 1e-6)
    option.cost_updated = True
    return option.cost


# -- policy cache --------------------------------------------------------------------


@dataclass
class CacheEntry:
    policy: object
    cost: float
    training_steps: int


class PolicyCache:
    """Keyed by (world hash, option id, guide fingerprint); in-memory store
    with optional persistence handled by the artifacts module."""

    def __init__(self):
        self._store: dict = {}

    def get(self, key):
        return self._store.get(key)

    def put(self, key, entry: CacheEntry):
        self._store[key] = entry

    def __len__(self):
        return len(self._store)

    def items(self):
        return self._store.items()


# -- composed policy -----------------------------------------------------------------


@dataclass
class Stage:
    label: str
    policy: object
    advance_cells: frozenset    # controller advances on entering these cells
    option: OptionSpec | None = None


@dataclass
class ComposedPolicy:
    """Finite-state controller: bridge in, option stages, bridge out."""

    stages: list
    x_start: Configuration
    x_goal: Configuration
    goal_tol: float

    def option_stages(self):
        return [s for s in self.stages if s.option is not None]


@dataclass
class ExecutionTrace:
    configurations: list
    stage_steps: list
    outcome: str                 # "reached_goal" | "stage_timeout" | "budget"
    timeout_stage: int | None = None

    @property
    def total_steps(self) -> int:
        return sum(self.stage_steps)


def execute_composed(world: OccupancyWorld, composed: ComposedPolicy,
                     per_stage_limit: int, rng: np.random.Generator,
                     total_budget: int | None = None) -> ExecutionTrace:
    """Run the stage automaton; the index only ever advances.

    Every stage except the last hands over on cell membership of the next
    initiation region; the final bridge runs until the goal tolerance is met.
    """
    c = composed.x_start
    configs = [c]
    stage_steps = []
    total = 0
    for idx, stage in enumerate(composed.stages):
        last = idx == len(composed.stages) - 1
        if hasattr(stage.policy, "reset"):
            stage.policy.reset()
        used = 0

        def done() -> bool:
            if last:
                return c.distance_to(composed.x_goal) <= composed.goal_tol
            return world.cell_of(c.x, c.y) in stage.advance_cells

        while not done():
            if used >= per_stage_limit:
                stage_steps.append(used)
                return ExecutionTrace(configs, stage_steps, "stage_timeout", idx)
            if total_budget is not None and total >= total_budget:
                stage_steps.append(used)
                return ExecutionTrace(configs, stage_steps, "budget", idx)
            a = stage.policy.act(world, c, greedy=True)
            c = step(world, c, a, rng)
            configs.append(c)
            used += 1
            total += 1
        stage_steps.append(used)
    return ExecutionTrace(configs, stage_steps, "reached_goal")


# -- solve ---------------------------------------------------------------------------


@dataclass
class SolveConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    goal_tol: float | None = None        # default: 1 cell
    guide_params: RrtParams | None = None

    def resolved_goal_tol(self, world: OccupancyWorld) -> float:
        return self.goal_tol if self.goal_tol is not None else world.cell_size


@dataclass
class SolveStats:
    plan_option_ids: list = field(default_factory=list)
    options_trained: int = 0
    options_reused: int = 0
    training_steps: int = 0          # new environment steps spent training
    bridge_steps: int = 0
    trained_ids: list = field(default_factory=list)
    reused_ids: list = field(default_factory=list)


def _src_span(option: OptionSpec) -> tuple:
    return option.states[:2] if option.kind == OptionKind.INTERFACE else option.states[:1]


def _dst_span(option: OptionSpec) -> tuple:
    return option.states[1:] if option.kind == OptionKind.INTERFACE else option.states[1:2]


def _goal_region(world: OccupancyWorld, x_g: Configuration, tol: float) -> Region:
    cells = frozenset(c for c in map(tuple, world.free_cells())
                      if x_g.distance_to(world.cell_center(c)) < tol)
    if not cells:
        cells = frozenset([world.cell_of(x_g.x, x_g.y)])
    return Region(cells=cells, representative=x_g)


def _middle_region(rbvd: RegionVoronoi, library: OptionLibrary, s_start: int,
                   s_goal: int) -> Region:
    """Waypoint region for plans with no options (same or adjacent states)."""
    if s_start == s_goal:
        return centroid_region(rbvd, rbvd.states[s_start], library.threshold)
    return interface_region(rbvd, s_start, s_goal, library.threshold)


def _train_guide(world, rbvd, guide, cfg: SolveConfig, rng):
    policy, stats = train_option_policy(world, guide, rbvd, cfg.train, rng)
    if stats.diverged:
        raise DivergedTraining(f"training diverged for {guide.option_id}")
    return policy, stats


def sharp_solve(world: OccupancyWorld, x_i: Configuration, x_g: Configuration,
                library: OptionLibrary, cache: PolicyCache, cfg: SolveConfig,
                rng: np.random.Generator) -> tuple[ComposedPolicy, SolveStats]:
    """Plan at the abstract level, train or reuse option policies, compose.

    The entry bridge takes the robot from x_i into the first initiation set;
    each option policy is fetched from the cache when its (world, option,
    guide) key matches, otherwise trained and its cost replaced by the mean
    successful rollout length; the exit bridge runs from the last termination
    set to the goal tolerance ball.
    """
    rbvd = library.rbvd
    whash = world_hash(world)
    s_start = rbvd.state_of(x_i).id
    s_goal = rbvd.state_of(x_g).id
    stats = SolveStats()
    goal_tol = cfg.resolved_goal_tol(world)

    if s_start == s_goal or (
            library.kind == OptionKind.INTERFACE and rbvd.adjacent(s_start, s_goal)):
        plan: list = []
    else:
        graph = build_abstract_graph(rbvd, library.options)
        plan = plan_abstract(graph, s_start, s_goal, x_g)
    stats.plan_option_ids = [o.id for o in plan]

    # entry bridge target and allowed states
    if plan:
        first = plan[0]
        entry_target = first.initiation
        entry_allowed = frozenset({s_start} | set(_src_span(first)))
    else:
        middle = _middle_region(rbvd, library, s_start, s_goal)
        entry_target = middle
        entry_allowed = frozenset({s_start, s_goal})
    start_region = Region(cells=frozenset([world.cell_of(x_i.x, x_i.y)]),
                          representative=x_i)
    bridge_rng = spawn(rng)
    entry_guide = build_guide(world, rbvd, "bridge-in", x_i, start_region,
                              entry_target, entry_allowed, library.guide_spacing,
                              bridge_rng, cfg.guide_params)
    entry_policy, entry_stats = _train_guide(world, rbvd, entry_guide, cfg, spawn(rng))
    stats.bridge_steps += entry_stats.steps
    stats.training_steps += entry_stats.steps

    stages = [Stage(label="bridge_in", policy=entry_policy,
                    advance_cells=entry_target.cells)]

    for i, option in enumerate(plan):
        if i > 0 and plan[i - 1].termination.cells != option.initiation.cells:
            raise AssertionError(
                f"options {plan[i-1].id} -> {option.id} do not chain")
        guide_rng = derive_rng("guide", whash, library.guide_seed, option.id)
        try:
            guide = compute_guide_path(world, rbvd, option, library.guide_spacing,
                                       guide_rng, cfg.guide_params)
        except GuideUnreachable as e:
            raise GuideUnreachable(f"option {option.id}: {e}") from e
        key = (whash, option.id, guide_fingerprint(guide))
        entry = cache.get(key)
        if entry is not None:
            option.policy = entry.policy
            option.cost = entry.cost
            option.cost_updated = True
            stats.options_reused += 1
            stats.reused_ids.append(option.id)
        else:
            try:
                policy, tstats = _train_guide(world, rbvd, guide, cfg, spawn(rng))
            except DivergedTraining as e:
                raise DivergedTraining(f"option {option.id}: {e}") from e
            option.policy = policy
            stats.options_trained += 1
            stats.trained_ids.append(option.id)
            stats.training_steps += tstats.steps
            if tstats.final_success_steps:
                update_option_cost(option, tstats.final_success_steps)
            cache.put(key, CacheEntry(policy=policy, cost=option.cost,
                                      training_steps=tstats.steps))
        next_cells = (plan[i + 1].initiation.cells if i + 1 < len(plan)
                      else option.termination.cells)
        stages.append(Stage(label=option.id, policy=option.policy,
                            advance_cells=next_cells, option=option))

    # exit bridge from the last handoff region to the goal ball
    if plan:
        exit_start_region = plan[-1].termination
        exit_allowed = frozenset({s_goal} | set(_dst_span(plan[-1])))
    else:
        exit_start_region = entry_target
        exit_allowed = entry_allowed
    goal_region = _goal_region(world, x_g, goal_tol)
    exit_guide = build_guide(world, rbvd, "bridge-out",
                             exit_start_region.representative, exit_start_region,
                             goal_region, exit_allowed, library.guide_spacing,
                             spawn(rng), cfg.guide_params)
    exit_policy, exit_stats = _train_guide(world, rbvd, exit_guide, cfg, spawn(rng))
    stats.bridge_steps += exit_stats.steps
    stats.training_steps += exit_stats.steps
    stages.append(Stage(label="bridge_out", policy=exit_policy,
                        advance_cells=goal_region.cells))

    composed = ComposedPolicy(stages=stages, x_start=x_i, x_goal=x_g,
                              goal_tol=goal_tol)
    return composed, stats
