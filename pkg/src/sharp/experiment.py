"""Experiment orchestration: the multi-problem evaluation protocol.

One experiment builds (or loads) the abstraction and option library once per
world, then for each seed solves the problem list in order sharing a policy
cache, evaluates every composed policy with seeded executions, and runs the
enabled baselines under matched budgets. Everything is derived from explicit
seeds, so identical specs produce byte-identical result files.
"""

from __future__ import annotations

import copy
import csv
import io
import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import artifacts
from .abstraction import RegionVoronoi, build_region_voronoi
from .errors import ParseError, SharpError
from .learn import TrainConfig, train_monolithic_policy
from .motion import RrtParams, execute_with_replan
from .options import synth_options
from .planner import (ComposedPolicy, OptionLibrary, PolicyCache, SolveConfig,
                      execute_composed, sharp_solve)
from .regions import collect_solution_density, extract_critical_regions
from .seeding import derive_rng
from .world import (Configuration, Kinematics, OccupancyWorld, parse_sidecar,
                    world_from_text, world_hash)
from .worlds import RECIPES, WorldRecipe

log = logging.getLogger(__name__)

CSV_HEADER = ["env", "problem", "method", "seed", "success_rate", "mean_steps",
              "training_steps", "options_trained", "options_reused", "error"]


@dataclass(frozen=True)
class AbstractionParams:
    """Settings for the density-to-library front end."""

    n_goals: int = 30
    inits_per_goal: int = 10
    percentile: float = 96.0
    threshold: float | None = None       # absolute override of the percentile rule
    min_cells: int = 3
    max_regions: int | None = None
    region_threshold: float | None = None  # endpoint ball radius; default 2 cells
    guide_spacing: float | None = None     # default 1 cell
    seed: int = 0


def desk_train_config() -> TrainConfig:
    """Training settings sized for the bundled desk worlds."""
    return TrainConfig(max_steps=30_000, eval_every=2_000, stop_avg_reward=800.0,
                       hidden=(64, 64), batch_size=128, actor_lr=2e-3,
                       critic_lr=2e-3, entropy_coef=0.1, start_steps=1_000,
                       update_every=2, updates_per_round=1, reward_scale=0.01,
                       episode_limit=150)


def smoke_train_config() -> TrainConfig:
    """Cross-entropy smoke settings: exercises the full pipeline cheaply."""
    return TrainConfig(learner="cem", max_steps=2_000, eval_every=1_000,
                       eval_episodes=5, episode_limit=60, cem_population=6,
                       cem_iters=2, cem_episodes=1, cem_hidden=(8, 8))


def build_library(world: OccupancyWorld, kind: str,
                  params: AbstractionParams) -> tuple[np.ndarray, OptionLibrary]:
    """Density -> critical regions -> partition -> option endpoints."""
    rng = derive_rng("abstraction", world_hash(world), params.seed)
    density = collect_solution_density(world, params.n_goals,
                                       params.inits_per_goal, rng)
    threshold = params.threshold
    if threshold is None:
        vals = density[density > 0]
        threshold = float(np.percentile(vals, params.percentile))
    regions = extract_critical_regions(world, density, threshold=threshold,
                                       min_cells=params.min_cells)
    if params.max_regions is not None:
        regions = regions[:params.max_regions]
    rbvd = build_region_voronoi(world, regions)
    t = params.region_threshold
    if t is None:
        t = 2.0 * world.cell_size
    spacing = params.guide_spacing
    if spacing is None:
        spacing = world.cell_size
    options = synth_options(rbvd, kind, t)
    library = OptionLibrary(kind=kind, threshold=t, guide_spacing=spacing,
                            guide_seed=params.seed, options=options, rbvd=rbvd)
    return density, library


def load_or_build_library(world: OccupancyWorld, kind: str,
                          params: AbstractionParams,
                          cache_dir: str | None) -> tuple[np.ndarray | None, OptionLibrary]:
    """Abstraction construction is cached per (world, kind) when possible."""
    whash = world_hash(world)
    if cache_dir is not None:
        path = os.path.join(artifacts.cache_dir_for(cache_dir, whash),
                            f"library_{kind}.json")
        if os.path.exists(path):
            payload = artifacts.load_artifact(path, "option-library", whash)
            return None, artifacts.library_from_payload(payload, world)
    density, library = build_library(world, kind, params)
    if cache_dir is not None:
        base = artifacts.cache_dir_for(cache_dir, whash)
        os.makedirs(base, exist_ok=True)
        artifacts.save_artifact(os.path.join(base, "density.json"), "density-grid",
                                whash, artifacts.density_payload(density))
        artifacts.save_artifact(os.path.join(base, f"library_{kind}.json"),
                                "option-library", whash,
                                artifacts.library_payload(library))
    return density, library


# -- experiment specification ---------------------------------------------------------


@dataclass
class ExperimentSpec:
    name: str
    world: OccupancyWorld
    kind: str
    problems: list                      # (Configuration, Configuration) pairs
    seeds: list = field(default_factory=lambda: [0])
    abstraction: AbstractionParams = field(default_factory=AbstractionParams)
    train: TrainConfig = field(default_factory=desk_train_config)
    stage_limit: int = 400
    eval_episodes: int = 20
    goal_tol: float | None = None
    rrt: RrtParams = field(default_factory=RrtParams)
    run_rrt_replan: bool = True
    run_monolithic: bool = True
    monolithic_all_seeds: bool = False  # default: flat baseline on first seed only

    def __post_init__(self):
        if not self.problems:
            raise ValueError("an experiment needs at least one problem")


def spec_for_bundled(name: str, kind: str = "centroid",
                     seeds=(0,), train: TrainConfig | None = None) -> ExperimentSpec:
    rec = RECIPES[name]
    return ExperimentSpec(
        name=name, world=rec.build(), kind=kind,
        problems=rec.problem_configurations(), seeds=list(seeds),
        abstraction=AbstractionParams(n_goals=rec.density_goals,
                                      inits_per_goal=rec.density_inits,
                                      percentile=rec.density_percentile,
                                      max_regions=rec.max_regions,
                                      region_threshold=rec.region_threshold),
        train=train if train is not None else desk_train_config())


# -- result rows -----------------------------------------------------------------------


@dataclass
class ResultRow:
    env: str
    problem: int
    method: str
    seed: int
    success_rate: float
    mean_steps: float
    training_steps: int
    options_trained: int
    options_reused: int
    error: str = ""

    def as_csv(self) -> list:
        return [self.env, str(self.problem), self.method, str(self.seed),
                f"{self.success_rate:.4f}", f"{self.mean_steps:.2f}",
                str(self.training_steps), str(self.options_trained),
                str(self.options_reused), self.error]


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(row.as_csv())
    return buf.getvalue()


def write_rows(rows, path: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(rows_to_csv(rows))


# -- the protocol ----------------------------------------------------------------------


def _evaluate_composed(world, composed: ComposedPolicy, episodes: int,
                       stage_limit: int, seed_key) -> tuple[float, float]:
    wins = 0
    steps = []
    for ep in range(episodes):
        trace = execute_composed(world, composed, stage_limit,
                                 derive_rng("exec", *seed_key, ep))
        wins += trace.outcome == "reached_goal"
        steps.append(trace.total_steps)
    return wins / episodes, float(np.mean(steps))


def run_experiment(spec: ExperimentSpec, cache_dir: str | None = None) -> list:
    """Execute the full protocol; returns one ResultRow per (problem, method,
    seed), with per-problem failures recorded as zero-success rows."""
    world = spec.world
    _, library0 = load_or_build_library(world, spec.kind, spec.abstraction,
                                        cache_dir)
    rows = []
    for seed in spec.seeds:
        library = copy.deepcopy(library0)   # learned costs stay seed-local
        cache = PolicyCache()
        solve_cfg = SolveConfig(train=spec.train, goal_tol=spec.goal_tol)
        for pi, (x_i, x_g) in enumerate(spec.problems, start=1):
            budget = None
            try:
                composed, stats = sharp_solve(world, x_i, x_g, library, cache,
                                              solve_cfg, derive_rng(
                                                  "solve", spec.name, seed, pi))
                success, mean_steps = _evaluate_composed(
                    world, composed, spec.eval_episodes, spec.stage_limit,
                    (spec.name, seed, pi))
                budget = spec.stage_limit * len(composed.stages)
                rows.append(ResultRow(spec.name, pi, "sharp", seed, success,
                                      mean_steps, stats.training_steps,
                                      stats.options_trained, stats.options_reused))
                sharp_training_steps = stats.training_steps
            except SharpError as e:
                log.warning("sharp failed on %s P%d seed %d: %s", spec.name, pi,
                            seed, e)
                rows.append(ResultRow(spec.name, pi, "sharp", seed, 0.0, 0.0, 0,
                                      0, 0, error=type(e).__name__))
                sharp_training_steps = spec.train.max_steps
            if budget is None:
                budget = spec.stage_limit * 4
            if spec.run_rrt_replan:
                wins = 0
                steps = []
                for ep in range(spec.eval_episodes):
                    res = execute_with_replan(world, x_i, x_g, spec.rrt, budget,
                                              derive_rng("rrt", spec.name, seed,
                                                         pi, ep))
                    wins += res.success
                    steps.append(res.steps)
                rows.append(ResultRow(spec.name, pi, "rrt_replan", seed,
                                      wins / spec.eval_episodes,
                                      float(np.mean(steps)), 0, 0, 0))
            if spec.run_monolithic and (spec.monolithic_all_seeds
                                        or seed == spec.seeds[0]):
                rows.append(_monolithic_row(spec, x_i, x_g, pi, seed,
                                            sharp_training_steps))
        if cache_dir is not None:
            artifacts.save_cache(cache_dir, world_hash(world), cache)
    return rows


def _monolithic_row(spec: ExperimentSpec, x_i, x_g, pi: int, seed: int,
                    budget_steps: int) -> ResultRow:
    """Flat single-policy baseline under a training budget matched to what
    the hierarchical solve spent on this problem."""
    cfg = replace(spec.train, max_steps=max(budget_steps, spec.train.eval_every))
    try:
        policy, stats = train_monolithic_policy(
            spec.world, x_i, x_g, cfg,
            derive_rng("monolithic", spec.name, seed, pi), goal_tol=spec.goal_tol)
        rng = derive_rng("monoeval", spec.name, seed, pi)
        goal_tol = spec.goal_tol if spec.goal_tol is not None else spec.world.cell_size
        wins = 0
        steps = []
        from .world import step as world_step
        limit = spec.stage_limit * 4
        for ep in range(spec.eval_episodes):
            c = x_i
            n = 0
            while c.distance_to(x_g) > goal_tol and n < limit:
                c = world_step(spec.world, c, policy.act(spec.world, c), rng)
                n += 1
            wins += c.distance_to(x_g) <= goal_tol
            steps.append(n)
        return ResultRow(spec.name, pi, "monolithic", seed,
                         wins / spec.eval_episodes, float(np.mean(steps)),
                         stats.steps, 0, 0)
    except SharpError as e:
        return ResultRow(spec.name, pi, "monolithic", seed, 0.0, 0.0, 0, 0, 0,
                         error=type(e).__name__)


# -- figure data -----------------------------------------------------------------------


def emit_plot_data(rows, out_dir: str) -> list:
    """Aggregate rows into the two figure CSVs: training steps per problem and
    success rate per problem, mean and population std over seeds."""
    if not rows:
        raise ValueError("no rows to aggregate")
    os.makedirs(out_dir, exist_ok=True)
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.env, r.problem, r.method), []).append(r)
    paths = []
    specs = [("training_by_problem.csv", lambda r: r.training_steps,
              "mean_training_steps", "std_training_steps"),
             ("success_by_problem.csv", lambda r: r.success_rate,
              "mean_success", "std_success")]
    for fname, get, mean_col, std_col in specs:
        path = os.path.join(out_dir, fname)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\r\n")
            writer.writerow(["env", "problem", "method", mean_col, std_col,
                             "n_seeds"])
            for key in sorted(groups):
                values = [get(r) for r in groups[key]]
                writer.writerow([key[0], str(key[1]), key[2],
                                 f"{np.mean(values):.4f}",
                                 f"{np.std(values):.4f}", str(len(values))])
        paths.append(path)
    return paths


# -- config files ----------------------------------------------------------------------


def _parse_pair(value: str):
    parts = [p.strip() for p in value.replace("->", ",").split(",")]
    if len(parts) != 4:
        raise ValueError(f"expected x1,y1,x2,y2 got {value!r}")
    x1, y1, x2, y2 = map(float, parts)
    return (x1, y1), (x2, y2)


def load_experiment_config(path: str, kind: str | None = None,
                           seeds=None) -> ExperimentSpec:
    """Build an ExperimentSpec from a flat key=value file.

    `world` names a bundled map or a world text file (sidecar `<file>.cfg`
    applies when present); bundled maps supply default problems and
    abstraction settings which later keys may override.
    """
    entries: dict = {}
    problems: dict = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"expected key=value, got {line!r}", line=lineno)
            key, value = (s.strip() for s in line.split("=", 1))
            if key.startswith("problem."):
                try:
                    problems[int(key.split(".", 1)[1])] = _parse_pair(value)
                except ValueError as e:
                    raise ParseError(str(e), line=lineno) from None
            else:
                entries[key] = (value, lineno)

    def pop(key, default=None):
        if key in entries:
            return entries.pop(key)[0]
        return default

    world_ref = pop("world")
    if world_ref is None:
        raise ParseError("config must set world=<bundled name or file>")
    recipe: WorldRecipe | None = None
    if world_ref in RECIPES:
        recipe = RECIPES[world_ref]
        world = recipe.build()
        name = world_ref
    else:
        with open(world_ref) as fh:
            text = fh.read()
        overrides = {}
        sidecar = world_ref + ".cfg"
        if os.path.exists(sidecar):
            with open(sidecar) as fh:
                overrides = parse_sidecar(fh.read())
        world = world_from_text(text, **overrides)
        name = os.path.splitext(os.path.basename(world_ref))[0]

    kind = kind or pop("kind", "centroid")
    if kind not in ("centroid", "interface"):
        raise ParseError(f"kind must be centroid or interface, got {kind!r}")
    if seeds is None:
        seeds = [int(s) for s in pop("seeds", "0").split(",")]

    if problems:
        theta = 0.0 if world.kinematics is Kinematics.UNICYCLE else None
        prob_list = [(Configuration(*problems[k][0], theta),
                      Configuration(*problems[k][1]))
                     for k in sorted(problems)]
    elif recipe is not None:
        prob_list = recipe.problem_configurations()
    else:
        raise ParseError("non-bundled worlds need problem.N entries")

    ab = AbstractionParams(
        n_goals=int(pop("abstraction.n_goals",
                        recipe.density_goals if recipe else 30)),
        inits_per_goal=int(pop("abstraction.inits_per_goal",
                               recipe.density_inits if recipe else 10)),
        percentile=float(pop("abstraction.percentile",
                             recipe.density_percentile if recipe else 96.0)),
        min_cells=int(pop("abstraction.min_cells", 3)),
        max_regions=(lambda v: None if v in (None, "none") else int(v))(
            pop("abstraction.max_regions",
                recipe.max_regions if recipe else None)),
        region_threshold=(lambda v: None if v is None else float(v))(
            pop("abstraction.region_threshold",
                recipe.region_threshold if recipe else None)),
        seed=int(pop("abstraction.seed", 0)))

    profile = pop("train.profile", "desk")
    if profile == "desk":
        train = desk_train_config()
    elif profile == "smoke":
        train = smoke_train_config()
    elif profile == "default":
        train = TrainConfig()
    else:
        raise ParseError(f"unknown train.profile {profile!r}")
    train_over = {}
    for key in list(entries):
        if key.startswith("train."):
            fieldname = key.split(".", 1)[1]
            value, lineno = entries.pop(key)
            if fieldname in ("hidden", "cem_hidden"):
                train_over[fieldname] = tuple(int(v) for v in value.split(","))
            elif fieldname in ("learner",):
                train_over[fieldname] = value
            elif fieldname in ("max_steps", "eval_every", "eval_episodes",
                               "batch_size", "replay_capacity", "episode_limit",
                               "start_steps", "update_every", "updates_per_round",
                               "cem_population", "cem_iters", "cem_episodes"):
                train_over[fieldname] = int(value)
            else:
                try:
                    train_over[fieldname] = float(value)
                except ValueError:
                    raise ParseError(f"bad train key {key}", line=lineno) from None
    if train_over:
        train = replace(train, **train_over)

    baselines = pop("baselines", "rrt_replan,monolithic")
    enabled = {b.strip() for b in baselines.split(",") if b.strip()}
    unknown = enabled - {"rrt_replan", "monolithic", "none"}
    if unknown:
        raise ParseError(f"unknown baselines {sorted(unknown)}")

    spec = ExperimentSpec(
        name=pop("name", name), world=world, kind=kind, problems=prob_list,
        seeds=list(seeds), abstraction=ab, train=train,
        stage_limit=int(pop("stage_limit", 400)),
        eval_episodes=int(pop("eval_episodes", 20)),
        goal_tol=(lambda v: None if v is None else float(v))(pop("goal_tol")),
        run_rrt_replan="rrt_replan" in enabled,
        run_monolithic="monolithic" in enabled,
        monolithic_all_seeds=pop("monolithic_all_seeds", "false") == "true")
    if entries:
        key, (_, lineno) = next(iter(entries.items()))
        raise ParseError(f"unknown config key {key!r}", line=lineno)
    return spec
