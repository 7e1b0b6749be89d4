"""Command-line interface.

Subcommands mirror the pipeline stages: `regions` collects the density grid
and extracts critical regions, `abstract` builds the partition, `options`
synthesizes the option library, `solve` runs one problem end to end,
`baseline` runs a baseline on one problem, `experiment` executes a full spec,
and `plotdata` aggregates result rows into figure CSVs. SHARP_CACHE_DIR
overrides the artifact cache location.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import artifacts
from .abstraction import build_region_voronoi, render_assignment
from .errors import SharpError
from .experiment import (AbstractionParams, build_library, desk_train_config,
                         emit_plot_data, load_experiment_config,
                         load_or_build_library, rows_to_csv, run_experiment,
                         smoke_train_config, spec_for_bundled, write_rows,
                         CSV_HEADER, ResultRow)
from .learn import TrainConfig
from .motion import RrtParams, execute_with_replan
from .planner import PolicyCache, SolveConfig, execute_composed, sharp_solve
from .regions import collect_solution_density, extract_critical_regions
from .seeding import derive_rng
from .world import (Configuration, Kinematics, parse_sidecar, world_from_text,
                    world_hash, world_to_text, sidecar_to_text)
from .worlds import RECIPES, bundled_names


def _load_world(ref: str):
    if ref in RECIPES:
        return RECIPES[ref].build(), ref
    with open(ref) as fh:
        text = fh.read()
    overrides = {}
    if os.path.exists(ref + ".cfg"):
        with open(ref + ".cfg") as fh:
            overrides = parse_sidecar(fh.read())
    name = os.path.splitext(os.path.basename(ref))[0]
    return world_from_text(text, **overrides), name


def _abstraction_params(args, name: str) -> AbstractionParams:
    overrides = {k: v for k, v in (
        ("n_goals", getattr(args, "n_goals", None)),
        ("inits_per_goal", getattr(args, "inits_per_goal", None)),
        ("percentile", getattr(args, "percentile", None)),
        ("min_cells", getattr(args, "min_cells", None)),
        ("max_regions", getattr(args, "max_regions", None)),
    ) if v is not None}
    if name in RECIPES:
        rec = RECIPES[name]
        base = dict(n_goals=rec.density_goals, inits_per_goal=rec.density_inits,
                    percentile=rec.density_percentile, max_regions=rec.max_regions,
                    region_threshold=rec.region_threshold)
        base.update(overrides)
        return AbstractionParams(seed=args.seed, **base)
    return AbstractionParams(seed=args.seed, **overrides)


def _cache_dir(args) -> str | None:
    if args.cache_dir is not None:
        return args.cache_dir
    return os.environ.get("SHARP_CACHE_DIR")


def _parse_xy(text: str, theta: float | None = None) -> Configuration:
    parts = [float(v) for v in text.split(",")]
    if len(parts) == 2:
        return Configuration(parts[0], parts[1], theta)
    if len(parts) == 3:
        return Configuration(parts[0], parts[1], parts[2])
    raise ValueError(f"expected x,y or x,y,theta, got {text!r}")


def cmd_worlds(args) -> int:
    for name in bundled_names():
        rec = RECIPES[name]
        world = rec.build()
        print(f"{name}: {world.width}x{world.height} cells, "
              f"{world.kinematics.value}, {len(rec.problems)} problems")
        if args.export:
            os.makedirs(args.export, exist_ok=True)
            base = os.path.join(args.export, name)
            with open(base + ".txt", "w") as fh:
                fh.write(world_to_text(world))
            with open(base + ".txt.cfg", "w") as fh:
                fh.write(sidecar_to_text(world))
    return 0


def cmd_regions(args) -> int:
    world, name = _load_world(args.world)
    params = _abstraction_params(args, name)
    rng = derive_rng("abstraction", world_hash(world), params.seed)
    density = collect_solution_density(world, params.n_goals,
                                       params.inits_per_goal, rng)
    vals = density[density > 0]
    threshold = float(np.percentile(vals, params.percentile))
    regions = extract_critical_regions(world, density, threshold=threshold,
                                       min_cells=params.min_cells)
    if params.max_regions is not None:
        regions = regions[:params.max_regions]
    print(f"{len(regions)} critical regions (threshold {threshold:.4f}):")
    for i, r in enumerate(regions):
        print(f"  {i}: score={r.score:.3f} cells={len(r.cells)} "
              f"centroid=({r.centroid.x:.2f}, {r.centroid.y:.2f})")
    if args.out:
        artifacts.save_artifact(args.out, "density-grid", world_hash(world),
                                artifacts.density_payload(density))
        print(f"density grid written to {args.out}")
    return 0


def cmd_abstract(args) -> int:
    world, name = _load_world(args.world)
    params = _abstraction_params(args, name)
    _, library = load_or_build_library(world, args.kind, params, _cache_dir(args))
    rbvd = library.rbvd
    print(f"{len(rbvd.states)} abstract states, "
          f"{len(rbvd.adjacency)} adjacent pairs")
    if args.grid:
        print(render_assignment(rbvd), end="")
    if args.out:
        artifacts.save_artifact(args.out, "option-library", world_hash(world),
                                artifacts.library_payload(library))
        print(f"abstraction artifact written to {args.out}")
    return 0


def cmd_options(args) -> int:
    world, name = _load_world(args.world)
    params = _abstraction_params(args, name)
    _, library = load_or_build_library(world, args.kind, params, _cache_dir(args))
    print(f"{len(library.options)} {args.kind} options:")
    for o in library.options:
        print(f"  {o.id}: states={o.states} cost={o.cost:.3f}"
              f"{' (updated)' if o.cost_updated else ''}")
    if args.out:
        artifacts.save_artifact(args.out, "option-library", world_hash(world),
                                artifacts.library_payload(library))
        print(f"library written to {args.out}")
    return 0


def cmd_solve(args) -> int:
    world, name = _load_world(args.world)
    params = _abstraction_params(args, name)
    cache_dir = _cache_dir(args)
    _, library = load_or_build_library(world, args.kind, params, cache_dir)
    theta = 0.0 if world.kinematics is Kinematics.UNICYCLE else None
    x_i = _parse_xy(args.start, theta)
    x_g = _parse_xy(args.goal)
    train = smoke_train_config() if args.profile == "smoke" else (
        TrainConfig() if args.profile == "default" else desk_train_config())
    cache = PolicyCache()
    whash = world_hash(world)
    if cache_dir is not None:
        cache = artifacts.load_cache(cache_dir, whash)
    composed, stats = sharp_solve(world, x_i, x_g, library, cache,
                                  SolveConfig(train=train),
                                  derive_rng("solve", name, args.seed))
    wins = 0
    steps = []
    for ep in range(args.episodes):
        trace = execute_composed(world, composed, args.stage_limit,
                                 derive_rng("exec", name, args.seed, ep))
        wins += trace.outcome == "reached_goal"
        steps.append(trace.total_steps)
    if cache_dir is not None:
        artifacts.save_cache(cache_dir, whash, cache)
    result = {"plan": stats.plan_option_ids,
              "options_trained": stats.options_trained,
              "options_reused": stats.options_reused,
              "training_steps": stats.training_steps,
              "success_rate": wins / args.episodes,
              "mean_steps": float(np.mean(steps))}
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


def cmd_baseline(args) -> int:
    world, name = _load_world(args.world)
    theta = 0.0 if world.kinematics is Kinematics.UNICYCLE else None
    x_i = _parse_xy(args.start, theta)
    x_g = _parse_xy(args.goal)
    if args.method == "rrt_replan":
        wins = 0
        steps = []
        for ep in range(args.episodes):
            res = execute_with_replan(world, x_i, x_g, RrtParams(),
                                      budget=args.budget,
                                      rng=derive_rng("rrt", name, args.seed, ep))
            wins += res.success
            steps.append(res.steps)
        print(json.dumps({"method": "rrt_replan",
                          "success_rate": wins / args.episodes,
                          "mean_steps": float(np.mean(steps))},
                         indent=2, sort_keys=True))
        return 0
    from .learn import train_monolithic_policy
    from .world import step as world_step
    train = smoke_train_config() if args.profile == "smoke" else desk_train_config()
    from dataclasses import replace as dc_replace
    train = dc_replace(train, max_steps=args.budget)
    policy, stats = train_monolithic_policy(world, x_i, x_g, train,
                                            derive_rng("mono", name, args.seed))
    rng = derive_rng("monoeval", name, args.seed)
    wins = 0
    for ep in range(args.episodes):
        c = x_i
        n = 0
        while c.distance_to(x_g) > world.cell_size and n < 4 * 400:
            c = world_step(world, c, policy.act(world, c), rng)
            n += 1
        wins += c.distance_to(x_g) <= world.cell_size
    print(json.dumps({"method": "monolithic", "training_steps": stats.steps,
                      "success_rate": wins / args.episodes},
                     indent=2, sort_keys=True))
    return 0


def cmd_experiment(args) -> int:
    if args.config:
        spec = load_experiment_config(args.config, kind=args.kind,
                                      seeds=[int(s) for s in args.seed_list.split(",")]
                                      if args.seed_list else None)
    else:
        if args.world not in RECIPES:
            raise SharpError("without --config, --world must name a bundled map")
        seeds = ([int(s) for s in args.seed_list.split(",")]
                 if args.seed_list else [0])
        train = smoke_train_config() if args.profile == "smoke" else desk_train_config()
        spec = spec_for_bundled(args.world, kind=args.kind or "centroid",
                                seeds=seeds, train=train)
    rows = run_experiment(spec, cache_dir=_cache_dir(args))
    if args.out:
        write_rows(rows, args.out)
        print(f"{len(rows)} rows written to {args.out}")
    else:
        sys.stdout.write(rows_to_csv(rows))
    return 0


def cmd_plotdata(args) -> int:
    rows = []
    with open(args.rows) as fh:
        import csv as csvmod
        reader = csvmod.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise SharpError(f"unexpected results header {header}")
        for rec in reader:
            rows.append(ResultRow(rec[0], int(rec[1]), rec[2], int(rec[3]),
                                  float(rec[4]), float(rec[5]), int(rec[6]),
                                  int(rec[7]), int(rec[8]), rec[9]))
    paths = emit_plot_data(rows, args.out)
    for p in paths:
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sharp",
        description="Hierarchical stochastic path planning with learned "
                    "spatial abstractions and reusable option policies.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, world=True, abstraction=False):
        if world:
            p.add_argument("--world", required=True,
                           help="bundled world name or world file path")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", default=None, help="experiment config file")
        p.add_argument("--out", default=None, help="output file or directory")
        p.add_argument("--cache-dir", default=None,
                       help="artifact cache (default $SHARP_CACHE_DIR)")
        if abstraction:
            p.add_argument("--n-goals", type=int, default=None)
            p.add_argument("--inits-per-goal", type=int, default=None)
            p.add_argument("--percentile", type=float, default=None)
            p.add_argument("--min-cells", type=int, default=None)
            p.add_argument("--max-regions", type=int, default=None)

    p = sub.add_parser("worlds", help="list or export the bundled worlds")
    p.add_argument("--export", default=None, help="write .txt/.cfg files here")
    p.set_defaults(func=cmd_worlds)

    p = sub.add_parser("regions", help="collect density and extract regions")
    common(p)
    p.set_defaults(func=cmd_regions)

    p = sub.add_parser("abstract", help="build the abstract-state partition")
    common(p)
    p.add_argument("--kind", choices=["centroid", "interface"], default="centroid")
    p.add_argument("--grid", action="store_true", help="print the partition grid")
    p.set_defaults(func=cmd_abstract)

    p = sub.add_parser("options", help="synthesize the option library")
    common(p)
    p.add_argument("--kind", choices=["centroid", "interface"], default="centroid")
    p.set_defaults(func=cmd_options)

    p = sub.add_parser("solve", help="solve one problem end to end")
    common(p)
    p.add_argument("--kind", choices=["centroid", "interface"], default="centroid")
    p.add_argument("--start", required=True, help="x,y[,theta] meters")
    p.add_argument("--goal", required=True, help="x,y meters")
    p.add_argument("--episodes", type=int, default=20)
    p.add_argument("--stage-limit", type=int, default=400)
    p.add_argument("--profile", choices=["desk", "smoke", "default"],
                   default="desk")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("baseline", help="run a baseline on one problem")
    common(p)
    p.add_argument("--method", choices=["rrt_replan", "monolithic"],
                   required=True)
    p.add_argument("--start", required=True)
    p.add_argument("--goal", required=True)
    p.add_argument("--episodes", type=int, default=20)
    p.add_argument("--budget", type=int, default=1600)
    p.add_argument("--profile", choices=["desk", "smoke"], default="desk")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("experiment", help="run a full experiment spec")
    common(p, world=False)
    p.add_argument("--world", default=None, help="bundled world (without --config)")
    p.add_argument("--kind", choices=["centroid", "interface"], default=None)
    p.add_argument("--seeds", dest="seed_list", default=None,
                   help="comma-separated seed list")
    p.add_argument("--profile", choices=["desk", "smoke"], default="desk")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("plotdata", help="aggregate result rows into figure CSVs")
    p.add_argument("--rows", required=True, help="results CSV from `experiment`")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SharpError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
