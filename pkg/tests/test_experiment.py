import os

import numpy as np
import pytest

from sharp.errors import ParseError
from sharp.experiment import (AbstractionParams, CSV_HEADER, ExperimentSpec,
                              ResultRow, build_library, emit_plot_data,
                              load_experiment_config, rows_to_csv, run_experiment,
                              smoke_train_config, spec_for_bundled, write_rows)
from sharp.world import Configuration
from sharp.worlds import RECIPES

from conftest import open_world


def tiny_spec(run_monolithic=True, seeds=(0,)):
    w = open_world(14, 14, noise_sigma=0.02, max_step=1.0)
    return ExperimentSpec(
        name="tiny", world=w, kind="centroid",
        problems=[(Configuration(1.5, 1.5), Configuration(12.5, 12.5))],
        seeds=list(seeds),
        abstraction=AbstractionParams(n_goals=6, inits_per_goal=3,
                                      percentile=80.0, max_regions=3,
                                      min_cells=1),
        train=smoke_train_config(), stage_limit=150, eval_episodes=4,
        run_rrt_replan=True, run_monolithic=run_monolithic)


class TestRunExperiment:
    def test_row_accounting_all_methods(self):
        rows = run_experiment(tiny_spec())
        assert len(rows) == 3  # sharp + rrt_replan + monolithic for 1 problem
        methods = {r.method for r in rows}
        assert methods == {"sharp", "rrt_replan", "monolithic"}
        for r in rows:
            assert 0.0 <= r.success_rate <= 1.0
            assert r.env == "tiny" and r.problem == 1 and r.seed == 0

    def test_monolithic_first_seed_only(self):
        rows = run_experiment(tiny_spec(seeds=(0, 1)))
        mono = [r for r in rows if r.method == "monolithic"]
        assert [r.seed for r in mono] == [0]
        sharp_rows = [r for r in rows if r.method == "sharp"]
        assert [r.seed for r in sharp_rows] == [0, 1]

    def test_csv_byte_identical_across_runs(self):
        a = rows_to_csv(run_experiment(tiny_spec()))
        b = rows_to_csv(run_experiment(tiny_spec()))
        assert a == b

    def test_cache_dir_round_trip(self, tmp_path):
        spec = tiny_spec(run_monolithic=False)
        rows1 = run_experiment(spec, cache_dir=str(tmp_path))
        # the library artifact is now cached; a rerun loads it
        rows2 = run_experiment(tiny_spec(run_monolithic=False),
                               cache_dir=str(tmp_path))
        assert rows_to_csv(rows1) == rows_to_csv(rows2)
        from sharp.world import world_hash
        base = tmp_path / world_hash(spec.world)
        assert (base / "library_centroid.json").exists()
        assert (base / "cache_index.json").exists()


class TestPlotData:
    def make_rows(self):
        return [ResultRow("e", 1, "sharp", s, 0.8 + 0.05 * s, 100.0 + s,
                          1000 * (s + 1), 2, 1) for s in range(5)]

    def test_singleton_zero_std(self, tmp_path):
        rows = [ResultRow("e", 1, "sharp", 0, 0.9, 50.0, 500, 1, 0)]
        paths = emit_plot_data(rows, str(tmp_path))
        success = (tmp_path / "success_by_problem.csv").read_text()
        lines = success.strip().splitlines()
        assert lines[0] == "env,problem,method,mean_success,std_success,n_seeds"
        assert lines[1] == "e,1,sharp,0.9000,0.0000,1"

    def test_mean_over_seeds(self, tmp_path):
        rows = self.make_rows()
        emit_plot_data(rows, str(tmp_path))
        text = (tmp_path / "training_by_problem.csv").read_text()
        line = text.strip().splitlines()[1]
        env, prob, method, mean, std, n = line.split(",")
        assert float(mean) == pytest.approx(np.mean([1000, 2000, 3000, 4000, 5000]))
        assert float(std) == pytest.approx(
            np.std([1000, 2000, 3000, 4000, 5000]), abs=0.01)
        assert n == "5"

    def test_header_schema(self, tmp_path):
        emit_plot_data(self.make_rows(), str(tmp_path))
        training = (tmp_path / "training_by_problem.csv").read_text()
        assert training.splitlines()[0] == ("env,problem,method,"
                                            "mean_training_steps,"
                                            "std_training_steps,n_seeds")


class TestResultCsv:
    def test_header_and_formatting(self):
        rows = [ResultRow("env_a", 2, "sharp", 3, 0.85, 123.456, 4000, 2, 1)]
        text = rows_to_csv(rows)
        lines = text.strip().splitlines()
        assert lines[0] == ",".join(CSV_HEADER)
        assert lines[1] == "env_a,2,sharp,3,0.8500,123.46,4000,2,1,"

    def test_write_rows(self, tmp_path):
        path = str(tmp_path / "rows.csv")
        write_rows([ResultRow("e", 1, "m", 0, 1.0, 1.0, 1, 0, 0)], path)
        with open(path, newline="") as fh:
            assert fh.read() == rows_to_csv(
                [ResultRow("e", 1, "m", 0, 1.0, 1.0, 1, 0, 0)])


class TestConfigParsing:
    def test_bundled_world_defaults(self, tmp_path):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text("world = env_a\nkind = interface\nseeds = 0,1\n")
        spec = load_experiment_config(str(cfg))
        assert spec.name == "env_a" and spec.kind == "interface"
        assert spec.seeds == [0, 1]
        assert len(spec.problems) == 5
        assert spec.abstraction.percentile == RECIPES["env_a"].density_percentile

    def test_world_file_with_problems(self, tmp_path):
        from sharp.world import world_to_text
        w = open_world(8, 8)
        wfile = tmp_path / "w.txt"
        wfile.write_text(world_to_text(w))
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(f"world = {wfile}\n"
                       "problem.1 = 1.5,1.5 -> 6.5,6.5\n"
                       "train.profile = smoke\n"
                       "baselines = rrt_replan\n")
        spec = load_experiment_config(str(cfg))
        assert spec.run_monolithic is False and spec.run_rrt_replan is True
        assert spec.train.learner == "cem"
        assert spec.problems[0][1] == Configuration(6.5, 6.5)

    def test_train_overrides(self, tmp_path):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text("world = env_b\ntrain.max_steps = 1234\n"
                       "train.hidden = 16,16\ntrain.entropy_coef = 0.2\n")
        spec = load_experiment_config(str(cfg))
        assert spec.train.max_steps == 1234
        assert spec.train.hidden == (16, 16)
        assert spec.train.entropy_coef == 0.2

    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text("world = env_a\nwat = 1\n")
        with pytest.raises(ParseError):
            load_experiment_config(str(cfg))

    def test_missing_world_rejected(self, tmp_path):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text("kind = centroid\n")
        with pytest.raises(ParseError):
            load_experiment_config(str(cfg))

    def test_bad_problem_rejected(self, tmp_path):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text("world = env_a\nproblem.1 = 1,2,3\n")
        with pytest.raises(ParseError):
            load_experiment_config(str(cfg))


def test_build_library_deterministic():
    w = open_world(14, 14, noise_sigma=0.02)
    params = AbstractionParams(n_goals=6, inits_per_goal=3, percentile=80.0,
                               min_cells=1, max_regions=3)
    d1, lib1 = build_library(w, "centroid", params)
    d2, lib2 = build_library(w, "centroid", params)
    assert np.array_equal(d1, d2)
    assert [o.id for o in lib1.options] == [o.id for o in lib2.options]
