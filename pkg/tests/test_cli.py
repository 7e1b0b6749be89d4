import json
import os

import pytest

from sharp.cli import main
from sharp.world import world_from_text, parse_sidecar


@pytest.fixture
def tiny_world_file(tmp_path):
    """A small two-room world file plus sidecar, cheap to run the CLI on."""
    rows = ["##########",
            "#....#...#",
            "#....#...#",
            "#........#",
            "#....#...#",
            "#....#...#",
            "##########"]
    text = "P1-ASCII 10 7 1\n" + "\n".join(rows) + "\n"
    path = tmp_path / "tiny.txt"
    path.write_text(text)
    (tmp_path / "tiny.txt.cfg").write_text("kinematics=holonomic\n"
                                           "noise_sigma=0.02\nmax_step=1.0\n")
    return str(path)


class TestWorldsCommand:
    def test_lists_bundled(self, capsys):
        assert main(["worlds"]) == 0
        out = capsys.readouterr().out
        for name in ("env_a", "env_b", "env_c", "env_d", "env_e"):
            assert name in out

    def test_export_round_trips(self, tmp_path, capsys):
        assert main(["worlds", "--export", str(tmp_path)]) == 0
        text = (tmp_path / "env_a.txt").read_text()
        overrides = parse_sidecar((tmp_path / "env_a.txt.cfg").read_text())
        world = world_from_text(text, **overrides)
        assert world.width == 30 and world.noise_sigma == 0.05


class TestPipelineCommands:
    def test_regions_on_file_world(self, tiny_world_file, capsys):
        assert main(["regions", "--world", tiny_world_file, "--seed", "0"]) == 0
        out = capsys.readouterr().out
        assert "critical regions" in out

    def test_abstract_grid_output(self, tiny_world_file, capsys):
        assert main(["abstract", "--world", tiny_world_file, "--grid"]) == 0
        out = capsys.readouterr().out
        assert "abstract states" in out

    def test_options_listing(self, tiny_world_file, capsys):
        assert main(["options", "--world", tiny_world_file,
                     "--kind", "centroid"]) == 0
        out = capsys.readouterr().out
        assert "options:" in out

    def test_solve_smoke(self, tiny_world_file, tmp_path, capsys):
        cache = str(tmp_path / "cache")
        rc = main(["solve", "--world", tiny_world_file, "--start", "1.5,1.5",
                   "--goal", "8.5,1.5", "--profile", "smoke", "--episodes", "3",
                   "--cache-dir", cache])
        assert rc == 0
        result = json.loads(capsys.readouterr().out)
        assert set(result) >= {"plan", "options_trained", "success_rate"}
        assert os.path.isdir(cache)

    def test_baseline_rrt(self, tiny_world_file, capsys):
        rc = main(["baseline", "--world", tiny_world_file, "--method",
                   "rrt_replan", "--start", "1.5,1.5", "--goal", "8.5,1.5",
                   "--episodes", "3", "--budget", "2000"])
        assert rc == 0
        result = json.loads(capsys.readouterr().out)
        assert result["method"] == "rrt_replan"
        assert result["success_rate"] > 0


class TestExperimentCommand:
    def test_experiment_with_config(self, tiny_world_file, tmp_path, capsys):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(f"world = {tiny_world_file}\n"
                       "problem.1 = 1.5,1.5 -> 8.5,1.5\n"
                       "train.profile = smoke\n"
                       "seeds = 0\n"
                       "stage_limit = 120\n"
                       "eval_episodes = 3\n"
                       "baselines = rrt_replan\n")
        out = tmp_path / "rows.csv"
        assert main(["experiment", "--config", str(cfg), "--out", str(out)]) == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0].startswith("env,problem,method")
        assert len(lines) == 3  # header + sharp + rrt_replan

    def test_plotdata_from_rows(self, tiny_world_file, tmp_path, capsys):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(f"world = {tiny_world_file}\n"
                       "problem.1 = 1.5,1.5 -> 8.5,1.5\n"
                       "train.profile = smoke\n"
                       "eval_episodes = 2\n"
                       "stage_limit = 100\n"
                       "baselines = none\n")
        rows = tmp_path / "rows.csv"
        assert main(["experiment", "--config", str(cfg), "--out", str(rows)]) == 0
        outdir = tmp_path / "plots"
        assert main(["plotdata", "--rows", str(rows), "--out", str(outdir)]) == 0
        assert (outdir / "success_by_problem.csv").exists()
        assert (outdir / "training_by_problem.csv").exists()

    def test_cache_env_var(self, tiny_world_file, tmp_path, monkeypatch, capsys):
        cache = tmp_path / "envcache"
        monkeypatch.setenv("SHARP_CACHE_DIR", str(cache))
        rc = main(["solve", "--world", tiny_world_file, "--start", "1.5,1.5",
                   "--goal", "8.5,1.5", "--profile", "smoke", "--episodes", "2"])
        assert rc == 0
        assert cache.is_dir()


def test_error_reporting(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("NOT A WORLD\n")
    rc = main(["regions", "--world", str(bad)])
    assert rc == 1
    assert "error:" in capsys.readouterr().err
