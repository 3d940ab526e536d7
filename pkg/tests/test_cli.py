import json
import subprocess
import sys

import numpy as np
import pytest

from fewgauge.cli import EXIT_INVALID, EXIT_OK, EXIT_USAGE, main, parse_grid


@pytest.fixture(scope="module")
def feats_path(tmp_path_factory):
    root = tmp_path_factory.mktemp("feats")
    seps = ",".join(str(round(v, 3)) for v in np.linspace(0.1, 2.5, 8))
    code = main(
        [
            "synth", "--classes", "8", "--per-class", "40", "--dim", "16",
            "--separation", seps, "--spread", "0.15", "--seed", "7",
            "--out", str(root),
        ]
    )
    assert code == EXIT_OK
    return root / "features.fsf1"


class TestParseGrid:
    def test_multi_point(self):
        grid = parse_grid("N=5,K=1,Q=30;N=5,K=5,Q=30,T=50")
        assert len(grid) == 2
        assert grid[0].k_shot == 1 and grid[0].test_per_class == 0
        assert grid[1].test_per_class == 50

    def test_unbalanced_point(self):
        grid = parse_grid("N=2,K=5,Q=50,p=0.9")
        assert grid[0].first_class_fraction == 0.9

    def test_missing_way_rejected(self):
        with pytest.raises(ValueError, match="N"):
            parse_grid("K=5,Q=30")


class TestExitCodes:
    def test_unknown_flag_is_usage_error(self, capsys):
        assert main(["synth", "--does-not-exist", "1"]) == EXIT_USAGE

    def test_unknown_command_is_usage_error(self):
        assert main(["frobnicate"]) == EXIT_USAGE

    def test_missing_required_is_invalid(self, capsys):
        assert main(["gauge", "--seed", "1", "--out", "/tmp/x"]) == EXIT_INVALID
        assert "features" in capsys.readouterr().err

    def test_missing_file_is_invalid(self, tmp_path, capsys):
        code = main(
            ["gauge", "--features", str(tmp_path / "nope.fsf1"), "--seed", "1",
             "--out", str(tmp_path)]
        )
        assert code == EXIT_INVALID

    def test_version(self, capsys):
        assert main(["--version"]) == EXIT_OK
        assert "fewgauge" in capsys.readouterr().out

    def test_help_json_is_machine_readable(self, capsys):
        assert main(["--help-json"]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert "correlate" in payload["commands"]
        assert payload["commands"]["correlate"]["seed"]["required"] is True


class TestPipeline:
    def test_synth_then_correlate(self, feats_path, tmp_path, capsys):
        out = tmp_path / "run"
        code = main(
            ["correlate", "--features", str(feats_path), "--setting", "semi",
             "--grid", "N=3,K=2,Q=8", "--n-tasks", "25", "--seed", "9",
             "--out", str(out)]
        )
        assert code == EXIT_OK
        points = (out / "points.csv").read_text().splitlines()
        assert points[0].startswith("setting,N,K,Q,gauge")
        assert len(points) > 1
        reports = (out / "reports.csv").read_text().splitlines()
        assert len(reports) == 26

    def test_gauge_with_plots(self, feats_path, tmp_path):
        out = tmp_path / "g"
        code = main(
            ["gauge", "--features", str(feats_path), "--setting", "supervised",
             "--way", "3", "--shot", "5", "--query", "0", "--test", "15",
             "--n-tasks", "8", "--seed", "3", "--plot", "--out", str(out)]
        )
        assert code == EXIT_OK
        assert (out / "reports.csv").exists()
        svg = (out / "scatter_lr_loss.svg").read_text()
        assert "Accuracy (%)" in svg and "LR loss" in svg

    def test_reruns_byte_identical_across_jobs(self, feats_path, tmp_path):
        outs = []
        for name, jobs in [("a", "1"), ("b", "2"), ("c", "1")]:
            out = tmp_path / name
            code = main(
                ["correlate", "--features", str(feats_path), "--setting", "semi",
                 "--grid", "N=3,K=2,Q=8", "--n-tasks", "16", "--seed", "11",
                 "--jobs", jobs, "--out", str(out)]
            )
            assert code == EXIT_OK
            outs.append(
                ((out / "points.csv").read_bytes(), (out / "reports.csv").read_bytes())
            )
        assert outs[0] == outs[1] == outs[2]

    def test_config_file_with_flag_override(self, feats_path, tmp_path, capsys):
        config = tmp_path / "cfg.json"
        config.write_text(
            json.dumps(
                {"features": str(feats_path), "setting": "supervised", "way": 3,
                 "shot": 4, "query": 0, "test": 10, "n_tasks": 5, "seed": 2,
                 "out": str(tmp_path / "cfg_out")}
            )
        )
        code = main(["gauge", "--config", str(config), "--n-tasks", "3"])
        assert code == EXIT_OK
        text = (tmp_path / "cfg_out" / "reports.csv").read_text().splitlines()
        assert len(text) == 4  # header + 3 tasks: flag beat the config value

    def test_unknown_config_key_rejected(self, feats_path, tmp_path, capsys):
        config = tmp_path / "bad.json"
        config.write_text(json.dumps({"nonsense": 1}))
        code = main(["gauge", "--config", str(config), "--features", str(feats_path),
                     "--seed", "1", "--out", str(tmp_path / "o")])
        assert code == EXIT_INVALID

    def test_variance_command(self, feats_path, tmp_path):
        out = tmp_path / "var"
        code = main(
            ["variance", "--features", str(feats_path), "--way", "3", "--shot", "3",
             "--test", "10", "--outer", "4", "--inner", "4", "--seed", "5",
             "--out", str(out)]
        )
        assert code == EXIT_OK
        lines = (out / "variance.csv").read_text().splitlines()
        assert lines[0].startswith("std_random")
        assert len(lines) == 2

    def test_confusion_command(self, feats_path, tmp_path):
        out = tmp_path / "conf"
        code = main(
            ["confusion", "--features", str(feats_path), "--classes", "0,1,7",
             "--edges-per-vertex", "6", "--runs", "2", "--seed", "3",
             "--out", str(out)]
        )
        assert code == EXIT_OK
        assert (out / "overlap.csv").read_text().count("\n") == 4  # header + 3 pairs
        assert (out / "overlap.dot").exists()

    def test_active_label_command(self, feats_path, tmp_path):
        out = tmp_path / "al"
        code = main(
            ["active-label", "--features", str(feats_path), "--way", "3",
             "--shot", "1", "--query", "8", "--budgets", "0,4", "--policy", "random",
             "--n-tasks", "6", "--seed", "2", "--out", str(out)]
        )
        assert code == EXIT_OK
        lines = (out / "active.csv").read_text().splitlines()
        assert lines[0] == "policy,budget,mean_accuracy,n_tasks"
        assert len(lines) == 3

    def test_console_entry_point(self, feats_path, tmp_path):
        result = subprocess.run(
            [sys.executable, "-m", "fewgauge.cli", "sample", "--features",
             str(feats_path), "--way", "3", "--shot", "2", "--query", "2",
             "--test", "2", "--seed", "4", "--out", str(tmp_path / "ep")],
            capture_output=True, text=True,
        )
        assert result.returncode == 0
        assert "sample: wrote" in result.stdout
        payload = json.loads((tmp_path / "ep" / "episode.json").read_text())
        assert len(payload["class_ids"]) == 3
