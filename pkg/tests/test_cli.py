import json

import pytest

from cleval.cli import main

TINY_CFG = """
dataset = synthetic_split
n_tasks = 2
iters_per_task = 12
batch_size = 8
method = er
alpha = 0.5
buffer_capacity = 30
lr = 0.05
rho_eval = 4
eval_subsample = 10
seeds = 0
hidden_units = 10
hidden_layers = 1
synth_classes = 4
synth_dims = 5
synth_train_per_class = 20
synth_eval_per_class = 12
"""


@pytest.fixture()
def out_root(tmp_path, monkeypatch):
    monkeypatch.setenv("CLEVAL_OUTPUT_ROOT", str(tmp_path))
    return tmp_path


def write_cfg(tmp_path, text=TINY_CFG, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestRunVerb:
    def test_success_writes_artifacts(self, tmp_path, out_root, capsys):
        cfg = write_cfg(tmp_path)
        assert main(["run", str(cfg)]) == 0
        out = capsys.readouterr().out
        assert "eval_trace.csv" in out
        assert (out_root / "run" / "final.csv").exists()

    def test_config_error_is_machine_readable(self, tmp_path, out_root, capsys):
        cfg = write_cfg(tmp_path, "alpha = 1.5\n")
        code = main(["run", str(cfg)])
        assert code != 0
        err = capsys.readouterr().err.strip()
        payload = json.loads(err)
        assert payload["error"] == "ConfigError"
        assert "line 1" in payload["message"]

    def test_missing_config_file(self, tmp_path, out_root, capsys):
        code = main(["run", str(tmp_path / "nope.cfg")])
        assert code != 0
        assert json.loads(capsys.readouterr().err.strip())["error"]


class TestGridVerb:
    def test_grid_reports_and_best(self, tmp_path, out_root, capsys):
        cfg = write_cfg(tmp_path)
        grid = write_cfg(tmp_path, "lr = 0.1, 0.05\n", name="grid.cfg")
        assert main(["grid", str(cfg), str(grid)]) == 0
        out = capsys.readouterr().out
        assert "grid_report.csv" in out and "best lr" in out
        report = (out_root / "run" / "grid_report.csv").read_text().splitlines()
        assert report[0] == "lr,mean_acc"
        assert len(report) == 3
        assert (out_root / "run" / "best.cfg").exists()


class TestPlotVerb:
    def test_plot_from_run_dir(self, tmp_path, out_root, capsys):
        cfg = write_cfg(tmp_path)
        main(["run", str(cfg)])
        capsys.readouterr()
        assert main(["plot", str(out_root / "run")]) == 0
        assert "task_1_accuracy.svg" in capsys.readouterr().out

    def test_missing_dir_fails_cleanly(self, tmp_path, out_root, capsys):
        code = main(["plot", str(tmp_path / "void")])
        assert code != 0
        json.loads(capsys.readouterr().err.strip())


class TestOracleCheckVerb:
    def test_oracle_check_passes(self, capsys):
        assert main(["oracle-check"]) == 0
        out = capsys.readouterr().out
        assert out.count("ok ") == 3
