import copy
import importlib.util
import json
from pathlib import Path

import pytest

from control.checkpoint import load_checkpoint
from control.export import read_csv

ENTRY = Path(__file__).resolve().parent.parent / "src" / "__main__.py"


@pytest.fixture(scope="module")
def cli():
    spec = importlib.util.spec_from_file_location("nldpc_cli", ENTRY)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


@pytest.fixture
def trained(cli, tmp_path, tiny_config_path):
    out = tmp_path / "run" / "ckpt.json"
    assert cli.main(["train", "--config", str(tiny_config_path), "--out", str(out), "--no-progress"]) == 0
    return out


def test_train_writes_checkpoints_and_loss(trained):
    assert trained.exists()
    assert trained.with_name("ckpt.best.json").exists()
    rows = read_csv(trained.with_name("ckpt_loss.csv"))
    assert [r["epoch"] for r in rows] == [1.0, 2.0]
    meta = load_checkpoint(trained).training_meta
    assert meta["epochs"] == 2
    assert meta["config"]["seed"] == 7


def test_train_epochs_override(cli, tmp_path, tiny_config_path):
    out = tmp_path / "one.json"
    assert cli.main(["train", "--config", str(tiny_config_path), "--out", str(out),
                     "--epochs", "1", "--no-progress"]) == 0
    assert len(read_csv(tmp_path / "one_loss.csv")) == 1


def test_train_missing_config(cli, tmp_path):
    assert cli.main(["train", "--config", str(tmp_path / "absent.json"), "--out", str(tmp_path / "c.json")]) == 2


def test_train_numeric_failure(cli, tmp_path, tiny_config_dict):
    data = copy.deepcopy(tiny_config_dict)
    data["training"]["lr"] = 1e300
    path = tmp_path / "explode.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    assert cli.main(["train", "--config", str(path), "--out", str(tmp_path / "c.json"), "--no-progress"]) == 3


def test_simulate(cli, trained, tmp_path):
    out = tmp_path / "traj.csv"
    assert cli.main(["simulate", "--ckpt", str(trained), "--x0", "5,-3", "--steps", "12", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0]["x1"] == 5.0 and rows[0]["x2"] == -3.0
    assert len(rows) <= 13


def test_simulate_bad_inputs(cli, trained, tmp_path):
    out = str(tmp_path / "traj.csv")
    assert cli.main(["simulate", "--ckpt", str(trained), "--x0", "a,b", "--out", out]) == 2
    assert cli.main(["simulate", "--ckpt", str(trained), "--x0", "1,2,3", "--out", out]) == 2
    assert cli.main(["simulate", "--ckpt", str(tmp_path / "absent.json"), "--x0", "1,2", "--out", out]) == 2


def test_verify_report(cli, trained, tmp_path):
    out = tmp_path / "report.json"
    code = cli.main(["verify", "--ckpt", str(trained), "--samples", "3000", "--delta", "0.01",
                     "--steps", "5", "--out", str(out)])
    report = json.loads(out.read_text(encoding="utf-8"))
    assert report["alpha"] == pytest.approx(0.029716, abs=1e-5)
    assert report["kappa"] == pytest.approx(report["sigma_tilde"] - report["alpha"])
    assert report["seed"] == 8
    assert code == (4 if report["vacuous"] else 0)


def test_verify_single_sample_is_vacuous(cli, trained, tmp_path):
    assert cli.main(["verify", "--ckpt", str(trained), "--samples", "1", "--out", str(tmp_path / "r.json")]) == 4


def test_verify_bad_delta(cli, trained, tmp_path):
    assert cli.main(["verify", "--ckpt", str(trained), "--delta", "1.5", "--out", str(tmp_path / "r.json")]) == 2


def test_export_all(cli, trained, tmp_path):
    out = tmp_path / "figures"
    assert cli.main(["export", "--ckpt", str(trained), "--what", "all", "--grid", "101",
                     "--trajectories", "3", "--steps", "5", "--out", str(out)]) == 0
    assert len(read_csv(out / "surface.csv")) == 10201
    assert len(read_csv(out / "field.csv")) == 10201
    assert len(read_csv(out / "vdiff_learned.csv")) == len(read_csv(out / "vdiff_quadratic.csv")) == 10201
    assert (out / "phase.csv").exists()


def test_export_errors(cli, trained, tmp_path):
    out = str(tmp_path / "figures")
    assert cli.main(["export", "--ckpt", str(trained), "--what", "contours", "--out", out]) == 2
    assert cli.main(["export", "--ckpt", str(tmp_path / "absent.json"), "--out", out]) == 2


def test_run_pipeline(cli, tmp_path, tiny_config_path):
    out = tmp_path / "experiment"
    code = cli.main(["run", "--config", str(tiny_config_path), "--out", str(out), "--grid", "11", "--no-progress"])
    assert code in (0, 4)
    for name in ("checkpoint.json", "checkpoint.best.json", "loss.csv", "report.json", "phase.csv",
                 "field.csv", "surface.csv", "vdiff_learned.csv", "vdiff_quadratic.csv"):
        assert (out / name).exists(), name
    assert len(read_csv(out / "surface.csv")) == 121


def test_exit_code_mapping(cli):
    from core import ToolResult

    def result(success, error_type=None, data=None):
        return ToolResult(success=success, data=data, error_message=None, execution_time=0.0,
                          metadata={}, tool_name="t", timestamp=0.0, error_type=error_type)

    assert cli.exit_code_for(result(True, data={"vacuous": False})) == 0
    assert cli.exit_code_for(result(True, data={"vacuous": True})) == 4
    assert cli.exit_code_for(result(False, "CheckpointVersionError")) == 2
    assert cli.exit_code_for(result(False, "InfeasibleError")) == 2
    assert cli.exit_code_for(result(False, "NumericError")) == 3
    assert cli.exit_code_for(result(False, "RuntimeError")) == 1


def test_run_reports_test_split(tmp_path, tiny_config_path, tiny_config_dict):
    from control.config import parse_run_config
    from control.trainer import sample_splits
    from tools import RunExperimentTool

    result = RunExperimentTool().execute(config=str(tiny_config_path), out=str(tmp_path / "exp"), grid=5,
                                         show_progress=False)
    assert result.success, result.error_message
    test = result.data["test"]
    assert (test["samples"], test["steps"]) == (10, 10)
    assert set(test) == {"samples", "steps", "converged", "contracted", "diverged"}
    assert all(0.0 <= test[key] <= 1.0 for key in ("converged", "contracted", "diverged"))

    config = parse_run_config(tiny_config_dict)
    splits = sample_splits(config.build_train_config(), config.build_model().state_box)
    train_rows = {tuple(row) for row in splits["train"].states}
    assert not any(tuple(row) in train_rows for row in splits["test"].states)


def test_tools_listing(cli, capsys):
    assert cli.main(["tools"]) == 0
    listing = capsys.readouterr().out
    for name in ("train", "simulate", "verify", "export", "run"):
        assert name in listing
    assert cli.main(["tools", "--category", "training"]) == 0
    assert "共 1 / 5 个命令" in capsys.readouterr().out
    assert cli.main(["tools", "--category", "plotting"]) == 2
