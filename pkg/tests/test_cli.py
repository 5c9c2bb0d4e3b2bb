import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from horizonlab import cli
from horizonlab.errors import ConfigError
from horizonlab.storage import read_trajectory

TESTS = Path(__file__).parent
SMALL = {"data": {"n_samples": 300}, "model": {"width_factor": 2, "n_blocks": 1}, "train": {"batch_size": 64}}


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.fixture
def plugin_path(monkeypatch):
    monkeypatch.syspath_prepend(str(TESTS))


# --- simulate / ingest -----------------------------------------------------------------


def test_simulate_is_deterministic(tmp_path):
    args = ["simulate", "--system", "lorenz", "--dt", "0.04", "--steps", "1000", "--seed", "1"]
    assert cli.main(args + ["--out", str(tmp_path / "a.csv")]) == 0
    assert cli.main(args + ["--out", str(tmp_path / "b.csv")]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert read_trajectory(tmp_path / "a.csv").M == 1000


def test_simulate_external_needs_plugin(tmp_path, capsys):
    assert cli.main(["simulate", "--system", "external", "--steps", "10", "--out", str(tmp_path / "x.csv")]) == 2
    assert "plugin" in capsys.readouterr().err


def test_simulate_external_plugin(tmp_path, plugin_path):
    out = tmp_path / "e.csv"
    code = cli.main(
        ["simulate", "--system", "external", "--plugin", "vf_plugin:damped_rotation", "--dim", "2", "--steps", "20", "--out", str(out)]
    )
    assert code == 0
    traj = read_trajectory(out)
    assert traj.states.shape == (20, 2)
    assert np.all(np.diff(np.linalg.norm(traj.states, axis=1)) < 0)


def test_simulate_bad_params_usage_error(tmp_path):
    assert cli.main(["simulate", "--system", "lorenz", "--params", "1,2", "--steps", "10", "--out", str(tmp_path / "x.csv")]) == 2


def test_food_web_stays_nonnegative(tmp_path):
    out = tmp_path / "fw.csv"
    assert cli.main(["simulate", "--system", "food_web", "--dt", "2.0", "--steps", "2000", "--out", str(out)]) == 0
    states = read_trajectory(out).states
    assert np.all(np.isfinite(states)) and np.all(states >= 0)


def test_ingest_roundtrip_unchanged(tmp_path):
    src = tmp_path / "s.csv"
    cli.main(["simulate", "--system", "limit_cycle", "--steps", "50", "--out", str(src)])
    assert cli.main(["ingest", str(src), "--out", str(tmp_path / "i.csv")]) == 0
    assert (tmp_path / "i.csv").read_bytes() == src.read_bytes()


def test_ingest_nan_names_row(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,x0,x1\n0,1,2\n0.1,nan,1\n0.2,1,1\n")
    assert cli.main(["ingest", str(bad), "--out", str(tmp_path / "o.csv")]) == 4
    assert "row 2" in capsys.readouterr().err


def test_ingest_normalized_mean_zero(tmp_path):
    src = tmp_path / "s.csv"
    cli.main(["simulate", "--system", "lorenz", "--steps", "400", "--out", str(src)])
    cli.main(["ingest", str(src), "--normalize", "--out", str(tmp_path / "z.csv")])
    z = read_trajectory(tmp_path / "z.csv")
    assert np.max(np.abs(z.states.mean(axis=0))) < 1e-12
    np.testing.assert_allclose(z.raw_states(), read_trajectory(src).states, rtol=1e-12, atol=1e-12)


# --- config ---------------------------------------------------------------------------------


def test_schema_errors_list_offending_keys(tmp_path, capsys):
    cfg = write_config(tmp_path, {"bogus": 1, "train": {"eta": "x", "nope": 2}})
    assert cli.main(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "bogus: unknown key" in err and "train.nope: unknown key" in err and "train.eta" in err


def test_validate_config_direct():
    cli.validate_config({"train": {"T": 3}})
    with pytest.raises(ConfigError):
        cli.validate_config({"probe": {"kind": "everything"}})


def test_bad_budget_and_missing_config(tmp_path):
    assert cli.main(["train", "--budget", "steps:3", "--out", str(tmp_path / "o")]) == 2
    assert cli.main(["train", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 2


# --- experiments --------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("train")
    cfg = write_config(tmp, SMALL)
    out = tmp / "run"
    assert cli.main(["train", "--config", cfg, "--budget", "epochs:5", "--seed", "7", "--out", str(out)]) == 0
    return out


def test_train_outputs_and_manifest(trained):
    names = {p.name for p in trained.iterdir()}
    assert {"loss_curve.csv", "val_curve.csv", "eval.csv", "manifest.json", "params.bin", "model.json", "data.csv"} <= names
    m = json.loads((trained / "manifest.json").read_text())
    assert m["tool"] == "horizonlab" and m["status"] == "ok" and m["command"] == "train"
    assert m["config"]["seed"] == 7 and m["config"]["train"]["budget"] == "epochs:5"
    assert [r["horizon"] for r in rows(trained / "eval.csv")] == ["1", "5", "10"]


def test_train_rerun_bitwise(trained, tmp_path):
    cfg = write_config(tmp_path, SMALL)
    cli.main(["train", "--config", cfg, "--budget", "epochs:5", "--seed", "7", "--out", str(tmp_path / "again")])
    assert (tmp_path / "again" / "loss_curve.csv").read_bytes() == (trained / "loss_curve.csv").read_bytes()


def test_manifest_refeed_reproduces(trained, tmp_path):
    cli.main(["train", "--config", str(trained / "manifest.json"), "--out", str(tmp_path / "re")])
    assert (tmp_path / "re" / "loss_curve.csv").read_bytes() == (trained / "loss_curve.csv").read_bytes()
    assert (tmp_path / "re" / "params.bin").read_bytes() == (trained / "params.bin").read_bytes()


def test_probe_grad_ratio(trained, tmp_path):
    out = tmp_path / "p"
    assert cli.main(["probe", "--kind", "grad_ratio", "--checkpoint", str(trained), "--T", "1,2,3", "--out", str(out)]) == 0
    table = rows(out / "grad_ratio.csv")
    assert list(table[0]) == ["T", "g"]
    assert float(table[0]["g"]) == 1.0 and len(table) == 3


def test_probe_requires_checkpoint(tmp_path):
    assert cli.main(["probe", "--kind", "grad_ratio", "--out", str(tmp_path / "p")]) == 2
    m = json.loads((tmp_path / "p" / "manifest.json").read_text())
    assert m["status"] == "failed" and "checkpoint" in m["error"]


def test_probe_roughness_and_eps(trained, tmp_path):
    other = tmp_path / "other"
    cfg = write_config(tmp_path, SMALL)
    cli.main(["train", "--config", cfg, "--budget", "epochs:3", "--seed", "8", "--out", str(other)])
    rcfg = write_config(tmp_path, {"probe": {"n_points": 41}}, "r.json")
    out = tmp_path / "r"
    code = cli.main(
        ["probe", "--config", rcfg, "--kind", "roughness", "--checkpoint", str(trained), "--checkpoint2", str(other), "--T", "1,2", "--out", str(out)]
    )
    assert code == 0
    table = rows(out / "roughness.csv")
    assert [r["n_points"] for r in table] == ["41", "41"]
    assert cli.main(["probe", "--kind", "eps_check", "--checkpoint", str(trained), "--out", str(tmp_path / "e")]) == 0
    assert list(rows(tmp_path / "e" / "eps_check.csv")[0]) == ["epsilon", "max_deviation", "pass"]


def test_probe_scan_lorenz(tmp_path):
    cfg = write_config(
        tmp_path,
        {"data": {"system": "lorenz", "n_samples": 100}, "probe": {"kind": "scan", "ranges": [[9.0, 11.0]], "n_per_dim": 5, "scan_T": 5}},
    )
    assert cli.main(["probe", "--config", cfg, "--out", str(tmp_path / "s")]) == 0
    table = rows(tmp_path / "s" / "scan1d.csv")
    assert [float(r["c0"]) for r in table] == [9.0, 9.5, 10.0, 10.5, 11.0]
    assert float(table[2]["loss"]) < 1e-8


def test_sweep_two_by_two(tmp_path):
    cfg = write_config(tmp_path, {**SMALL, "sweep": {"T": [1, 2], "eta": [1e-3, 1e-2], "size": [[2, 1]]}})
    assert cli.main(["sweep", "--config", cfg, "--budget", "epochs:1", "--out", str(tmp_path / "sw")]) == 0
    assert len(rows(tmp_path / "sw" / "sweep.csv")) == 4


def test_sweep_failed_cell_marks_partial(tmp_path):
    cfg = write_config(tmp_path, {**SMALL, "sweep": {"T": [1, 400], "eta": [1e-3], "size": [[2, 1]]}})
    assert cli.main(["sweep", "--config", cfg, "--budget", "epochs:1", "--out", str(tmp_path / "sw")]) == 0
    assert json.loads((tmp_path / "sw" / "manifest.json").read_text())["status"] == "partial"


def test_curriculum_schedule_lyapunov(tmp_path):
    cfg = write_config(tmp_path, {**SMALL, "schedule": {"wall_limit": 1.0, "lookahead_epochs": 2}})
    assert cli.main(["curriculum", "--config", cfg, "--T-max", "2", "--budget", "epochs:2", "--out", str(tmp_path / "c")]) == 0
    assert [r["T"] for r in rows(tmp_path / "c" / "curriculum.csv")] == ["1", "2"]
    assert (tmp_path / "c" / "T2_loss_curve.csv").exists()
    assert cli.main(["schedule", "--config", cfg, "--out", str(tmp_path / "s")]) == 0
    assert rows(tmp_path / "s" / "schedule.csv")[0]["action"] == "init"
    assert cli.main(["lyapunov", "--system", "limit_cycle", "--steps", "1500", "--out", str(tmp_path / "l")]) == 0
    spectrum = [float(r["exponent"]) for r in rows(tmp_path / "l" / "lyapunov.csv")]
    assert len(spectrum) == 2 and abs(spectrum[0]) < 0.05


def test_train_on_ingested_data(tmp_path):
    src = tmp_path / "d.csv"
    cli.main(["simulate", "--system", "limit_cycle", "--steps", "200", "--out", str(src)])
    cfg = write_config(tmp_path, SMALL)
    assert cli.main(["train", "--config", cfg, "--data", str(src), "--budget", "epochs:1", "--out", str(tmp_path / "o")]) == 0


def test_console_entry_point(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "horizonlab", "simulate", "--system", "lorenz", "--steps", "5", "--out", str(tmp_path / "a.csv")],
        capture_output=True,
        text=True,
    )
    assert out.returncode == 0, out.stderr
    usage = subprocess.run([sys.executable, "-m", "horizonlab", "train"], capture_output=True, text=True)
    assert usage.returncode == 2
