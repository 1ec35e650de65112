"""Command-line front end, artifacts, manifests and replay."""

import json
import os
import stat
import subprocess
import sys

import numpy as np
import pytest

from bpsignal import cli
from bpsignal.export import read_trace_csv
from bpsignal.scenario import shipped


def invoke(*argv):
    return cli.main([str(a) for a in argv])


class TestSimulate:
    def test_writes_trace_and_manifest(self, tmp_path, capsys):
        out = tmp_path / "a"
        assert invoke("simulate", "--scenario", shipped("fig1"), "--horizon", 300, "--out", out) == 0
        names = {p.name for p in out.iterdir()}
        assert {"trace.csv", "manifest.json", "stability.csv", "drift.csv", "queues-per-link.svg"} <= names
        man = json.loads((out / "manifest.json").read_text())
        assert man["seed"] == 7 and len(man["scenario_hash"]) == 16
        assert set(man["artifacts"]) == names - {"manifest.json"}
        assert {"bpsignal", "numpy", "scipy", "matplotlib", "python"} <= set(man["versions"])
        assert "--out" not in man["argv"]
        assert "simulated 300 slots" in capsys.readouterr().out

    def test_trace_csv_contents(self, tmp_path):
        out = tmp_path / "a"
        invoke("simulate", "--scenario", "conflict2_stationary", "--horizon", 20, "--seed", 3, "--out", out)
        data = (out / "trace.csv").read_bytes()
        assert data.startswith(b"#schema=bpsignal-trace/1")
        parsed = read_trace_csv(data)
        assert len(parsed["queue"]) == 21 * 4
        assert set(parsed["phase"]) == {(t, 0) for t in range(20)}
        assert parsed["queue"][(0, 0)] == 0.0
        for name in ("stability.csv", "drift.csv"):
            assert (out / name).read_bytes().startswith(b"#schema=")

    def test_artifact_permissions_follow_umask(self, tmp_path):
        out = tmp_path / "a"
        invoke("simulate", "--scenario", "conflict2_stationary", "--horizon", 5, "--no-plots", "--out", out)
        mask = os.umask(0)
        os.umask(mask)
        assert stat.S_IMODE((out / "trace.csv").stat().st_mode) == 0o666 & ~mask

    def test_default_out_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.ENV_OUT, str(tmp_path / "env-out"))
        assert invoke("simulate", "--scenario", "conflict2_stationary", "--horizon", 5, "--no-plots") == 0
        assert (tmp_path / "env-out" / "trace.csv").exists()

    def test_fallback_out_dir(self, tmp_path, monkeypatch):
        monkeypatch.delenv(cli.ENV_OUT, raising=False)
        monkeypatch.chdir(tmp_path)
        assert invoke("simulate", "--scenario", "conflict2_stationary", "--horizon", 5, "--no-plots") == 0
        assert (tmp_path / "bpsignal-out" / "manifest.json").exists()

    def test_horizon_zero(self, tmp_path):
        out = tmp_path / "z"
        assert invoke("simulate", "--scenario", "conflict2_stationary", "--horizon", 0, "--out", out) == 0
        parsed = read_trace_csv((out / "trace.csv").read_bytes())
        assert set(parsed) == {"queue"} and len(parsed["queue"]) == 4

    def test_controller_override(self, tmp_path):
        out = tmp_path / "ft"
        invoke("simulate", "--scenario", "fig1", "--horizon", 40, "--controller", "fixed-time", "--out", out)
        assert json.loads((out / "manifest.json").read_text())["controller"] == "fixed-time"


class TestCapacity:
    def test_infeasible_with_witness(self, tmp_path, capsys):
        out = tmp_path / "c"
        assert invoke("capacity", "--network", shipped("conflict2"), "--lambda", "0.6,0.6", "--out", out) == 0
        text = capsys.readouterr().out
        assert text.startswith("infeasible") and "witness" in text
        cert = json.loads((out / "certificate.json").read_text())
        assert cert["feasible"] is False and cert["witness"]["family"] == "conservation"

    def test_feasible(self, tmp_path, capsys):
        assert invoke("capacity", "--network", "conflict2", "--lambda", "0.4,0.4", "--out", tmp_path) == 0
        assert capsys.readouterr().out.startswith("feasible")

    def test_direction(self, tmp_path, capsys):
        assert invoke("capacity", "--network", "conflict2", "--direction", "0.5,0.5", "--out", tmp_path) == 0
        assert "rho* = 1.000000" in capsys.readouterr().out
        assert json.loads((tmp_path / "multiplier.json").read_text())["rho_star"] == pytest.approx(1.0)

    def test_state_distribution_flag(self, tmp_path, capsys):
        code = invoke("capacity", "--network", "tandem", "--lambda", "0.7,0.3,0.5", "--pi", "1:1,0",
                      "--out", tmp_path)
        assert code == 0
        assert "links 2" in capsys.readouterr().out

    @pytest.mark.parametrize("argv", [
        ["--lambda", "0.1"],                          # wrong length
        ["--lambda", "0.1,-0.1"],                     # negative
        ["--lambda", "0.1,0.1", "--direction", "1,1"],
        [],
    ])
    def test_bad_input_exit_1(self, tmp_path, argv):
        assert invoke("capacity", "--network", "conflict2", *argv, "--out", tmp_path) == 1


class TestErrors:
    def test_unknown_flag(self, capsys):
        assert invoke("simulate", "--scenario", "fig1", "--bogus") == 1
        assert "usage" in capsys.readouterr().err

    def test_missing_subcommand(self):
        assert invoke() == 1

    def test_missing_file(self, tmp_path):
        assert invoke("simulate", "--scenario", tmp_path / "none.json", "--out", tmp_path) == 1

    def test_bad_config(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"network": str(shipped("conflict2")), "horizon": -3}))
        assert invoke("simulate", "--scenario", bad, "--out", tmp_path / "o") == 1
        assert "configuration error" in capsys.readouterr().err

    def test_bad_rho(self, tmp_path):
        assert invoke("simulate", "--scenario", "fig1", "--rho", "-1", "--out", tmp_path) == 1

    def test_bad_range(self, tmp_path):
        assert invoke("sweep", "--scenario", "fig1", "--rho-min", 2, "--rho-max", 1, "--out", tmp_path) == 1

    def test_help_exits_0(self, capsys):
        assert invoke("--help") == 0


class TestSweepAndCompare:
    def test_sweep(self, tmp_path, capsys):
        out = tmp_path / "s"
        code = invoke("sweep", "--scenario", "conflict2_stationary", "--horizon", 300, "--controllers",
                      "backpressure,fixed-time", "--criterion", "stability", "--V", 40,
                      "--rho-max", 1.5, "--out", out)
        assert code == 0
        doc = json.loads((out / "sweep.json").read_text())
        assert [d["controller"] for d in doc] == ["backpressure", "fixed-time"]
        assert (out / "sweep.csv").read_bytes().startswith(b"#schema=")
        assert (out / "sweep-multiplier-bar.svg").exists()

    def test_compare(self, tmp_path):
        out = tmp_path / "m"
        assert invoke("compare", "--scenario", "fig1", "--horizon", 400, "--out", out) == 0
        for name in ("compare.csv", "max-queue-comparison.svg", "avg-queue-comparison.svg"):
            assert (out / name).exists()
        rows = [l for l in (out / "compare.csv").read_text().splitlines() if not l.startswith("#")]
        assert rows[0].split(",")[0] == "controller"


class TestReplay:
    @pytest.mark.parametrize("argv", [
        ["simulate", "--scenario", "fig1", "--horizon", 500],
        ["compare", "--scenario", "fig1", "--horizon", 200, "--controllers", "backpressure,scats"],
        ["capacity", "--network", "tandem", "--direction", "1,1,1", "--pi", "1:0.8,0.2"],
    ])
    def test_byte_identical(self, tmp_path, argv):
        out = tmp_path / "run"
        assert invoke(*argv, "--out", out) == 0
        assert invoke("replay", "--manifest", out / "manifest.json", "--out", tmp_path / "again") == 0
        for name in json.loads((out / "manifest.json").read_text())["artifacts"]:
            assert (out / name).read_bytes() == (tmp_path / "again" / name).read_bytes()

    def test_detects_tampering(self, tmp_path):
        out = tmp_path / "run"
        invoke("simulate", "--scenario", "conflict2_stationary", "--horizon", 30, "--out", out)
        man = json.loads((out / "manifest.json").read_text())
        man["artifacts"]["trace.csv"] = "0" * 64
        (out / "manifest.json").write_text(json.dumps(man))
        assert invoke("replay", "--manifest", out) == 2

    def test_unreadable_manifest(self, tmp_path):
        (tmp_path / "manifest.json").write_text("{")
        assert invoke("replay", "--manifest", tmp_path) == 1


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "bpsignal.cli", "capacity", "--network", "conflict2",
                           "--lambda", "0.6,0.6", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("infeasible")
    assert np.isfinite(json.loads((tmp_path / "certificate.json").read_text())["residuals"]["total_deficit"])
