"""Command-line surface: exit codes, printed output, emitted files."""

import subprocess
import sys
from pathlib import Path

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


def cli(*args, **kwargs):
    return subprocess.run(
        [sys.executable, "-m", "ts_observer", *args],
        capture_output=True,
        text=True,
        **kwargs,
    )


class TestValidateConfig:
    def test_all_shipped_configs_pass(self):
        for path in sorted(CONFIG_DIR.glob("*.cfg")):
            proc = cli("validate-config", "--config", str(path))
            assert proc.returncode == 0, (path, proc.stderr)
            assert proc.stdout.startswith("OK")

    def test_bad_config_exits_2(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("model = grid\nmeans = 0.5 ; 0.5\nhorizon = -4\n")
        proc = cli("validate-config", "--config", str(bad))
        assert proc.returncode == 2
        assert "config error" in proc.stderr

    def test_missing_file_exits_2(self):
        proc = cli("validate-config", "--config", "/nonexistent/x.cfg")
        assert proc.returncode == 2


class TestMartingaleCheckCommand:
    def test_default_instance(self):
        proc = cli("martingale-check", "--horizon", "4")
        assert proc.returncode == 0, proc.stderr
        assert "max tower residual" in proc.stdout
        residual = float(proc.stdout.split("max tower residual:")[1].split()[0])
        assert residual < 1e-10

    def test_unsupported_config_exits_3(self, tmp_path):
        cfg = tmp_path / "bb.cfg"
        cfg.write_text("model = beta_bernoulli\narms = 3\n")
        proc = cli("martingale-check", "--config", str(cfg))
        assert proc.returncode == 3
        assert "unsupported instance" in proc.stderr

    def test_oversized_horizon_exits_3(self):
        proc = cli("martingale-check", "--horizon", "40")
        assert proc.returncode == 3

    def test_json_output(self):
        import json

        proc = cli("martingale-check", "--horizon", "3", "--format", "json")
        assert proc.returncode == 0
        obj = json.loads(proc.stdout)
        assert obj["max_residual"] < 1e-10
        assert obj["internal_nodes"] > 0


class TestEnumerateCommand:
    def test_prints_depth_masses(self, tmp_path):
        proc = cli("enumerate", "--horizon", "3", "--out", str(tmp_path))
        assert proc.returncode == 0, proc.stderr
        assert "depth 3" in proc.stdout
        nodes = (tmp_path / "nodes.csv").read_text().splitlines()
        assert nodes[0].startswith("depth,history,probability")
        assert len(nodes) > 10

    def test_json_format(self, tmp_path):
        proc = cli(
            "enumerate", "--horizon", "2", "--out", str(tmp_path), "--format", "json"
        )
        assert proc.returncode == 0
        assert (tmp_path / "nodes.json").exists()


class TestSimulateCommand:
    def test_smoke_with_artifacts(self, tmp_path):
        proc = cli(
            "simulate",
            "--config", str(CONFIG_DIR / "default_2x2.cfg"),
            "--out", str(tmp_path),
            "--replications", "4",
            "--horizon", "50",
            "--no-plots",
        )
        assert proc.returncode == 0, proc.stderr
        assert "point-estimate accuracy" in proc.stdout
        assert (tmp_path / "summary.json").exists()
        assert (tmp_path / "curves.csv").exists()
        assert len(list((tmp_path / "traces").glob("trace_*.csv"))) == 4

    def test_figures_by_default(self, tmp_path):
        proc = cli(
            "simulate",
            "--config", str(CONFIG_DIR / "default_2x2.cfg"),
            "--out", str(tmp_path),
            "--replications", "2",
            "--horizon", "30",
        )
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "figures" / "frequency_convergence.png").exists()
        assert (tmp_path / "figures" / "regret.png").exists()


class TestRegretCommand:
    def test_table_and_series(self, tmp_path):
        proc = cli(
            "regret",
            "--config", str(CONFIG_DIR / "default_2x2.cfg"),
            "--horizon", "100",
            "--replications", "20",
            "--checkpoints", "10", "100",
            "--out", str(tmp_path),
            "--no-plots",
        )
        assert proc.returncode == 0, proc.stderr
        assert "regret/t" in proc.stdout
        series = (tmp_path / "regret_curve.csv").read_text().splitlines()
        assert len(series) == 101  # header + one row per step


class TestCounterexampleCommand:
    def test_forced_play_count_printed(self):
        proc = cli(
            "counterexample",
            "--horizon", "10000",
            "--replications", "2",
            "--checkpoints", "100", "10000",
        )
        assert proc.returncode == 0, proc.stderr
        assert "forced plays of action 1: 100" in proc.stdout

    def test_uses_shipped_config(self, tmp_path):
        proc = cli(
            "counterexample",
            "--config", str(CONFIG_DIR / "counterexample.cfg"),
            "--horizon", "400",
            "--replications", "2",
            "--checkpoints", "20", "400",
            "--out", str(tmp_path),
            "--no-plots",
        )
        assert proc.returncode == 0, proc.stderr
        assert "forced plays of action 1: 20" in proc.stdout
        assert (tmp_path / "counterexample.csv").exists()

    def test_json_output(self):
        import json

        proc = cli(
            "counterexample",
            "--horizon", "100",
            "--replications", "1",
            "--checkpoints", "10", "100",
            "--format", "json",
        )
        assert proc.returncode == 0, proc.stderr
        obj = json.loads(proc.stdout)
        assert obj["forced_plays"] == 10
        assert [row["t"] for row in obj["checkpoints"]] == [10, 100]
