import subprocess
import sys

import pytest

from scalebench import cli

CONFIG = """\
use_case=UC1
dimension=num_keys
workloads=1000,2000
instance_counts=1,2,3
capacity=1000
duration=8000
warmup=2000
sampling_interval=1000
"""


@pytest.fixture
def experiment(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(CONFIG)
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    return out


def test_run_and_analyze(experiment, tmp_path, capsys):
    plot = tmp_path / "plots" / "scalability.svg"
    code = cli.main(["analyze", "--in", str(experiment), "--threshold", "200", "--method", "lag_trend",
                     "--plot", str(plot)])
    assert code == 0
    assert (plot.parent / "demand.csv").read_text() == "workload,demand\n1000,1\n2000,2\n"
    assert plot.exists()


def test_output_count_method(experiment, tmp_path):
    plot = tmp_path / "p.svg"
    assert cli.main(["analyze", "--in", str(experiment), "--method", "output_count", "--plot", str(plot)]) == 0
    assert (tmp_path / "demand.csv").read_text().splitlines()[1:] == ["1000,1", "2000,2"]


def test_latency_trend_needs_threshold(experiment):
    assert cli.main(["analyze", "--in", str(experiment), "--method", "latency_trend"]) == 2


def test_validation_exit_code(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(CONFIG + "bogus_key=1\n")
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    cfg.write_text(CONFIG.replace("num_keys", "window_size"))
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_subexperiment_failure_exit_code(tmp_path, monkeypatch):
    from scalebench.errors import SubexperimentFailed

    def fail(*a, **k):
        raise SubexperimentFailed("instance crashed")

    monkeypatch.setattr(cli, "run_experiment", fail)
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(CONFIG)
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3


def test_missing_manifest(tmp_path):
    assert cli.main(["analyze", "--in", str(tmp_path)]) == 2


def test_console_entry_point(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("nonsense")
    proc = subprocess.run([sys.executable, "-m", "scalebench.cli", "run", "--config", str(cfg), "--out",
                           str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 2
    assert "invalid" in proc.stderr
