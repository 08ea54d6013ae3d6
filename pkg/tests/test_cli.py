import csv
import json

import numpy as np
import pytest

from qsynth import cli
from qsynth.errors import CapacityError, ConfigError


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_parse_config_variant1_scenario1(tmp_path):
    cfg = cli.parse_config(write_cfg(tmp_path, "scenario = 1\nagent = v1  # basis encoded\n"))
    assert (cfg.qubits, cfg.layers, cfg.episodes, cfg.horizon) == (12, 1, 1000, 8)
    assert cfg.param_count() == 88


def test_parse_config_variant1_scenario3_over_capacity(tmp_path):
    with pytest.raises(CapacityError):
        cli.parse_config(write_cfg(tmp_path, "scenario = 3\nagent = v1\n"))


def test_parse_config_variant3_defaults(tmp_path):
    cfg = cli.parse_config(write_cfg(tmp_path, "scenario = 2\nagent = V3\nseed = 4\n"))
    assert (cfg.agent, cfg.qubits, cfg.layers, cfg.seed) == ("v3", 5, 2, 4)
    assert cfg.param_count() == 80


def test_hp_and_calibration_overrides(tmp_path):
    text = "scenario = 1\nagent = classical\nhp.learning_rate = 0.005\nhp.optimizer = sgd\ncalibration.reactor_conversion = 0.5\n"
    cfg = cli.parse_config(write_cfg(tmp_path, text))
    assert cfg.hp.learning_rate == 0.005 and cfg.hp.optimizer == "sgd"
    assert cfg.calibration.reactor_conversion == 0.5


@pytest.mark.parametrize(
    "text",
    [
        "scenario = 1\n",
        "agent = v2\n",
        "scenario = 1\nagent = v2\ncolour = red\n",
        "scenario = 1\nagent = v2\nhp.nope = 1\n",
        "scenario = 1\nagent = v2\ncalibration.nope = 1\n",
        "scenario = 1\nagent = v2\nlayers = 2\n",
        "scenario = 1\nagent = v1\nqubits = 4\n",
        "scenario = 1\nagent = classical\nqubits = 4\n",
        "scenario = 4\nagent = v2\n",
        "scenario = 1\nagent = qaoa\n",
        "scenario = one\nagent = v2\n",
        "scenario = 1\nagent = v2\nhp.gamma = 2\n",
        "scenario = 1\nscenario = 2\nagent = v2\n",
        "scenario 1\nagent = v2\n",
    ],
)
def test_invalid_configs_rejected(tmp_path, text):
    with pytest.raises(ConfigError):
        cli.parse_config(write_cfg(tmp_path, text))


def test_preset_pb():
    v2 = cli.resolve_config({"scenario": 3, "agent": "v2", "preset": "pb"})
    v3 = cli.resolve_config({"scenario": 3, "agent": "v3", "preset": "pb"})
    assert (v2.qubits, v2.layers, v2.param_count()) == (6, 30, 744)
    assert (v3.qubits, v3.layers, v3.param_count()) == (6, 20, 744)
    with pytest.raises(ConfigError):
        cli.resolve_config({"scenario": 3, "agent": "classical", "preset": "pb"})


def test_capacity_env(monkeypatch):
    monkeypatch.setenv("QSYNTH_MAX_QUBITS", "11")
    with pytest.raises(CapacityError):
        cli.resolve_config({"scenario": 1, "agent": "v1"})
    monkeypatch.setenv("QSYNTH_MAX_QUBITS", "30")
    assert cli.resolve_config({"scenario": 3, "agent": "v1"}).qubits == 30


def test_run_writes_metrics_and_log(tmp_path):
    cfg = cli.resolve_config({"scenario": 1, "agent": "classical", "episodes": 5, "seed": 2})
    metrics, row = cli.run(cfg, out=tmp_path)
    rows = read_rows(tmp_path / "metrics.csv")
    assert list(rows[0]) == list(cli.METRIC_COLUMNS)
    assert set(rows[0]) == {
        "run_id", "agent", "scenario", "seed", "param_count",
        "opt_sf", "uniq_sf", "feas_sf", "first_opt_episode", "runtime_s",
    }
    assert rows[0]["param_count"] == "2180"
    lines = (tmp_path / "episodes.jsonl").read_text().splitlines()
    assert len(lines) == 5
    first = json.loads(lines[0])
    assert first["episode"] == 1 and first["epsilon"] == 0.08
    assert len(first["steps"]) == 8
    assert first["return"] == sum(s["reward"] for s in first["steps"])
    assert not (tmp_path / "episodes.jsonl.part").exists()


def test_zero_episode_run(tmp_path):
    cfg = cli.resolve_config({"scenario": 2, "agent": "v2", "episodes": 0})
    metrics, row = cli.run(cfg, out=tmp_path)
    assert (tmp_path / "episodes.jsonl").read_text() == ""
    assert (row["opt_sf"], row["uniq_sf"], row["feas_sf"], row["first_opt_episode"]) == (0, 0, 0, "")
    assert row["param_count"] == 100


def _without_runtime(path):
    return [{k: v for k, v in r.items() if k != "runtime_s"} for r in read_rows(path)]


def test_repeat_runs_byte_identical(tmp_path):
    cfg = cli.resolve_config({"scenario": 1, "agent": "v3", "episodes": 6, "seed": 11})
    cli.run(cfg, out=tmp_path / "a")
    cli.run(cfg, out=tmp_path / "b")
    a, b = (tmp_path / d / "episodes.jsonl" for d in "ab")
    assert a.read_bytes() == b.read_bytes()
    assert _without_runtime(tmp_path / "a" / "metrics.csv") == _without_runtime(tmp_path / "b" / "metrics.csv")


def test_derive_seed():
    assert cli.derive_seed(5, 0) == 5
    seeds = [cli.derive_seed(5, i) for i in range(10)]
    assert len(set(seeds)) == 10
    assert seeds == [cli.derive_seed(5, i) for i in range(10)]


def test_batch_rows_and_summary(tmp_path):
    cfg = cli.resolve_config({"scenario": 1, "agent": "classical", "episodes": 30, "seed": 3})
    rows, summaries = cli.batch([cfg], 10, tmp_path)
    assert len(rows) == 10
    assert len(read_rows(tmp_path / "metrics.csv")) == 10
    summary = read_rows(tmp_path / "summary.csv")
    assert len(summary) == 1
    opt = np.array([float(r["opt_sf"]) for r in rows])
    assert float(summary[0]["opt_sf_mean"]) == pytest.approx(opt.mean())
    assert float(summary[0]["opt_sf_sd"]) == pytest.approx(opt.std(ddof=1))
    assert summary[0]["sd_degenerate"] == "False"
    assert [int(r["seed"]) for r in rows] == [cli.derive_seed(3, i) for i in range(10)]
    table = read_rows(tmp_path / "table.csv")
    assert [t["metric"] for t in table] == [label for _, label in cli.SUMMARY_METRICS]
    assert list(table[0])[3:13] == [f"run_{i}" for i in range(1, 11)]


def test_batch_single_repeat_flags_sd(tmp_path, caplog):
    cfg = cli.resolve_config({"scenario": 1, "agent": "classical", "episodes": 3})
    _, summaries = cli.batch([cfg], 1, tmp_path)
    assert summaries[0]["opt_sf_sd"] == 0.0
    assert summaries[0]["sd_degenerate"] is True
    assert "SD reported as 0" in caplog.text


def test_batch_excludes_failed_runs(tmp_path, monkeypatch, caplog):
    cfg = cli.resolve_config({"scenario": 1, "agent": "classical", "episodes": 2})
    real = cli.run

    def flaky(run_cfg, run_id=None, out=None, plot=False):
        if run_id.endswith("r02"):
            raise RuntimeError("boom")
        return real(run_cfg, run_id, out, plot)

    monkeypatch.setattr(cli, "run", flaky)
    rows, summaries = cli.batch([cfg], 3, tmp_path)
    assert len(rows) == 2 and summaries[0]["runs"] == 2
    assert "r02 failed" in caplog.text


def test_oracle_rows():
    one = cli.oracle(1)
    assert len(one) == 3 and one[0]["signature"] == "H-R" and one[0]["reward"] == 1350.0
    two = cli.oracle(2)
    assert len(two) == 11 and sum(r["spec_met"] for r in two) == 1
    three = cli.oracle(3)
    assert [r["signature"] for r in three[:2]] == ["H-R", "H-R-C"]
    assert three[1]["reward"] == pytest.approx(1202.727272727, abs=1e-6)
    assert cli.format_oracle(three) == cli.format_oracle(cli.oracle(3))


def test_main_oracle(tmp_path, capsys):
    assert cli.main(["oracle", "--scenario", "1", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "signature,benzene_flow,purity,spec_met,reward"
    assert out.splitlines()[1] == "H-R,0.225,0.75,1,1350.0"
    assert (tmp_path / "oracle_s1.csv").read_text() == out


def test_main_run_and_rejections(tmp_path, capsys):
    out = tmp_path / "run"
    code = cli.main(["run", "--scenario", "1", "--agent", "v2", "--episodes", "2", "--out", str(out)])
    assert code == 0
    assert (out / "metrics.csv").exists()

    bad = tmp_path / "bad"
    assert cli.main(["run", "--scenario", "3", "--agent", "v1", "--episodes", "2", "--out", str(bad)]) == 2
    assert "capacity" in capsys.readouterr().err
    assert not bad.exists()
    assert cli.main(["run", "--scenario", "1", "--agent", "v2", "--set", "hp.bogus=1", "--out", str(bad)]) == 2
    assert not bad.exists()


def test_main_config_file_and_flag_override(tmp_path):
    path = write_cfg(tmp_path, "scenario = 1\nagent = classical\nepisodes = 50\n")
    out = tmp_path / "o"
    assert cli.main(["run", "--config", str(path), "--episodes", "1", "--out", str(out)]) == 0
    assert len((out / "episodes.jsonl").read_text().splitlines()) == 1


def test_main_batch(tmp_path):
    out = tmp_path / "b"
    code = cli.main(["batch", "--scenario", "1", "--agent", "classical", "--episodes", "2", "--repeat", "2", "--out", str(out)])
    assert code == 0
    assert len(read_rows(out / "metrics.csv")) == 2


def test_plot_outputs(tmp_path):
    cfg = cli.resolve_config({"scenario": 1, "agent": "classical", "episodes": 4})
    cli.run(cfg, out=tmp_path, plot=True)
    assert (tmp_path / "learning_curve.png").read_bytes()[:4] == b"\x89PNG"
