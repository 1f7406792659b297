import csv
import io
import json

import pytest

from spindemon.cli import main
from spindemon.config import (
    ConfigError,
    build_experiment_config,
    config_hash,
    load_config,
    parse_config_text,
)
from spindemon.physics import build_rates

FAST_CONFIG = """
# small, fast run for exercising the command-line paths
physics.temperature_k = 0.26
rates.in_total_per_s = 2700
demon.required_samples = 20
run.shots = 40
run.master_seed = 5
sweep.grid = 0, 2e-4, 5e-4
"""


class TestConfigParsing:
    def test_defaults_resolve(self):
        cfg = build_experiment_config({})
        assert cfg.shots == 10000
        assert cfg.amplifier.cutoff == 50e3
        assert cfg.demon.required_samples == 1000
        # The base rate is calibrated so loading totals 2700/s.
        assert build_rates(cfg.physics).in_total == pytest.approx(2700.0, rel=1e-9)

    def test_parse_and_overrides(self):
        raw = parse_config_text(FAST_CONFIG)
        cfg = build_experiment_config(raw)
        assert cfg.shots == 40
        assert cfg.master_seed == 5
        assert cfg.demon.required_samples == 20
        assert cfg.sweep.grid == (0.0, 2e-4, 5e-4)

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_text("physics.tempreature_k = 0.3\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("run.shots = 1\nrun.shots = 2\n")

    def test_malformed_line(self):
        with pytest.raises(ConfigError, match="expected"):
            parse_config_text("run.shots 5\n")

    def test_bad_number(self):
        with pytest.raises(ConfigError):
            build_experiment_config({"run.shots": "many"})

    def test_bad_physical_value(self):
        with pytest.raises(ConfigError):
            build_experiment_config({"amplifier.threshold": "1.5"})

    def test_explicit_base_rate_without_calibration(self):
        cfg = build_experiment_config(
            {"physics.base_rate_down_per_s": "2000", "rates.in_total_per_s": ""}
        )
        assert cfg.physics.base_rate_down == 2000.0

    def test_missing_rate_specification(self):
        with pytest.raises(ConfigError, match="base_rate_down"):
            build_experiment_config({"rates.in_total_per_s": ""})

    def test_bad_sweep_variable(self):
        with pytest.raises(ConfigError):
            build_experiment_config({"sweep.variable": "voltage"})

    def test_hash_tracks_content(self):
        assert config_hash({}) == config_hash({})
        assert config_hash({}) != config_hash({"run.shots": "7"})

    def test_load_config_missing_file(self):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config("/nonexistent/config.txt")


class TestCli:
    def write_config(self, tmp_path, text=FAST_CONFIG):
        path = tmp_path / "run.cfg"
        path.write_text(text)
        return path

    def test_budget_stdout(self, capsys):
        rc = main([
            "budget", "--f-init", "0.989", "--f-control", "0.995",
            "--f-readout", "0.9999",
        ])
        assert rc == 0
        out = capsys.readouterr().out
        assert "total,0.9839565945" in out

    def test_project_csv(self, tmp_path):
        out = tmp_path / "proj.csv"
        rc = main(["project", "--out", str(out)])
        assert rc == 0
        rows = list(csv.DictReader(out.open()))
        labels = [row["label"] for row in rows]
        assert labels == ["baseline", "faster_amplifier", "slower_loading"]
        assert float(rows[1]["plateau"]) >= 0.999
        assert float(rows[2]["plateau"]) >= 0.999

    def test_simulate_shot_csv(self, tmp_path):
        cfg = self.write_config(tmp_path)
        out = tmp_path / "shots.csv"
        rc = main(["simulate-shot", "--config", str(cfg), "--shots", "6",
                   "--out", str(out)])
        assert rc == 0
        rows = list(csv.DictReader(out.open()))
        assert len(rows) == 6
        assert set(rows[0]) == {
            "shot_index", "triggered", "trigger_time_s", "n_resets",
            "spin_at_trigger", "n_ionizations", "n_missed_subrise",
            "n_missed_sampled",
        }

    def test_sweep_tobs_csv_and_json(self, tmp_path):
        cfg = self.write_config(tmp_path)
        out_csv = tmp_path / "sweep.csv"
        rc = main(["sweep-tobs", "--config", str(cfg), "--out", str(out_csv)])
        assert rc == 0
        rows = list(csv.DictReader(out_csv.open()))
        assert [row["grid_value"] for row in rows] == ["0.0", "0.0002", "0.0005"]
        assert set(rows[0]) == {
            "grid_value", "shots", "successes", "median", "p25", "p75", "analytic",
        }
        out_json = tmp_path / "sweep.json"
        rc = main(["sweep-tobs", "--config", str(cfg), "--format", "json",
                   "--out", str(out_json)])
        assert rc == 0
        payload = json.loads(out_json.read_text())
        assert payload["metadata"]["master_seed"] == 5
        assert "config_hash" in payload["metadata"]
        assert "version" in payload["metadata"]
        assert len(payload["rows"]) == 3
        assert payload["rows"][0]["grid_value"] == 0.0

    def test_sweep_determinism_byte_identical(self, tmp_path):
        cfg = self.write_config(tmp_path)
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["sweep-tobs", "--config", str(cfg), "--out", str(out1)]) == 0
        assert main(["sweep-tobs", "--config", str(cfg), "--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_sweep_bias_requires_matching_config(self, tmp_path):
        cfg = self.write_config(tmp_path)
        rc = main(["sweep-bias", "--config", str(cfg)])
        assert rc == 2

    def test_sweep_bias_runs(self, tmp_path):
        text = (
            "demon.required_samples = 20\nrun.shots = 40\nrun.master_seed = 5\n"
            "sweep.variable = mu_d\nsweep.grid = -300, 0\n"
        )
        cfg = self.write_config(tmp_path, text)
        out = tmp_path / "bias.csv"
        rc = main(["sweep-bias", "--config", str(cfg), "--demon-off",
                   "--out", str(out)])
        assert rc == 0
        rows = list(csv.DictReader(out.open()))
        assert len(rows) == 2

    def test_fit_roundtrip_and_schema(self, tmp_path):
        data = tmp_path / "data.csv"
        with data.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["grid_value", "shots", "successes"])
            from spindemon.fitting import fidelity_model

            for t in (5e-4, 1e-3, 2e-3, 4e-3, 8e-3, 16e-3, 32e-3):
                p = fidelity_model(t, 0.78, 970.0, 0.003)
                writer.writerow([t, 100000, float(p) * 100000])
        out = tmp_path / "fit.csv"
        rc = main(["fit", "--data", str(data), "--out", str(out)])
        assert rc == 0
        rows = {row["param"]: row for row in csv.DictReader(out.open())}
        assert set(rows) == {"prior", "rate_gap", "missed_probability", "residual_norm"}
        assert float(rows["prior"]["estimate"]) == pytest.approx(0.78, abs=1e-5)
        assert float(rows["rate_gap"]["estimate"]) == pytest.approx(970.0, rel=1e-4)
        assert float(rows["missed_probability"]["estimate"]) == pytest.approx(
            0.003, abs=1e-5
        )

    def test_fit_bad_data_exits_2(self, tmp_path):
        data = tmp_path / "bad.csv"
        data.write_text("a,b\n1,2\n")
        assert main(["fit", "--data", str(data)]) == 2

    def test_fit_nonconvergence_exits_3(self, tmp_path, monkeypatch):
        from spindemon import cli
        from spindemon.fitting import FitConvergenceError

        def explode(rows):
            raise FitConvergenceError("forced")

        monkeypatch.setattr(cli, "fit_fidelity_curve", explode)
        data = tmp_path / "data.csv"
        with data.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["grid_value", "shots", "successes"])
            for t in (1e-3, 2e-3, 4e-3, 8e-3):
                writer.writerow([t, 100, 80])
        assert main(["fit", "--data", str(data)]) == 3

    def test_config_error_exits_2(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("nonsense.key = 1\n")
        assert main(["simulate-shot", "--config", str(bad)]) == 2

    def test_histogram_csv_and_visibility(self, tmp_path, capsys):
        out = tmp_path / "hist.csv"
        rc = main([
            "histogram", "--shots", "20000", "--seed", "3", "--out", str(out),
            "--threshold", "0.45",
        ])
        assert rc == 0
        rows = list(csv.DictReader(out.open()))
        assert set(rows[0]) == {"bin_center", "count"}
        assert sum(int(row["count"]) for row in rows) == 20000
        err = capsys.readouterr().err
        assert "visibility=" in err
