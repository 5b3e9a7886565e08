import math

import numpy as np
import pytest

from risten.cli import main
from risten.config import ConfigError, load_config, parse_config_text
from risten.experiments import ExperimentSpec, MetricRow, render_csv, run_experiment

CONFIG_PATH = "configs/desk.ini"


def small_spec(**over):
    base = dict(kind="snr-sweep", sweep_grid=(20.0,), trials=2, seed=34,
                stages=("I",), baselines=())
    base.update(over)
    return ExperimentSpec(**base)


class TestConfig:
    def test_load_default(self):
        bundle = load_config(CONFIG_PATH)
        assert bundle.system.K == 16 and bundle.system.G == 25
        assert bundle.R == 6
        # noise power derived from PSD + NF + 10log10(delta_f)
        expected = 10 ** ((-174.0 + 10.0 + 10 * math.log10(2.5e6) - 30) / 10)
        assert math.isclose(bundle.system.sigma_B2, expected, rel_tol=1e-12)

    def test_unknown_key_rejected(self):
        text = open(CONFIG_PATH).read().replace("points = 201", "points = 201\nbogus = 1")
        with pytest.raises(ConfigError, match="bogus"):
            parse_config_text(text)

    def test_missing_section_rejected(self):
        text = open(CONFIG_PATH).read().replace("[search]", "[searchx]")
        with pytest.raises(ConfigError):
            parse_config_text(text)

    def test_scatterer_count_mismatch(self):
        text = open(CONFIG_PATH).read().replace("L = 2", "L = 3")
        with pytest.raises(ConfigError, match="scatterers"):
            parse_config_text(text)

    def test_bad_values(self):
        text = open(CONFIG_PATH).read().replace("shrink = 0.5", "shrink = 1.5")
        with pytest.raises(ConfigError, match="shrink"):
            parse_config_text(text)


class TestExperimentSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            small_spec(kind="bogus")
        with pytest.raises(ValueError):
            small_spec(trials=0)
        with pytest.raises(ValueError):
            small_spec(sweep_grid=())
        with pytest.raises(ValueError):
            small_spec(stages=("IV",))
        with pytest.raises(ValueError):
            small_spec(baselines=("nope",))


class TestRunExperiment:
    def test_rows_schema_and_units(self):
        bundle = load_config(CONFIG_PATH)
        rows, summary = run_experiment(small_spec(), bundle)
        assert all(isinstance(r, MetricRow) for r in rows)
        by_metric = {}
        for r in rows:
            by_metric.setdefault(r.metric, r.units)
        assert by_metric["rmse_tauL"] == "m"
        assert by_metric["rmse_thetaR"] == "deg"
        assert by_metric["success_rate"] == "unitless"
        assert by_metric["crlb_tauL"] == "m"
        rates = [r for r in rows if r.metric == "success_rate"]
        assert all(0.0 <= r.value <= 1.0 for r in rates)

    def test_determinism(self):
        bundle = load_config(CONFIG_PATH)
        spec = small_spec()
        csv1 = render_csv(spec, *_rows_comments(spec, bundle))
        csv2 = render_csv(spec, *_rows_comments(spec, bundle))
        assert csv1 == csv2

    def test_per_trial_rows(self):
        bundle = load_config(CONFIG_PATH)
        rows, _ = run_experiment(small_spec(per_trial=True), bundle)
        per_trial = [r for r in rows if r.trial != "agg"]
        assert per_trial and all(r.trial in ("0", "1") for r in per_trial)

    def test_runtime_rows_only_on_request(self):
        bundle = load_config(CONFIG_PATH)
        rows, _ = run_experiment(small_spec(), bundle)
        assert not [r for r in rows if r.metric == "runtime_ms"]
        rows, _ = run_experiment(small_spec(with_runtime=True), bundle)
        assert [r for r in rows if r.metric == "runtime_ms"]

    def test_crlb_only(self):
        bundle = load_config(CONFIG_PATH)
        spec = ExperimentSpec(kind="crlb-only", sweep_grid=(20.0, 30.0), trials=1,
                              seed=34, stages=(), baselines=())
        rows, _ = run_experiment(spec, bundle)
        assert {r.metric for r in rows} == {
            "crlb_tauL", "crlb_tauR", "crlb_psi2", "crlb_psi3",
            "crlb_thetaL", "crlb_thetaR"}
        # tighter bound at higher SNR
        t20 = [r.value for r in rows if r.metric == "crlb_tauL" and r.sweep_value == 20.0]
        t30 = [r.value for r in rows if r.metric == "crlb_tauL" and r.sweep_value == 30.0]
        assert t30[0] < t20[0]

    def test_los_kind_runs_rank2(self):
        bundle = load_config(CONFIG_PATH)
        spec = ExperimentSpec(kind="los", sweep_grid=(25.0,), trials=2, seed=34,
                              stages=("I",), baselines=())
        rows, summary = run_experiment(spec, bundle)
        ok, total = summary["points"][0]["success"]["vscpd"]
        assert total == 2 and ok == 2

    def test_k_sweep_overrides_dims(self):
        bundle = load_config(CONFIG_PATH)
        spec = ExperimentSpec(kind="k-sweep", sweep_grid=(16.0, 24.0), trials=2,
                              seed=34, stages=("I",), baselines=())
        rows, summary = run_experiment(spec, bundle)
        assert [p["sweep"] for p in summary["points"]] == [16.0, 24.0]


def _rows_comments(spec, bundle):
    rows, _ = run_experiment(spec, bundle)
    return rows, ()


class TestCli:
    def test_validate_config_ok(self, capsys):
        assert main(["validate-config", "--config", CONFIG_PATH]) == 0
        assert "valid configuration" in capsys.readouterr().out

    def test_validate_config_bad(self, tmp_path, capsys):
        bad = tmp_path / "bad.ini"
        bad.write_text(open(CONFIG_PATH).read().replace("K1 = 8", "K1 = 0"))
        assert main(["validate-config", "--config", str(bad)]) == 1
        assert "config error" in capsys.readouterr().err

    def test_missing_file(self, capsys):
        assert main(["validate-config", "--config", "/nonexistent.ini"]) == 1

    def test_run_writes_csv(self, tmp_path, capsys):
        out = tmp_path / "rows.csv"
        rc = main(["run", "--config", CONFIG_PATH, "--experiment", "snr-sweep",
                   "--trials", "2", "--seed", "34", "--snr-grid", "25",
                   "--stages", "I", "--baselines", "none", "--out", str(out)])
        assert rc == 0
        lines = out.read_text().splitlines()
        header_idx = next(i for i, ln in enumerate(lines) if not ln.startswith("#"))
        assert lines[header_idx] == "experiment,sweep_value,trial,method,metric,value,units"
        assert any("success_rate" in ln for ln in lines)

    def test_bad_stage_flag(self, capsys):
        assert main(["run", "--config", CONFIG_PATH, "--stages", "IX"]) == 1

    def test_crlb_subcommand(self, tmp_path):
        out = tmp_path / "crlb.csv"
        rc = main(["crlb", "--config", CONFIG_PATH, "--snr-grid", "20",
                   "--seed", "34", "--out", str(out)])
        assert rc == 0
        assert "crlb_tauL" in out.read_text()
