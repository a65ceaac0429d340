import json
import math
from pathlib import Path

import numpy as np
import pytest

from smolpois.diagnostics import DiagnosticsRecord
from smolpois.harness import (
    CSV_HEADER,
    ConfigError,
    RunConfig,
    dumps_deterministic,
    emit_outputs,
    load_config,
    load_sweep,
    main,
    preset_config,
    simulate,
    validation_suite,
)


def write_config(tmp_path, body: str) -> Path:
    path = tmp_path / "run.ini"
    path.write_text(body, encoding="utf-8")
    return path


BASIC = """
[coefficient]
expr = (1+r)^-1

[run]
mass = 1.0
formulation = f
t_max = 0.2

[initial]
kind = cosine
amplitude = 0.5
"""


class TestLoadConfig:
    def test_defaults_applied(self, tmp_path):
        cfg = load_config(write_config(tmp_path, BASIC))
        assert cfg.n == 400
        assert cfg.n_y == 400
        assert cfg.dt_init == 1e-6
        assert cfg.coefficient_text == "(1+r)^-1"

    def test_unknown_key_rejected(self, tmp_path):
        bad = BASIC + "\n[run]\nwibble = 1\n"
        # configparser merges duplicate sections, so rewrite cleanly
        bad = BASIC.replace("t_max = 0.2", "t_max = 0.2\nwibble = 1")
        with pytest.raises(ConfigError, match="wibble"):
            load_config(write_config(tmp_path, bad))

    def test_negative_mass_names_key(self, tmp_path):
        bad = BASIC.replace("mass = 1.0", "mass = -2")
        with pytest.raises(ConfigError, match="mass"):
            load_config(write_config(tmp_path, bad))

    def test_type_mismatch(self, tmp_path):
        bad = BASIC.replace("t_max = 0.2", "t_max = soon")
        with pytest.raises(ConfigError, match="t_max"):
            load_config(write_config(tmp_path, bad))

    def test_auto_delta_dispatch(self, tmp_path):
        body = """
[coefficient]
expr = (1+r)^-2

[initial]
kind = pam
q = auto
delta = auto
"""
        cfg = load_config(write_config(tmp_path, body))
        assert cfg.pam_q == "auto"
        assert cfg.pam_delta == "auto"

    def test_missing_coefficient(self, tmp_path):
        with pytest.raises(ConfigError, match="coefficient.expr"):
            load_config(write_config(tmp_path, "[run]\nmass = 1.0\n"))

    def test_bad_expression_rejected(self, tmp_path):
        bad = BASIC.replace("(1+r)^-1", "(1+r")
        with pytest.raises(ConfigError, match="coefficient.expr"):
            load_config(write_config(tmp_path, bad))


class TestPresets:
    def test_known_presets(self):
        for name in ("blowup-demo", "global-demo", "decr-demo", "crossval"):
            cfg = preset_config(name)
            assert cfg.preset == name

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            preset_config("nope")

    def test_auto_dt_max(self):
        cfg = preset_config("crossval")
        assert cfg.resolved_dt_max() == pytest.approx(0.25 / 400)
        assert cfg.with_overrides(n=800, n_y=800).resolved_dt_max() == pytest.approx(0.25 / 800)


class TestEmit:
    def _mini_series(self):
        return [
            DiagnosticsRecord(t=0.0, dt=1e-6, f_min=1.0, f_max=1.0, u_max=1.0,
                              mass_err=0.0, l1=0.5, sigma_t=2.0, slack_gex5=0.1,
                              slack_gex6=0.2),
            DiagnosticsRecord(t=0.5, dt=1e-3, f_min=0.9, f_max=1.1, u_max=1.11,
                              mass_err=1e-15, l1=0.4, sigma_t=2.5, slack_gex5=0.1,
                              slack_gex6=0.2),
        ]

    def _mini_summary(self, cfg):
        from smolpois.regime import RegimeReport
        from smolpois.harness import RunSummary

        return RunSummary(
            verdict="global-so-far",
            blowup_time=None,
            final_time=0.5,
            regime=RegimeReport(clause="global", tail_integrable=False, gamma=math.inf),
            design=None,
            checks={},
            config_echo=cfg.to_dict(),
            wall_clock_s=1.23,
        )

    def test_csv_schema(self, tmp_path):
        cfg = preset_config("global-demo")
        emit_outputs(self._mini_summary(cfg), self._mini_series(), tmp_path)
        lines = (tmp_path / "series.csv").read_text().splitlines()
        assert lines[0] == CSV_HEADER
        assert len(lines) == 3
        cells = lines[1].split(",")
        assert len(cells) == len(CSV_HEADER.split(","))
        # absent quantities stay empty
        header = CSV_HEADER.split(",")
        assert cells[header.index("m_q")] == ""
        assert cells[header.index("slack_corollary")] == ""

    def test_seventeen_digits(self, tmp_path):
        cfg = preset_config("global-demo")
        series = self._mini_series()
        series[0].l1 = 1.0 / 3.0
        emit_outputs(self._mini_summary(cfg), series, tmp_path)
        row = (tmp_path / "series.csv").read_text().splitlines()[1]
        assert "0.33333333333333331" in row

    def test_wall_clock_excluded_from_file(self, tmp_path):
        cfg = preset_config("global-demo")
        emit_outputs(self._mini_summary(cfg), self._mini_series(), tmp_path)
        payload = json.loads((tmp_path / "summary.json").read_text())
        assert payload["wall_clock_s"] is None

    def test_infinities_encoded(self, tmp_path):
        cfg = preset_config("global-demo")
        emit_outputs(self._mini_summary(cfg), self._mini_series(), tmp_path)
        payload = json.loads((tmp_path / "summary.json").read_text())
        assert payload["regime"]["gamma"] == "inf"

    def test_byte_determinism(self, tmp_path):
        cfg = RunConfig(
            coefficient_text="(1+r)^-2",
            formulation="f",
            initial_kind="constant",
            t_max=0.2,
            n=64,
            n_y=64,
            dt_max=0.01,
            output_interval=0.05,
        ).validate()
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        for out in (out_a, out_b):
            summary, series = simulate(cfg)
            emit_outputs(summary, series, out)
        assert (out_a / "series.csv").read_bytes() == (out_b / "series.csv").read_bytes()
        assert (out_a / "summary.json").read_bytes() == (out_b / "summary.json").read_bytes()

    def test_stationary_l1_column_constant(self, tmp_path):
        cfg = RunConfig(
            coefficient_text="(1+r)^-2",
            formulation="f",
            initial_kind="constant",
            t_max=1.0,
            n=64,
            n_y=64,
            dt_max=0.01,
            output_interval=0.1,
        ).validate()
        summary, series = simulate(cfg)
        emit_outputs(summary, series, tmp_path)
        lines = (tmp_path / "series.csv").read_text().splitlines()[1:]
        idx = CSV_HEADER.split(",").index("L1")
        l1s = [float(line.split(",")[idx]) for line in lines]
        assert max(l1s) - min(l1s) <= 1e-10


class TestJsonWriter:
    def test_sorted_and_stable(self):
        text = dumps_deterministic({"b": 1, "a": [1.5, None, True]})
        assert json.loads(text) == {"b": 1, "a": [1.5, None, True]}

    def test_nan_and_inf_strings(self):
        payload = json.loads(dumps_deterministic({"x": math.inf, "y": -math.inf, "z": math.nan}))
        assert payload == {"x": "inf", "y": "-inf", "z": "nan"}


class TestCli:
    def test_classify_global(self, capsys):
        code = main(["classify", "--coeff", "(1+r)^-1"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["clause"] == "global"

    def test_classify_blowup_via_gamma(self, capsys):
        code = main(["classify", "--coeff", "(1+r)^-2"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["clause"] == "blowup-via-(1)"
        assert payload["gamma"] == pytest.approx(0.5, abs=1e-6)

    def test_design_cli(self, capsys):
        code = main(["design", "--coeff", "(1+r)^-2", "--mass", "1.0", "--theta", "0.5",
                     "--alpha", "2.0", "--grid", "200"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["design_failed"] is False
        assert payload["q"] == 4.0
        assert payload["lambda_m_q0"] < 0.0

    def test_usage_error_exit_one(self, capsys):
        assert main(["classify"]) == 1
        assert main(["simulate"]) == 1  # needs --preset or --config

    def test_bad_coefficient_exit_one(self):
        assert main(["classify", "--coeff", "(1+r"]) == 1

    def test_simulate_writes_outputs(self, tmp_path, capsys):
        code = main([
            "simulate", "--preset", "global-demo", "--t-max", "0.1",
            "--grid", "64", "--out", str(tmp_path / "demo"),
        ])
        assert code == 0
        out = capsys.readouterr().out
        payload = json.loads(out)
        assert payload["verdict"] == "global-so-far"
        assert (tmp_path / "demo" / "series.csv").exists()
        assert (tmp_path / "demo" / "summary.json").exists()

    def test_validate_runs(self, capsys):
        assert main(["validate"]) == 0
        out = capsys.readouterr().out
        assert "[PASS]" in out
        assert "[FAIL]" not in out


class TestSweep:
    def test_sweep_manifest(self, tmp_path, capsys):
        body = """
[coefficient]
expr = (1+r)^-2

[run]
formulation = f
t_max = 0.05

[grid]
n = 64
n_y = 64

[initial]
kind = pam
q = 4.0
delta = 0.2

[sweep]
key = initial.delta
values = 0.2, 0.1
"""
        cfg_path = write_config(tmp_path, body)
        out_dir = tmp_path / "sweep"
        code = main(["sweep", "--config", str(cfg_path), "--out", str(out_dir)])
        assert code == 0
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["key"] == "initial.delta"
        assert len(manifest["runs"]) == 2
        for entry in manifest["runs"]:
            child = Path(entry["dir"])
            assert (child / "series.csv").exists()
            assert entry["verdict"] is not None

    def test_sweep_parallel_matches_serial(self, tmp_path):
        body = """
[coefficient]
expr = (1+r)^-2

[run]
formulation = f
t_max = 0.02

[grid]
n = 32
n_y = 32

[initial]
kind = constant

[sweep]
key = run.mass
values = 1.0, 2.0
"""
        cfg_path = write_config(tmp_path, body)
        serial = tmp_path / "serial"
        parallel = tmp_path / "parallel"
        assert main(["sweep", "--config", str(cfg_path), "--out", str(serial)]) == 0
        assert main(["sweep", "--config", str(cfg_path), "--out", str(parallel), "--jobs", "2"]) == 0
        for child in ("run-000", "run-001"):
            a = (serial / child / "series.csv").read_bytes()
            b = (parallel / child / "series.csv").read_bytes()
            assert a == b

    def test_sweep_requires_section(self, tmp_path):
        cfg_path = write_config(tmp_path, BASIC)
        with pytest.raises(ConfigError):
            load_sweep(cfg_path)


class TestSamplesInitialData:
    def test_f_profile_from_file(self, tmp_path):
        n = 64
        y = (np.arange(n) + 0.5) / n
        vals = 1.0 + 0.2 * np.cos(np.pi * y)
        sample_path = tmp_path / "profile.csv"
        sample_path.write_text("\n".join(str(v) for v in vals) + "\n", encoding="utf-8")
        cfg = RunConfig(
            coefficient_text="(1+r)^-2",
            formulation="f",
            initial_kind="samples",
            samples_file=str(sample_path),
            t_max=0.05,
            n=n,
            n_y=n,
            dt_max=0.01,
            output_interval=0.01,
        ).validate()
        summary, series = simulate(cfg)
        assert summary.verdict == "global-so-far"
        assert series[0].f_max == pytest.approx(1.2, rel=1e-2)

    def test_field_csv_format_accepted(self, tmp_path):
        from smolpois.transform import FieldF, field_to_csv

        field = FieldF.from_samples(np.full(32, 0.5), 1.0)
        sample_path = tmp_path / "field.csv"
        field_to_csv(field, sample_path)
        cfg = RunConfig(
            coefficient_text="(1+r)^-2",
            formulation="f",
            initial_kind="samples",
            samples_file=str(sample_path),
            t_max=0.02,
            n=32,
            n_y=32,
            dt_max=0.01,
        ).validate()
        summary, _ = simulate(cfg)
        assert summary.verdict == "global-so-far"


class TestSaveFields:
    def test_final_field_written(self, tmp_path):
        code = main([
            "simulate", "--config", str(write_config(tmp_path, BASIC + "\n[output]\nsave_fields = true\n")),
            "--t-max", "0.05", "--grid", "32", "--out", str(tmp_path / "run"),
        ])
        assert code == 0
        dump = tmp_path / "run" / "field_final.csv"
        assert dump.exists()
        assert dump.read_text().splitlines()[0] == "index,coordinate,value"


class TestValidationSuite:
    def test_all_pass(self):
        results = validation_suite()
        assert results
        for name, passed, detail in results:
            assert passed, f"{name}: {detail}"
