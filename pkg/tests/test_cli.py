import json
import math
from pathlib import Path

import numpy as np
import pytest

from qnetsense import cli
from qnetsense.config import ConfigError, load_config, parse_real
from qnetsense.tables import DIVERGENT, ResultTable

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write_yaml(tmp_path, text, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


QFIM_YAML = """
scenario: qfim
name: small_qfim
strategy: NLE
components: 2
points:
  - {B: 1.0, phi: pi/4, T: 1.5*pi}
random_points: 2
seed: 3
"""


class TestParseReal:
    @pytest.mark.parametrize(
        "text,value", [("pi", math.pi), ("pi/4", math.pi / 4), ("1.5*pi", 1.5 * math.pi), ("-pi", -math.pi), ("2pi", 2 * math.pi)]
    )
    def test_pi_expressions(self, text, value):
        assert parse_real(text) == pytest.approx(value)

    def test_rejects_text(self):
        with pytest.raises(ValueError):
            parse_real("tau")


class TestConfig:
    def test_shipped_configs_load(self):
        paths = sorted(CONFIGS.glob("*.yaml"))
        assert paths
        for p in paths:
            load_config(p)

    def test_unknown_key_names_path(self, tmp_path):
        p = write_yaml(tmp_path, QFIM_YAML + "bogus_key: 1\n")
        with pytest.raises(ConfigError) as err:
            load_config(p)
        assert err.value.path == "bogus_key"

    def test_nested_range_error(self, tmp_path):
        p = write_yaml(tmp_path, QFIM_YAML + "noise: {gate_error: 0.9}\n")
        with pytest.raises(ConfigError) as err:
            load_config(p)
        assert err.value.path == "noise.gate_error"

    def test_cross_field_error_path(self, tmp_path):
        text = "scenario: landscape\nname: l\nsignal: [1, 0.5, 0.5]\nscan: {axes: [B, bogus]}\n"
        with pytest.raises(ConfigError) as err:
            load_config(write_yaml(tmp_path, text))
        assert err.value.path == "scan.axes"

    def test_unreadable_and_malformed(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.yaml")
        with pytest.raises(ConfigError):
            load_config(write_yaml(tmp_path, "[1, 2"))
        with pytest.raises(ConfigError):
            load_config(write_yaml(tmp_path, "- a\n- b\n"))

    def test_seed_override_changes_digest(self, tmp_path):
        p = write_yaml(tmp_path, QFIM_YAML)
        a, b, c = load_config(p), load_config(p), load_config(p, seed=4)
        assert a.digest() == b.digest() != c.digest() and c.seed == 4

    def test_two_component_fields_are_planar(self, tmp_path):
        text = "scenario: precision-sweep\nname: s\ncomponents: 2\nfield: {B: 1, theta: 0.3}\nsweep: {parameter: T, values: [1]}\n"
        f1, f2 = load_config(write_yaml(tmp_path, text)).fields()
        assert f1.theta == pytest.approx(math.pi / 2) and f1 == f2


class TestResultTable:
    def test_round_trip(self):
        t = ResultTable(["a", "b", "c"], provenance={"seed": "1", "name": "x"})
        t.add(1, 0.1 + 0.2, "text")
        t.add(np.int64(2), np.float64(1e-300), float("inf"))
        back = ResultTable.from_csv(t.to_csv())
        assert back.columns == t.columns and back.rows == t.rows and back.provenance == t.provenance
        assert back.rows[1][2] == DIVERGENT

    def test_nan_rejected(self):
        t = ResultTable(["a"])
        with pytest.raises(ValueError):
            t.add(float("nan"))

    def test_row_width_checked(self):
        with pytest.raises(ValueError):
            ResultTable(["a", "b"]).add(1)


class TestMain:
    def test_qfim_run_writes_outputs(self, tmp_path):
        out = tmp_path / "out"
        code = cli.main(["qfim", "--config", str(write_yaml(tmp_path, QFIM_YAML)), "--out", str(out), "--quiet"])
        assert code == cli.EXIT_OK
        table = ResultTable.from_csv((out / "small_qfim.csv").read_text())
        doc = json.loads((out / "small_qfim.json").read_text())
        assert len(table.rows) == 3 and doc["rows"] == 3 and doc["seed"] == 3
        assert max(table.column("max_abs_diff")) < 1e-6
        assert table.provenance["config_sha256"] == doc["config_sha256"]

    def test_byte_identical_reruns(self, tmp_path):
        cfg = write_yaml(tmp_path, QFIM_YAML)
        for d in ("a", "b"):
            assert cli.main(["qfim", "--config", str(cfg), "--out", str(tmp_path / d), "--quiet"]) == 0
        assert (tmp_path / "a" / "small_qfim.csv").read_bytes() == (tmp_path / "b" / "small_qfim.csv").read_bytes()

    def test_env_output_directory(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
        assert cli.main(["qfim", "--config", str(write_yaml(tmp_path, QFIM_YAML)), "--quiet"]) == 0
        assert (tmp_path / "env" / "small_qfim.csv").exists()

    def test_config_errors_exit_2(self, tmp_path):
        bad = write_yaml(tmp_path, QFIM_YAML + "extra: 1\n", "bad.yaml")
        good = write_yaml(tmp_path, QFIM_YAML)
        assert cli.main(["qfim", "--config", str(bad), "--out", str(tmp_path), "--quiet"]) == cli.EXIT_CONFIG
        assert cli.main(["landscape", "--config", str(good), "--out", str(tmp_path), "--quiet"]) == cli.EXIT_CONFIG
        assert cli.main(["qfim", "--config", str(tmp_path / "nope.yaml"), "--quiet"]) == cli.EXIT_CONFIG

    def test_numerical_failure_exit_3(self, tmp_path, monkeypatch):
        def explode(cfg, jobs):
            raise cli.NumericalFailure("qfim", "non-finite entry")

        monkeypatch.setitem(cli.COMMANDS, "qfim", explode)
        code = cli.main(["qfim", "--config", str(write_yaml(tmp_path, QFIM_YAML)), "--out", str(tmp_path), "--quiet"])
        assert code == cli.EXIT_NUMERICAL

    def test_precision_sweep_divergence_sentinel(self, tmp_path):
        text = (
            "scenario: precision-sweep\nname: sweep\ncomponents: 2\nstrategies: [NLE, RS]\n"
            "field: {B: 1.0, phi: pi/4}\nsweep: {parameter: T, values: [pi, 1.5*pi]}\n"
        )
        assert cli.main(["precision-sweep", "--config", str(write_yaml(tmp_path, text)), "--out", str(tmp_path), "--quiet"]) == 0
        table = ResultTable.from_csv((tmp_path / "sweep.csv").read_text())
        bounds = table.column("bound_NLE")
        assert bounds[0] == DIVERGENT and bounds[1] == pytest.approx(0.0737580, abs=1e-7)

    def test_landscape_and_adaptive(self, tmp_path):
        land = "scenario: landscape\nname: land\nsignal: [1, pi/4, pi/4]\ncontrol: matched\nN: [1, 2]\nscan: {axes: [theta, phi], points: 11, half_width: [0.2, 0.2]}\n"
        assert cli.main(["landscape", "--config", str(write_yaml(tmp_path, land, "l.yaml")), "--out", str(tmp_path), "--quiet"]) == 0
        summary = json.loads((tmp_path / "land.json").read_text())["summary"]
        assert summary
        adapt = "scenario: adaptive\nname: adapt\nsignal: [1, pi/4, pi/4]\nT: pi/4\nadaptive: {runs: 2, rounds: 10}\nstarts: 3\n"
        assert cli.main(["adaptive", "--config", str(write_yaml(tmp_path, adapt, "a.yaml")), "--out", str(tmp_path), "--quiet"]) == 0
        table = ResultTable.from_csv((tmp_path / "adapt.csv").read_text())
        assert set(table.column("kind")) == {"control", "final"}

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["--version"])
        assert exc.value.code == 0
