import json

import pytest
from click.testing import CliRunner

from config import AppConfig, BreakerConfig, ClientConfig, RegistryConfig
from exceptions.sim_exceptions import ConfigurationError
from main import cli


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def script_file(tmp_path):
    path = tmp_path / "script.json"
    path.write_text(json.dumps({
        "name": "cli-smoke",
        "duration_min": 2,
        "events": [{"at_min": 1, "action": "stop", "instances": ["b2"]}],
    }))
    return str(path)


class TestCommands:
    def test_validate_builtin(self, runner):
        result = runner.invoke(cli, ["validate", "--script", "builtin"])
        assert result.exit_code == 0
        assert "three-scenarios" in result.output

    def test_validate_rejects_unknown_instance(self, runner, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"events": [{"at_min": 1, "action": "stop", "instances": ["b7"]}]}))
        assert runner.invoke(cli, ["validate", "--script", str(path)]).exit_code == 2

    def test_run_writes_outputs(self, runner, script_file, tmp_path):
        out = tmp_path / "out"
        result = runner.invoke(cli, ["run", "--script", script_file, "--seed", "1", "--out", str(out)])

        assert result.exit_code == 0, result.output
        assert {p.name for p in out.iterdir()} == {"report.json", "registry.json", "trace.jsonl", "cycles.csv"}
        report = json.loads((out / "report.json").read_text())
        assert report["scenario"] == "cli-smoke" and report["seed"] == 1
        assert "Circuit breaker" in result.output

    def test_run_without_csv_and_graceful(self, runner, script_file, tmp_path):
        out = tmp_path / "out"
        result = runner.invoke(cli, ["run", "--script", script_file, "--out", str(out), "--no-csv", "--graceful"])

        assert result.exit_code == 0, result.output
        assert not (out / "cycles.csv").exists()
        dump = json.loads((out / "registry.json").read_text())
        assert "b2" not in {r["instance_id"] for r in dump}

    def test_run_with_boot_config(self, runner, script_file, tmp_path):
        boot = tmp_path / "boot.json"
        boot.write_text(json.dumps({"client.next_move_direction": "BACKWARD"}))
        out = tmp_path / "out"
        result = runner.invoke(cli, ["run", "--script", script_file, "--out", str(out), "--boot-config", str(boot)])

        assert result.exit_code == 0, result.output
        applied = [json.loads(line) for line in (out / "trace.jsonl").read_text().splitlines()]
        assert {e["direction"] for e in applied if e["kind"] == "apply"} == {"BACKWARD"}

    def test_run_missing_script_exits_2(self, runner, tmp_path):
        result = runner.invoke(cli, ["run", "--script", str(tmp_path / "none.json"), "--out", str(tmp_path)])
        assert result.exit_code == 2

    def test_run_unwritable_out_exits_1(self, runner, script_file, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        result = runner.invoke(cli, ["run", "--script", script_file, "--out", str(blocker / "out")])
        assert result.exit_code == 1


class TestConfig:
    @pytest.mark.parametrize("section", [
        RegistryConfig(heartbeat_interval=0),
        BreakerConfig(error_threshold_pct=0),
        BreakerConfig(call_timeout=-5),
        BreakerConfig(call_timeout=5_000),
        BreakerConfig(sleep_window=800),
        ClientConfig(fleet_size=0),
        ClientConfig(speed_control=120),
    ])
    def test_section_invariants(self, section):
        with pytest.raises(ConfigurationError):
            section.validate()

    def test_lease(self):
        assert RegistryConfig().lease_ms == 6_000

    def test_default_spread(self):
        assert ClientConfig().spread_ms() == 1_500
        assert ClientConfig(dispatch_spread_ms=0).spread_ms() == 0

    def test_from_dict_ignores_unknown_keys(self):
        config = AppConfig.from_dict({"SEED": 9, "FLEET_SIZE": 12, "COLOR": "blue"})
        assert (config.SEED, config.FLEET_SIZE) == (9, 12)
        config.validate()

    def test_app_invariants(self):
        with pytest.raises(ConfigurationError):
            AppConfig(TIME_SCALE=-1).validate()
