"""
Run configuration: layering, validation and the config file formats.
"""

import json
import logging

import pytest

import config_template
from Utils import constants
from Utils.config import RunConfig, configure_logging, load_config_file, worker_count
from Utils.errors import ConfigError


def test_defaults_are_valid():
    config = RunConfig()
    assert config.a == constants.DEFAULT_A
    assert config.alpha == constants.DEFAULT_ALPHA
    assert config.regime == "focusing"
    assert config.effective_L == config.a + constants.DEFAULT_L_MARGIN
    assert config.effective_q == config.a


def test_cli_beats_file_beats_environment():
    environ = {"WINTER_NLS_A": "3.0", "WINTER_NLS_ALPHA": "-2.0", "WINTER_NLS_SIGMA": "2.5"}
    file_values = {"a": "2.0", "alpha": "-3.0"}
    cli_values = {"a": 1.5, "alpha": None}

    config = RunConfig.from_sources("spectrum", file_values=file_values, cli_values=cli_values, environ=environ)

    assert config.a == 1.5
    assert config.alpha == -3.0
    assert config.sigma == 2.5


def test_dotted_and_dashed_keys_are_accepted():
    config = RunConfig.from_sources("evolve", file_values={"psi0.kind": "gaussian", "psi0.width": "0.3",
                                                           "t-final": "0.5"}, environ={})
    assert config.psi0_width == 0.3
    assert config.t_final == 0.5


@pytest.mark.parametrize("values", [
    {"a": "-1"},
    {"g": "0"},
    {"sigma": "0"},
    {"dt": "0"},
    {"L": "0.5"},
    {"psi0.kind": "plane-wave"},
    {"psi0.kind": "stationary-state-file"},
    {"ell": "3"},
    {"backend": "fft"},
    {"output.format": "xml"},
    {"times": "1,-2"},
    {"a": "one"},
    {"seed": "1.5"},
    {"renormalize": "maybe"},
])
def test_invalid_values_raise_config_error(values):
    with pytest.raises(ConfigError):
        RunConfig.from_sources("evolve", file_values=values, environ={})


def test_unknown_key_and_subcommand_are_rejected():
    with pytest.raises(ConfigError, match="Unknown configuration key"):
        RunConfig.from_sources("spectrum", file_values={"colour": "blue"}, environ={})
    with pytest.raises(ConfigError):
        RunConfig.from_sources("plot", environ={})


def test_times_parse_from_text():
    config = RunConfig.from_sources("dispersive-check", file_values={"times": "4;8, 16"}, environ={})
    assert config.times == [4.0, 8.0, 16.0]


def test_echo_uses_dotted_keys_and_hides_output_location():
    config = RunConfig(subcommand="evolve", output_path="run.json", snapshot_path="snap.csv", timestamp=True)
    echo = config.to_echo()
    assert echo["psi0.kind"] == "gaussian"
    assert "observers.stride" in echo
    assert "output_path" not in echo and "output.path" not in echo
    assert "timestamp" not in echo
    assert "snapshot_path" not in echo


def test_template_loads_as_key_value_file(tmp_path):
    path = tmp_path / "run.env"
    path.write_text(config_template.RUN_CONFIG_TEMPLATE)

    config = RunConfig.from_sources("evolve", file_values=load_config_file(str(path)), environ={})

    assert config.eta == -1.0
    assert config.psi0_kind == "gaussian"
    assert config.observers_stride == 10


def test_plain_json_and_artifact_json(tmp_path):
    plain = tmp_path / "plain.json"
    plain.write_text(json.dumps({"a": 2.0, "alpha": -1.0}))
    assert load_config_file(str(plain)) == {"a": 2.0, "alpha": -1.0}

    echo = RunConfig(subcommand="spectrum", a=2.0).to_echo()
    artifact = tmp_path / "artifact.json"
    artifact.write_text(json.dumps({"artifact": "winter-nls-lab", "config": echo, "result": {}}))
    restored = RunConfig.from_sources("spectrum", file_values=load_config_file(str(artifact)), environ={})
    assert restored == RunConfig(subcommand="spectrum", a=2.0)


def test_csv_header_round_trip(tmp_path):
    original = RunConfig(subcommand="evolve", eta=-2.0, sigma=1.5, times=[2.0, 4.0])
    path = tmp_path / "run.csv"
    path.write_text(f"# winter-nls-lab 1.0.0\n# config: {json.dumps(original.to_echo())}\nt,norm_sq\n0,1\n")

    restored = RunConfig.from_sources("evolve", file_values=load_config_file(str(path)), environ={})

    assert restored == original


def test_bad_config_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config_file(str(tmp_path / "missing.env"))

    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config_file(str(broken))

    headless = tmp_path / "headless.csv"
    headless.write_text("# just a comment\nx,y\n")
    with pytest.raises(ConfigError, match="config"):
        load_config_file(str(headless))


def test_worker_count_honours_environment(monkeypatch):
    monkeypatch.setenv(constants.THREADS_ENV, "1")
    assert worker_count() == 1

    monkeypatch.setenv(constants.THREADS_ENV, "many")
    with pytest.raises(ConfigError):
        worker_count()

    monkeypatch.setenv(constants.THREADS_ENV, "0")
    with pytest.raises(ConfigError):
        worker_count()

    monkeypatch.delenv(constants.THREADS_ENV)
    assert worker_count() >= 1


def test_configure_logging():
    configure_logging("debug")
    assert logging.getLogger().level == logging.DEBUG
    configure_logging("WARNING")
    assert logging.getLogger().level == logging.WARNING
    with pytest.raises(ConfigError):
        configure_logging("chatty")
