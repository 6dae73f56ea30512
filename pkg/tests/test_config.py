import os
import pathlib

import pytest
import toml
import yaml

from sparsetest import SparseTestException
from sparsetest import config

REPO_DIR = (pathlib.Path(__file__).parent / "..").resolve()
CONFIG_FILE = REPO_DIR / "configs/klinear.yaml"
TOML_CONFIG_FILE = REPO_DIR / "configs/ksparse.toml"
TEST_CONFIG = """---
tester: kjunta
k: 3
"""


@pytest.fixture(autouse=True)
def output_env(mocker):
    mocker.patch.dict("os.environ", HOME="/home/test")
    os.environ.pop(config.OUTPUT_DIR_ENV, None)


@pytest.fixture
def config_file(tmp_path: pathlib.Path):
    conf: dict = yaml.safe_load(CONFIG_FILE.read_bytes())
    conf["trials"] = 3

    file_ = tmp_path / "config.yaml"
    with file_.open("w") as fp:
        yaml.dump(conf, fp)
    return file_


def test_get_config(mocker, config_file):
    mocker.patch("sparsetest.config._process_config")
    conf = config.get_config(config_file)
    assert conf["trials"] == 3
    assert (
        config._process_config.call_args.args[0] is conf
    ), "_process_config should have been called with the same dict that was returned."
    assert config._process_config.call_args.args[1] == config_file.parent


def test_example_configs():
    yaml_conf = config.get_config(CONFIG_FILE)
    assert yaml_conf["tester"] == "klinear"
    assert yaml_conf["generator"] == "yes"
    assert yaml_conf["eta"] == 1e-6
    assert yaml_conf["out"] == str(REPO_DIR / "configs/results")
    toml_conf = config.get_config(TOML_CONFIG_FILE)
    assert toml_conf["d"] == 2
    assert toml_conf["constants"] == config.DEFAULT_CONSTANTS
    assert toml.loads(TOML_CONFIG_FILE.read_text())["generator"] == "no"


def test_process_config_minimal_creates_default_config(tmp_path):
    """A minimal configuration gets defaults and an absolute output directory."""
    conf = yaml.safe_load(TEST_CONFIG)
    config._process_config(conf, tmp_path)
    assert conf == {
        "name": "kjunta-yes",
        "tester": "kjunta",
        "k": 3,
        "d": 1,
        "n": 16,
        "epsilon": 0.2,
        "trials": 100,
        "seed": 0,
        "generator": "yes",
        "noise": "exact",
        "eta": 0.0,
        "constants": config.DEFAULT_CONSTANTS,
        "out": str(tmp_path / "results"),
    }


def test_process_config_noise_and_overrides(tmp_path):
    conf = {
        "tester": "hankel-approx",
        "k": 2,
        "d": 3,
        "noise": "round:20",
        "generator": False,
        "overrides": {"singular_ratio": "1.0e-10", "r_degree_strict": "true"},
        "instance": "f.json",
        "out": "~/runs",
    }
    config._process_config(conf, tmp_path)
    assert conf["generator"] == "no"
    assert conf["eta"] == 2.0 ** -20
    assert conf["constants"]["singular_ratio"] == 1e-10
    assert conf["constants"]["r_degree_strict"] is True
    assert "overrides" not in conf
    assert conf["instance"] == str(tmp_path / "f.json")
    assert conf["out"] == "/home/test/runs"


def test_process_config_output_dir_from_environment(mocker, tmp_path):
    mocker.patch.dict("os.environ", {config.OUTPUT_DIR_ENV: "/data/sparsetest"})
    conf = yaml.safe_load(TEST_CONFIG)
    config._process_config(conf, tmp_path)
    assert conf["out"] == "/data/sparsetest"


@pytest.mark.parametrize(
    "change",
    [
        {"tester": "fourier"},
        {"epsilon": 1.5},
        {"trials": 0},
        {"seed": -1},
        {"generator": "maybe"},
        {"noise": "gauss:1"},
    ],
)
def test_process_config_invalid(change, tmp_path):
    conf = {**yaml.safe_load(TEST_CONFIG), **change}
    with pytest.raises(ValueError):
        config._process_config(conf, tmp_path)


def test_get_config_errors(tmp_path):
    file_ = tmp_path / "config.yaml"
    file_.write_text("tester: klinear\n")
    with pytest.raises(SparseTestException, match="Config error") as exc_info:
        config.get_config(file_)
    assert exc_info.value.retcode == 2

    file_.write_text("tester: [klinear\n")
    with pytest.raises(SparseTestException, match="cannot parse"):
        config.get_config(file_)

    with pytest.raises(SparseTestException, match="cannot read") as exc_info:
        config.get_config(tmp_path / "missing.yaml")
    assert exc_info.value.retcode == 2


def test_resolve_constants():
    constants = config.resolve_constants({"bucket_factor": "4", "delta_floor": 1e-12})
    assert constants["bucket_factor"] == 4
    assert constants["delta_floor"] == 1e-12
    assert config.resolve_constants() == config.DEFAULT_CONSTANTS
    with pytest.raises(SparseTestException, match="Unknown constant"):
        config.resolve_constants({"c_g": 3})
    with pytest.raises(SparseTestException, match="Invalid value"):
        config.resolve_constants({"junta_loop_c": "many"})
    with pytest.raises(SparseTestException, match="Invalid value"):
        config.resolve_constants({"r_degree_strict": "sometimes"})


def test_parse_assignments():
    assert config.parse_assignments(["delta_floor=1.0e-12", "junta_loop_c = 4"]) == {
        "delta_floor": 1e-12,
        "junta_loop_c": 4,
    }
    with pytest.raises(SparseTestException):
        config.parse_assignments(["delta_floor"])
