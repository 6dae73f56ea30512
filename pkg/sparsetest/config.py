"""
Experiment configuration and the tester constants block.

An experiment config is a YAML, JSON or TOML file:

    tester: klinear          # one of TESTERS
    k: 2
    d: 1
    n: 32
    epsilon: 0.2
    noise: exact             # exact | uniform:ETA | offset:ETA | round:BITS
    trials: 200
    seed: 7
    generator: yes           # yes | no
    out: results             # relative to the config file
    constants:
      delta_floor: 1.0e-9

Every key of DEFAULT_CONSTANTS can be overridden under `constants`, or with
`--set NAME=VALUE` on the command line.
"""
import os
import os.path
import pathlib

import toml
import yaml

from . import SparseTestException
from .oracle import NoiseModel

OUTPUT_DIR_ENV = "SPARSETEST_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "results"

TESTERS = (
    "klinear",
    "ksparse",
    "kjunta",
    "additivity",
    "lowdegree",
    "hankel-exact",
    "hankel-approx",
)

DEFAULT_CONSTANTS = {
    # self-correction
    "r_additive": 0.02,
    "r_degree_scale": 0.25,
    "r_degree_strict": False,
    "delta_floor": 1e-9,
    "median_samples": 1,
    # additivity tester
    "additivity_rounds": 20,
    "additivity_c": 8,
    "concentration_radius_factor": 2.0,
    # low-degree tester
    "low_degree_c": 8,
    "characterization_rounds_per_d2": 4,
    "low_degree_threshold_factor": 5.0,
    "low_degree_strict_threshold": False,
    # Hankel sparsity testers
    "sparsity_rounds_c": 1.0,
    "singular_ratio": 1e-12,
    # bucket testers
    "bucket_factor": 8,
    "junta_loop_c": 8,
    "g_tau_factor": 10.0,
    # reference oracles
    "distance_samples": 100000,
    "probe_samples": 10000,
}


def _coerce(key, value):
    default = DEFAULT_CONSTANTS[key]
    try:
        if isinstance(default, bool):
            if isinstance(value, str) and value.lower() in {"true", "false"}:
                return value.lower() == "true"
            if not isinstance(value, bool):
                raise ValueError(value)
            return value
        return type(default)(value)
    except (TypeError, ValueError):
        raise SparseTestException(
            "Invalid value for constant %s: %r", key, value, retcode=2
        )


def resolve_constants(overrides=None) -> dict:
    """Return the full constants block with `overrides` applied."""
    constants = dict(DEFAULT_CONSTANTS)
    for key, value in (overrides or {}).items():
        if key not in DEFAULT_CONSTANTS:
            raise SparseTestException("Unknown constant: %s", key, retcode=2)
        constants[key] = _coerce(key, value)
    return constants


def parse_assignments(assignments) -> dict:
    """Parse NAME=VALUE strings from the command line."""
    ret = {}
    for item in assignments or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise SparseTestException("Expected NAME=VALUE, got %r", item, retcode=2)
        ret[key.strip()] = yaml.safe_load(value)
    return ret


def load_file(config_file: pathlib.Path) -> dict:
    try:
        text = config_file.read_text()
    except OSError as exc:
        raise SparseTestException(
            "Config error: cannot read %s: %s", config_file, exc, retcode=2
        )
    try:
        if config_file.suffix == ".toml":
            return toml.loads(text)
        return yaml.safe_load(text)
    except (yaml.YAMLError, toml.TomlDecodeError) as exc:
        raise SparseTestException(
            "Config error: cannot parse %s: %s", config_file, exc, retcode=2
        )


def get_config(config_file: pathlib.Path) -> dict:
    """Read config. Resolve relative-to-config-file paths to absolute paths."""
    config = load_file(config_file)
    try:
        _process_config(config, config_file.parent)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SparseTestException):
            raise
        raise SparseTestException("Config error: %s (%s)", exc, config_file, retcode=2)
    return config


def _process_config(conf: dict, config_file_dir):
    if not isinstance(conf, dict):
        raise TypeError("config must be a mapping")
    if conf["tester"] not in TESTERS:
        raise ValueError("unknown tester %r" % conf["tester"])
    conf["k"] = int(conf["k"])
    conf["d"] = int(conf.setdefault("d", 1))
    conf["n"] = int(conf.setdefault("n", 16))
    conf["epsilon"] = float(conf.setdefault("epsilon", 0.2))
    conf["trials"] = int(conf.setdefault("trials", 100))
    conf["seed"] = int(conf.setdefault("seed", 0))
    if conf["trials"] < 1:
        raise ValueError("trials must be >= 1")
    if not 0 < conf["epsilon"] < 1:
        raise ValueError("epsilon must be in (0, 1)")
    if not 0 <= conf["seed"] < 2 ** 64:
        raise ValueError("seed must be a 64-bit unsigned integer")

    # YAML reads a bare yes/no as a boolean.
    generator = conf.setdefault("generator", "yes")
    if isinstance(generator, bool):
        generator = "yes" if generator else "no"
    if generator not in {"yes", "no"}:
        raise ValueError("generator must be 'yes' or 'no'")
    conf["generator"] = generator

    noise = NoiseModel.parse(str(conf.setdefault("noise", "exact")))
    conf["noise"] = noise.to_string()
    if conf.get("eta") is None:
        conf["eta"] = default_eta(noise)
    conf["eta"] = float(conf["eta"])

    conf["constants"] = resolve_constants(
        conf.get("constants") or conf.get("overrides")
    )
    conf.pop("overrides", None)
    conf.setdefault("name", "{}-{}".format(conf["tester"], conf["generator"]))

    conf["out"] = _resolve(output_dir(conf.get("out")), config_file_dir)
    if conf.get("instance"):
        conf["instance"] = _resolve(conf["instance"], config_file_dir)


def _resolve(path, base_dir) -> str:
    path = os.path.expanduser(path)
    if not os.path.isabs(path):
        path = (pathlib.Path(base_dir) / path).resolve().as_posix()
    return path


def default_eta(noise: NoiseModel) -> float:
    """Pointwise error of a noise model at values of magnitude <= 1."""
    return noise.bound(0.0)


def output_dir(path=None) -> str:
    return path or os.environ.get(OUTPUT_DIR_ENV, DEFAULT_OUTPUT_DIR)
