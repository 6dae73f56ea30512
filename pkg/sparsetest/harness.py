"""
Instance generators and the seeded experiment runner.

An experiment runs `trials` independent trials of one tester. Trial i gets the
i-th child seed of the experiment seed; it draws its instance (unless a fixed
instance file is configured), builds an oracle and runs the tester. Results are
written as `<name>.csv` (one row per trial, no timing, so replays are
byte-identical) and `<name>.json` (aggregates, resolved config, wall time).
"""
import csv
import hashlib
import json
import logging as log
import pathlib
import statistics
import time
from collections import namedtuple
from typing import List, Optional

import numpy as np
from scipy.special import comb
from scipy.stats import binomtest

from . import ContractViolation
from . import config
from . import reference
from . import testers
from .hankel import approx_poly_sparsity_test, exact_sparsity_test
from .oracle import (
    FunctionInstance,
    JuntaInstance,
    NoiseModel,
    OracleHandle,
    SparsePolynomial,
    TesterVerdict,
    derive_seeds,
    dump_instance,
    load_instance,
    to_polynomial,
)
from .selfcorrect import (
    SelfCorrectConfig,
    additivity_tester,
    approx_low_degree_tester,
)

CSV_SCHEMA_VERSION = 1
CSV_FIELDS = (
    "schema_version",
    "config_hash",
    "tester",
    "generator",
    "k",
    "d",
    "n",
    "epsilon",
    "eta",
    "noise",
    "trial",
    "seed",
    "decision",
    "queries_used",
    "rounds",
)
COEFF_RANGE = (0.5, 2.0)
_MAX_DRAWS = 10000

TrialResult = namedtuple(
    "TrialResult", "trial, seed, accept, queries_used, rounds, wall_time"
)


def _coefficient(stream) -> float:
    sign = 1.0 if stream.random() < 0.5 else -1.0
    return sign * stream.uniform(*COEFF_RANGE)


def _check_coords(k: int, n: int):
    if not 1 <= k <= n:
        raise ContractViolation("Need 1 <= %d <= n = %d coordinates", k, n)


def _linear(n: int, coords, coeffs) -> SparsePolynomial:
    terms = []
    for i, c in zip(coords, coeffs):
        expo = [0] * n
        expo[int(i)] = 1
        terms.append((c, expo))
    return SparsePolynomial(n, terms)


def _sparse(k: int, d: int, n: int, stream) -> SparsePolynomial:
    """k distinct monomials of total degree 1..d with coefficients in +-[0.5, 2]."""
    if d < 1:
        raise ContractViolation("Degree must be at least 1, got %s", d)
    available = comb(n + d, d, exact=True) - 1
    if k > available:
        raise ContractViolation(
            "Only %d monomials of degree 1..%d in %d variables, asked for %d",
            available,
            d,
            n,
            k,
        )
    exponents = set()
    for _ in range(_MAX_DRAWS):
        if len(exponents) == k:
            break
        degree = int(stream.integers(1, d + 1))
        coords = stream.integers(0, n, size=degree)
        exponents.add(tuple(int(e) for e in np.bincount(coords, minlength=n)))
    else:
        raise ContractViolation("Could not draw %d distinct monomials", k)
    return SparsePolynomial(n, [(_coefficient(stream), e) for e in sorted(exponents)])


def gen_yes_instance(kind: str, k: int, d: int, n: int, stream) -> FunctionInstance:
    """A random instance inside the class `kind` tests for."""
    if kind in ("klinear", "additivity"):
        _check_coords(k, n)
        coords = stream.choice(n, size=k, replace=False)
        return _linear(n, coords, [_coefficient(stream) for _ in coords])
    if kind == "kjunta":
        _check_coords(k, n)
        relevant = sorted(int(i) for i in stream.choice(n, size=k, replace=False))
        inner = _sparse(k, max(d, 1), k, stream)
        return JuntaInstance(n, relevant, inner)
    if kind in ("ksparse", "lowdegree", "hankel-exact", "hankel-approx"):
        return _sparse(k, max(d, 1), n, stream)
    raise ContractViolation("Unknown tester kind: %s", kind)


def gen_no_instance(kind: str, k: int, d: int, n: int, stream) -> FunctionInstance:
    """A random instance far from the class `kind` tests for."""
    if kind in ("klinear", "kjunta"):
        _check_coords(2 * k + 2, n)
        coords = stream.choice(n, size=2 * k + 2, replace=False)
        return _linear(n, coords, [1.0] * len(coords))
    if kind in ("ksparse", "hankel-exact", "hankel-approx"):
        return _sparse(k + 1, max(d, 1), n, stream)
    if kind == "lowdegree":
        base = _sparse(k, max(d, 1), n, stream)
        expo = [0] * n
        expo[int(stream.integers(0, n))] = d + 1
        return SparsePolynomial(n, base.terms + [(1.0, expo)])
    if kind == "additivity":
        base = gen_yes_instance("additivity", k, d, n, stream)
        expo = [0] * n
        expo[int(stream.integers(0, n))] = 2
        return SparsePolynomial(n, base.terms + [(1.0, expo)])
    raise ContractViolation("Unknown tester kind: %s", kind)


def generate(generator: str, kind: str, k: int, d: int, n: int, stream):
    if generator == "yes":
        return gen_yes_instance(kind, k, d, n, stream)
    if generator == "no":
        return gen_no_instance(kind, k, d, n, stream)
    raise ContractViolation("Generator must be 'yes' or 'no', got %r", generator)


def run_tester(
    tester: str,
    oracle,
    k: int,
    d: int,
    epsilon: float,
    eta: float,
    stream,
    constants: Optional[dict] = None,
) -> TesterVerdict:
    constants = config.resolve_constants(constants)
    if tester == "klinear":
        return testers.test_k_linear(oracle, k, epsilon, eta, stream, constants)
    if tester == "ksparse":
        return testers.test_k_sparse(oracle, k, d, epsilon, eta, stream, constants)
    if tester == "kjunta":
        return testers.test_k_junta(oracle, k, epsilon, eta, stream, constants)
    if tester == "additivity":
        cfg = SelfCorrectConfig(constants, alpha=eta)
        return additivity_tester(oracle, epsilon, stream, cfg=cfg)
    if tester == "lowdegree":
        cfg = SelfCorrectConfig(constants, alpha=eta)
        return approx_low_degree_tester(oracle, d, epsilon, stream, cfg=cfg)
    if tester == "hankel-exact":
        return exact_sparsity_test(oracle, k, stream, constants)
    if tester == "hankel-approx":
        return approx_poly_sparsity_test(oracle, k, d, eta, stream, constants)
    raise ContractViolation("Unknown tester: %s", tester)


def run_trial(
    conf: dict, trial: int, seed: int, instance: Optional[FunctionInstance] = None
) -> TrialResult:
    stream = np.random.default_rng(seed)
    if instance is None:
        instance = generate(
            conf["generator"], conf["tester"], conf["k"], conf["d"], conf["n"], stream
        )
    oracle = OracleHandle(instance, NoiseModel.parse(conf["noise"]), seed=seed)
    start = time.perf_counter()
    verdict = run_tester(
        conf["tester"],
        oracle,
        conf["k"],
        conf["d"],
        conf["epsilon"],
        conf["eta"],
        stream,
        conf["constants"],
    )
    wall_time = time.perf_counter() - start
    log.debug("Trial %d (seed %d): %s", trial, seed, verdict)
    return TrialResult(
        trial, seed, verdict.accept, verdict.queries_used, verdict.rounds, wall_time
    )


def config_hash(conf: dict) -> str:
    """sha256 of the resolved config, output directory excluded."""
    data = {key: value for key, value in conf.items() if key != "out"}
    blob = json.dumps(data, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


class RunRecord:
    """Aggregated outcome of an experiment, with the per-trial results."""

    def __init__(self, conf: dict, trials: List[TrialResult]):
        if not trials:
            raise ContractViolation("A run record needs at least one trial")
        self.config = conf
        self.config_hash = config_hash(conf)
        self.trials = sorted(trials, key=lambda t: t.trial)
        self.accepts = sum(t.accept for t in self.trials)
        self.accept_rate = self.accepts / len(self.trials)
        ci = binomtest(self.accepts, len(self.trials)).proportion_ci(
            confidence_level=0.95
        )
        self.ci = (float(ci.low), float(ci.high))
        queries = [t.queries_used for t in self.trials]
        self.queries = (min(queries), statistics.median(queries), max(queries))
        self.budget = testers.query_budget(
            conf["tester"], conf["k"], conf["d"], conf["epsilon"], conf["constants"]
        )
        self.wall_time = sum(t.wall_time for t in self.trials)
        if self.queries[2] > self.budget:
            log.warning(
                "%s: %d queries used, budget is %d",
                conf["name"],
                self.queries[2],
                self.budget,
            )

    @property
    def within_budget(self) -> bool:
        return self.queries[2] <= self.budget

    def rows(self):
        conf = self.config
        for t in self.trials:
            yield (
                CSV_SCHEMA_VERSION,
                self.config_hash,
                conf["tester"],
                conf["generator"],
                conf["k"],
                conf["d"],
                conf["n"],
                conf["epsilon"],
                conf["eta"],
                conf["noise"],
                t.trial,
                t.seed,
                "accept" if t.accept else "reject",
                t.queries_used,
                t.rounds,
            )

    def to_dict(self) -> dict:
        return {
            "schema_version": CSV_SCHEMA_VERSION,
            "config_hash": self.config_hash,
            "config": self.config,
            "trials": len(self.trials),
            "accepts": self.accepts,
            "accept_rate": self.accept_rate,
            "ci_low": self.ci[0],
            "ci_high": self.ci[1],
            "queries_min": self.queries[0],
            "queries_median": self.queries[1],
            "queries_max": self.queries[2],
            "budget": self.budget,
            "within_budget": self.within_budget,
            "wall_time": self.wall_time,
            "results": [
                {
                    "trial": t.trial,
                    "seed": t.seed,
                    "decision": "accept" if t.accept else "reject",
                    "queries_used": t.queries_used,
                    "rounds": t.rounds,
                }
                for t in self.trials
            ],
        }

    def write_csv(self, path: pathlib.Path):
        with path.open("w", newline="") as fp:
            writer = csv.writer(fp, lineterminator="\n")
            writer.writerow(CSV_FIELDS)
            writer.writerows(self.rows())
        log.debug("Wrote %s", path)

    def write_json(self, path: pathlib.Path):
        with path.open("w") as fp:
            json.dump(self.to_dict(), fp, indent=4, default=str)
        log.debug("Wrote %s", path)

    def write(self, directory) -> pathlib.Path:
        directory = pathlib.Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        csv_file = directory / "{}.csv".format(self.config["name"])
        self.write_csv(csv_file)
        self.write_json(directory / "{}.json".format(self.config["name"]))
        return csv_file


def run_experiment(conf: dict, write: bool = True) -> RunRecord:
    """Run all trials of a resolved config (see config.get_config)."""
    instance = load_instance(conf["instance"]) if conf.get("instance") else None
    seeds = derive_seeds(conf["seed"], conf["trials"])
    results = [run_trial(conf, i, seed, instance) for i, seed in enumerate(seeds)]
    record = RunRecord(conf, results)
    log.info(
        "%s: accept rate %.3f (%d/%d, 95%% CI %.3f-%.3f), queries %s-%s",
        conf["name"],
        record.accept_rate,
        record.accepts,
        len(record.trials),
        record.ci[0],
        record.ci[1],
        record.queries[0],
        record.queries[2],
    )
    if write:
        record.write(conf["out"])
    return record


def projection_distance(instance: FunctionInstance, k: int, m: int, stream) -> float:
    """Monte Carlo l1 distance to the instance truncated to its k largest terms."""
    poly = to_polynomial(instance)
    keep = sorted(poly.terms, key=lambda term: -abs(term[0]))[:k]
    projection = SparsePolynomial(poly.n, keep)
    return reference.mc_l1_distance(poly, projection, m, stream).mean


def generate_fixtures(
    kind: str,
    k: int,
    d: int,
    n: int,
    count: int,
    seed: int,
    out,
    samples: int = 10000,
) -> pathlib.Path:
    """Write `count` YES and NO instances for `kind` plus a manifest.json."""
    out = pathlib.Path(out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"tester": kind, "k": k, "d": d, "n": n, "seed": seed, "instances": []}
    streams = [np.random.default_rng(s) for s in derive_seeds(seed, 2 * count)]
    for i in range(count):
        for generator, stream in (("yes", streams[2 * i]), ("no", streams[2 * i + 1])):
            instance = generate(generator, kind, k, d, n, stream)
            path = out / "{}_{:03d}.json".format(generator, i)
            dump_instance(instance, path)
            entry = {"file": path.name, "generator": generator}
            if generator == "no" and kind not in ("lowdegree", "additivity"):
                distance = projection_distance(instance, k, samples, stream)
                entry["projection_distance"] = distance
                if distance <= 0.1:
                    log.warning("%s is only %.3g from its projection", path, distance)
            manifest["instances"].append(entry)
    manifest_file = out / "manifest.json"
    with manifest_file.open("w") as fp:
        json.dump(manifest, fp, indent=4)
    log.info("Wrote %d fixtures to %s", 2 * count, out)
    return manifest_file
