import csv
import json
import pathlib

import numpy as np
import pytest

from sparsetest import ContractViolation
from sparsetest import config
from sparsetest import harness
from sparsetest.oracle import SparsePolynomial, dump_instance
from sparsetest.reference import brute_force_influential_coords


@pytest.fixture
def make_conf(tmp_path: pathlib.Path):
    def _make(**values):
        conf = {"tester": "hankel-exact", "k": 2, "d": 2, "n": 4, "trials": 6}
        conf.update(values)
        config._process_config(conf, tmp_path)
        return conf

    return _make


def test_gen_yes_klinear(rng):
    f = harness.gen_yes_instance("klinear", 2, 1, 5, rng)
    assert f.sparsity() == 2
    assert f.total_degree() == 1
    assert all(0.5 <= abs(c) <= 2.0 for c, _ in f.terms)


def test_gen_yes_ksparse(rng):
    for _ in range(20):
        f = harness.gen_yes_instance("ksparse", 3, 2, 6, rng)
        assert f.sparsity() == 3
        assert 1 <= f.total_degree() <= 2
        assert len({e for _, e in f.terms}) == 3


def test_gen_yes_kjunta(rng):
    for _ in range(20):
        f = harness.gen_yes_instance("kjunta", 3, 2, 16, rng)
        assert len(f.relevant) == 3
        assert brute_force_influential_coords(f) <= set(f.relevant)


def test_gen_no_instances(rng):
    f = harness.gen_no_instance("klinear", 1, 1, 8, rng)
    assert f.sparsity() == 4
    assert {c for c, _ in f.terms} == {1.0}
    assert harness.gen_no_instance("ksparse", 2, 3, 5, rng).sparsity() == 3
    assert harness.gen_no_instance("lowdegree", 2, 2, 5, rng).total_degree() == 3
    assert harness.gen_no_instance("additivity", 2, 1, 5, rng).total_degree() == 2


@pytest.mark.parametrize(
    "generator, kind, k, d, n",
    [
        ("yes", "ksparse", 10, 1, 3),
        ("yes", "klinear", 6, 1, 5),
        ("no", "kjunta", 2, 1, 5),
        ("yes", "fourier", 1, 1, 5),
        ("maybe", "klinear", 1, 1, 5),
    ],
)
def test_generate_invalid(rng, generator, kind, k, d, n):
    with pytest.raises(ContractViolation):
        harness.generate(generator, kind, k, d, n, rng)


def test_run_tester_unknown(rng):
    with pytest.raises(ContractViolation):
        harness.run_tester("fourier", None, 1, 1, 0.2, 0.0, rng)


@pytest.mark.parametrize("tester", config.TESTERS)
def test_run_trial_is_deterministic(make_conf, tester):
    conf = make_conf(tester=tester, k=1, d=1, n=6)
    first = harness.run_trial(conf, 0, 12345)
    assert first == harness.run_trial(conf, 0, 12345)
    assert first.wall_time == 0.0
    assert first.queries_used > 0


def test_config_hash(make_conf, tmp_path):
    conf = make_conf()
    assert harness.config_hash(conf) == harness.config_hash(
        {**conf, "out": str(tmp_path / "elsewhere")}
    )
    assert harness.config_hash(conf) != harness.config_hash({**conf, "seed": 1})
    assert len(harness.config_hash(conf)) == 16


def test_run_experiment_replay_is_byte_identical(make_conf, tmp_path):
    first = make_conf(tester="klinear", k=1, n=8, out=str(tmp_path / "a"), seed=3)
    second = make_conf(tester="klinear", k=1, n=8, out=str(tmp_path / "b"), seed=3)
    harness.run_experiment(first)
    harness.run_experiment(second)
    name = first["name"] + ".csv"
    assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_run_experiment_outputs(make_conf, tmp_path):
    conf = make_conf(out=str(tmp_path / "out"), name="hx")
    record = harness.run_experiment(conf)
    with (tmp_path / "out/hx.csv").open() as fp:
        rows = list(csv.reader(fp))
    assert tuple(rows[0]) == harness.CSV_FIELDS
    assert len(rows) == 1 + 6
    assert [row[10] for row in rows[1:]] == [str(i) for i in range(6)]
    assert {row[12] for row in rows[1:]} <= {"accept", "reject"}

    summary = json.loads((tmp_path / "out/hx.json").read_text())
    assert summary["trials"] == 6
    assert summary["accepts"] == record.accepts
    assert summary["config_hash"] == rows[1][1]
    assert summary["budget"] == 5
    assert summary["within_budget"] is True
    assert summary["ci_low"] <= summary["accept_rate"] <= summary["ci_high"]


def test_run_experiment_without_write(make_conf, tmp_path):
    conf = make_conf(out=str(tmp_path / "none"))
    harness.run_experiment(conf, write=False)
    assert not (tmp_path / "none").exists()


def test_run_experiment_fixed_instance(mocker, make_conf, tmp_path):
    instance = tmp_path / "f.json"
    f = SparsePolynomial(4, [(1.0, [1, 0, 0, 0]), (2.0, [0, 1, 1, 0])])
    dump_instance(f, instance)
    conf = make_conf(instance="f.json", trials=4)
    load = mocker.spy(harness, "load_instance")
    generate = mocker.spy(harness, "generate")
    record = harness.run_experiment(conf, write=False)
    assert load.call_count == 1
    assert generate.call_count == 0
    assert record.accepts == 4


def test_run_record(make_conf, caplog):
    conf = make_conf()
    trials = [
        harness.TrialResult(i, i, accept, queries, 1, 0.5)
        for i, (accept, queries) in enumerate(
            [(True, 5), (True, 5), (False, 3), (True, 9)]
        )
    ]
    record = harness.RunRecord(conf, list(reversed(trials)))
    assert [t.trial for t in record.trials] == [0, 1, 2, 3]
    assert record.accept_rate == 0.75
    assert record.queries == (3, 5, 9)
    assert record.wall_time == 2.0
    assert not record.within_budget
    assert "budget is 5" in caplog.text
    assert 0 < record.ci[0] < 0.75 < record.ci[1] <= 1
    with pytest.raises(ContractViolation):
        harness.RunRecord(conf, [])


def test_generate_fixtures(tmp_path):
    manifest_file = harness.generate_fixtures(
        "ksparse", 2, 1, 4, 2, 9, tmp_path / "fx", samples=1000
    )
    manifest = json.loads(manifest_file.read_text())
    files = sorted(entry["file"] for entry in manifest["instances"])
    assert files == ["no_000.json", "no_001.json", "yes_000.json", "yes_001.json"]
    for entry in manifest["instances"]:
        assert (tmp_path / "fx" / entry["file"]).exists()
        assert ("projection_distance" in entry) == (entry["generator"] == "no")


def test_projection_distance(rng):
    f = SparsePolynomial(2, [(3.0, [1, 0]), (0.5, [0, 1])])
    distance = harness.projection_distance(f, 1, 100000, rng)
    assert distance == pytest.approx(0.5 * np.sqrt(2 / np.pi), abs=0.01)
