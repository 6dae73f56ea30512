"""
Test-k-Linear, Test-k-Sparse and Test-k-Junta, with the bucket search they share.

Buckets are 0-based: a partition of [0, n) into r buckets 0, ..., r-1.
"""
import itertools
import logging as log
import math
from collections import namedtuple
from typing import Iterable, List, Optional, Set

import numpy as np

from . import ContractViolation
from . import config
from .hankel import approx_poly_sparsity_test, sparsity_rounds
from .oracle import TesterVerdict, draw, splice
from .selfcorrect import (
    LowDegreeOracle,
    SelfCorrectConfig,
    SelfCorrectOracle,
    additivity_tester,
    approx_low_degree_tester,
)

__all__ = [
    "BucketPartition",
    "InfluenceEstimate",
    "TesterVerdict",
    "random_partition",
    "find_inf_bucket",
    "find_inf_buckets",
    "k_linear_noise_ceiling",
    "test_k_linear",
    "test_k_sparse",
    "test_k_junta",
    "estimate_influence",
    "query_budget",
    "partition_complement_probe",
    "structure_probe",
]

InfluenceEstimate = namedtuple("InfluenceEstimate", "mean, stderr, samples")
ProbeResult = namedtuple("ProbeResult", "holds, worst_set, worst")


class BucketPartition:
    """Assignment of every coordinate in [0, n) to one of r buckets."""

    def __init__(self, n: int, r: int, assign):
        assign = np.asarray(assign, dtype=np.int64)
        if assign.shape != (n,):
            raise ContractViolation("Assignment must have %d entries", n)
        if n and (assign.min() < 0 or assign.max() >= r):
            raise ContractViolation("Bucket index out of range [0, %d)", r)
        self.n = n
        self.r = r
        self.assign = assign

    def bucket(self, j: int) -> List[int]:
        return [int(i) for i in np.flatnonzero(self.assign == j)]

    def union(self, S: Iterable[int]) -> np.ndarray:
        """Coordinates in the buckets of S."""
        return np.flatnonzero(np.isin(self.assign, list(S)))

    def bucket_of(self, i: int) -> int:
        return int(self.assign[i])

    def to_dict(self) -> dict:
        return {"n": self.n, "r": self.r, "assign": self.assign.tolist()}

    def __repr__(self):
        return "BucketPartition(n={}, r={})".format(self.n, self.r)


def random_partition(n: int, r: int, stream) -> BucketPartition:
    if r < 1:
        raise ContractViolation("Bucket count must be at least 1, got %s", r)
    return BucketPartition(n, r, stream.integers(0, r, size=n))


def _delta_floor(floor: Optional[float]) -> float:
    if floor is None:
        return config.DEFAULT_CONSTANTS["delta_floor"]
    return floor


def find_inf_bucket(
    oracle, B: BucketPartition, S, tau: float, stream, floor: Optional[float] = None
) -> Optional[int]:
    """Binary search for an influential bucket among S, or None.

    A set of buckets counts as influential when resampling its coordinates moves
    the oracle by more than max(tau, 2 * oracle.error_bound), or by more than the
    relative floor. The left half of a split gets the ceil(|S|/2) smaller indices.
    """
    S = sorted(set(int(j) for j in S))
    if not S:
        raise ContractViolation("Bucket set must not be empty")
    if any(not 0 <= j < B.r for j in S):
        raise ContractViolation("Bucket set %s out of range [0, %d)", S, B.r)
    if tau < 0:
        raise ContractViolation("tau must be non-negative, got %s", tau)
    floor = _delta_floor(floor)
    return _find_inf_bucket(oracle, B, S, tau, stream, floor)


def _find_inf_bucket(oracle, B, S, tau, stream, floor) -> Optional[int]:
    x, y = draw(oracle, stream), draw(oracle, stream)
    a = oracle.query(splice(x, y, B.union(S)))
    b = oracle.query(y)
    tolerance = max(
        tau,
        2.0 * getattr(oracle, "error_bound", 0.0),
        floor * (1.0 + max(abs(a), abs(b))),
    )
    if abs(a - b) <= tolerance:
        return None
    if len(S) == 1:
        return S[0]
    half = (len(S) + 1) // 2
    found = _find_inf_bucket(oracle, B, S[:half], tau, stream, floor)
    if found is None:
        return _find_inf_bucket(oracle, B, S[half:], tau, stream, floor)
    return found


def find_inf_buckets(
    oracle,
    B: BucketPartition,
    X,
    k: int,
    tau: float,
    stream,
    floor: Optional[float] = None,
) -> Set[int]:
    """Up to 8k calls of find_inf_bucket, removing each bucket found from X."""
    X = set(int(j) for j in X)
    if not X:
        raise ContractViolation("Bucket set must not be empty")
    found = set()
    for _ in range(8 * k):
        if not X:
            break
        bucket = find_inf_bucket(oracle, B, X, tau, stream, floor)
        if bucket is not None:
            found.add(bucket)
            X.discard(bucket)
    return found


def _check_epsilon(epsilon):
    if not 0 < epsilon < 1:
        raise ContractViolation("epsilon must be in (0, 1), got %s", epsilon)


def k_linear_noise_ceiling(n: int, constants: Optional[dict] = None) -> float:
    """Largest eta at which test_k_linear's bucket threshold stays below 0.1.

    The threshold is g_tau_factor * eta * n^1.5, while a unit coefficient moves
    the self-corrected oracle by about 1.13 on average. Above this noise level
    bucket tests stop telling influential buckets apart and far instances pass.
    """
    constants = config.resolve_constants(constants)
    return 0.1 / (constants["g_tau_factor"] * n ** 1.5)


def test_k_linear(
    oracle,
    k: int,
    epsilon: float,
    eta: float,
    stream,
    constants: Optional[dict] = None,
) -> TesterVerdict:
    _check_epsilon(epsilon)
    constants = config.resolve_constants(constants)
    ceiling = k_linear_noise_ceiling(oracle.n, constants)
    if eta > ceiling:
        log.warning(
            "Noise %g is above %g, where k-linear bucket tests lose soundness",
            eta,
            ceiling,
        )
    cfg = SelfCorrectConfig(constants, alpha=eta)
    start = oracle.query_count()
    verdict = additivity_tester(oracle, epsilon, stream, cfg=cfg)
    if not verdict.accept:
        return verdict

    r = constants["bucket_factor"] * k * k
    B = random_partition(oracle.n, r, stream)
    g = SelfCorrectOracle(oracle, stream, cfg)
    tau = max(constants["g_tau_factor"] * eta * oracle.n ** 1.5, cfg.delta_floor)
    buckets = find_inf_buckets(g, B, range(r), k, tau, stream, cfg.delta_floor)
    accept = len(buckets) <= k
    if not accept:
        log.debug("Found %d influential buckets, more than k=%d", len(buckets), k)
    return TesterVerdict(
        accept,
        oracle.query_count() - start,
        verdict.rounds + 8 * k,
        {"buckets": sorted(buckets)},
    )


def test_k_sparse(
    oracle,
    k: int,
    d: int,
    epsilon: float,
    eta: float,
    stream,
    constants: Optional[dict] = None,
) -> TesterVerdict:
    _check_epsilon(epsilon)
    if d < 1 or k < 1:
        raise ContractViolation("Need d >= 1 and k >= 1, got d=%s k=%s", d, k)
    constants = config.resolve_constants(constants)
    cfg = SelfCorrectConfig(constants, alpha=eta)
    start = oracle.query_count()
    verdict = approx_low_degree_tester(oracle, d, epsilon, stream, cfg=cfg)
    if not verdict.accept:
        return verdict
    g = LowDegreeOracle(oracle, d, stream, cfg)
    sparsity = approx_poly_sparsity_test(g, k, d, eta, stream, constants)
    return sparsity._replace(
        queries_used=oracle.query_count() - start,
        rounds=verdict.rounds + sparsity.rounds,
    )


def test_k_junta(
    oracle,
    k: int,
    epsilon: float,
    eta: float,
    stream,
    constants: Optional[dict] = None,
) -> TesterVerdict:
    _check_epsilon(epsilon)
    constants = config.resolve_constants(constants)
    floor = constants["delta_floor"]
    start = oracle.query_count()
    r = constants["bucket_factor"] * k * k
    B = random_partition(oracle.n, r, stream)
    tau = max(2.0 * eta, floor)
    S = set(range(r))
    found = set()
    rounds = int(math.ceil(constants["junta_loop_c"] * k / epsilon))
    for i in range(rounds):
        if not S:
            break
        bucket = find_inf_bucket(oracle, B, S, tau, stream, floor)
        if bucket is None:
            continue
        found.add(bucket)
        S.discard(bucket)
        if len(found) > k:
            log.debug("Round %d: %d influential buckets, k=%d", i, len(found), k)
            return TesterVerdict(
                False,
                oracle.query_count() - start,
                i + 1,
                {"buckets": sorted(found)},
            )
    return TesterVerdict(
        True, oracle.query_count() - start, rounds, {"buckets": sorted(found)}
    )


def estimate_influence(source, S, m: int, stream) -> InfluenceEstimate:
    """Monte Carlo Infl_f(S) = E|f(y) - f(x_S y_rest)| over independent Gaussians.

    `source` is an instance (evaluated exactly, in batches) or an oracle.
    """
    if m < 1:
        raise ContractViolation("Sample count must be at least 1, got %s", m)
    n = source.n
    idx = np.array(sorted(set(int(i) for i in S)), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ContractViolation("Coordinates %s out of range [0, %d)", idx.tolist(), n)
    xs = stream.standard_normal((m, n))
    ys = stream.standard_normal((m, n))
    zs = ys.copy()
    zs[:, idx] = xs[:, idx]
    if hasattr(source, "evaluate_many"):
        values = np.abs(source.evaluate_many(ys) - source.evaluate_many(zs))
    else:
        values = np.abs(
            np.array([source.query(y) - source.query(z) for y, z in zip(ys, zs)])
        )
    stderr = float(np.std(values, ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    return InfluenceEstimate(float(np.mean(values)), stderr, m)


def find_inf_bucket_budget(size: int) -> int:
    """Query bound of one find_inf_bucket call on `size` buckets."""
    return max(2, 8 * math.ceil(math.log2(size)) ** 2) if size > 0 else 0


def _additivity_budget(epsilon, constants):
    rounds = math.ceil(constants["additivity_c"] / epsilon)
    return 7 * constants["additivity_rounds"] + rounds * (
        2 * constants["median_samples"] + 1
    )


def _low_degree_budget(d, epsilon, constants):
    rounds = constants["characterization_rounds_per_d2"] * d * d
    characterization = rounds * (d + 1) * (d + 2) * (2 * d + 5)
    return characterization + math.ceil(constants["low_degree_c"] / epsilon) * (
        (d + 1) ** 2 + 1
    )


def query_budget(
    tester: str,
    k: int,
    d: int = 1,
    epsilon: float = 0.2,
    constants: Optional[dict] = None,
) -> int:
    """Worst-case number of oracle queries one call of `tester` may make."""
    constants = config.resolve_constants(constants)
    r = constants["bucket_factor"] * k * k
    if tester == "hankel-exact":
        return 2 * k + 1
    if tester == "hankel-approx":
        return (2 * k + 1) * sparsity_rounds(k, d, constants)
    if tester == "additivity":
        return _additivity_budget(epsilon, constants)
    if tester == "lowdegree":
        return _low_degree_budget(d, epsilon, constants)
    if tester == "klinear":
        g_cost = 2 * constants["median_samples"]
        return _additivity_budget(epsilon, constants) + (
            8 * k * find_inf_bucket_budget(r) * g_cost
        )
    if tester == "ksparse":
        hankel = (2 * k + 1) * sparsity_rounds(k, d, constants)
        return _low_degree_budget(d, epsilon, constants) + hankel * (d + 1) ** 2
    if tester == "kjunta":
        rounds = math.ceil(constants["junta_loop_c"] * k / epsilon)
        return rounds * find_inf_bucket_budget(r)
    raise ContractViolation("Unknown tester: %s", tester)


def _worst(instance, sets, m, stream):
    worst_set, worst = None, None
    for S in sets:
        est = estimate_influence(instance, S, m, stream)
        if worst is None or est.mean < worst.mean:
            worst_set, worst = S, est
    return worst_set, worst


def structure_probe(instance, k: int, epsilon: float, m: int, stream) -> ProbeResult:
    """Check Infl(complement of S) >= epsilon - 3 stderr for every |S| <= k.

    Meant for instances known to be epsilon-far from all k-juntas; enumerates
    all such S, so n must be small.
    """
    n = instance.n
    coords = range(n)
    sets = (
        [i for i in coords if i not in S]
        for size in range(k + 1)
        for S in itertools.combinations(coords, size)
    )
    worst_set, worst = _worst(instance, sets, m, stream)
    return ProbeResult(worst.mean >= epsilon - 3 * worst.stderr, worst_set, worst)


def partition_complement_probe(
    instance,
    B: BucketPartition,
    k: int,
    epsilon: float,
    m: int,
    stream,
    subsets: int = 50,
) -> ProbeResult:
    """Check Infl(complement of S) >= epsilon/4 - 3 stderr, S a union of <= k buckets.

    `subsets` random unions are drawn, each of a random number (1..k) of buckets.
    """
    unions = []
    for _ in range(subsets):
        size = int(stream.integers(1, min(k, B.r) + 1))
        chosen = stream.choice(B.r, size=size, replace=False)
        inside = set(B.union(chosen).tolist())
        unions.append([i for i in range(B.n) if i not in inside])
    worst_set, worst = _worst(instance, unions, m, stream)
    return ProbeResult(worst.mean >= epsilon / 4 - 3 * worst.stderr, worst_set, worst)
