"""
Self-correction of noisy oracles, and the approximate additivity and low-degree
testers built on it.

Every comparison uses the tolerance

    max(threshold, delta_floor * (1 + largest |summand|))

so that exact oracles (threshold 0) do not reject in-class functions because of
floating point round-off.
"""
import logging as log
import math
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import BarycentricInterpolator
from scipy.special import comb

from . import ContractViolation
from . import config
from .oracle import TesterVerdict, as_point, draw


class SelfCorrectConfig:
    """Radii, floors and round counts of the self-correction based testers.

    Args:
        constants: constants block, see config.DEFAULT_CONSTANTS.
        alpha: assumed pointwise noise of the oracle; None means the oracle's eta.
    """

    def __init__(self, constants: Optional[dict] = None, alpha: Optional[float] = None):
        constants = config.resolve_constants(constants)
        self.r_additive = constants["r_additive"]
        self.r_degree_scale = constants["r_degree_scale"]
        self.r_degree_strict = constants["r_degree_strict"]
        self.delta_floor = constants["delta_floor"]
        self.median_samples = constants["median_samples"]
        self.additivity_rounds = constants["additivity_rounds"]
        self.additivity_c = constants["additivity_c"]
        self.radius_factor = constants["concentration_radius_factor"]
        self.low_degree_c = constants["low_degree_c"]
        self.characterization_rounds = constants["characterization_rounds_per_d2"]
        self.threshold_factor = constants["low_degree_threshold_factor"]
        self.strict_threshold = constants["low_degree_strict_threshold"]
        self.alpha = alpha
        if not 0 < self.r_additive < 1:
            raise ContractViolation("r_additive must be in (0, 1): %s", self.r_additive)
        if not 0 < self.r_degree_scale < 1:
            raise ContractViolation(
                "r_degree_scale must be in (0, 1): %s", self.r_degree_scale
            )
        if self.delta_floor < 0:
            raise ContractViolation("delta_floor must be >= 0: %s", self.delta_floor)
        if self.median_samples < 1:
            raise ContractViolation("median_samples must be >= 1")

    def r_degree(self, d: int) -> float:
        if self.r_degree_strict:
            return (4.0 * d) ** -6
        return self.r_degree_scale / d

    def noise(self, oracle) -> float:
        if self.alpha is not None:
            return self.alpha
        return getattr(oracle, "eta", 0.0)

    def tolerance(self, threshold: float, *summands: float) -> float:
        largest = max((abs(s) for s in summands), default=0.0)
        return max(threshold, self.delta_floor * (1.0 + largest))


def _config(cfg: Optional[SelfCorrectConfig]) -> SelfCorrectConfig:
    return cfg if cfg is not None else SelfCorrectConfig()


def kappa(p, r: float) -> int:
    """1 inside B(0, r), else ceil(||p|| / r), so that p / kappa lies in the ball."""
    if r <= 0:
        raise ContractViolation("Radius must be positive, got %s", r)
    norm = float(np.linalg.norm(p))
    if norm <= r:
        return 1
    return int(math.ceil(norm / r))


def test_additivity(
    oracle, delta: float, stream, cfg: Optional[SelfCorrectConfig] = None
) -> TesterVerdict:
    """Oddness, difference and three-point additivity checks on Gaussian points."""
    cfg = _config(cfg)
    if delta < 0:
        raise ContractViolation("delta must be non-negative, got %s", delta)
    start = oracle.query_count()
    f = oracle.query
    sqrt2 = math.sqrt(2.0)

    def reject(check, round_, value):
        log.debug("Additivity check %s failed in round %d: %g", check, round_, value)
        return TesterVerdict(
            False,
            oracle.query_count() - start,
            round_ + 1,
            {"check": check, "round": round_, "value": value},
        )

    for i in range(cfg.additivity_rounds):
        x, y, z = draw(oracle, stream), draw(oracle, stream), draw(oracle, stream)
        fx, fmx = f(x), f(-x)
        if abs(fmx + fx) > cfg.tolerance(delta, fmx, fx):
            return reject("oddness", i, abs(fmx + fx))
        fxy, fy = f(x - y), f(y)
        if abs(fxy - (fx - fy)) > cfg.tolerance(delta, fxy, fx, fy):
            return reject("difference", i, abs(fxy - (fx - fy)))
        a = f((x - y) / sqrt2)
        b = f((x - z) / sqrt2)
        c = f((z - y) / sqrt2)
        if abs(a - (b + c)) > cfg.tolerance(delta, a, b, c):
            return reject("three-point", i, abs(a - (b + c)))
    return TesterVerdict(True, oracle.query_count() - start, cfg.additivity_rounds)


def _approximate_g(
    p, oracle, stream, r: float, samples: int
) -> Tuple[float, float, int]:
    # (value, largest summand, kappa)
    k = kappa(p, r)
    values, scale = [], 0.0
    for _ in range(samples):
        x = draw(oracle, stream)
        a, b = oracle.query(p / k - x), oracle.query(x)
        values.append(k * (a + b))
        scale = max(scale, k * abs(a), k * abs(b))
    return float(np.median(values)), scale, k


def approximate_g(
    p,
    oracle,
    stream,
    cfg: Optional[SelfCorrectConfig] = None,
    samples: Optional[int] = None,
) -> float:
    """Self-corrected additive value at p: kappa * (f(p/kappa - x) + f(x)), x ~ N(0, I).

    With samples > 1 the median over independent x is returned (2 queries per sample).
    """
    cfg = _config(cfg)
    p = as_point(p, oracle.n)
    value, _, _ = _approximate_g(
        p, oracle, stream, cfg.r_additive, samples or cfg.median_samples
    )
    return value


def additivity_tester(
    oracle, epsilon: float, stream, R: Optional[float] = None, cfg=None
) -> TesterVerdict:
    cfg = _config(cfg)
    if not 0 < epsilon < 1:
        raise ContractViolation("epsilon must be in (0, 1), got %s", epsilon)
    n = oracle.n
    if R is None:
        R = cfg.radius_factor * math.sqrt(n)
    delta = 3.0 * cfg.noise(oracle)
    start = oracle.query_count()
    verdict = test_additivity(oracle, delta, stream, cfg)
    if not verdict.accept:
        return verdict._replace(queries_used=oracle.query_count() - start)

    rounds = int(math.ceil(cfg.additivity_c / epsilon))
    for i in range(rounds):
        p = draw(oracle, stream)
        if np.linalg.norm(p) > R:
            continue
        g, scale, k = _approximate_g(
            p, oracle, stream, cfg.r_additive, cfg.median_samples
        )
        fp = oracle.query(p)
        threshold = 5.0 * delta * n ** 1.5 * k
        if abs(fp - g) > cfg.tolerance(threshold, fp, scale):
            log.debug("Self-correction failed in round %d: %g", i, abs(fp - g))
            return TesterVerdict(
                False,
                oracle.query_count() - start,
                verdict.rounds + i + 1,
                {"check": "self-correction", "round": i, "value": abs(fp - g)},
            )
    return TesterVerdict(True, oracle.query_count() - start, verdict.rounds + rounds)


def forward_difference_coeffs(d: int) -> np.ndarray:
    """(alpha_1, ..., alpha_{d+1}) with alpha_i = (-1)^(i+1) * C(d+1, i)."""
    if d < 0:
        raise ContractViolation("Degree must be non-negative, got %s", d)
    i = np.arange(1, d + 2)
    return (-1.0) ** (i + 1) * comb(d + 1, i, exact=False)


def _difference(oracle, p, q, d: int) -> Tuple[float, float]:
    # sum_{i=0}^{d+1} alpha_i f(p + i q) with alpha_0 = -1, and its largest summand
    alphas = np.concatenate(([-1.0], forward_difference_coeffs(d)))
    terms = [a * oracle.query(p + i * q) for i, a in enumerate(alphas)]
    return math.fsum(terms), max(abs(t) for t in terms)


def approx_characterization_test(
    oracle, d: int, delta: float, stream, cfg: Optional[SelfCorrectConfig] = None
) -> TesterVerdict:
    """Forward-difference checks along random lines at growing covariance scales."""
    cfg = _config(cfg)
    if d < 1:
        raise ContractViolation("Degree must be at least 1, got %s", d)
    start = oracle.query_count()
    rounds = cfg.characterization_rounds * d * d

    def check(p_scale, q_scale):
        p = draw(oracle, stream, p_scale)
        q = draw(oracle, stream, q_scale)
        value, scale = _difference(oracle, p, q, d)
        return abs(value) <= cfg.tolerance(delta, scale), abs(value)

    for round_ in range(rounds):
        for j in range(1, d + 2):
            for t in range(0, d + 2):
                wide = j * math.sqrt(t * t + 1)
                for p_scale, q_scale in ((wide, 1.0), (j, math.sqrt(t * t + 1))):
                    ok, value = check(p_scale, q_scale)
                    if not ok:
                        log.debug(
                            "Characterization check failed (round %d, j=%d, t=%d): %g",
                            round_,
                            j,
                            t,
                            value,
                        )
                        return TesterVerdict(
                            False,
                            oracle.query_count() - start,
                            round_ + 1,
                            {
                                "check": "characterization",
                                "round": round_,
                                "j": j,
                                "t": t,
                                "value": value,
                            },
                        )
            ok, value = check(j, j)
            if not ok:
                log.debug("Characterization check failed (round %d, j=%d)", round_, j)
                return TesterVerdict(
                    False,
                    oracle.query_count() - start,
                    round_ + 1,
                    {
                        "check": "characterization",
                        "round": round_,
                        "j": j,
                        "value": value,
                    },
                )
    return TesterVerdict(True, oracle.query_count() - start, rounds)


def lagrange_interp_eval(
    nodes: Sequence[float], values: Sequence[float], at: float
) -> float:
    """Value at `at` of the interpolant through (nodes, values), barycentric form."""
    nodes = np.asarray(nodes, dtype=float)
    if len(np.unique(nodes)) != len(nodes):
        raise ContractViolation("Interpolation nodes are not distinct: %s", nodes)
    return float(BarycentricInterpolator(nodes, np.asarray(values, dtype=float))(at))


def lebesgue_function(nodes: Sequence[float], at: float) -> float:
    """sum_i |l_i(at)| over the Lagrange basis of `nodes`: round-off amplification."""
    nodes = np.asarray(nodes, dtype=float)
    basis = BarycentricInterpolator(nodes, np.eye(len(nodes)))(at)
    return float(np.sum(np.abs(basis)))


def chebyshev_nodes(d: int, r: float, norm: float) -> np.ndarray:
    i = np.arange(d + 1)
    return (r / norm) * np.cos(np.pi * (i + 0.5) / (d + 1))


def _in_ball(p, oracle, d: int, stream) -> Tuple[float, float]:
    q = draw(oracle, stream)
    alphas = forward_difference_coeffs(d)
    terms = [a * oracle.query(p + i * q) for i, a in enumerate(alphas, start=1)]
    return math.fsum(terms), max(abs(t) for t in terms)


def approx_query_g_in_ball(
    p, oracle, d: int, stream, cfg: Optional[SelfCorrectConfig] = None
) -> float:
    """sum_{i=1}^{d+1} alpha_i f(p + i q), q ~ N(0, I); exact for degree-d f."""
    cfg = _config(cfg)
    p = as_point(p, oracle.n)
    r = cfg.r_degree(d)
    if np.linalg.norm(p) > r:
        raise ContractViolation(
            "Point of norm %g outside B(0, %g)", np.linalg.norm(p), r
        )
    value, _ = _in_ball(p, oracle, d, stream)
    return value


def _approx_query_g(p, oracle, d: int, stream, r: float) -> Tuple[float, float, float]:
    # (value, largest summand times amplification, amplification)
    norm = float(np.linalg.norm(p))
    if norm <= r:
        value, scale = _in_ball(p, oracle, d, stream)
        return value, scale, 1.0
    nodes = chebyshev_nodes(d, r, norm)
    values, scale = [], 0.0
    for c in nodes:
        v, s = _in_ball(c * p, oracle, d, stream)
        values.append(v)
        scale = max(scale, s)
    amplification = lebesgue_function(nodes, 1.0)
    value = lagrange_interp_eval(nodes, values, 1.0)
    return value, scale * amplification, amplification


def approx_query_g(
    p, oracle, d: int, stream, cfg: Optional[SelfCorrectConfig] = None
) -> float:
    """Degree-d self-corrected value at p.

    Inside B(0, r_degree) this is a single forward-difference sample. Outside, the
    sample is taken at d+1 Chebyshev-scaled points c_i * p inside the ball and the
    univariate interpolant through (c_i, v(c_i)) is evaluated at 1.
    """
    cfg = _config(cfg)
    p = as_point(p, oracle.n)
    value, _, _ = _approx_query_g(p, oracle, d, stream, cfg.r_degree(d))
    return value


def low_degree_threshold(
    cfg: SelfCorrectConfig, d: int, n: int, delta: float, R, L
) -> float:
    if cfg.strict_threshold:
        exponent = (2.0 * n) ** (45.0 * d)
        if exponent > 1000:
            return math.inf
        return 2.0 * 2.0 ** exponent * (R / L) ** d * delta
    return cfg.threshold_factor * delta * n ** 1.5


def approx_low_degree_tester(
    oracle,
    d: int,
    epsilon: float,
    stream,
    R: Optional[float] = None,
    L: Optional[float] = None,
    cfg: Optional[SelfCorrectConfig] = None,
) -> TesterVerdict:
    cfg = _config(cfg)
    if not 0 < epsilon < 1:
        raise ContractViolation("epsilon must be in (0, 1), got %s", epsilon)
    n = oracle.n
    R = R if R is not None else 2.0 * d * math.sqrt(n)
    L = L if L is not None else 2.0 * d * math.sqrt(n)
    delta = 2.0 ** (d + 1) * cfg.noise(oracle)
    start = oracle.query_count()
    verdict = approx_characterization_test(oracle, d, delta, stream, cfg)
    if not verdict.accept:
        return verdict

    threshold = low_degree_threshold(cfg, d, n, delta, R, L)
    scale = 2.0 * d * math.sqrt(n) / L
    radius = 2.0 * d * R * math.sqrt(n) / L
    rounds = int(math.ceil(cfg.low_degree_c / epsilon))
    for i in range(rounds):
        p = draw(oracle, stream, scale)
        if np.linalg.norm(p) > radius:
            continue
        g, summands, _ = _approx_query_g(p, oracle, d, stream, cfg.r_degree(d))
        fp = oracle.query(p)
        if abs(fp - g) > cfg.tolerance(threshold, fp, summands):
            log.debug(
                "Degree-%d self-correction failed in round %d: %g", d, i, abs(fp - g)
            )
            return TesterVerdict(
                False,
                oracle.query_count() - start,
                verdict.rounds + i + 1,
                {"check": "self-correction", "round": i, "value": abs(fp - g)},
            )
    return TesterVerdict(True, oracle.query_count() - start, verdict.rounds + rounds)


class SelfCorrectOracle:
    """Oracle whose queries return approximate_g of the wrapped oracle.

    Every query costs 2 * median_samples queries of the wrapped oracle, and the
    query counter is the wrapped oracle's.
    """

    def __init__(self, oracle, stream, cfg: Optional[SelfCorrectConfig] = None):
        self.oracle = oracle
        self.stream = stream
        self.cfg = _config(cfg)
        self.error_bound = 0.0

    @property
    def n(self):
        return self.oracle.n

    @property
    def eta(self):
        return self.oracle.eta

    @property
    def sampler(self):
        return self.oracle.sampler

    def query(self, x) -> float:
        x = as_point(x, self.n)
        value, scale, k = _approximate_g(
            x, self.oracle, self.stream, self.cfg.r_additive, self.cfg.median_samples
        )
        bound = 2.0 * k * self.cfg.noise(self.oracle)
        self.error_bound = max(self.error_bound, self.cfg.tolerance(bound, scale))
        return value

    def query_count(self) -> int:
        return self.oracle.query_count()

    def reset_count(self):
        self.oracle.reset_count()


class LowDegreeOracle:
    """Oracle whose queries return approx_query_g of the wrapped oracle.

    error_bound tracks the largest pointwise error the self-correction can carry
    for a degree-d input: noise and round-off, amplified by radial extrapolation.
    """

    def __init__(self, oracle, d: int, stream, cfg: Optional[SelfCorrectConfig] = None):
        self.oracle = oracle
        self.d = d
        self.stream = stream
        self.cfg = _config(cfg)
        self.error_bound = 0.0

    @property
    def n(self):
        return self.oracle.n

    @property
    def eta(self):
        return self.oracle.eta

    @property
    def sampler(self):
        return self.oracle.sampler

    def query(self, x) -> float:
        x = as_point(x, self.n)
        value, scale, amplification = _approx_query_g(
            x, self.oracle, self.d, self.stream, self.cfg.r_degree(self.d)
        )
        noise = (2.0 ** (self.d + 1) - 1) * amplification * self.cfg.noise(self.oracle)
        self.error_bound = max(self.error_bound, self.cfg.tolerance(noise, scale))
        return value

    def query_count(self) -> int:
        return self.oracle.query_count()

    def reset_count(self):
        self.oracle.reset_count()
