"""
Hankel matrices of polynomials along coordinatewise powers, and the sparsity
testers built on them.

For u in R^n, H_t(f, u) is the t x t matrix with entry (i, j) = f(u^(i+j)) (0-based),
where u^m is the coordinatewise m-th power. A polynomial with at most k monomials
has a singular H_t for every t > k.
"""
import itertools
import logging as log
import math
from collections import namedtuple
from fractions import Fraction
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import sympy

from . import ContractViolation
from . import config
from .oracle import (
    OracleHandle,
    SparsePolynomial,
    TesterVerdict,
    as_point,
    coordinatewise_power,
    draw,
)
from .reference import vandermonde_det

MAX_REFERENCE_SPARSITY = 12


class HankelMatrix:
    def __init__(self, values, u=None):
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or len(values) % 2 == 0:
            raise ContractViolation(
                "A Hankel matrix needs an odd number of values, got %d", len(values)
            )
        self.t = (len(values) + 1) // 2
        self.values = values
        self.u = u
        self.entries = scipy.linalg.hankel(values[: self.t], values[self.t - 1 :])

    def __sub__(self, other: "HankelMatrix") -> "HankelMatrix":
        return HankelMatrix(self.values - other.values, self.u)

    def __repr__(self):
        return "HankelMatrix(t={}, values={})".format(self.t, self.values.tolist())


def _as_oracle(source):
    if hasattr(source, "query"):
        return source
    return OracleHandle(source)


def _entries(H) -> np.ndarray:
    entries = H.entries if isinstance(H, HankelMatrix) else np.asarray(H, dtype=float)
    if not np.all(np.isfinite(entries)):
        raise ContractViolation("Matrix has non-finite entries")
    return entries


def build_hankel(source, u, t: int) -> HankelMatrix:
    """Query f at u^0, ..., u^(2t-2) (2t - 1 queries) and arrange them as H_t(f, u).

    `source` is an oracle (anything with `query`) or a function instance.
    """
    if t < 1:
        raise ContractViolation("Hankel dimension must be at least 1, got %s", t)
    oracle = _as_oracle(source)
    u = as_point(u, oracle.n)
    values = [oracle.query(coordinatewise_power(u, i)) for i in range(2 * t - 1)]
    return HankelMatrix(values, u)


def hankel_det_reference(poly: SparsePolynomial, u, t: int) -> float:
    """det H_t(f, u) from the expansion over t-subsets S of the monomials:

        sum_S prod_{i in S} a_i * prod_{i<j in S} (M_j(u) - M_i(u))^2
    """
    k = poly.sparsity()
    if k > MAX_REFERENCE_SPARSITY:
        raise ContractViolation(
            "Sparsity %d too large for the subset expansion (max %d)",
            k,
            MAX_REFERENCE_SPARSITY,
        )
    if t < 1:
        raise ContractViolation("Hankel dimension must be at least 1, got %s", t)
    if t > k:
        return 0.0
    mono = poly.monomials(as_point(u, poly.n))
    total = 0.0
    for subset in itertools.combinations(range(k), t):
        idx = list(subset)
        total += np.prod(poly.coeffs[idx]) * vandermonde_det(mono[idx]) ** 2
    return float(total)


def sigma_extremes(H) -> Tuple[float, float]:
    """(smallest, largest) singular value."""
    s = scipy.linalg.svdvals(_entries(H))
    return float(s.min()), float(s.max())


def build_hankel_exact(oracle, u, t: int) -> List[Fraction]:
    """f(u^0), ..., f(u^(2t-2)) at the exact powers of u, by `query_exact`.

    u is taken as the rationals its floats denote, so the values are exactly
    sum_i a_i M_i(u)^m and H_t has rank at most the sparsity.
    """
    if t < 1:
        raise ContractViolation("Hankel dimension must be at least 1, got %s", t)
    base = [Fraction(float(v)) for v in as_point(u, oracle.n)]
    return [oracle.query_exact([b ** i for b in base]) for i in range(2 * t - 1)]


def exact_hankel_det(values: Sequence[Fraction]) -> sympy.Rational:
    """Determinant of the Hankel matrix of `values`, over the rationals."""
    if len(values) % 2 == 0:
        raise ContractViolation(
            "A Hankel matrix needs an odd number of values, got %d", len(values)
        )
    t = (len(values) + 1) // 2
    entries = [sympy.Rational(v.numerator, v.denominator) for v in values]
    return sympy.Matrix(t, t, lambda i, j: entries[i + j]).det(method="bareiss")


def _log10_abs(value: sympy.Rational) -> float:
    return math.log10(abs(value.p)) - math.log10(value.q)


def exact_sparsity_test(source, k: int, stream=None, constants=None) -> TesterVerdict:
    """Accept iff H_{k+1}(f, u) is singular at one Gaussian u (2k + 1 queries).

    A noise-free OracleHandle is queried at the exact powers of u and the
    determinant is taken over the rationals, which makes the decision exact.
    Other oracles fall back to sigma_min <= singular_ratio * sigma_max.
    """
    constants = config.resolve_constants(constants)
    if k < 0:
        raise ContractViolation("Sparsity must be non-negative, got %s", k)
    oracle = _as_oracle(source)
    start = oracle.query_count()
    u = draw(oracle, stream)
    if getattr(oracle, "answers_exact", False):
        det = exact_hankel_det(build_hankel_exact(oracle, u, k + 1))
        accept = bool(det == 0)
        log.debug("Exact sparsity test: det %s 0", "==" if accept else "!=")
        witness = (
            None
            if accept
            else {"check": "determinant", "log10_abs_det": _log10_abs(det)}
        )
        return TesterVerdict(accept, oracle.query_count() - start, 1, witness)

    smin, smax = sigma_extremes(build_hankel(oracle, u, k + 1))
    ratio = smin / smax if smax > 0 else 0.0
    accept = ratio <= constants["singular_ratio"]
    log.debug("Exact sparsity test: sigma_min / sigma_max = %g", ratio)
    witness = None if accept else {"check": "singular_ratio", "ratio": ratio}
    return TesterVerdict(accept, oracle.query_count() - start, 1, witness)


def noise_decomposition_check(H_noisy, H_exact, eta: float) -> bool:
    """True iff E = H_noisy - H_exact is Hankel, |E|_max <= eta, ||E||_op <= eta t."""
    noisy, exact = _entries(H_noisy), _entries(H_exact)
    if noisy.shape != exact.shape:
        raise ContractViolation("Shapes differ: %s vs %s", noisy.shape, exact.shape)
    t = noisy.shape[0]
    E = noisy - exact
    # Subtraction may round by an ulp of the exact entries.
    slack = 4 * np.finfo(float).eps * max(1.0, float(np.abs(exact).max()))
    structured = np.array_equal(E, scipy.linalg.hankel(E[:, 0], E[-1, :]))
    op_norm = float(scipy.linalg.svdvals(E).max())
    return bool(
        structured
        and np.abs(E).max() <= eta + slack
        and op_norm <= eta * t + t * slack
    )


WeylResult = namedtuple("WeylResult", "max_shift, op_norm, holds")


def weyl_check(H_noisy, H_exact) -> WeylResult:
    """Eigenvalue shift of a symmetric matrix against ||H_noisy - H_exact||_op."""
    noisy, exact = _entries(H_noisy), _entries(H_exact)
    shift = float(
        np.abs(scipy.linalg.eigvalsh(noisy) - scipy.linalg.eigvalsh(exact)).max()
    )
    op_norm = float(scipy.linalg.svdvals(noisy - exact).max())
    slack = 8 * np.finfo(float).eps * max(1.0, float(np.abs(exact).max()))
    return WeylResult(shift, op_norm, shift <= op_norm + slack)


def folded_normal_abs_moment(s: int) -> float:
    """E|u|^s for u ~ N(0, 1)."""
    if s < 0:
        raise ContractViolation("Moment order must be non-negative, got %s", s)
    if s == 0:
        return 1.0
    if s % 2 == 0:
        return math.factorial(s) / (2 ** (s // 2) * math.factorial(s // 2))
    return 2 ** (s / 2) * math.factorial(s // 2) / math.sqrt(math.pi)


class SigmaBoundParams(namedtuple("SigmaBoundParams", "a_norm_sq, d, k, t, gamma")):
    __slots__ = ()

    def __new__(cls, a_norm_sq, d, k, t, gamma):
        if a_norm_sq <= 0 or d < 0 or k < 1 or t < 1:
            raise ContractViolation(
                "Invalid bound parameters: |a|^2=%s d=%s k=%s t=%s", a_norm_sq, d, k, t
            )
        if not 0 < gamma <= 1:
            raise ContractViolation("gamma must be in (0, 1], got %s", gamma)
        return super().__new__(cls, float(a_norm_sq), int(d), int(k), int(t), gamma)

    @classmethod
    def for_polynomial(cls, poly: SparsePolynomial, t: int, gamma: float):
        return cls(
            float(np.sum(poly.coeffs ** 2)),
            int(poly.total_degree()),
            poly.sparsity(),
            t,
            gamma,
        )


def sigma_max_bound(params: SigmaBoundParams) -> float:
    """|a|^2 (2^(d/2) ceil(d/2)! + sqrt(k/gamma) 2^(d/2) sqrt(d!))^(2t).

    sigma_max(H_t(f, u)) stays below this with probability >= 1 - gamma over u.
    Returns inf on overflow.
    """
    a, d, k, t, gamma = params
    try:
        half = 2.0 ** (d / 2)
        base = half * math.factorial(math.ceil(d / 2)) + math.sqrt(
            k / gamma
        ) * half * math.sqrt(math.factorial(d))
        return a * base ** (2 * t)
    except OverflowError:
        log.warning("sigma_max bound overflows for %s", params)
        return math.inf


SigmaTrial = namedtuple("SigmaTrial", "k, d, t, gamma, bound, sigma_max, violated")


def sigma_bound_trial(
    poly: SparsePolynomial, params: SigmaBoundParams, stream
) -> SigmaTrial:
    """sigma_max(H_t(f, u)) at a fresh Gaussian u, checked against the bound."""
    bound = sigma_max_bound(params)
    u = stream.standard_normal(poly.n)
    _, smax = sigma_extremes(build_hankel(poly, u, params.t))
    return SigmaTrial(
        params.k, params.d, params.t, params.gamma, bound, smax, smax >= bound
    )


def sigma_bound_trials(
    poly: SparsePolynomial, t: int, gamma: float, trials: int, stream
) -> Iterator[SigmaTrial]:
    params = SigmaBoundParams.for_polynomial(poly, t, gamma)
    for _ in range(trials):
        yield sigma_bound_trial(poly, params, stream)


def sparsity_rounds(k: int, d: int, constants: dict) -> int:
    c = min(constants["sparsity_rounds_c"], 1.0)
    return max(1, int(math.ceil(4 * c * d * (k + 1) ** 2)))


def approx_poly_sparsity_test(
    oracle, k: int, d: int, eta: float, stream=None, constants: Optional[dict] = None
) -> TesterVerdict:
    """Accept iff sigma_min(H_{k+1}(f~, u_t)) <= eta_eff (k + 1) in every round.

    eta_eff = max(eta, oracle.error_bound, delta_floor); sigma_min is additionally
    allowed delta_floor * sigma_max of round-off.
    """
    constants = config.resolve_constants(constants)
    if eta < 0 or k < 1 or d < 1:
        raise ContractViolation(
            "Need eta >= 0, k >= 1, d >= 1 (got %s, %s, %s)", eta, k, d
        )
    floor = constants["delta_floor"]
    start = oracle.query_count()
    rounds = sparsity_rounds(k, d, constants)
    sigmas = []
    for _ in range(rounds):
        u = draw(oracle, stream)
        sigmas.append(sigma_extremes(build_hankel(oracle, u, k + 1)))
    eta_eff = max(eta, getattr(oracle, "error_bound", 0.0), floor)
    for i, (smin, smax) in enumerate(sigmas):
        threshold = eta_eff * (k + 1) + floor * smax
        if smin > threshold:
            log.debug("Sparsity test round %d: sigma_min=%g > %g", i, smin, threshold)
            return TesterVerdict(
                False,
                oracle.query_count() - start,
                rounds,
                {
                    "check": "sigma_min",
                    "round": i,
                    "sigma_min": smin,
                    "threshold": threshold,
                },
            )
    return TesterVerdict(True, oracle.query_count() - start, rounds)


def hankel_to_json(H) -> dict:
    entries = _entries(H)
    ret = {"t": entries.shape[0], "entries": entries.tolist()}
    if isinstance(H, HankelMatrix) and H.u is not None:
        ret["u"] = np.asarray(H.u).tolist()
    return ret
