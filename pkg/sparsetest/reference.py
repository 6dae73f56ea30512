"""
Brute-force and closed-form ground truth for the testers.

Nothing here is used by the testers themselves; the functions check them and
produce fixtures (`sparsetest reference ...`).
"""
import itertools
import logging as log
import math
from collections import namedtuple
from fractions import Fraction
from typing import Iterable, Sequence, Set

import numpy as np
from scipy.special import gammaln

from . import ContractViolation
from .oracle import (
    FunctionInstance,
    SparsePolynomial,
    SumOfInstances,
    as_point,
    to_polynomial,
)

MAX_F2_DIMENSION = 20
MAX_EXACT_SPARSITY = 12

DistanceEstimate = namedtuple("DistanceEstimate", "mean, stderr, samples")


def _estimate(values: np.ndarray) -> DistanceEstimate:
    m = len(values)
    stderr = float(np.std(values, ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    return DistanceEstimate(float(np.mean(values)), stderr, m)


def _gaussian_samples(n: int, m: int, stream) -> np.ndarray:
    if m < 1:
        raise ContractViolation("Sample count must be at least 1, got %s", m)
    return stream.standard_normal((m, n))


def _same_dimension(f, g):
    if f.n != g.n:
        raise ContractViolation("Instances have different dimensions: %d, %d", f.n, g.n)


def mc_l1_distance(
    f: FunctionInstance, g: FunctionInstance, m: int, stream
) -> DistanceEstimate:
    """Monte Carlo estimate of E|f(x) - g(x)| for x ~ N(0, I_n)."""
    _same_dimension(f, g)
    xs = _gaussian_samples(f.n, m, stream)
    return _estimate(np.abs(f.evaluate_many(xs) - g.evaluate_many(xs)))


def expected_gaussian_norm(n: int) -> float:
    """E||x||_2 for x ~ N(0, I_n): sqrt(2) Gamma((n+1)/2) / Gamma(n/2)."""
    return float(math.sqrt(2.0) * np.exp(gammaln((n + 1) / 2.0) - gammaln(n / 2.0)))


def _linear(coeffs: Sequence[float]) -> SparsePolynomial:
    n = len(coeffs)
    return SparsePolynomial(
        n, [(c, [int(i == j) for j in range(n)]) for i, c in enumerate(coeffs)]
    )


def l1_linear_bounds_check(a, b, m: int, stream) -> bool:
    """Check 0 <= dist(f, g) <= ||a - b||_2 E||x||_2 for linear f = <a, x>, g = <b, x>.

    Both sides are estimated on the same samples, with 3 stderr of slack.
    """
    a, b = as_point(a), as_point(b)
    if a.shape != b.shape:
        raise ContractViolation("Coefficient vectors differ in length")
    xs = _gaussian_samples(len(a), m, stream)
    dist = _estimate(np.abs(xs @ (a - b)))
    norm = float(np.mean(np.linalg.norm(xs, axis=1)))
    upper = float(np.linalg.norm(a - b)) * norm
    log.debug("l1 distance %.6g +- %.2g, bound %.6g", dist.mean, dist.stderr, upper)
    return -3 * dist.stderr <= dist.mean <= upper + 3 * dist.stderr


def _parity(values: np.ndarray) -> np.ndarray:
    for shift in (16, 8, 4, 2, 1):
        values = values ^ (values >> shift)
    return values & 1


def _mask(support: Iterable[int], n: int) -> int:
    mask = 0
    for i in support:
        if not 0 <= int(i) < n:
            raise ContractViolation("Coordinate %s out of range [0, %d)", i, n)
        mask |= 1 << int(i)
    return mask


def l0_distance_f2(f_support, g_support, n: int) -> Fraction:
    """Exact fraction of x in F_2^n where the parities over the two supports differ."""
    if not 0 <= n <= MAX_F2_DIMENSION:
        raise ContractViolation(
            "Refusing to enumerate F_2^%d (max n = %d)", n, MAX_F2_DIMENSION
        )
    diff = _mask(f_support, n) ^ _mask(g_support, n)
    xs = np.arange(2 ** n, dtype=np.uint32)
    differing = int(_parity(xs & np.uint32(diff)).sum())
    return Fraction(differing, 2 ** n)


def brute_force_influential_coords(instance: FunctionInstance) -> Set[int]:
    """Coordinates with a positive exponent in some nonzero term."""
    coords = set()
    for coeff, expo in to_polynomial(instance).terms:
        if coeff != 0:
            coords.update(i for i, e in enumerate(expo) if e > 0)
    return coords


def vandermonde_det(nodes) -> float:
    """prod_{i < j} (x_j - x_i)."""
    nodes = [float(x) for x in np.asarray(nodes, dtype=float).ravel()]
    return math.prod(xj - xi for xi, xj in itertools.combinations(nodes, 2))


def hard_instance_disjointness(A, B, n: int) -> SumOfInstances:
    """h = sum_{i in A} x_i - sum_{i in B} x_i; shared coordinates cancel."""
    parts = []
    for sign, coords in ((1, A), (-1, B)):
        coords = sorted(set(int(i) for i in coords))
        if any(not 0 <= i < n for i in coords):
            raise ContractViolation("Coordinates %s out of range [0, %d)", coords, n)
        parts.append((sign, _linear([1.0 if i in coords else 0.0 for i in range(n)])))
    return SumOfInstances(parts)


def top_degree_coefficient(poly: SparsePolynomial) -> float:
    """l2 norm of the coefficients of the degree-d homogeneous part."""
    if not poly.sparsity():
        return 0.0
    degrees = poly.exponents.sum(axis=1)
    return float(np.linalg.norm(poly.coeffs[degrees == degrees.max()]))


def anti_concentration_bound(poly: SparsePolynomial, eps: float, C: float = 1.0):
    """C d (eps / coeff_d(f))^(1/d); inf for constant polynomials."""
    d = poly.total_degree()
    top = top_degree_coefficient(poly)
    if d < 1 or top == 0:
        return math.inf
    return C * d * (eps / top) ** (1.0 / d)


def anti_concentration_probe(
    poly: FunctionInstance, t: float, eps: float, m: int, stream
) -> float:
    """Empirical Pr[|f(x) - t| <= eps] for x ~ N(0, I_n)."""
    if eps < 0:
        raise ContractViolation("eps must be non-negative, got %s", eps)
    xs = _gaussian_samples(poly.n, m, stream)
    prob = float(np.mean(np.abs(poly.evaluate_many(xs) - t) <= eps))
    log.info(
        "Anti-concentration: Pr[|f - %g| <= %g] = %.6g (bound with C=1: %.6g)",
        t,
        eps,
        prob,
        anti_concentration_bound(to_polynomial(poly), eps),
    )
    return prob


def linear_junta_distance(a, k: int) -> float:
    """Exact l1 distance under N(0, I_n) from <a, x> to the nearest k-junta.

    Dropping all but the k largest |a_i| is optimal, leaving
    sqrt(2/pi) * ||rest||_2.
    """
    a = np.abs(as_point(a))
    if k < 0:
        raise ContractViolation("k must be non-negative, got %s", k)
    rest = np.sort(a)[: max(len(a) - k, 0)]
    return math.sqrt(2.0 / math.pi) * float(np.linalg.norm(rest))


def far_probability(
    f1: FunctionInstance, f2: FunctionInstance, threshold: float, m: int, stream
) -> float:
    """Empirical Pr[|f1(x) - f2(x)| > threshold]."""
    _same_dimension(f1, f2)
    xs = _gaussian_samples(f1.n, m, stream)
    diff = np.abs(f1.evaluate_many(xs) - f2.evaluate_many(xs))
    return float(np.mean(diff > threshold))


def hankel_det_exact(poly: SparsePolynomial, u, t: int) -> Fraction:
    """det H_t(f, u) by the subset expansion, in exact rational arithmetic.

    Float inputs are converted exactly, so the result is the determinant of the
    matrix the floats describe, before any rounding.
    """
    k = poly.sparsity()
    if k > MAX_EXACT_SPARSITY:
        raise ContractViolation(
            "Sparsity %d too large for the exact expansion (max %d)",
            k,
            MAX_EXACT_SPARSITY,
        )
    if t < 1:
        raise ContractViolation("Hankel dimension must be at least 1, got %s", t)
    if t > k:
        return Fraction(0)
    u = [Fraction(float(v)) for v in as_point(u, poly.n)]
    coeffs = [Fraction(c) for c, _ in poly.terms]
    mono = [
        math.prod((ui ** e for ui, e in zip(u, expo)), start=Fraction(1))
        for _, expo in poly.terms
    ]
    total = Fraction(0)
    for subset in itertools.combinations(range(k), t):
        weight = math.prod((coeffs[i] for i in subset), start=Fraction(1))
        vdm = math.prod(
            (mono[j] - mono[i] for i, j in itertools.combinations(subset, 2)),
            start=Fraction(1),
        )
        total += weight * vdm * vdm
    return total
