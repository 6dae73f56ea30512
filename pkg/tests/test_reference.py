import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from sparsetest import ContractViolation
from sparsetest import reference as ref
from sparsetest.oracle import SparsePolynomial, evaluate, to_polynomial


def linear(*coeffs):
    return ref._linear(coeffs)


def test_mc_l1_distance_identical(rng):
    f = SparsePolynomial(3, [(1.0, [1, 1, 0]), (-2.0, [0, 0, 2])])
    assert ref.mc_l1_distance(f, f, 1000, rng) == (0.0, 0.0, 1000)


@pytest.mark.parametrize(
    "f, g",
    [
        (linear(1.0), SparsePolynomial(1)),
        (linear(1.0, 1.0), linear(1.0, 0.0)),
    ],
)
def test_mc_l1_distance(rng, f, g):
    est = ref.mc_l1_distance(f, g, 100000, rng)
    assert est.mean == pytest.approx(math.sqrt(2 / math.pi), abs=0.01)
    assert 0 < est.stderr < 0.01


def test_mc_l1_distance_symmetric():
    f, g = linear(1.0, -2.0), linear(0.5, 0.5)
    a = ref.mc_l1_distance(f, g, 500, np.random.default_rng(1))
    b = ref.mc_l1_distance(g, f, 500, np.random.default_rng(1))
    assert a == b


def test_mc_l1_distance_dimension_mismatch(rng):
    with pytest.raises(ContractViolation):
        ref.mc_l1_distance(linear(1.0), linear(1.0, 1.0), 10, rng)


def test_expected_gaussian_norm():
    assert ref.expected_gaussian_norm(1) == pytest.approx(math.sqrt(2 / math.pi))
    assert ref.expected_gaussian_norm(2) == pytest.approx(math.sqrt(math.pi / 2))


def test_l1_linear_bounds_check(rng):
    assert ref.l1_linear_bounds_check([1.0, 2.0], [1.0, 2.0], 1000, rng)
    assert ref.l1_linear_bounds_check([1.0, 0.0], [0.0, 0.0], 100000, rng)
    for _ in range(100):
        n = int(rng.integers(1, 9))
        a, b = rng.standard_normal(n), rng.standard_normal(n)
        assert ref.l1_linear_bounds_check(a, b, 2000, rng)
    with pytest.raises(ContractViolation):
        ref.l1_linear_bounds_check([1.0], [1.0, 2.0], 10, rng)


def test_l0_distance_f2():
    assert ref.l0_distance_f2({0, 1}, {0, 1}, 3) == 0
    assert ref.l0_distance_f2({0, 1}, {0}, 3) == Fraction(1, 2)
    assert ref.l0_distance_f2({0, 1, 2}, {3}, 5) == Fraction(1, 2)


def test_l0_distance_f2_distinct_supports():
    for n in range(1, 9):
        supports = [
            set(s)
            for size in range(4)
            for s in itertools.combinations(range(n), size)
        ]
        for f, g in itertools.combinations(supports, 2):
            assert ref.l0_distance_f2(f, g, n) == Fraction(1, 2)


def test_l0_distance_f2_limits():
    with pytest.raises(ContractViolation):
        ref.l0_distance_f2({0}, {1}, 21)
    with pytest.raises(ContractViolation):
        ref.l0_distance_f2({0}, {5}, 3)


def test_brute_force_influential_coords():
    f = SparsePolynomial(3, [(1.0, [1, 0, 1]), (2.0, [0, 0, 1])])
    assert ref.brute_force_influential_coords(f) == {0, 2}
    assert ref.brute_force_influential_coords(SparsePolynomial(2, [(7.0, [0, 0])])) == (
        set()
    )
    merged = SparsePolynomial(2, [(1.0, [1, 0]), (1.0, [0, 1]), (-1.0, [0, 1])])
    assert ref.brute_force_influential_coords(merged) == {0}


def test_vandermonde_det():
    assert ref.vandermonde_det([1, 3]) == 2
    assert ref.vandermonde_det([0, 1, 2]) == 2
    assert ref.vandermonde_det([0.5, 2.0, 0.5]) == 0
    assert ref.vandermonde_det([4.0]) == 1


def test_vandermonde_det_matches_numpy():
    nodes = [1.0, 2.0, 4.0, 7.0]
    assert ref.vandermonde_det(nodes) == 540
    expected = np.linalg.det(np.vander(nodes, increasing=True))
    assert ref.vandermonde_det(nodes) == pytest.approx(expected, rel=1e-9)


def test_hard_instance_disjointness():
    h = ref.hard_instance_disjointness({0, 1}, {1, 2}, 4)
    assert to_polynomial(h) == linear(1.0, 0.0, -1.0, 0.0)
    assert evaluate(h, [5, 7, 2, 9]) == 3
    assert to_polynomial(ref.hard_instance_disjointness({0, 3}, {3, 0}, 4)) == (
        SparsePolynomial(4)
    )
    disjoint = ref.hard_instance_disjointness({0, 1, 2}, {3, 4, 5}, 8)
    assert to_polynomial(disjoint).sparsity() == 6
    with pytest.raises(ContractViolation):
        ref.hard_instance_disjointness({0}, {8}, 8)


def test_hard_instance_sparsity_is_symmetric_difference(rng):
    for _ in range(50):
        A = set(rng.choice(10, size=int(rng.integers(0, 6)), replace=False).tolist())
        B = set(rng.choice(10, size=int(rng.integers(0, 6)), replace=False).tolist())
        h = ref.hard_instance_disjointness(A, B, 10)
        assert to_polynomial(h).sparsity() == len(A ^ B)


@pytest.mark.parametrize(
    "f, expected",
    [(linear(1.0), 0.0797), (linear(1.0, 1.0), 0.0564)],
)
def test_anti_concentration_probe(rng, f, expected):
    prob = ref.anti_concentration_probe(f, 0.0, 0.1, 100000, rng)
    assert prob == pytest.approx(expected, abs=0.005)


def test_anti_concentration_probe_zero_width(rng):
    assert ref.anti_concentration_probe(linear(1.0, 2.0), 0.3, 0.0, 1000, rng) == 0
    with pytest.raises(ContractViolation):
        ref.anti_concentration_probe(linear(1.0), 0.0, -0.1, 10, rng)


def test_anti_concentration_bound():
    f = SparsePolynomial(2, [(3.0, [2, 0]), (4.0, [1, 1]), (1.0, [1, 0])])
    assert ref.top_degree_coefficient(f) == pytest.approx(5)
    assert ref.anti_concentration_bound(f, 0.05) == pytest.approx(2 * 0.1)
    assert ref.anti_concentration_bound(SparsePolynomial(2), 0.05) == math.inf


def test_linear_junta_distance():
    assert ref.linear_junta_distance([3.0, -2.0, 1.0], 2) == pytest.approx(
        math.sqrt(2 / math.pi)
    )
    assert ref.linear_junta_distance([3.0, -2.0], 2) == 0
    assert ref.linear_junta_distance([1.0] * 4, 0) == pytest.approx(
        2 * math.sqrt(2 / math.pi)
    )


def test_far_probability(rng):
    f = linear(1.0, 1.0)
    assert ref.far_probability(f, f, 0.0, 1000, rng) == 0
    assert ref.far_probability(f, SparsePolynomial(2), -1.0, 1000, rng) == 1


def test_hankel_det_exact():
    f = linear(1.0, 1.0)
    assert ref.hankel_det_exact(f, [1, 3], 2) == 4
    assert ref.hankel_det_exact(f, [1, 3], 3) == 0
    g = SparsePolynomial(2, [(0.5, [1, 0]), (-1.5, [0, 2]), (2.0, [1, 1])])
    assert ref.hankel_det_exact(g, [0.25, 2.0], 2) == Fraction(
        0.5 * -1.5 * (4.0 - 0.25) ** 2
        + 0.5 * 2.0 * (0.5 - 0.25) ** 2
        + -1.5 * 2.0 * (0.5 - 4.0) ** 2
    )
