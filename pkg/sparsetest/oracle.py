"""
Function instances and the oracle that testers query them through.

Instances are serialized as JSON objects:

    {"n": 3, "kind": "poly", "terms": [[3.0, [1, 2, 0]], [-1.0, [0, 0, 1]]]}
    {"n": 16, "kind": "junta", "relevant": [2, 5, 9], "inner": {"n": 3, ...}}
    {"n": 8, "kind": "sum", "parts": [{"sign": 1, "instance": {...}}, ...]}

Coordinates are 0-based throughout the library.

Noise models, written on the command line as:

    exact         reported value is the true value
    uniform:ETA   deterministic pseudo-random offset in [-ETA, ETA]
    offset:ETA    offset of exactly +ETA or -ETA, sign chosen per point
    round:BITS    value rounded to a grid of 2**-BITS * max(1, |value|)

uniform and offset derive their offset from a hash of (seed, point), so querying
the same point twice returns the same answer.
"""
import enum
import hashlib
import json
import logging as log
import math
import pathlib
from collections import namedtuple
from fractions import Fraction
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import ContractViolation

_BATCH = 4096


class TesterVerdict(
    namedtuple(
        "TesterVerdict", "accept, queries_used, rounds, witness", defaults=(None,)
    )
):
    """Outcome of a tester call.

    queries_used is the oracle counter delta over the call; witness describes the
    check that triggered a rejection (or the buckets found), if any.
    """

    __slots__ = ()

    @property
    def decision(self) -> str:
        return "accept" if self.accept else "reject"

    def to_dict(self) -> dict:
        return {
            "decision": self.decision,
            "queries_used": self.queries_used,
            "rounds": self.rounds,
            "witness": self.witness,
        }


def as_point(x, n: Optional[int] = None) -> np.ndarray:
    """Return x as a finite 1-d float array, checking its dimension against n."""
    point = np.asarray(x, dtype=float)
    if point.ndim != 1:
        raise ContractViolation("Point must be a vector, got shape %s", point.shape)
    if n is not None and point.shape[0] != n:
        raise ContractViolation(
            "Dimension mismatch: point has %d coordinates, expected %d",
            point.shape[0],
            n,
        )
    if not np.all(np.isfinite(point)):
        raise ContractViolation("Point has non-finite entries: %s", point)
    return point


class SparsePolynomial:
    """Real polynomial in n variables stored as (coefficient, exponent vector) terms.

    Terms with equal exponent vectors are merged and zero coefficients dropped, so
    two polynomials with the same monomial expansion compare and evaluate equal.
    """

    kind = "poly"

    def __init__(self, n: int, terms: Iterable[Tuple[float, Sequence[int]]] = ()):
        if n < 0:
            raise ContractViolation("Coordinate count must be non-negative: %s", n)
        merged = {}
        for coeff, expo in terms:
            expo = tuple(int(e) for e in expo)
            if len(expo) != n:
                raise ContractViolation(
                    "Exponent vector %s does not have %d entries", expo, n
                )
            if any(e < 0 for e in expo):
                raise ContractViolation("Negative exponent in %s", expo)
            if not math.isfinite(coeff):
                raise ContractViolation("Non-finite coefficient %s", coeff)
            merged[expo] = merged.get(expo, 0.0) + float(coeff)
        items = sorted((e, c) for e, c in merged.items() if c != 0.0)
        self.n = n
        self.coeffs = np.array([c for _, c in items], dtype=float)
        self.exponents = np.array([e for e, _ in items], dtype=np.int64).reshape(
            len(items), n
        )

    @property
    def terms(self) -> List[Tuple[float, Tuple[int, ...]]]:
        return [
            (float(c), tuple(int(v) for v in e))
            for c, e in zip(self.coeffs, self.exponents)
        ]

    def sparsity(self) -> int:
        return len(self.coeffs)

    def total_degree(self) -> float:
        if not self.sparsity():
            return -math.inf
        return int(self.exponents.sum(axis=1).max())

    def monomials(self, x: np.ndarray) -> np.ndarray:
        """Values M_1(x), ..., M_k(x) of the monomials at x."""
        return np.prod(x ** self.exponents, axis=1)

    def __call__(self, x: np.ndarray) -> float:
        if not self.sparsity():
            return 0.0
        return float(self.coeffs @ self.monomials(x))

    def exact(self, x: Sequence[Fraction]) -> Fraction:
        """Value at a rational point, without rounding."""
        total = Fraction(0)
        for coeff, expo in self.terms:
            mono = math.prod(
                (xi ** e for xi, e in zip(x, expo) if e), start=Fraction(1)
            )
            total += Fraction(coeff) * mono
        return total

    def evaluate_many(self, xs: np.ndarray) -> np.ndarray:
        out = np.zeros(xs.shape[0])
        if not self.sparsity():
            return out
        for start in range(0, xs.shape[0], _BATCH):
            chunk = xs[start : start + _BATCH]
            mono = np.prod(chunk[:, None, :] ** self.exponents[None, :, :], axis=2)
            out[start : start + _BATCH] = mono @ self.coeffs
        return out

    def support(self) -> List[int]:
        """Coordinates occurring with a positive exponent in some term."""
        if not self.sparsity():
            return []
        return [int(i) for i in np.flatnonzero(self.exponents.sum(axis=0))]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "kind": self.kind,
            "terms": [[c, list(e)] for c, e in self.terms],
        }

    def __eq__(self, other):
        return (
            isinstance(other, SparsePolynomial)
            and self.n == other.n
            and self.terms == other.terms
        )

    def __repr__(self):
        return "SparsePolynomial(n={}, terms={})".format(self.n, self.terms)


class JuntaInstance:
    """A function of the coordinates in `relevant` only: x -> inner(x[relevant])."""

    kind = "junta"

    def __init__(self, n: int, relevant: Sequence[int], inner: SparsePolynomial):
        relevant = tuple(int(i) for i in relevant)
        if len(set(relevant)) != len(relevant):
            raise ContractViolation("Relevant coordinates repeat: %s", relevant)
        if any(i < 0 or i >= n for i in relevant):
            raise ContractViolation(
                "Relevant coordinates out of range [0, %d): %s", n, relevant
            )
        if inner.n != len(relevant):
            raise ContractViolation(
                "Inner polynomial has %d variables, expected %d", inner.n, len(relevant)
            )
        self.n = n
        self.relevant = relevant
        self.inner = inner
        self._index = np.array(relevant, dtype=np.int64)

    def total_degree(self) -> float:
        return self.inner.total_degree()

    def __call__(self, x: np.ndarray) -> float:
        return self.inner(x[self._index])

    def exact(self, x: Sequence[Fraction]) -> Fraction:
        return self.inner.exact([x[i] for i in self.relevant])

    def evaluate_many(self, xs: np.ndarray) -> np.ndarray:
        return self.inner.evaluate_many(xs[:, self._index])

    def to_polynomial(self) -> SparsePolynomial:
        terms = []
        for coeff, expo in self.inner.terms:
            full = [0] * self.n
            for i, e in zip(self.relevant, expo):
                full[i] = e
            terms.append((coeff, full))
        return SparsePolynomial(self.n, terms)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "kind": self.kind,
            "relevant": list(self.relevant),
            "inner": self.inner.to_dict(),
        }

    def __repr__(self):
        return "JuntaInstance(n={}, relevant={}, inner={!r})".format(
            self.n, self.relevant, self.inner
        )


class SumOfInstances:
    """Signed sum of instances over the same coordinates, e.g. h = f - g."""

    kind = "sum"

    def __init__(self, parts: Sequence[Tuple[int, "FunctionInstance"]]):
        if not parts:
            raise ContractViolation("A sum needs at least one part")
        dims = {inst.n for _, inst in parts}
        if len(dims) != 1:
            raise ContractViolation("Parts have different dimensions: %s", dims)
        self.n = dims.pop()
        self.parts = [(1 if sign >= 0 else -1, inst) for sign, inst in parts]

    def total_degree(self) -> float:
        return max(inst.total_degree() for _, inst in self.parts)

    def __call__(self, x: np.ndarray) -> float:
        return float(sum(sign * inst(x) for sign, inst in self.parts))

    def exact(self, x: Sequence[Fraction]) -> Fraction:
        return sum((sign * inst.exact(x) for sign, inst in self.parts), Fraction(0))

    def evaluate_many(self, xs: np.ndarray) -> np.ndarray:
        return sum(sign * inst.evaluate_many(xs) for sign, inst in self.parts)

    def to_polynomial(self) -> SparsePolynomial:
        """Merge all parts into one canonical polynomial (cancelling terms)."""
        terms = []
        for sign, inst in self.parts:
            poly = to_polynomial(inst)
            terms += [(sign * c, e) for c, e in poly.terms]
        return SparsePolynomial(self.n, terms)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "kind": self.kind,
            "parts": [
                {"sign": sign, "instance": inst.to_dict()} for sign, inst in self.parts
            ],
        }

    def __repr__(self):
        return "SumOfInstances({!r})".format(self.parts)


FunctionInstance = Union[SparsePolynomial, JuntaInstance, SumOfInstances]


def to_polynomial(instance: FunctionInstance) -> SparsePolynomial:
    if isinstance(instance, SparsePolynomial):
        return instance
    return instance.to_polynomial()


def instance_from_dict(data: dict) -> FunctionInstance:
    try:
        kind = data.get("kind", "poly")
        if kind == "poly":
            return SparsePolynomial(int(data["n"]), [(c, e) for c, e in data["terms"]])
        if kind == "junta":
            return JuntaInstance(
                int(data["n"]), data["relevant"], instance_from_dict(data["inner"])
            )
        if kind == "sum":
            return SumOfInstances(
                [
                    (int(p["sign"]), instance_from_dict(p["instance"]))
                    for p in data["parts"]
                ]
            )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ContractViolation):
            raise
        raise ContractViolation("Invalid instance: %s (%r)", exc, data)
    raise ContractViolation("Unknown instance kind: %s", kind)


def instance_to_dict(instance: FunctionInstance) -> dict:
    return instance.to_dict()


def load_instance(path: Union[str, pathlib.Path]) -> FunctionInstance:
    path = pathlib.Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ContractViolation("Cannot read instance file %s: %s", path, exc)
    except json.JSONDecodeError as exc:
        raise ContractViolation("Malformed instance file %s: %s", path, exc)
    log.debug("Loaded instance from %s", path)
    return instance_from_dict(data)


def dump_instance(instance: FunctionInstance, path: Union[str, pathlib.Path]):
    path = pathlib.Path(path)
    with path.open("w") as fp:
        json.dump(instance.to_dict(), fp, indent=4)
    log.debug("Wrote instance to %s", path)


def evaluate(instance: FunctionInstance, x) -> float:
    """Exact (noise-free) value of the instance at x."""
    return instance(as_point(x, instance.n))


class NoiseVariant(enum.Enum):
    exact = "exact"
    uniform = "uniform"
    round = "round"
    offset = "offset"


class NoiseModel:
    def __init__(
        self,
        variant: NoiseVariant = NoiseVariant.exact,
        eta: float = 0.0,
        bits: Optional[int] = None,
        seed: Optional[int] = None,
    ):
        variant = NoiseVariant(variant)
        if eta < 0:
            raise ContractViolation("Noise level must be non-negative: %s", eta)
        if variant is NoiseVariant.round and (bits is None or bits < 0):
            raise ContractViolation("Rounding noise needs bits >= 0, got %s", bits)
        self.variant = variant
        additive = variant in (NoiseVariant.uniform, NoiseVariant.offset)
        self.eta = float(eta) if additive else 0.0
        self.bits = bits
        self.seed = seed

    @classmethod
    def exact(cls):
        return cls(NoiseVariant.exact)

    @classmethod
    def uniform(cls, eta: float, seed: Optional[int] = None):
        return cls(NoiseVariant.uniform, eta=eta, seed=seed)

    @classmethod
    def offset(cls, eta: float, seed: Optional[int] = None):
        return cls(NoiseVariant.offset, eta=eta, seed=seed)

    @classmethod
    def rounding(cls, bits: int):
        return cls(NoiseVariant.round, bits=bits)

    @classmethod
    def parse(cls, text: str) -> "NoiseModel":
        name, _, arg = text.partition(":")
        try:
            if name == "exact" and not arg:
                return cls.exact()
            if name == "uniform":
                return cls.uniform(float(arg))
            if name == "offset":
                return cls.offset(float(arg))
            if name == "round":
                return cls.rounding(int(arg))
        except ValueError:
            pass
        raise ContractViolation("Invalid noise model: %r", text)

    def to_string(self) -> str:
        if self.variant is NoiseVariant.round:
            return "round:{}".format(self.bits)
        if self.variant is NoiseVariant.exact:
            return "exact"
        return "{}:{}".format(self.variant.value, self.eta)

    def bound(self, value: float) -> float:
        """Largest possible |reported - value| for this model."""
        if self.variant is NoiseVariant.round:
            return 2.0 ** -self.bits * max(1.0, abs(value))
        return self.eta

    def _hash_unit(self, x: np.ndarray, seed: int) -> float:
        digest = hashlib.blake2b(
            int(seed).to_bytes(8, "little") + x.tobytes(), digest_size=8
        ).digest()
        return int.from_bytes(digest, "little") / 2.0 ** 64

    def perturb(self, value: float, x: np.ndarray, seed: int = 0) -> float:
        seed = self.seed if self.seed is not None else seed
        if self.variant is NoiseVariant.exact:
            return value
        if self.variant is NoiseVariant.uniform:
            return value + self.eta * (2.0 * self._hash_unit(x, seed) - 1.0)
        if self.variant is NoiseVariant.offset:
            sign = 1.0 if self._hash_unit(x, seed) < 0.5 else -1.0
            return value + sign * self.eta
        quantum = 2.0 ** -self.bits * max(1.0, abs(value))
        return round(value / quantum) * quantum

    def __repr__(self):
        return "NoiseModel({})".format(self.to_string())


def sample_gaussian(n: int, stream: np.random.Generator) -> np.ndarray:
    """n i.i.d. standard normal coordinates."""
    if n < 1:
        raise ContractViolation("Dimension must be at least 1, got %s", n)
    return stream.standard_normal(n)


Sampler = Callable[[int, np.random.Generator], np.ndarray]


class OracleHandle:
    """Noisy query access to an instance, with a query counter and a seeded stream.

    A handle is single-owner; run independent trials on independent handles.
    """

    def __init__(
        self,
        instance: FunctionInstance,
        noise: Optional[NoiseModel] = None,
        seed: int = 0,
        sampler: Sampler = sample_gaussian,
    ):
        self.instance = instance
        self.noise = noise or NoiseModel.exact()
        self.seed = int(seed)
        self.stream = np.random.default_rng(self.seed)
        self.sampler = sampler
        self.counter = 0
        self.error_bound = 0.0

    @property
    def n(self) -> int:
        return self.instance.n

    @property
    def eta(self) -> float:
        return self.noise.eta

    @property
    def answers_exact(self) -> bool:
        return self.noise.variant is NoiseVariant.exact

    def query(self, x) -> float:
        point = as_point(x, self.n)
        value = self.instance(point)
        self.counter += 1
        self.error_bound = max(self.error_bound, self.noise.bound(value))
        return self.noise.perturb(value, point, self.seed)

    def query_exact(self, x: Sequence) -> Fraction:
        """Value at a rational point in exact arithmetic; noise-free handles only.

        Counts as one query, like `query`.
        """
        if not self.answers_exact:
            raise ContractViolation(
                "Exact queries need a noise-free oracle, noise is %s",
                self.noise.to_string(),
            )
        if len(x) != self.n:
            raise ContractViolation(
                "Dimension mismatch: point has %d coordinates, expected %d",
                len(x),
                self.n,
            )
        point = [Fraction(v) for v in x]
        self.counter += 1
        return self.instance.exact(point)

    def query_count(self) -> int:
        return self.counter

    def reset_count(self):
        self.counter = 0


def query(oracle: OracleHandle, x) -> float:
    return oracle.query(x)


def query_count(oracle) -> int:
    return oracle.query_count()


def reset_count(oracle):
    oracle.reset_count()


def draw(
    oracle, stream: Optional[np.random.Generator] = None, scale: float = 1.0
) -> np.ndarray:
    """Sample a point for the oracle's reference distribution, scaled by `scale`.

    Without `stream` the oracle's own seeded stream is used.
    """
    if stream is None:
        stream = oracle.stream
    sampler = getattr(oracle, "sampler", sample_gaussian)
    return scale * sampler(oracle.n, stream)


def coordinatewise_power(u, i: int) -> np.ndarray:
    if i < 0:
        raise ContractViolation("Power must be non-negative, got %s", i)
    return as_point(u) ** i


def splice(x, y, indices: Iterable[int]) -> np.ndarray:
    """Point taking x's coordinates on `indices` and y's coordinates elsewhere."""
    x = as_point(x)
    y = as_point(y, x.shape[0])
    idx = np.fromiter((int(i) for i in indices), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise ContractViolation(
            "Index set %s out of range [0, %d)", sorted(idx.tolist()), x.shape[0]
        )
    out = y.copy()
    out[idx] = x[idx]
    return out


def derive_seeds(seed: int, count: int) -> List[int]:
    """`count` independent 64-bit child seeds of `seed`."""
    children = np.random.SeedSequence(int(seed)).spawn(count)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def derive_streams(seed: int, count: int) -> List[np.random.Generator]:
    return [np.random.default_rng(s) for s in derive_seeds(seed, count)]


def concentration_fraction(
    n: int, radius: float, m: int, stream: np.random.Generator
) -> float:
    """Empirical Pr[||x||_2 <= radius] for x ~ N(0, I_n)."""
    xs = stream.standard_normal((m, n))
    return float(np.mean(np.linalg.norm(xs, axis=1) <= radius))


def boundedness_probe(
    instance: FunctionInstance, m: int, stream: np.random.Generator
) -> float:
    """Empirical max of |f(x)| / ||x||_2^d over Gaussian x inside B(0, 2 sqrt(n))."""
    n = instance.n
    degree = instance.total_degree()
    degree = 0 if degree == -math.inf else degree
    xs = stream.standard_normal((m, n))
    norms = np.linalg.norm(xs, axis=1)
    keep = (norms <= 2 * math.sqrt(n)) & (norms > 0)
    if not keep.any():
        return 0.0
    ratio = np.abs(instance.evaluate_many(xs[keep])) / norms[keep] ** degree
    bound = float(ratio.max())
    log.info(
        "Boundedness probe: max |f(x)|/||x||^%d = %.6g over %d points",
        degree,
        bound,
        int(keep.sum()),
    )
    return bound
