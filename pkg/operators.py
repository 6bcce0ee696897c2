"""Orthogonally additive operators on the finite model and their lattice calculus.

An operator T maps vectors of one measure space to vectors of another and satisfies
T(0) = 0 and T(x + y) = T(x) + T(y) for disjoint x, y. The lattice operations on such
operators are computed pointwise by exhaustive search over decompositions of the argument;
for scalar-function matrices the closed forms are available too.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, ClassVar, Iterable, Iterator, Optional, Sequence

from errors import ContractError, StructuralError, UnsupportedValueError
from lattice import (
    SCALAR_SPACE,
    ZERO,
    LatVec,
    MeasureSpace,
    RefinementChain,
    absolute,
    embed_to,
    fragment_masks,
    join,
    meet,
    partition_blocks,
    partition_refines,
    Partition,
    sup_of,
    total,
)
from reports import CheckReport
from sampling import make_rng, random_disjoint_pair, random_vector
from utils import fractions_of, to_fraction

logger = logging.getLogger(__name__)


# --- Scalar functions (kernel sections, all vanishing at 0) ---


class ScalarFunc(ABC):
    fn: ClassVar[str] = ""

    @abstractmethod
    def __call__(self, r: Fraction) -> Fraction:
        ...

    @abstractmethod
    def is_identically_zero(self) -> bool:
        """Structural test; never decided by sampling."""

    def is_nonnegative(self) -> bool:
        """Structural test; False means "not known to be >= 0"."""
        return self.is_identically_zero()

    def is_nonpositive(self) -> bool:
        """Structural test; False means "not known to be <= 0"."""
        return self.is_identically_zero()


def _integer_root(n: int, k: int) -> Optional[int]:
    if n < 2:
        return n
    x = 1 << -(-n.bit_length() // k)
    while True:
        y = ((k - 1) * x + n // x ** (k - 1)) // k
        if y >= x:
            break
        x = y
    return x if x**k == n else None


def exact_power(base: Fraction, exponent: Fraction) -> Fraction:
    """base**exponent for base >= 0, exact or UnsupportedValueError."""
    if exponent.denominator == 1:
        return base ** exponent.numerator
    k = exponent.denominator
    num = _integer_root(base.numerator, k)
    den = _integer_root(base.denominator, k)
    if num is None or den is None:
        raise UnsupportedValueError(f"{base}^{exponent} is not rational")
    return Fraction(num, den) ** exponent.numerator


@dataclass(frozen=True)
class Polynomial(ScalarFunc):
    fn: ClassVar[str] = "poly"
    coeffs: tuple[Fraction, ...] = ()

    def __post_init__(self) -> None:
        coeffs = fractions_of(self.coeffs)
        if coeffs and coeffs[0] != 0:
            raise ContractError(f"polynomial constant term must be 0, got {coeffs[0]}")
        object.__setattr__(self, "coeffs", coeffs)

    def __call__(self, r: Fraction) -> Fraction:
        acc = ZERO
        for c in reversed(self.coeffs):
            acc = acc * r + c
        return acc

    def is_identically_zero(self) -> bool:
        return all(c == 0 for c in self.coeffs)

    def is_nonnegative(self) -> bool:
        return all(c == 0 if k % 2 else c >= 0 for k, c in enumerate(self.coeffs))

    def is_nonpositive(self) -> bool:
        return all(c == 0 if k % 2 else c <= 0 for k, c in enumerate(self.coeffs))


@dataclass(frozen=True)
class AbsPower(ScalarFunc):
    """c·|r|^p."""

    fn: ClassVar[str] = "abs_power"
    coefficient: Fraction = Fraction(1)
    exponent: Fraction = Fraction(1)

    def __post_init__(self) -> None:
        object.__setattr__(self, "coefficient", to_fraction(self.coefficient))
        object.__setattr__(self, "exponent", to_fraction(self.exponent))
        if self.exponent <= 0:
            raise ContractError(f"abs_power exponent must be positive, got {self.exponent}")

    def __call__(self, r: Fraction) -> Fraction:
        if r == 0 or self.coefficient == 0:
            return ZERO
        return self.coefficient * exact_power(abs(r), self.exponent)

    def is_identically_zero(self) -> bool:
        return self.coefficient == 0

    def is_nonnegative(self) -> bool:
        return self.coefficient >= 0

    def is_nonpositive(self) -> bool:
        return self.coefficient <= 0


@dataclass(frozen=True)
class PiecewiseLinear(ScalarFunc):
    """Linear interpolation through (r, value) nodes, extended linearly past the ends."""

    fn: ClassVar[str] = "piecewise_linear"
    nodes: tuple[tuple[Fraction, Fraction], ...] = ((ZERO, ZERO),)

    def __post_init__(self) -> None:
        nodes = tuple(sorted((to_fraction(r), to_fraction(v)) for r, v in self.nodes))
        if not nodes:
            raise ContractError("piecewise_linear needs at least one node")
        if len({r for r, _ in nodes}) != len(nodes):
            raise ContractError("piecewise_linear nodes must have distinct abscissae")
        object.__setattr__(self, "nodes", nodes)
        if self(ZERO) != 0:
            raise ContractError("piecewise_linear must take the value 0 at 0")

    def _slope(self, i: int) -> Fraction:
        (r0, v0), (r1, v1) = self.nodes[i], self.nodes[i + 1]
        return (v1 - v0) / (r1 - r0)

    def __call__(self, r: Fraction) -> Fraction:
        if len(self.nodes) == 1:
            return self.nodes[0][1]
        xs = [n[0] for n in self.nodes]
        i = min(max(bisect_right(xs, r) - 1, 0), len(xs) - 2)
        r0, v0 = self.nodes[i]
        return v0 + self._slope(i) * (r - r0)

    def is_identically_zero(self) -> bool:
        return all(v == 0 for _, v in self.nodes)

    def is_nonnegative(self) -> bool:
        if any(v < 0 for _, v in self.nodes):
            return False
        if len(self.nodes) == 1:
            return True
        return self._slope(0) <= 0 and self._slope(len(self.nodes) - 2) >= 0

    def is_nonpositive(self) -> bool:
        if any(v > 0 for _, v in self.nodes):
            return False
        if len(self.nodes) == 1:
            return True
        return self._slope(0) >= 0 and self._slope(len(self.nodes) - 2) <= 0


@dataclass(frozen=True)
class Threshold(ScalarFunc):
    """n·(|r| - 1) for |r| >= 1, else 0."""

    fn: ClassVar[str] = "threshold"
    scale: Fraction = Fraction(1)

    def __post_init__(self) -> None:
        object.__setattr__(self, "scale", to_fraction(self.scale))

    def __call__(self, r: Fraction) -> Fraction:
        return self.scale * (abs(r) - 1) if abs(r) >= 1 else ZERO

    def is_identically_zero(self) -> bool:
        return self.scale == 0

    def is_nonnegative(self) -> bool:
        return self.scale >= 0

    def is_nonpositive(self) -> bool:
        return self.scale <= 0


@dataclass(frozen=True)
class SignSplit(ScalarFunc):
    fn: ClassVar[str] = "sign_split"
    positive: ScalarFunc = field(default_factory=lambda: Polynomial(()))
    negative: ScalarFunc = field(default_factory=lambda: Polynomial(()))

    def __call__(self, r: Fraction) -> Fraction:
        if r > 0:
            return self.positive(r)
        if r < 0:
            return self.negative(r)
        return ZERO

    def is_identically_zero(self) -> bool:
        return self.positive.is_identically_zero() and self.negative.is_identically_zero()

    def is_nonnegative(self) -> bool:
        return self.positive.is_nonnegative() and self.negative.is_nonnegative()

    def is_nonpositive(self) -> bool:
        return self.positive.is_nonpositive() and self.negative.is_nonpositive()


@dataclass(frozen=True)
class Abs(ScalarFunc):
    fn: ClassVar[str] = "abs"
    inner: ScalarFunc = field(default_factory=lambda: Polynomial(()))

    def __call__(self, r: Fraction) -> Fraction:
        return abs(self.inner(r))

    def is_identically_zero(self) -> bool:
        return self.inner.is_identically_zero()

    def is_nonnegative(self) -> bool:
        return True


@dataclass(frozen=True)
class Combination(ScalarFunc):
    """sum of c_k·f_k(r)."""

    fn: ClassVar[str] = "combination"
    terms: tuple[tuple[Fraction, ScalarFunc], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "terms", tuple((to_fraction(c), f) for c, f in self.terms))

    def __call__(self, r: Fraction) -> Fraction:
        return sum((c * f(r) for c, f in self.terms if c != 0), ZERO)

    def _live(self) -> list[tuple[Fraction, ScalarFunc]]:
        return [(c, f) for c, f in self.terms if c != 0 and not f.is_identically_zero()]

    def is_identically_zero(self) -> bool:
        return not self._live()

    def is_nonnegative(self) -> bool:
        return all(f.is_nonnegative() if c > 0 else f.is_nonpositive() for c, f in self._live())

    def is_nonpositive(self) -> bool:
        return all(f.is_nonpositive() if c > 0 else f.is_nonnegative() for c, f in self._live())


@dataclass(frozen=True)
class PointwiseMax(ScalarFunc):
    fn: ClassVar[str] = "max"
    left: ScalarFunc = field(default_factory=lambda: Polynomial(()))
    right: ScalarFunc = field(default_factory=lambda: Polynomial(()))

    def __call__(self, r: Fraction) -> Fraction:
        return max(self.left(r), self.right(r))

    def is_identically_zero(self) -> bool:
        left_zero, right_zero = self.left.is_identically_zero(), self.right.is_identically_zero()
        if left_zero and right_zero:
            return True
        return (left_zero and self.right.is_nonpositive()) or (
            right_zero and self.left.is_nonpositive()
        )

    def is_nonnegative(self) -> bool:
        return self.left.is_nonnegative() or self.right.is_nonnegative()

    def is_nonpositive(self) -> bool:
        return self.left.is_nonpositive() and self.right.is_nonpositive()


@dataclass(frozen=True)
class PointwiseMin(ScalarFunc):
    fn: ClassVar[str] = "min"
    left: ScalarFunc = field(default_factory=lambda: Polynomial(()))
    right: ScalarFunc = field(default_factory=lambda: Polynomial(()))

    def __call__(self, r: Fraction) -> Fraction:
        return min(self.left(r), self.right(r))

    def is_identically_zero(self) -> bool:
        left_zero, right_zero = self.left.is_identically_zero(), self.right.is_identically_zero()
        if left_zero and right_zero:
            return True
        return (left_zero and self.right.is_nonnegative()) or (
            right_zero and self.left.is_nonnegative()
        )

    def is_nonnegative(self) -> bool:
        return self.left.is_nonnegative() and self.right.is_nonnegative()

    def is_nonpositive(self) -> bool:
        return self.left.is_nonpositive() or self.right.is_nonpositive()


ZERO_FUNC = Polynomial(())


def negated(f: ScalarFunc) -> ScalarFunc:
    return Combination(((Fraction(-1), f),))


# --- Operators ---


class OrthAddOperator(ABC):
    """T: E -> F with T(0) = 0 and T(x + y) = T(x) + T(y) for disjoint x, y."""

    kind: ClassVar[str] = "operator"
    input_space: MeasureSpace
    output_space: MeasureSpace

    def apply(self, x: LatVec) -> LatVec:
        if x.space is not self.input_space and x.space != self.input_space:
            raise StructuralError(f"{self.kind}: argument is not on the operator's input space")
        return self._evaluate(x)

    __call__ = apply

    @abstractmethod
    def _evaluate(self, x: LatVec) -> LatVec:
        ...


def _rows_match(entries, input_space: MeasureSpace, output_space: MeasureSpace) -> None:
    if len(entries) != output_space.size:
        raise StructuralError(f"{len(entries)} rows for an output space of {output_space.size} atoms")
    for i, row in enumerate(entries):
        if len(row) != input_space.size:
            raise StructuralError(
                f"row {i} has {len(row)} entries for an input space of {input_space.size} atoms"
            )


@dataclass(frozen=True, eq=False)
class UrysonMatrix(OrthAddOperator):
    """T(x)_i = sum_j phi_ij(x_j)."""

    kind: ClassVar[str] = "uryson_matrix"
    input_space: MeasureSpace
    output_space: MeasureSpace
    entries: tuple[tuple[ScalarFunc, ...], ...]

    def __post_init__(self) -> None:
        entries = tuple(tuple(row) for row in self.entries)
        _rows_match(entries, self.input_space, self.output_space)
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_rows(
        cls,
        rows: Sequence[Sequence[ScalarFunc]],
        input_space: Optional[MeasureSpace] = None,
        output_space: Optional[MeasureSpace] = None,
    ) -> UrysonMatrix:
        input_space = input_space or MeasureSpace.counting(len(rows[0]))
        output_space = output_space or MeasureSpace.counting(len(rows))
        return cls(input_space, output_space, tuple(tuple(r) for r in rows))

    def _evaluate(self, x: LatVec) -> LatVec:
        support = x.support()
        out = []
        for row in self.entries:
            acc = ZERO
            for j in support:
                acc += row[j](x.coeffs[j])
            out.append(acc)
        return LatVec(self.output_space, tuple(out))

    def map_entries(self, fn: Callable[[ScalarFunc], ScalarFunc]) -> UrysonMatrix:
        return UrysonMatrix(
            self.input_space, self.output_space, tuple(tuple(fn(f) for f in row) for row in self.entries)
        )

    def live_columns(self, row: int) -> list[int]:
        return [j for j, f in enumerate(self.entries[row]) if not f.is_identically_zero()]


@dataclass(frozen=True, eq=False)
class SupportMeasure(OrthAddOperator):
    """T(x) = sum of nu_a over a in supp(x)."""

    kind: ClassVar[str] = "support_measure"
    input_space: MeasureSpace
    nu: tuple[Fraction, ...]
    output_space: MeasureSpace = SCALAR_SPACE

    def __post_init__(self) -> None:
        nu = fractions_of(self.nu)
        if len(nu) != self.input_space.size:
            raise StructuralError(f"nu has {len(nu)} entries for {self.input_space.size} atoms")
        object.__setattr__(self, "nu", nu)

    def _evaluate(self, x: LatVec) -> LatVec:
        return LatVec(self.output_space, (sum((self.nu[a] for a in x.support()), ZERO),))


@dataclass(frozen=True, eq=False)
class NormPower(OrthAddOperator):
    """T(x) = ||x||_p^p in the weighted norm; integer p only."""

    kind: ClassVar[str] = "norm_power"
    input_space: MeasureSpace
    p: Fraction = Fraction(1)
    output_space: MeasureSpace = SCALAR_SPACE

    def __post_init__(self) -> None:
        p = to_fraction(self.p)
        if p.denominator != 1 or p < 1:
            raise UnsupportedValueError(f"norm_power needs a positive integer p, got {p}")
        object.__setattr__(self, "p", p)

    def _evaluate(self, x: LatVec) -> LatVec:
        power = self.p.numerator
        weights = self.input_space.weights
        value = sum((weights[a] * abs(x.coeffs[a]) ** power for a in x.support()), ZERO)
        return LatVec(self.output_space, (value,))


@dataclass(frozen=True, eq=False)
class ThresholdSum(OrthAddOperator):
    """T(x) = sum over n with |x_n| >= 1 of n·(|x_n| - 1), atoms numbered from 1."""

    kind: ClassVar[str] = "threshold_sum"
    input_space: MeasureSpace
    output_space: MeasureSpace = SCALAR_SPACE

    def _evaluate(self, x: LatVec) -> LatVec:
        value = sum(
            ((n + 1) * (abs(c) - 1) for n, c in enumerate(x.coeffs) if abs(c) >= 1), ZERO
        )
        return LatVec(self.output_space, (value,))


@dataclass(frozen=True, eq=False)
class LiftedLinear(OrthAddOperator):
    """T(x) = A|x| for a positive matrix A."""

    kind: ClassVar[str] = "lifted_linear"
    input_space: MeasureSpace
    output_space: MeasureSpace
    matrix: tuple[tuple[Fraction, ...], ...]

    def __post_init__(self) -> None:
        matrix = tuple(fractions_of(row) for row in self.matrix)
        _rows_match(matrix, self.input_space, self.output_space)
        for i, row in enumerate(matrix):
            for j, a in enumerate(row):
                if a < 0:
                    raise ContractError(f"lifted_linear needs A >= 0; entry ({i},{j}) is {a}")
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(
            self, "_sparse", tuple(tuple((j, a) for j, a in enumerate(row) if a) for row in matrix)
        )

    @classmethod
    def identity(cls, space: MeasureSpace) -> LiftedLinear:
        n = space.size
        rows = tuple(tuple(Fraction(int(i == j)) for j in range(n)) for i in range(n))
        return cls(space, space, rows)

    def _evaluate(self, x: LatVec) -> LatVec:
        c = x.coeffs
        return LatVec(
            self.output_space, tuple(sum((a * abs(c[j]) for j, a in row), ZERO) for row in self._sparse)
        )


@dataclass(frozen=True, eq=False)
class NegPartOperator(OrthAddOperator):
    """T(x) = x^-."""

    kind: ClassVar[str] = "neg_part_op"
    input_space: MeasureSpace

    @property
    def output_space(self) -> MeasureSpace:
        return self.input_space

    def _evaluate(self, x: LatVec) -> LatVec:
        return LatVec(self.input_space, tuple(max(-c, ZERO) for c in x.coeffs))


@dataclass(frozen=True, eq=False)
class FunctionOperator(OrthAddOperator):
    """Wraps an arbitrary callable; orthogonal additivity is the caller's claim to check."""

    kind: ClassVar[str] = "custom"
    input_space: MeasureSpace
    output_space: MeasureSpace
    func: Callable[[LatVec], LatVec]
    label: str = "custom"

    def _evaluate(self, x: LatVec) -> LatVec:
        value = self.func(x)
        if value.space != self.output_space:
            raise StructuralError(f"{self.label}: result is not on the declared output space")
        return value


# --- Families across refinement levels ---


@dataclass(frozen=True, eq=False)
class KernelFamily:
    """Kernel table on the finest level; T_n(f)(s) = sum_t K(s, t, f(t))·mu(t)."""

    chain: RefinementChain
    table: tuple[tuple[ScalarFunc, ...], ...]

    def __post_init__(self) -> None:
        table = tuple(tuple(row) for row in self.table)
        finest = self.chain.finest
        _rows_match(table, finest, finest)
        object.__setattr__(self, "table", table)

    def at_level(self, level: int) -> KernelLevelOperator:
        if not 0 <= level <= self.chain.depth:
            raise ContractError(f"level {level} out of range 0..{self.chain.depth}")
        return KernelLevelOperator(self, level)

    def as_matrix(self, level: int) -> UrysonMatrix:
        """The level operator as a matrix whose entries sum kernel sections over child cells."""
        finest = self.chain.finest
        owner = self.chain.ancestors(level, self.chain.depth)
        space = self.chain.spaces[level]
        rows = []
        for s in range(finest.size):
            row = []
            for c in range(space.size):
                terms = tuple(
                    (finest.weights[t], self.table[s][t]) for t in range(finest.size) if owner[t] == c
                )
                row.append(Combination(terms))
            rows.append(tuple(row))
        return UrysonMatrix(space, finest, tuple(rows))


@dataclass(frozen=True, eq=False)
class KernelLevelOperator(OrthAddOperator):
    kind: ClassVar[str] = "kernel_level"
    family: KernelFamily
    level: int

    @property
    def input_space(self) -> MeasureSpace:
        return self.family.chain.spaces[self.level]

    @property
    def output_space(self) -> MeasureSpace:
        return self.family.chain.finest

    def _evaluate(self, x: LatVec) -> LatVec:
        chain = self.family.chain
        fine = embed_to(x, chain, chain.depth)
        mu = chain.finest.weights
        support = fine.support()
        out = []
        for row in self.family.table:
            out.append(sum((row[t](fine.coeffs[t]) * mu[t] for t in support), ZERO))
        return LatVec(chain.finest, tuple(out))


@dataclass(frozen=True, eq=False)
class BuiltinFamily:
    """A named operator family given by a per-level factory."""

    chain: RefinementChain
    name: str
    factory: Callable[[MeasureSpace], OrthAddOperator]

    def at_level(self, level: int) -> OrthAddOperator:
        if not 0 <= level <= self.chain.depth:
            raise ContractError(f"level {level} out of range 0..{self.chain.depth}")
        return self.factory(self.chain.spaces[level])


def norm_power_family(chain: RefinementChain, p=1) -> BuiltinFamily:
    return BuiltinFamily(chain, f"norm_power(p={p})", lambda space: NormPower(space, p))


def identity_family(chain: RefinementChain) -> BuiltinFamily:
    return BuiltinFamily(chain, "identity", LiftedLinear.identity)


def support_measure_family(chain: RefinementChain) -> BuiltinFamily:
    """nu = the weights of each level."""
    return BuiltinFamily(chain, "support_measure", lambda space: SupportMeasure(space, space.weights))


# --- Exhaustive lattice calculus ---


@dataclass(frozen=True)
class SearchResult:
    """Coordinatewise extremum with the decompositions that attain it.

    `certificate` attains every output coordinate at once (first in enumeration order) when
    such a decomposition exists; `per_coordinate[i]` always attains coordinate i.
    """

    value: LatVec
    certificate: Optional[tuple[int, ...]]
    per_coordinate: tuple[tuple[int, ...], ...]
    visited: int


class BlockEvaluator:
    """Memoized T(x restricted to mask) for one fixed x."""

    def __init__(self, op: OrthAddOperator, x: LatVec) -> None:
        self.op = op
        self.x = x
        self._cache: dict[int, LatVec] = {}

    def __call__(self, mask: int) -> LatVec:
        value = self._cache.get(mask)
        if value is None:
            value = self.op.apply(self.x.restrict(mask))
            self._cache[mask] = value
        return value


def extremum(
    candidates: Iterable[tuple[tuple[int, ...], LatVec]], maximize: bool, space: MeasureSpace
) -> SearchResult:
    better = (lambda a, b: a > b) if maximize else (lambda a, b: a < b)
    best: Optional[list[Fraction]] = None
    per: list[tuple[int, ...]] = []
    simultaneous: Optional[tuple[int, ...]] = None
    visited = 0
    for cert, value in candidates:
        visited += 1
        coeffs = value.coeffs
        if best is None:
            best, per, simultaneous = list(coeffs), [cert] * len(coeffs), cert
            continue
        improved = False
        for i, c in enumerate(coeffs):
            if better(c, best[i]):
                best[i] = c
                per[i] = cert
                improved = True
        if improved:
            simultaneous = cert if list(coeffs) == best else None
        elif simultaneous is None and list(coeffs) == best:
            simultaneous = cert
    if best is None:
        raise ContractError("empty search space")
    return SearchResult(LatVec(space, tuple(best)), simultaneous, tuple(per), visited)


def _fragment_pairs(x: LatVec, cap: Optional[int]) -> Iterator[tuple[int, int]]:
    support = x.support_mask
    for mask in fragment_masks(x, cap):
        yield mask, support & ~mask


def modulus(op: OrthAddOperator, x: LatVec, cap: Optional[int] = None) -> SearchResult:
    """|T|(x) = sup over partitions of x of the sum of |T(block)|."""
    ev = BlockEvaluator(op, x)
    space = op.output_space

    def candidates():
        for blocks in partition_blocks(x, cap=cap):
            yield blocks, total((absolute(ev(b)) for b in blocks), space)

    return extremum(candidates(), True, space)


def pos_part_op(op: OrthAddOperator, x: LatVec, cap: Optional[int] = None) -> SearchResult:
    """T+(x) = sup{T(y): y ⊑ x}."""
    ev = BlockEvaluator(op, x)
    return extremum(
        (((y, z), ev(y)) for y, z in _fragment_pairs(x, cap)), True, op.output_space
    )


def neg_part_op_calc(op: OrthAddOperator, x: LatVec, cap: Optional[int] = None) -> SearchResult:
    """T-(x) = -inf{T(y): y ⊑ x}."""
    ev = BlockEvaluator(op, x)
    low = extremum((((y, z), ev(y)) for y, z in _fragment_pairs(x, cap)), False, op.output_space)
    return SearchResult(-low.value, low.certificate, low.per_coordinate, low.visited)


def _same_spaces(op: OrthAddOperator, other: OrthAddOperator) -> None:
    if op.input_space != other.input_space or op.output_space != other.output_space:
        raise StructuralError("operators act between different spaces")


def op_join(
    op: OrthAddOperator, other: OrthAddOperator, x: LatVec, cap: Optional[int] = None
) -> SearchResult:
    """(T∨S)(x) = sup{T(y) + S(z): x = y ⊔ z}."""
    _same_spaces(op, other)
    ev_t, ev_s = BlockEvaluator(op, x), BlockEvaluator(other, x)
    return extremum(
        (((y, z), ev_t(y) + ev_s(z)) for y, z in _fragment_pairs(x, cap)), True, op.output_space
    )


def op_meet(
    op: OrthAddOperator, other: OrthAddOperator, x: LatVec, cap: Optional[int] = None
) -> SearchResult:
    """(T∧S)(x) = inf{T(y) + S(z): x = y ⊔ z}."""
    _same_spaces(op, other)
    ev_t, ev_s = BlockEvaluator(op, x), BlockEvaluator(other, x)
    return extremum(
        (((y, z), ev_t(y) + ev_s(z)) for y, z in _fragment_pairs(x, cap)), False, op.output_space
    )


@dataclass(frozen=True, eq=False)
class LatticeOperator(OrthAddOperator):
    """An operator evaluated through one of the exhaustive oracles above."""

    kind: ClassVar[str] = "lattice"
    operation: str
    left: OrthAddOperator
    right: Optional[OrthAddOperator] = None

    def __post_init__(self) -> None:
        if self.operation not in _ORACLES:
            raise ContractError(f"unknown operator lattice operation {self.operation!r}")
        if self.operation in ("join", "meet"):
            if self.right is None:
                raise ContractError(f"{self.operation} needs two operators")
            _same_spaces(self.left, self.right)

    @property
    def input_space(self) -> MeasureSpace:
        return self.left.input_space

    @property
    def output_space(self) -> MeasureSpace:
        return self.left.output_space

    def _evaluate(self, x: LatVec) -> LatVec:
        oracle = _ORACLES[self.operation]
        if self.right is None:
            return oracle(self.left, x).value
        return oracle(self.left, self.right, x).value


_ORACLES = {
    "modulus": modulus,
    "pos_part": pos_part_op,
    "neg_part": neg_part_op_calc,
    "join": op_join,
    "meet": op_meet,
}


def modulus_operator(op: OrthAddOperator) -> LatticeOperator:
    return LatticeOperator("modulus", op)


def join_operator(op: OrthAddOperator, other: OrthAddOperator) -> LatticeOperator:
    return LatticeOperator("join", op, other)


def meet_operator(op: OrthAddOperator, other: OrthAddOperator) -> LatticeOperator:
    return LatticeOperator("meet", op, other)


def positive_part_operator(op: OrthAddOperator) -> LatticeOperator:
    return LatticeOperator("pos_part", op)


def negative_part_operator(op: OrthAddOperator) -> LatticeOperator:
    return LatticeOperator("neg_part", op)


# --- Closed forms for matrices ---


def modulus_closed_form(op: UrysonMatrix, x: LatVec) -> LatVec:
    """|T|(x)_i = sum_j |phi_ij(x_j)|."""
    return modulus_matrix(op).apply(x)


def modulus_matrix(op: UrysonMatrix) -> UrysonMatrix:
    return op.map_entries(Abs)


def positive_part_matrix(op: UrysonMatrix) -> UrysonMatrix:
    return op.map_entries(lambda f: PointwiseMax(f, ZERO_FUNC))


def negative_part_matrix(op: UrysonMatrix) -> UrysonMatrix:
    return op.map_entries(lambda f: PointwiseMax(negated(f), ZERO_FUNC))


def _zip_matrices(op, other, combine) -> UrysonMatrix:
    _same_spaces(op, other)
    rows = tuple(
        tuple(combine(f, g) for f, g in zip(row_t, row_s))
        for row_t, row_s in zip(op.entries, other.entries)
    )
    return UrysonMatrix(op.input_space, op.output_space, rows)


def join_matrix(op: UrysonMatrix, other: UrysonMatrix) -> UrysonMatrix:
    return _zip_matrices(op, other, PointwiseMax)


def meet_matrix(op: UrysonMatrix, other: UrysonMatrix) -> UrysonMatrix:
    return _zip_matrices(op, other, PointwiseMin)


def modulus_value(op: OrthAddOperator, x: LatVec) -> LatVec:
    """|T|(x): closed form for matrices, exhaustive otherwise."""
    if isinstance(op, UrysonMatrix):
        return modulus_closed_form(op, x)
    return modulus(op, x).value


# --- Checks ---


def check_orthogonal_additivity(
    op: OrthAddOperator, trials: int = 100, seed: Optional[int] = None
) -> CheckReport:
    rng = make_rng(seed)
    report = CheckReport("orthogonal_additivity")
    at_zero = op.apply(op.input_space.zero())
    if not at_zero.is_zero():
        report.fail(reason="T(0) != 0", value=at_zero)
    for _ in range(trials):
        x, y = random_disjoint_pair(rng, op.input_space)
        try:
            lhs = op.apply(x + y)
            rhs = op.apply(x) + op.apply(y)
        except UnsupportedValueError as exc:
            report.notice(f"skipped a pair: {exc}")
            continue
        report.checked += 1
        if lhs != rhs:
            report.fail(x=x, y=y, lhs=lhs, rhs=rhs)
    return report


def is_positive_on(op: OrthAddOperator, x: LatVec, cap: Optional[int] = None) -> bool:
    """T(y) >= 0 for every fragment y of x."""
    ev = BlockEvaluator(op, x)
    return all(ev(mask).is_positive() for mask in fragment_masks(x, cap))


def directed_net_trace(
    op: OrthAddOperator,
    x: LatVec,
    partitions: Sequence[Partition],
    variant: str = "modulus",
    other: Optional[OrthAddOperator] = None,
) -> list[LatVec]:
    """Blockwise aggregates along a refining chain of partitions of x.

    modulus: sum |T(y)| (increasing); join: sum T(y)∨S(y) (increasing);
    meet: sum T(y)∧S(y) (decreasing); lambda: sup |T(y)| (decreasing for positive T).
    """
    if variant not in ("modulus", "join", "meet", "lambda"):
        raise ContractError(f"unknown trace variant {variant!r}")
    if variant in ("join", "meet"):
        if other is None:
            raise ContractError(f"the {variant} trace needs a second operator")
        _same_spaces(op, other)
    for p in partitions:
        if p.base != x:
            raise StructuralError("trace partitions must be partitions of x")
    for coarse, fine in zip(partitions, partitions[1:]):
        if not partition_refines(coarse, fine):
            raise ContractError("trace partitions do not form a refining chain")
    ev = BlockEvaluator(op, x)
    ev_other = BlockEvaluator(other, x) if other is not None else None
    space = op.output_space
    trace = []
    for p in partitions:
        if variant == "modulus":
            trace.append(total((absolute(ev(b)) for b in p.blocks), space))
        elif variant == "lambda":
            trace.append(sup_of((absolute(ev(b)) for b in p.blocks), space))
        elif variant == "join":
            trace.append(total((join(ev(b), ev_other(b)) for b in p.blocks), space))
        else:
            trace.append(total((meet(ev(b), ev_other(b)) for b in p.blocks), space))
    return trace


def is_monotone(values: Sequence[LatVec], increasing: bool = True) -> bool:
    pairs = zip(values, values[1:])
    return all(a <= b if increasing else b <= a for a, b in pairs)


# Witness values tried in this order: unit coordinates first.
_WITNESS_VALUES = tuple(Fraction(v) for v in ("1", "-1", "2", "-2", "1/2", "-1/2"))


def _nonzero_point(f: ScalarFunc) -> Optional[Fraction]:
    for r in _WITNESS_VALUES:
        try:
            if f(r) != 0:
                return r
        except UnsupportedValueError:
            continue
    return None


def is_disjointness_preserving(
    op: OrthAddOperator, mode: str = "exact_matrix", trials: int = 100, seed: Optional[int] = None
) -> CheckReport:
    """DP verdict in `ok`; witnesses of overlap in `counterexamples`."""
    report = CheckReport(f"disjointness_preserving[{mode}]")
    if mode == "exact_matrix":
        if not isinstance(op, UrysonMatrix):
            raise ContractError("exact_matrix mode needs a uryson_matrix operator")
        for i in range(op.output_space.size):
            report.checked += 1
            live = op.live_columns(i)
            if len(live) <= 1:
                continue
            j, k = live[0], live[1]
            r, s = _nonzero_point(op.entries[i][j]), _nonzero_point(op.entries[i][k])
            if r is None or s is None:
                report.fail(row=i, columns=[j, k], reason="live entries vanish on the sample grid")
                continue
            x, y = op.input_space.unit(j, r), op.input_space.unit(k, s)
            overlap = meet(absolute(op.apply(x)), absolute(op.apply(y)))
            report.fail(row=i, columns=[j, k], x=x, y=y, overlap=overlap)
    elif mode == "sampled":
        rng = make_rng(seed)
        for _ in range(trials):
            x, y = random_disjoint_pair(rng, op.input_space)
            try:
                overlap = meet(absolute(op.apply(x)), absolute(op.apply(y)))
            except UnsupportedValueError as exc:
                report.notice(f"skipped a pair: {exc}")
                continue
            report.checked += 1
            if not overlap.is_zero():
                report.fail(x=x, y=y, overlap=overlap)
    else:
        raise ContractError(f"unknown mode {mode!r}; use exact_matrix or sampled")
    report.values["disjointness_preserving"] = report.ok
    return report


def _is_dp(op: OrthAddOperator, seed: Optional[int]) -> bool:
    mode = "exact_matrix" if isinstance(op, UrysonMatrix) else "sampled"
    return is_disjointness_preserving(op, mode, seed=seed).ok


def matrix_dominated(small: UrysonMatrix, large: UrysonMatrix, grid: Sequence[Fraction]) -> bool:
    """|psi_ij(r)| <= |phi_ij(r)| at every grid point r."""
    _same_spaces(small, large)
    for row_s, row_l in zip(small.entries, large.entries):
        for f, g in zip(row_s, row_l):
            if any(abs(f(r)) > abs(g(r)) for r in grid):
                return False
    return True


def dominance_and_solidity_check(
    small: OrthAddOperator,
    large: OrthAddOperator,
    samples: int = 100,
    seed: Optional[int] = None,
    grid: Sequence[Fraction] = _WITNESS_VALUES,
) -> CheckReport:
    """|S| <= |T| on samples; then T DP forces S DP. Also |T(x)| <= |T|(x)."""
    _same_spaces(small, large)
    rng = make_rng(seed)
    report = CheckReport("dominance_and_solidity")
    dominated = True
    for _ in range(samples):
        x = random_vector(rng, large.input_space)
        mod_s, mod_t = modulus_value(small, x), modulus_value(large, x)
        report.checked += 1
        for name, op, mod in (("S", small, mod_s), ("T", large, mod_t)):
            if not absolute(op.apply(x)) <= mod:
                report.fail(reason=f"|{name}(x)| exceeds |{name}|(x)", x=x)
        if not mod_s <= mod_t:
            dominated = False
    if isinstance(small, UrysonMatrix) and isinstance(large, UrysonMatrix):
        report.values["grid_dominated"] = matrix_dominated(small, large, grid)
        dominated = dominated and report.values["grid_dominated"]
    large_dp, small_dp = _is_dp(large, seed), _is_dp(small, seed)
    report.values.update(dominated=dominated, large_dp=large_dp, small_dp=small_dp)
    if dominated and large_dp and not small_dp:
        report.fail(reason="a dominated operator of a DP operator is not DP")
    return report
