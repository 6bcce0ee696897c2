"""Finite measure-algebra model of a vector lattice.

Atoms carry positive rational weights; a vector holds one exact coefficient per atom and
the order is coordinatewise. Fragments of x are the support-mask restrictions of x and
decompositions of x are set partitions of its support. Masks are ints, bit i = atom i.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Iterator, Optional, Sequence

import config
from errors import CapExceededError, ContractError, StructuralError
from utils import bits_of, fractions_of, lowest_bit, mask_of, spread, to_fraction

logger = logging.getLogger(__name__)

ZERO = Fraction(0)
ONE = Fraction(1)


@dataclass(frozen=True)
class MeasureSpace:
    weights: tuple[Fraction, ...]
    atoms: tuple[str, ...] = ()
    parents: Optional[tuple[int, ...]] = None

    def __post_init__(self) -> None:
        weights = fractions_of(self.weights)
        if not weights:
            raise StructuralError("a measure space needs at least one atom")
        for i, w in enumerate(weights):
            if w <= 0:
                raise StructuralError(f"weight of atom {i} must be positive, got {w}")
        atoms = tuple(str(a) for a in self.atoms) or tuple(str(i) for i in range(len(weights)))
        if len(atoms) != len(weights):
            raise StructuralError(f"{len(atoms)} atom ids for {len(weights)} weights")
        if len(set(atoms)) != len(atoms):
            raise StructuralError("atom ids must be distinct")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "atoms", atoms)
        if self.parents is not None:
            object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))
            if len(self.parents) != len(weights):
                raise StructuralError("parent links must name one parent per atom")

    @classmethod
    def counting(cls, n: int) -> MeasureSpace:
        """n atoms of weight 1 (the model of R^n with the plain l1 norm)."""
        return cls(tuple(ONE for _ in range(n)))

    @classmethod
    def uniform(cls, n: int, total: Fraction = ONE) -> MeasureSpace:
        return cls(tuple(Fraction(total) / n for _ in range(n)))

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def full_mask(self) -> int:
        return (1 << self.size) - 1

    def measure(self, mask: int) -> Fraction:
        return sum((self.weights[i] for i in bits_of(mask)), ZERO)

    def vector(self, coeffs: Iterable) -> LatVec:
        return LatVec(self, tuple(coeffs))

    def zero(self) -> LatVec:
        return LatVec(self, (ZERO,) * self.size)

    def constant(self, value=1) -> LatVec:
        return LatVec(self, (to_fraction(value),) * self.size)

    def indicator(self, mask: int) -> LatVec:
        return LatVec(self, tuple(ONE if mask >> i & 1 else ZERO for i in range(self.size)))

    def unit(self, i: int, value=1) -> LatVec:
        coeffs = [ZERO] * self.size
        coeffs[i] = to_fraction(value)
        return LatVec(self, tuple(coeffs))


# Scalar targets are realized as this one-atom space.
SCALAR_SPACE = MeasureSpace((ONE,), atoms=("*",))


@dataclass(frozen=True)
class LatVec:
    space: MeasureSpace
    coeffs: tuple[Fraction, ...]

    def __post_init__(self) -> None:
        coeffs = fractions_of(self.coeffs)
        if len(coeffs) != self.space.size:
            raise StructuralError(
                f"vector has {len(coeffs)} coefficients, space has {self.space.size} atoms"
            )
        object.__setattr__(self, "coeffs", coeffs)

    def _check(self, other: LatVec) -> None:
        if other.space is not self.space and other.space != self.space:
            raise StructuralError("vectors live on different measure spaces")

    def _new(self, coeffs: Iterable[Fraction]) -> LatVec:
        return LatVec(self.space, tuple(coeffs))

    def __add__(self, other: LatVec) -> LatVec:
        self._check(other)
        return self._new(a + b for a, b in zip(self.coeffs, other.coeffs))

    def __sub__(self, other: LatVec) -> LatVec:
        self._check(other)
        return self._new(a - b for a, b in zip(self.coeffs, other.coeffs))

    def __neg__(self) -> LatVec:
        return self._new(-a for a in self.coeffs)

    def scale(self, factor) -> LatVec:
        q = to_fraction(factor)
        return self._new(q * a for a in self.coeffs)

    def __le__(self, other: LatVec) -> bool:
        self._check(other)
        return all(a <= b for a, b in zip(self.coeffs, other.coeffs))

    def __ge__(self, other: LatVec) -> bool:
        return other <= self

    def __len__(self) -> int:
        return len(self.coeffs)

    def __getitem__(self, i: int) -> Fraction:
        return self.coeffs[i]

    def __str__(self) -> str:
        return "(" + ", ".join(str(c) for c in self.coeffs) + ")"

    @cached_property
    def support_mask(self) -> int:
        return mask_of(i for i, c in enumerate(self.coeffs) if c != 0)

    def support(self) -> tuple[int, ...]:
        return tuple(i for i, c in enumerate(self.coeffs) if c != 0)

    def is_zero(self) -> bool:
        return not self.support_mask

    def is_positive(self) -> bool:
        """x >= 0 (coordinatewise)."""
        return all(c >= 0 for c in self.coeffs)

    def restrict(self, mask: int) -> LatVec:
        return self._new(c if mask >> i & 1 else ZERO for i, c in enumerate(self.coeffs))

    def norm(self) -> Fraction:
        """Weighted l1 norm: sum of w_a |x_a|."""
        return sum((w * abs(c) for w, c in zip(self.space.weights, self.coeffs)), ZERO)


# --- Lattice operations ---


def join(x: LatVec, y: LatVec) -> LatVec:
    x._check(y)
    return x._new(max(a, b) for a, b in zip(x.coeffs, y.coeffs))


def meet(x: LatVec, y: LatVec) -> LatVec:
    x._check(y)
    return x._new(min(a, b) for a, b in zip(x.coeffs, y.coeffs))


def absolute(x: LatVec) -> LatVec:
    return x._new(abs(a) for a in x.coeffs)


def pos_part(x: LatVec) -> LatVec:
    return x._new(max(a, ZERO) for a in x.coeffs)


def neg_part(x: LatVec) -> LatVec:
    """x^- >= 0 with x = x^+ - x^-."""
    return x._new(max(-a, ZERO) for a in x.coeffs)


_BINARY = {"join": join, "meet": meet}
_UNARY = {"abs": absolute, "pos_part": pos_part, "neg_part": neg_part}


def lattice_binary(kind: str, x: LatVec, y: LatVec) -> LatVec:
    try:
        return _BINARY[kind](x, y)
    except KeyError:
        raise ContractError(f"unknown binary lattice operation {kind!r}")


def lattice_unary(kind: str, x: LatVec) -> LatVec:
    try:
        return _UNARY[kind](x)
    except KeyError:
        raise ContractError(f"unknown unary lattice operation {kind!r}")


def sup_of(vectors: Iterable[LatVec], space: MeasureSpace) -> LatVec:
    """Coordinatewise max; the empty supremum is taken as 0 (all terms here are >= 0)."""
    result = space.zero()
    first = True
    for v in vectors:
        result = v if first else join(result, v)
        first = False
    return result


def inf_of(vectors: Iterable[LatVec], space: MeasureSpace) -> LatVec:
    result = None
    for v in vectors:
        result = v if result is None else meet(result, v)
    return space.zero() if result is None else result


def total(vectors: Iterable[LatVec], space: MeasureSpace) -> LatVec:
    result = space.zero()
    for v in vectors:
        result = result + v
    return result


def disjoint(x: LatVec, y: LatVec) -> bool:
    """|x| ∧ |y| = 0."""
    return meet(absolute(x), absolute(y)).is_zero()


# --- Fragments ---


def is_fragment(y: LatVec, x: LatVec) -> bool:
    """y ⊑ x, decided order-theoretically as y ⊥ (x - y)."""
    return disjoint(y, x - y)


def is_fragment_by_coefficients(y: LatVec, x: LatVec) -> bool:
    """y ⊑ x, decided in the coordinate model: each y_a is 0 or x_a."""
    x._check(y)
    return all(b == 0 or b == a for a, b in zip(x.coeffs, y.coeffs))


def fragment_join(y: LatVec, z: LatVec) -> LatVec:
    """Supremum of two fragments of a common x in the fragment order (mask union)."""
    return join(pos_part(y), pos_part(z)) - join(neg_part(y), neg_part(z))


def fragment_meet(y: LatVec, z: LatVec) -> LatVec:
    """Infimum of two fragments of a common x in the fragment order (mask intersection)."""
    return meet(pos_part(y), pos_part(z)) - meet(neg_part(y), neg_part(z))


@dataclass(frozen=True)
class Fragment:
    base: LatVec
    mask: int

    def __post_init__(self) -> None:
        if self.mask & ~self.base.support_mask:
            raise ContractError(f"mask {self.mask:#b} is not inside the support of the base")

    @cached_property
    def value(self) -> LatVec:
        return self.base.restrict(self.mask)

    def complement(self) -> Fragment:
        return Fragment(self.base, self.base.support_mask & ~self.mask)

    def indices(self) -> tuple[int, ...]:
        return tuple(bits_of(self.mask))


def _resolve_cap(cap: Optional[int], default: int) -> int:
    return default if cap is None else cap


def enumerate_fragments(x: LatVec, cap: Optional[int] = None) -> Iterator[Fragment]:
    """All 2^|supp x| fragments; mask order is a binary counter over the atom order."""
    cap = _resolve_cap(cap, config.FRAGMENT_CAP)
    positions = x.support()
    if len(positions) > cap:
        raise CapExceededError("fragments", len(positions), cap, "raise --cap-fragments")
    for counter in range(1 << len(positions)):
        yield Fragment(x, spread(counter, positions))


def fragment_masks(x: LatVec, cap: Optional[int] = None) -> list[int]:
    cap = _resolve_cap(cap, config.FRAGMENT_CAP)
    positions = x.support()
    if len(positions) > cap:
        raise CapExceededError("fragments", len(positions), cap, "raise --cap-fragments")
    return [spread(counter, positions) for counter in range(1 << len(positions))]


# --- Partitions ---


@dataclass(frozen=True)
class Partition:
    base: LatVec
    blocks: tuple[int, ...]

    def __post_init__(self) -> None:
        blocks = tuple(sorted((int(b) for b in self.blocks), key=lowest_bit))
        seen = 0
        for b in blocks:
            if b == 0:
                raise ContractError("partition blocks must be nonempty")
            if b & seen:
                raise ContractError("partition blocks must be pairwise disjoint")
            seen |= b
        if seen != self.base.support_mask:
            raise ContractError("partition blocks must cover exactly the support of the base")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def coarsest(cls, x: LatVec) -> Partition:
        return cls(x, (x.support_mask,) if x.support_mask else ())

    @classmethod
    def finest(cls, x: LatVec) -> Partition:
        return cls(x, tuple(1 << i for i in x.support()))

    @classmethod
    def from_lists(cls, x: LatVec, blocks: Sequence[Sequence[int]]) -> Partition:
        return cls(x, tuple(mask_of(block) for block in blocks))

    def fragments(self) -> tuple[Fragment, ...]:
        return tuple(Fragment(self.base, b) for b in self.blocks)

    def values(self) -> list[LatVec]:
        return [self.base.restrict(b) for b in self.blocks]

    def as_lists(self) -> list[list[int]]:
        return [list(bits_of(b)) for b in self.blocks]

    def __len__(self) -> int:
        return len(self.blocks)


def _growth_strings(k: int, max_blocks: Optional[int]) -> Iterator[tuple[int, ...]]:
    """Restricted growth strings of length k; all-zero (coarsest) first, 0..k-1 last."""
    if k == 0:
        yield ()
        return
    if max_blocks is not None and max_blocks < 1:
        return
    labels = [0] * k

    def extend(i: int, used: int) -> Iterator[tuple[int, ...]]:
        if i == k:
            yield tuple(labels)
            return
        limit = used + 1 if max_blocks is None else min(used + 1, max_blocks)
        for label in range(limit):
            labels[i] = label
            yield from extend(i + 1, max(used, label + 1))

    yield from extend(1, 1)


def partition_blocks(
    x: LatVec, max_blocks: Optional[int] = None, cap: Optional[int] = None
) -> Iterator[tuple[int, ...]]:
    """Set partitions of supp(x) as tuples of block masks, in enumeration order."""
    cap = _resolve_cap(cap, config.PARTITION_CAP)
    positions = x.support()
    if len(positions) > cap:
        raise CapExceededError("partitions", len(positions), cap, "raise --cap-partitions")
    for labels in _growth_strings(len(positions), max_blocks):
        blocks = [0] * (max(labels) + 1 if labels else 0)
        for pos, label in zip(positions, labels):
            blocks[label] |= 1 << pos
        yield tuple(blocks)


def enumerate_partitions(
    x: LatVec, max_blocks: Optional[int] = None, cap: Optional[int] = None
) -> Iterator[Partition]:
    for blocks in partition_blocks(x, max_blocks, cap):
        yield Partition(x, blocks)


def _same_base(p1: Partition, p2: Partition) -> None:
    if p1.base != p2.base:
        raise StructuralError("partitions are over different base vectors")


def partition_refines(coarse: Partition, fine: Partition) -> bool:
    """True iff every block of `fine` sits inside a block of `coarse`."""
    _same_base(coarse, fine)
    return all(any(b & ~c == 0 for c in coarse.blocks) for b in fine.blocks)


def common_refinement(p1: Partition, p2: Partition) -> Partition:
    _same_base(p1, p2)
    return Partition(p1.base, tuple(a & b for a in p1.blocks for b in p2.blocks if a & b))


# --- Band projections and the map 𝟙_f ---


def band_projection(e: LatVec, x: LatVec) -> LatVec:
    """P_e x: x restricted to supp(e)."""
    e._check(x)
    if not e.is_positive():
        raise ContractError("band projection needs e >= 0")
    return x.restrict(e.support_mask)


def band_projection_literal(e: LatVec, x: LatVec) -> LatVec:
    """P_e x as sup_n (x+ ∧ ne) - sup_n (x- ∧ ne), iterated until both sups stabilize."""
    e._check(x)
    if not e.is_positive():
        raise ContractError("band projection needs e >= 0")
    xp, xm = pos_part(x), neg_part(x)
    up, down = x.space.zero(), x.space.zero()
    n = 1
    while True:
        ne = e.scale(n)
        next_up = join(up, meet(xp, ne))
        next_down = join(down, meet(xm, ne))
        if next_up == up and next_down == down and n > 1:
            return up - down
        up, down = next_up, next_down
        n += 1


def one_f(f: LatVec, y: LatVec) -> LatVec:
    """𝟙_f(y) = f - P_{(f-y)+} f: the fragment of f where y_a >= f_a."""
    f._check(y)
    if not f.is_positive() or not y.is_positive():
        raise ContractError("one_f is defined on positive vectors only")
    return f - band_projection(pos_part(f - y), f)


# --- Refinement chains ---


@dataclass(frozen=True)
class RefinementChain:
    spaces: tuple[MeasureSpace, ...]

    def __post_init__(self) -> None:
        spaces = tuple(self.spaces)
        if not spaces:
            raise StructuralError("a refinement chain needs at least one level")
        object.__setattr__(self, "spaces", spaces)
        for n in range(1, len(spaces)):
            parent, child = spaces[n - 1], spaces[n]
            if child.parents is None:
                raise StructuralError(f"level {n} has no parent links")
            mass = [ZERO] * parent.size
            for c, p in enumerate(child.parents):
                if not 0 <= p < parent.size:
                    raise StructuralError(f"level {n} atom {c} names missing parent {p}")
                mass[p] += child.weights[c]
            for p, (got, want) in enumerate(zip(mass, parent.weights)):
                if got != want:
                    raise StructuralError(
                        f"level {n}: children of atom {p} weigh {got}, parent weighs {want}"
                    )

    @classmethod
    def from_splits(
        cls, base_weights: Sequence, splits: Sequence[Sequence[Sequence]]
    ) -> RefinementChain:
        """splits[n][p] lists the child weights of atom p of level n."""
        base = MeasureSpace(fractions_of(base_weights), atoms=tuple(f"0:{i}" for i in range(len(base_weights))))
        spaces = [base]
        for level, per_parent in enumerate(splits, start=1):
            prev = spaces[-1]
            if len(per_parent) != prev.size:
                raise StructuralError(
                    f"level {level} splits {len(per_parent)} atoms, previous level has {prev.size}"
                )
            weights, parents = [], []
            for p, children in enumerate(per_parent):
                if not children:
                    raise StructuralError(f"level {level}: atom {p} has no children")
                for w in children:
                    weights.append(to_fraction(w))
                    parents.append(p)
            atoms = tuple(f"{level}:{i}" for i in range(len(weights)))
            spaces.append(MeasureSpace(tuple(weights), atoms=atoms, parents=tuple(parents)))
        return cls(tuple(spaces))

    @classmethod
    def dyadic(cls, base_weights: Sequence, levels: int) -> RefinementChain:
        """Each atom split into two halves, `levels` times."""
        splits = []
        sizes = [to_fraction(w) for w in base_weights]
        for _ in range(levels):
            splits.append([[w / 2, w / 2] for w in sizes])
            sizes = [w / 2 for w in sizes for _ in range(2)]
        return cls.from_splits(base_weights, splits)

    @property
    def depth(self) -> int:
        return len(self.spaces) - 1

    @property
    def finest(self) -> MeasureSpace:
        return self.spaces[-1]

    def level_of(self, space: MeasureSpace) -> int:
        for n, s in enumerate(self.spaces):
            if s is space:
                return n
        for n, s in enumerate(self.spaces):
            if s == space:
                return n
        raise ContractError("vector does not live on any level of the chain")

    def ancestors(self, level: int, target: int) -> tuple[int, ...]:
        """For each atom of `target`, its ancestor atom at `level` (level <= target)."""
        if not 0 <= level <= target <= self.depth:
            raise ContractError(f"levels {level}..{target} out of range 0..{self.depth}")
        mapping = tuple(range(self.spaces[target].size))
        for n in range(target, level, -1):
            parents = self.spaces[n].parents
            mapping = tuple(parents[a] for a in mapping)
        return mapping


def embed(x: LatVec, chain: RefinementChain) -> LatVec:
    """Move x from its level n to level n+1: each child takes its parent's coefficient."""
    n = chain.level_of(x.space)
    if n >= chain.depth:
        raise ContractError(f"level out of range: level {n} is the finest level of the chain")
    child = chain.spaces[n + 1]
    return LatVec(child, tuple(x.coeffs[p] for p in child.parents))


def embed_to(x: LatVec, chain: RefinementChain, level: int) -> LatVec:
    n = chain.level_of(x.space)
    if level < n or level > chain.depth:
        raise ContractError(f"level out of range: cannot embed level {n} into level {level}")
    mapping = chain.ancestors(n, level)
    return LatVec(chain.spaces[level], tuple(x.coeffs[a] for a in mapping))
