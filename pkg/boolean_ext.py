"""Finite Boolean algebras, maps between them, and constructive Monteiro extension.

An algebra is described by its atoms, given as disjoint masks over `size` ground bits; every
element is a union of atoms. Powerset algebras have singleton atoms. Subalgebras share the
ground bits and have coarser atoms.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional

import config
from errors import CapExceededError, ContractError, InfeasibleError, InvariantError
from lattice import LatVec, fragment_join, fragment_masks, fragment_meet, is_fragment
from reports import CheckReport
from utils import bits_of, lowest_bit, submasks_descending

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FiniteBoolAlg:
    size: int
    blocks: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.size < 0:
            raise ContractError(f"algebra size must be >= 0, got {self.size}")
        blocks = tuple(self.blocks) or tuple(1 << i for i in range(self.size))
        blocks = tuple(sorted(blocks, key=lowest_bit))
        seen = 0
        for b in blocks:
            if b == 0 or b & seen:
                raise ContractError("algebra atoms must be nonempty and pairwise disjoint")
            seen |= b
        if seen != self.top:
            raise ContractError("algebra atoms must cover every ground bit")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def generated_by(cls, size: int, generators: Iterable[int]) -> FiniteBoolAlg:
        """The subalgebra of powerset(size) generated by `generators`."""
        top = (1 << size) - 1
        blocks = [top] if size else []
        for g in generators:
            if g & ~top:
                raise ContractError(f"generator {g:#b} has bits outside the {size} ground bits")
            split = []
            for b in blocks:
                split.extend(part for part in (b & g, b & ~g) if part)
            blocks = split
        return cls(size, tuple(blocks))

    @property
    def top(self) -> int:
        return (1 << self.size) - 1

    @property
    def atom_count(self) -> int:
        return len(self.blocks)

    @property
    def order(self) -> int:
        return 1 << len(self.blocks)

    def ensure_checkable(self) -> None:
        if self.order > config.BOOLEAN_CAP:
            raise CapExceededError("boolean algebra elements", self.order, config.BOOLEAN_CAP)

    def element(self, counter: int) -> int:
        """Union of the atoms selected by the bits of `counter`."""
        mask = 0
        for j in bits_of(counter):
            mask |= self.blocks[j]
        return mask

    def elements(self) -> list[int]:
        return [self.element(c) for c in range(self.order)]

    def contains(self, mask: int) -> bool:
        return all(mask & b in (0, b) for b in self.blocks) and not mask & ~self.top

    def complement(self, mask: int) -> int:
        return self.top & ~mask

    def atoms_below(self, mask: int) -> list[int]:
        return [b for b in self.blocks if b & mask]

    def is_subalgebra_of(self, other: FiniteBoolAlg) -> bool:
        return self.size == other.size and all(other.contains(b) for b in self.blocks)


@dataclass(frozen=True, eq=False)
class BoolMap:
    domain: FiniteBoolAlg
    codomain: FiniteBoolAlg
    table: Mapping[int, int]
    boolean: bool = True

    def __post_init__(self) -> None:
        self.domain.ensure_checkable()
        table = {int(k): int(v) for k, v in self.table.items()}
        expected = set(self.domain.elements())
        if set(table) != expected:
            missing = sorted(expected - set(table))[:3]
            extra = sorted(set(table) - expected)[:3]
            raise ContractError(f"map table must list every domain element (missing {missing}, extra {extra})")
        for x, y in table.items():
            if not self.codomain.contains(y):
                raise ContractError(f"image of {x} is not an element of the codomain: {y}")
        if self.boolean and (table[0] != 0 or table[self.domain.top] != self.codomain.top):
            raise ContractError("a Boolean map must send 0 to 0 and 1 to 1")
        object.__setattr__(self, "table", table)

    @classmethod
    def from_atom_images(
        cls, domain: FiniteBoolAlg, codomain: FiniteBoolAlg, images: Mapping[int, int], boolean: bool = True
    ) -> BoolMap:
        """Extend atom images by joins."""
        for b in domain.blocks:
            if b not in images:
                raise ContractError(f"no image given for atom {b:#b}")
        table = {}
        for c in range(domain.order):
            value = 0
            for j in bits_of(c):
                value |= images[domain.blocks[j]]
            table[domain.element(c)] = value
        return cls(domain, codomain, table, boolean)

    def __call__(self, mask: int) -> int:
        try:
            return self.table[mask]
        except KeyError:
            raise ContractError(f"{mask:#b} is not an element of the map's domain")

    def atom_images(self) -> dict[int, int]:
        return {b: self.table[b] for b in self.domain.blocks}

    def dominated_by(self, other: BoolMap) -> Optional[int]:
        """First element x (ascending) with self(x) not below other(x), or None."""
        for x in sorted(self.table):
            if self.table[x] & ~other(x):
                return x
        return None


@dataclass(frozen=True)
class MapClassification:
    kind: str
    join_preserving: bool
    meet_preserving: bool
    complement_compatible: bool
    pairs_checked: int
    violation: Optional[dict[str, Any]] = field(default=None)


def classify_map(m: BoolMap) -> MapClassification:
    """Exhaustive pair check; kind is homomorphism, join_preserving, meet_preserving or none."""
    elements = m.domain.elements()
    joins_ok = meets_ok = True
    violation = None
    checked = 0
    for i, x in enumerate(elements):
        for y in elements[i:]:
            checked += 1
            if joins_ok and m(x | y) != m(x) | m(y):
                joins_ok = False
                violation = violation or {"law": "join", "x": x, "y": y}
            if meets_ok and m(x & y) != m(x) & m(y):
                meets_ok = False
                violation = violation or {"law": "meet", "x": x, "y": y}
        if not joins_ok and not meets_ok:
            break
    one = m(m.domain.top)
    complements_ok = m(0) == 0
    if complements_ok:
        for x in elements:
            if m(m.domain.complement(x)) != one & ~m(x):
                complements_ok = False
                violation = violation or {"law": "complement", "x": x}
                break
    else:
        violation = violation or {"law": "complement", "x": 0}
    if joins_ok and meets_ok and complements_ok:
        kind = "homomorphism"
    elif joins_ok:
        kind = "join_preserving"
    elif meets_ok:
        kind = "meet_preserving"
    else:
        kind = "none"
    logger.debug("classified map on %d elements as %s", len(elements), kind)
    return MapClassification(kind, joins_ok, meets_ok, complements_ok, checked, violation)


def _verify_extension_inputs(phi: BoolMap, sub: FiniteBoolAlg, psi0: BoolMap) -> None:
    if not sub.is_subalgebra_of(phi.domain):
        raise ContractError("A0 is not a subalgebra of the domain of phi")
    if psi0.domain != sub:
        raise ContractError("psi0 must be defined on A0")
    if psi0.codomain != phi.codomain:
        raise ContractError("psi0 and phi must share a codomain")
    if not psi0.boolean or psi0(sub.top) != psi0.codomain.top:
        raise ContractError("psi0 must send 1 to 1")
    phi_kind = classify_map(phi)
    if not phi_kind.join_preserving:
        raise ContractError(f"phi is not join-preserving: {phi_kind.violation}")
    psi0_kind = classify_map(psi0)
    if psi0_kind.kind != "homomorphism":
        raise ContractError(f"psi0 is not a homomorphism on A0: {psi0_kind.violation}")
    for x in sub.elements():
        if psi0(x) & ~phi(x):
            raise ContractError(f"psi0 exceeds phi at {x:#b}: {psi0(x):#b} vs {phi(x):#b}")


def monteiro_extend(phi: BoolMap, sub: FiniteBoolAlg, psi0: BoolMap) -> BoolMap:
    """Extend psi0: A0 -> B to a homomorphism psi: A -> B with psi <= phi.

    Atoms of A are assigned in ascending order; each takes a part of phi(a) inside the
    psi0-image of its A0 block, tried from the largest part downward. An A0 block is closed when
    its atoms' images join to psi0(block).
    """
    _verify_extension_inputs(phi, sub, psi0)
    domain = phi.domain
    if sub.blocks == domain.blocks:
        return BoolMap(domain, phi.codomain, dict(psi0.table))

    atoms = domain.blocks
    owners = [next(k for k, blk in enumerate(sub.blocks) if blk & a) for a in atoms]
    targets = [psi0(blk) for blk in sub.blocks]
    reach = [0] * len(atoms)
    for k in range(len(atoms) - 1, -1, -1):
        later = next((j for j in range(k + 1, len(atoms)) if owners[j] == owners[k]), None)
        reach[k] = phi(atoms[k]) | (reach[later] if later is not None else 0)
    last_of_block = {owners[k]: k for k in range(len(atoms))}

    covered = [0] * len(sub.blocks)
    images: dict[int, int] = {}
    conflict: dict[str, Any] = {}
    nodes = 0

    def assign(k: int) -> bool:
        nonlocal nodes
        nodes += 1
        if k == len(atoms):
            return True
        owner = owners[k]
        need = targets[owner] & ~covered[owner]
        if need & ~reach[k]:
            if not conflict:
                conflict.update(
                    block=sub.blocks[owner],
                    target=targets[owner],
                    uncovered=need & ~reach[k],
                    atoms=[atoms[j] for j in range(k, len(atoms)) if owners[j] == owner],
                )
            return False
        if last_of_block[owner] == k:
            candidates: Iterable[int] = (need,)
        else:
            candidates = submasks_descending(phi(atoms[k]) & need)
        for cand in candidates:
            images[atoms[k]] = cand
            covered[owner] |= cand
            if assign(k + 1):
                return True
            covered[owner] &= ~cand
        del images[atoms[k]]
        return False

    if not assign(0):
        raise InfeasibleError("no homomorphism below phi extends psi0", conflict)
    logger.debug("monteiro extension found after %d nodes", nodes)
    psi = BoolMap.from_atom_images(domain, phi.codomain, images)
    if classify_map(psi).kind != "homomorphism":
        raise InvariantError("extension is not a homomorphism")
    bad = psi.dominated_by(phi)
    if bad is not None:
        raise InvariantError(f"extension exceeds phi at {bad:#b}")
    for x in sub.elements():
        if psi(x) != psi0(x):
            raise InvariantError(f"extension disagrees with psi0 at {x:#b}")
    return psi


def fragment_algebra_check(e: LatVec) -> CheckReport:
    """Fragments of e under fragment join, fragment meet and e - y form powerset(supp e)."""
    report = CheckReport("fragment_algebra")
    support = e.support_mask
    k = bin(support).count("1")
    if 1 << k > config.BOOLEAN_CAP:
        raise CapExceededError("fragment algebra elements", 1 << k, config.BOOLEAN_CAP)
    masks = fragment_masks(e)
    values = {m: e.restrict(m) for m in masks}
    if len(set(values.values())) != len(masks):
        report.fail(reason="distinct masks give equal fragments")
    for i, a in enumerate(masks):
        y = values[a]
        comp = e - y
        if not is_fragment(y, e) or comp != values[support & ~a]:
            report.fail(reason="complement is not the complementary fragment", mask=a)
        for b in masks[i:]:
            report.checked += 1
            z = values[b]
            if fragment_join(y, z) != values[a | b]:
                report.fail(law="join", x=a, y=b)
            if fragment_meet(y, z) != values[a & b]:
                report.fail(law="meet", x=a, y=b)
    report.values.update(atoms=k, elements=len(masks))
    return report


def powerset(size: int) -> FiniteBoolAlg:
    return FiniteBoolAlg(size)


def trivial_subalgebra(size: int) -> FiniteBoolAlg:
    """{0, 1} inside powerset(size)."""
    return FiniteBoolAlg(size, ((1 << size) - 1,) if size else ())


def compress(mask: int, positions: list[int]) -> int:
    """Inverse of `spread`: bit j of the result is bit positions[j] of `mask`."""
    out = 0
    for j, p in enumerate(positions):
        if mask >> p & 1:
            out |= 1 << j
    return out
