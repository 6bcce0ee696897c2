import pytest
from hypothesis import given, settings, strategies as st

from errors import ContractError
from lattice import LatVec, MeasureSpace
from boolean_ext import (
    BoolMap,
    FiniteBoolAlg,
    classify_map,
    fragment_algebra_check,
    monteiro_extend,
    powerset,
    trivial_subalgebra,
)


def test_generated_subalgebras():
    assert FiniteBoolAlg.generated_by(3, [0b011]).blocks == (0b011, 0b100)
    assert FiniteBoolAlg.generated_by(3, [0b011, 0b110]).blocks == (0b001, 0b010, 0b100)
    assert FiniteBoolAlg.generated_by(3, []).blocks == (0b111,)
    with pytest.raises(ContractError):
        FiniteBoolAlg.generated_by(2, [0b100])


def test_algebra_contracts():
    with pytest.raises(ContractError):
        FiniteBoolAlg(2, (0b01,))
    with pytest.raises(ContractError):
        FiniteBoolAlg(2, (0b01, 0b11))
    assert trivial_subalgebra(3).is_subalgebra_of(powerset(3))
    assert powerset(3).order == 8


def test_map_contracts():
    two = powerset(2)
    with pytest.raises(ContractError, match="every domain element"):
        BoolMap(two, two, {0: 0, 3: 3})
    with pytest.raises(ContractError, match="send 0 to 0 and 1 to 1"):
        BoolMap.from_atom_images(two, two, {1: 1, 2: 0})
    with pytest.raises(ContractError, match="no image"):
        BoolMap.from_atom_images(two, two, {1: 1})


def test_identity_is_a_homomorphism():
    two = powerset(2)
    kind = classify_map(BoolMap.from_atom_images(two, two, {1: 1, 2: 2}))
    assert kind.kind == "homomorphism"
    assert kind.violation is None


def test_constant_top_preserves_lattice_operations_but_not_complements():
    two = powerset(2)
    constant = BoolMap(two, two, {x: 0b11 for x in two.elements()}, boolean=False)
    kind = classify_map(constant)
    assert kind.kind == "join_preserving"
    assert kind.join_preserving and kind.meet_preserving
    assert not kind.complement_compatible


def test_support_indicator_is_join_but_not_meet_preserving():
    phi = BoolMap.from_atom_images(powerset(2), powerset(1), {1: 1, 2: 1})
    kind = classify_map(phi)
    assert kind.kind == "join_preserving"
    assert not kind.meet_preserving
    assert kind.violation == {"law": "meet", "x": 0b01, "y": 0b10}


def test_monteiro_extension_from_trivial_subalgebra():
    phi = BoolMap.from_atom_images(powerset(2), powerset(1), {1: 1, 2: 1})
    sub = trivial_subalgebra(2)
    psi0 = BoolMap(sub, powerset(1), {0: 0, 0b11: 1})
    psi = monteiro_extend(phi, sub, psi0)
    assert psi.atom_images() == {1: 1, 2: 0}
    assert classify_map(psi).kind == "homomorphism"


def test_monteiro_extension_respects_subalgebra_blocks():
    domain, codomain = powerset(3), powerset(2)
    phi = BoolMap.from_atom_images(domain, codomain, {0b001: 0b01, 0b010: 0b11, 0b100: 0b10})
    sub = FiniteBoolAlg.generated_by(3, [0b011])
    psi0 = BoolMap.from_atom_images(sub, codomain, {0b011: 0b01, 0b100: 0b10})
    psi = monteiro_extend(phi, sub, psi0)
    assert psi.atom_images() == {0b001: 0b01, 0b010: 0, 0b100: 0b10}
    assert psi.dominated_by(phi) is None


def test_monteiro_on_the_whole_algebra_returns_psi0():
    two = powerset(2)
    phi = BoolMap.from_atom_images(two, two, {1: 0b11, 2: 0b11})
    psi0 = BoolMap.from_atom_images(two, two, {1: 2, 2: 1})
    psi = monteiro_extend(phi, FiniteBoolAlg.generated_by(2, [0b01]), psi0)
    assert psi.table == psi0.table


def test_monteiro_rejects_psi0_above_phi():
    two = powerset(2)
    phi = BoolMap.from_atom_images(two, two, {1: 1, 2: 2})
    psi0 = BoolMap.from_atom_images(two, two, {1: 2, 2: 1})
    with pytest.raises(ContractError, match="exceeds phi"):
        monteiro_extend(phi, two, psi0)


def test_monteiro_rejects_non_join_preserving_phi():
    two = powerset(2)
    table = {0: 0, 1: 1, 2: 0, 3: 3}
    phi = BoolMap(two, two, table)
    psi0 = BoolMap(trivial_subalgebra(2), two, {0: 0, 3: 3})
    with pytest.raises(ContractError, match="join-preserving"):
        monteiro_extend(phi, trivial_subalgebra(2), psi0)


@given(st.integers(1, 4), st.integers(1, 3), st.data())
@settings(max_examples=40, deadline=None)
def test_monteiro_extends_every_trivial_instance(n, m, data):
    top = (1 << m) - 1
    images = {1 << i: data.draw(st.integers(0, top)) for i in range(n)}
    images[1 << (n - 1)] |= top
    phi = BoolMap.from_atom_images(powerset(n), powerset(m), images)
    sub = trivial_subalgebra(n)
    psi0 = BoolMap(sub, powerset(m), {0: 0, (1 << n) - 1: top})
    psi = monteiro_extend(phi, sub, psi0)
    assert classify_map(psi).kind == "homomorphism"
    assert psi.dominated_by(phi) is None


def test_fragment_algebra():
    e = LatVec(MeasureSpace.counting(3), (1, 0, 2))
    report = fragment_algebra_check(e)
    assert report.ok
    assert report.values == {"atoms": 2, "elements": 4}
