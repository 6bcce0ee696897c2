from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from conftest import matrix_and_vector, space_and_vectors, uryson_matrices, vectors
from boolean_ext import BoolMap, powerset
from errors import CapExceededError, ContractError, StructuralError
from lattice import LatVec, MeasureSpace, Partition, RefinementChain, neg_part, pos_part
from narrowness import (
    balanced_tree,
    combine_signed,
    domination_diagnostic,
    dp_minorant_from_homomorphism,
    dp_witness_extract,
    finest_shortcut,
    l1_identity_check,
    lambda_ES,
    lambda_join_law,
    lambda_to_narrow_pipeline,
    local_narrowness_report,
    min_discrepancy,
    refinement_diagnostics,
    rounding_decomposition,
    strict_narrow_check,
    verify_l1_partition_bound,
)
from operators import (
    AbsPower,
    KernelFamily,
    LiftedLinear,
    NegPartOperator,
    NormPower,
    Polynomial,
    Threshold,
    UrysonMatrix,
    ZERO_FUNC,
    identity_family,
    norm_power_family,
)

R = Polynomial((0, 1))
MINUS_R = Polynomial((0, -1))
SQUARE = Polynomial((0, 0, 1))
DIAGONAL_SQUARE = UrysonMatrix.from_rows([[SQUARE, ZERO_FUNC], [ZERO_FUNC, SQUARE]])


def vec(*coeffs, space=None):
    return LatVec(space or MeasureSpace.counting(len(coeffs)), tuple(Fraction(c) for c in coeffs))


def ones(*weights):
    return MeasureSpace(tuple(Fraction(w) for w in weights)).constant(1)


def test_min_discrepancy_balanced_weights():
    e = ones("1/2", "1/3", "1/6")
    witness = min_discrepancy(NormPower(e.space, 1), e)
    assert witness.discrepancy == 0
    assert (witness.first, witness.second) == (0b001, 0b110)


def test_min_discrepancy_unbalanced_weights():
    e = ones("3/7", "2/7", "2/7")
    for strategy in ("scan", "frontier"):
        assert min_discrepancy(NormPower(e.space, 1), e, strategy).discrepancy == Fraction(1, 7)


def test_identity_never_cancels():
    e = MeasureSpace.uniform(2).constant(1)
    assert min_discrepancy(LiftedLinear.identity(e.space), e).discrepancy == 1
    assert strict_narrow_check(LiftedLinear.identity(e.space), e) is None


def test_min_discrepancy_contracts():
    e = ones(1, 1)
    with pytest.raises(ContractError):
        min_discrepancy(NormPower(e.space, 1), e, "greedy")
    with pytest.raises(CapExceededError):
        min_discrepancy(NormPower(e.space, 1), e, "scan", cap=1)


@given(matrix_and_vector())
@settings(max_examples=50, deadline=None)
def test_scan_and_frontier_agree(opx):
    op, e = opx
    scan = min_discrepancy(op, e, "scan")
    frontier = min_discrepancy(op, e, "frontier")
    assert scan == frontier
    assert scan.recheck(op)


def test_combine_signed_witnesses():
    op = NormPower(MeasureSpace.counting(4), 1)
    x = vec(1, -1, 1, -1)
    w_plus = min_discrepancy(op, pos_part(x))
    w_minus = min_discrepancy(op, -neg_part(x))
    combined = combine_signed(op, x, w_plus, w_minus)
    assert combined.base == x
    assert (combined.first, combined.second) == (0b0011, 0b1100)
    assert combined.discrepancy == 0
    with pytest.raises(ContractError):
        combine_signed(op, x, w_minus, w_plus)


def test_strict_narrow_check():
    e = ones(1, 1)
    witness = strict_narrow_check(NormPower(e.space, 1), e)
    assert witness is not None and witness.discrepancy == 0


def test_negative_part_operator_is_one_sided():
    space = MeasureSpace.counting(3)
    report = local_narrowness_report(NegPartOperator(space), space.constant(1), seed=0)
    assert report.values["at_e0"] == 0
    assert report.values["positive_zero"]
    assert not report.values["negative_zero"]
    assert report.values["one_sided"]


def test_lambda_of_difference_is_zero():
    op = UrysonMatrix.from_rows([[R, MINUS_R]])
    result = lambda_ES(op, vec(1, 1))
    assert result.value.coeffs == (0,)
    assert result.argmin.as_lists() == [[0, 1]]
    assert result.shortcut is None


def test_lambda_of_positive_operator_uses_finest_partition():
    op = UrysonMatrix.from_rows([[SQUARE, SQUARE]])
    x = vec(1, 1)
    for strategy in ("brute", "bb", "finest"):
        result = lambda_ES(op, x, strategy)
        assert result.value.coeffs == (1,)
        assert result.shortcut == result.value
    assert lambda_ES(op, x, "finest").argmin == Partition.finest(x)


def test_lambda_contracts():
    op = UrysonMatrix.from_rows([[R, MINUS_R]])
    with pytest.raises(ContractError):
        lambda_ES(op, vec(1, 1), "finest")
    with pytest.raises(ContractError):
        lambda_ES(op, vec(1, 1), "greedy")
    with pytest.raises(CapExceededError):
        lambda_ES(op, vec(1, 1), "brute", cap=1)


@given(matrix_and_vector(max_in=5))
@settings(max_examples=40, deadline=None)
def test_branch_and_bound_equals_brute(opx):
    op, x = opx
    brute = lambda_ES(op, x, "brute")
    bb = lambda_ES(op, x, "branch_and_bound")
    assert bb.value == brute.value
    for i, partition in enumerate(bb.per_coordinate):
        worst = max((abs(op.apply(y).coeffs[i]) for y in partition.values()), default=0)
        assert worst == bb.value.coeffs[i]


@given(matrix_and_vector(positive=True), st.integers(0, 15))
@settings(max_examples=40, deadline=None)
def test_join_law_for_positive_operators(opx, mask):
    op, base = opx
    x, y = base.restrict(mask), base.restrict(~mask & base.space.full_mask)
    assert lambda_join_law(op, x, y).ok
    assert lambda_ES(op, base).value == finest_shortcut(op, base)


def test_join_law_fails_for_cancelling_operator():
    op = UrysonMatrix.from_rows([[R, MINUS_R]])
    report = lambda_join_law(op, vec(1, 0), vec(0, 1))
    assert not report.ok
    assert report.values["lhs"].coeffs == (0,)
    assert report.values["rhs"].coeffs == (1,)
    with pytest.raises(ContractError):
        lambda_join_law(op, vec(1, 0), vec(1, 1))


def test_balanced_tree_halves_the_mass():
    space = MeasureSpace.uniform(8)
    tree = balanced_tree(NormPower(space, 1), space.constant(1), 3)
    assert tree.depth == 3
    assert tree.gammas == (1, Fraction(1, 2), Fraction(1, 4), Fraction(1, 8))
    assert tree.epsilon_one == 0
    assert tree.halving_ok
    assert all(g == 0 for g in tree.gaps)
    for m in range(4):
        level = tree.level(m)
        assert len(level) == 1 << m
        combined = 0
        for node in level:
            assert node & combined == 0
            combined |= node
        assert combined == space.full_mask


def test_balanced_tree_truncates_when_atoms_run_out():
    space = MeasureSpace.uniform(4)
    tree = balanced_tree(NormPower(space, 1), space.constant(1), 4)
    assert (tree.depth, tree.requested_depth) == (2, 4)
    assert "truncated" in tree.notices[0]


def test_rounding_decomposition_bound():
    space = MeasureSpace.uniform(4)
    witness = rounding_decomposition(NormPower(space, 1), space.constant(1), 2)
    assert witness.bound == Fraction(1, 4)
    assert witness.discrepancy <= witness.bound
    assert witness.stats["level"] == 2
    with pytest.raises(ContractError):
        rounding_decomposition(NormPower(space, 1), space.constant(1), 3)


def test_pipeline_on_four_atoms():
    space = MeasureSpace.uniform(4)
    witness = lambda_to_narrow_pipeline(NormPower(space, 1), space.constant(1))
    assert witness.stats["alpha"] == Fraction(1, 4)
    assert witness.stats["k"] == 1
    assert witness.stats["bound_squared"] == Fraction(1, 2)
    assert witness.discrepancy == 0


def test_pipeline_edge_cases():
    op = UrysonMatrix.from_rows([[Threshold(1), Threshold(1)]])
    trivial = lambda_to_narrow_pipeline(op, vec("1/2", "1/2"))
    assert trivial.discrepancy == 0 and trivial.stats["trivial"]
    with pytest.raises(ContractError):
        lambda_to_narrow_pipeline(UrysonMatrix.from_rows([[R, MINUS_R]]), vec(1, 1))


@given(matrix_and_vector(positive=True, max_in=5))
@settings(max_examples=30, deadline=None)
def test_pipeline_is_certified(opx):
    op, x = opx
    witness = lambda_to_narrow_pipeline(op, x)
    assert witness.discrepancy ** 2 <= witness.stats.get("bound_squared", 0)
    assert witness.discrepancy >= min_discrepancy(op, x).discrepancy


def test_contrast_curves():
    chain = RefinementChain.dyadic([1], 3)
    e = chain.spaces[0].constant(1)
    narrow = refinement_diagnostics(norm_power_family(chain, 1), e)
    assert narrow.levels == (0, 1, 2, 3)
    assert narrow.deltas == (1, 0, 0, 0)
    assert narrow.trend == "decaying"
    stalled = refinement_diagnostics(identity_family(chain), e, [1, 2, 3], strategy="scan")
    assert stalled.deltas == (1, 1, 1)
    assert stalled.trend == "stalled"


def test_curve_contracts():
    chain = RefinementChain.dyadic([1], 2)
    family = norm_power_family(chain, 1)
    with pytest.raises(ContractError, match="level 0"):
        refinement_diagnostics(family, chain.spaces[1].constant(1))
    with pytest.raises(ContractError, match="level out of range"):
        refinement_diagnostics(family, chain.spaces[0].constant(1), [3])


def test_domination_of_a_constant_kernel():
    chain = RefinementChain.dyadic([1], 2)
    family = KernelFamily(chain, [[R] * 4 for _ in range(4)])
    report = domination_diagnostic(family, chain.spaces[0].constant(1))
    assert report.operator_curve.deltas == (1, 0, 0)
    assert report.modulus_curve.deltas == (1, 0, 0)
    assert report.zero_flags == ((0, False, False), (1, True, True), (2, True, True))
    assert report.closed_form.ok
    with pytest.raises(ContractError):
        domination_diagnostic(norm_power_family(chain, 1), chain.spaces[0].constant(1))


def test_l1_identity_example():
    report = l1_identity_check(vec(1, 0), vec(0, 1))
    assert report.ok
    assert report.values == {"lhs": 2, "rhs": 2}


@given(space_and_vectors(count=2))
def test_l1_identity_holds(sv):
    _, f, g = sv
    assert l1_identity_check(f, g).ok


@given(uryson_matrices(max_in=4), st.data())
@settings(max_examples=40, deadline=None)
def test_l1_partition_bound(op, data):
    x = data.draw(vectors(op.input_space))
    partition = Partition.finest(x) if data.draw(st.booleans()) else Partition.coarsest(x)
    splits = [block & data.draw(st.integers(0, 15)) for block in partition.blocks]
    report = verify_l1_partition_bound(op, x, partition, splits, Fraction(1))
    assert report.ok
    assert report.values["strong_form"]


def test_l1_partition_bound_contracts():
    op = UrysonMatrix.from_rows([[R, R]])
    x = vec(1, 1)
    with pytest.raises(ContractError):
        verify_l1_partition_bound(op, x, Partition.coarsest(x), [0, 0], Fraction(1))
    with pytest.raises(ContractError):
        verify_l1_partition_bound(op, x, Partition.finest(x), [0b10, 0], Fraction(1))


def test_dp_extraction_on_diagonal_square():
    op = UrysonMatrix.from_rows([[SQUARE, ZERO_FUNC], [ZERO_FUNC, SQUARE]])
    e = vec(1, 1)
    witness = dp_witness_extract(op, e, seed=3)
    assert witness is not None
    assert witness.f == vec(1, 1)
    assert witness.s_of_e == lambda_ES(op, e, "finest").value
    assert witness.psi.atom_images() == {0b01: 0b01, 0b10: 0b10}
    assert witness.report.ok
    assert witness.report.values["dp_mode"] == "exact_matrix"


def test_dp_extraction_without_lambda_mass():
    op = UrysonMatrix.from_rows([[Threshold(1)]])
    assert dp_witness_extract(op, vec("1/2")) is None


def test_dp_extraction_contracts():
    with pytest.raises(ContractError):
        dp_witness_extract(UrysonMatrix.from_rows([[R, MINUS_R]]), vec(1, 1))
    with pytest.raises(ContractError):
        dp_witness_extract(UrysonMatrix.from_rows([[AbsPower(1, 1)]]), vec(-1))


def test_dp_minorant_from_identity_homomorphism():
    two = powerset(2)
    psi = BoolMap.from_atom_images(two, two, {0b01: 0b01, 0b10: 0b10})
    witness = dp_minorant_from_homomorphism(DIAGONAL_SQUARE, vec(1, 1), vec(1, 1), psi, seed=1)
    assert witness.s_of_e == vec(1, 1)
    assert witness.report.ok


def test_dp_minorant_contracts():
    two = powerset(2)
    identity = BoolMap.from_atom_images(two, two, {0b01: 0b01, 0b10: 0b10})
    e = vec(1, 1)
    with pytest.raises(ContractError, match=">= 0"):
        dp_minorant_from_homomorphism(DIAGONAL_SQUARE, vec(1, -1), e, identity)
    with pytest.raises(StructuralError):
        dp_minorant_from_homomorphism(DIAGONAL_SQUARE, e, vec(1, 1, 1), identity)
    collapse = BoolMap.from_atom_images(two, powerset(1), {0b01: 1, 0b10: 0})
    with pytest.raises(ContractError, match="fragment algebra"):
        dp_minorant_from_homomorphism(DIAGONAL_SQUARE, e, e, collapse)
    constant_top = BoolMap(two, two, {x: 0b11 for x in two.elements()}, boolean=False)
    with pytest.raises(ContractError, match="not a Boolean homomorphism"):
        dp_minorant_from_homomorphism(DIAGONAL_SQUARE, e, e, constant_top)
    signed = UrysonMatrix.from_rows([[Polynomial((0, 0, -1)), ZERO_FUNC], [ZERO_FUNC, SQUARE]])
    with pytest.raises(ContractError, match="T >= 0"):
        dp_minorant_from_homomorphism(signed, e, e, identity)
    with pytest.raises(ContractError, match="psi exceeds T"):
        dp_minorant_from_homomorphism(DIAGONAL_SQUARE, e, vec(2, 2), identity)


@given(matrix_and_vector(positive=True, max_in=3, max_out=2))
@settings(max_examples=15, deadline=None)
def test_dp_extraction_recovers_lambda(opx):
    op, e = opx
    witness = dp_witness_extract(op, e, seed=0)
    f = lambda_ES(op, e, "finest").value
    if f.is_zero():
        assert witness is None
    else:
        assert witness.report.ok
        assert witness.s_of_e == f
