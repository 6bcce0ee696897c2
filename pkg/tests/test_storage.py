import json
from fractions import Fraction

import pytest

import schemas
import storage
from errors import ContractError, StructuralError
from lattice import LatVec, MeasureSpace, RefinementChain
from narrowness import min_discrepancy, refinement_diagnostics
from operators import NormPower, UrysonMatrix, norm_power_family
from reports import CheckReport

DIFFERENCE = {
    "kind": "uryson_matrix",
    "rows": [[{"fn": "poly", "coeffs": ["0", "1"]}, {"fn": "poly", "coeffs": ["0", "-1"]}]],
}


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ContractError, match="cannot read file"):
        storage.load_json(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(ContractError, match="invalid JSON"):
        storage.load_json(bad)


def test_floats_are_refused_with_field_path(write_json):
    path = write_json("x.json", {"coeffs": ["1", 0.5]})
    with pytest.raises(ContractError) as info:
        storage.load_vector(path)
    assert "coeffs.1" in str(info.value)
    assert "float" in str(info.value)


def test_unknown_fields_are_refused(write_json):
    path = write_json("x.json", {"coeffs": ["1"], "colour": "red"})
    with pytest.raises(ContractError, match="colour"):
        storage.load_vector(path)


def test_vector_defaults_to_counting_measure(write_json):
    x = storage.load_vector(write_json("x.json", {"coeffs": ["1/2", 3]}))
    assert x.space == MeasureSpace.counting(2)
    assert x.coeffs == (Fraction(1, 2), 3)
    with pytest.raises(StructuralError):
        storage.load_vector(write_json("y.json", {"coeffs": ["1"]}), x.space)


def test_build_difference_matrix(write_json):
    spec = storage.load_operator_spec(write_json("op.json", DIFFERENCE))
    op = storage.build_operator(spec, MeasureSpace.counting(2))
    assert isinstance(op, UrysonMatrix)
    assert op.apply(LatVec(op.input_space, (1, 1))).coeffs == (0,)
    assert op.apply(LatVec(op.input_space, (2, 0))).coeffs == (2,)


def test_nested_scalar_functions():
    spec = schemas.validate(
        schemas.ScalarFuncSpec,
        {"fn": "max", "left": {"fn": "abs", "inner": {"fn": "poly", "coeffs": [0, -1]}}, "right": {"fn": "zero"}},
        "inline",
    )
    f = storage.build_scalar_func(spec)
    assert f(Fraction(-3)) == 3


def test_unknown_operator_kind(write_json):
    with pytest.raises(ContractError, match="op.json"):
        storage.load_operator_spec(write_json("op.json", {"kind": "fourier"}))


def test_lifted_linear_needs_one_source(write_json):
    with pytest.raises(ContractError, match="exactly one"):
        storage.load_operator_spec(write_json("op.json", {"kind": "lifted_linear"}))


def test_kernel_family_needs_a_chain():
    spec = schemas.validate(
        schemas.OperatorSpec, {"kind": "kernel_family", "table": [[{"fn": "zero"}]]}, "inline"
    )
    with pytest.raises(ContractError, match="--space"):
        storage.build_operator(spec, MeasureSpace.counting(1))
    chain = storage.build_chain(schemas.SpaceSpec(weights=[Fraction(1)]))
    assert storage.build_operator(spec, chain.spaces[0], chain).level == 0


def test_family_forms():
    chain = storage.build_chain(schemas.SpaceSpec(weights=[Fraction(1)], levels=2))
    assert chain.depth == 2
    assert storage.build_family(schemas.NormPowerSpec(kind="norm_power"), chain).name == "norm_power(p=1)"
    with pytest.raises(ContractError, match="no family form"):
        storage.build_family(schemas.ThresholdSumSpec(kind="threshold_sum"), chain)


def test_dump_json_is_canonical():
    text = storage.dump_json({"b": Fraction(1, 2), "a": [Fraction(4, 2), True]})
    assert text.endswith("\n")
    assert json.loads(text) == {"a": ["2", True], "b": "1/2"}
    assert text.index('"a"') < text.index('"b"')


def test_report_counterexamples_serialize_vectors_as_lists():
    report = CheckReport("demo")
    report.fail(x=MeasureSpace.counting(2).constant(1))
    data = json.loads(storage.dump_json(report))
    assert data["counterexamples"] == [{"x": ["1", "1"]}]
    assert data["ok"] is False


def test_witness_reingests_and_rechecks():
    space = MeasureSpace((Fraction(3, 7), Fraction(2, 7), Fraction(2, 7)))
    op = NormPower(space, 1)
    witness = min_discrepancy(op, space.constant(1))
    data = json.loads(storage.dump_json(witness))
    assert data["discrepancy"] == "1/7"
    assert storage.load_decomposition_witness(data, op) == witness
    data["discrepancy"] = "0"
    with pytest.raises(ContractError, match="does not match"):
        storage.load_decomposition_witness(data, op)


def test_witness_bounds_are_enforced():
    data = {"base": ["1", "1"], "first": [0], "second": [1], "discrepancy": "1", "bound": "1/2"}
    with pytest.raises(ContractError, match="exceeds its bound"):
        storage.load_decomposition_witness(data)
    data.update(bound=None, stats={"bound_squared": "1/2"})
    with pytest.raises(ContractError, match="bound_squared"):
        storage.load_decomposition_witness(data)
    data.update(second=[0], stats={})
    with pytest.raises(ContractError, match="overlap"):
        storage.load_decomposition_witness(data)


def test_load_partition():
    partition = storage.load_partition({"base": ["1", "0", "2"], "blocks": [[2], [0]]})
    assert partition.as_lists() == [[0], [2]]
    with pytest.raises(ContractError):
        storage.load_partition({"base": ["1", "1"], "blocks": [[0]]})


def test_atomic_write_replaces_target(tmp_path):
    target = tmp_path / "out" / "report.json"
    storage.write_text("first\n", target)
    storage.write_text("second\n", target)
    assert target.read_text(encoding="utf-8") == "second\n"
    assert [p.name for p in target.parent.iterdir()] == ["report.json"]


def test_atomic_write_leaves_nothing_on_failure(tmp_path):
    target = tmp_path / "report.json"
    with pytest.raises(RuntimeError):
        with storage.atomic_write(target) as fh:
            fh.write("partial")
            raise RuntimeError("interrupted")
    assert list(tmp_path.iterdir()) == []


def test_curve_csv(tmp_path):
    chain = RefinementChain.dyadic([1], 2)
    curve = refinement_diagnostics(norm_power_family(chain, 1), chain.spaces[0].constant(1))
    frame = storage.curve_to_frame(curve, "norm_power")
    assert list(frame.columns) == ["curve", "level", "delta", "num", "den"]
    path = tmp_path / "curve.csv"
    storage.write_csv(storage.curve_to_frame(curve), path)
    assert path.read_text(encoding="utf-8") == "level,delta,num,den\n0,1,1,1\n1,0,0,1\n2,0,0,1\n"
