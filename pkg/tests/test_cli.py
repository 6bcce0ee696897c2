import json

import pytest

import config
from cli import run

DIFFERENCE = {
    "kind": "uryson_matrix",
    "rows": [[{"fn": "poly", "coeffs": ["0", "1"]}, {"fn": "poly", "coeffs": ["0", "-1"]}]],
}


@pytest.fixture(autouse=True)
def restore_caps(monkeypatch):
    """--cap-* flags rewrite module-level caps; undo them after each test."""
    monkeypatch.setattr(config, "FRAGMENT_CAP", config.FRAGMENT_CAP)
    monkeypatch.setattr(config, "PARTITION_CAP", config.PARTITION_CAP)


@pytest.fixture
def invoke(tmp_path):
    def call(*argv):
        out = tmp_path / "report.json"
        if out.exists():
            out.unlink()
        code = run([*argv, "--out", str(out)])
        data = json.loads(out.read_text(encoding="utf-8")) if out.exists() else None
        return code, data

    return call


def test_modulus_example(write_json, invoke):
    code, data = invoke(
        "modulus", "--op", write_json("op.json", DIFFERENCE), "--vec", write_json("x.json", {"coeffs": ["1", "1"]})
    )
    assert code == 0
    assert data == {"value": ["2"], "argmin_partition": [[0], [1]]}


def test_op_join_reports_a_decomposition(write_json, invoke):
    square = {"kind": "uryson_matrix", "rows": [[{"fn": "poly", "coeffs": [0, 0, 1]}]]}
    absolute = {"kind": "uryson_matrix", "rows": [[{"fn": "abs_power"}]]}
    code, data = invoke(
        "op-join",
        "--op", write_json("t.json", square),
        "--op", write_json("s.json", absolute),
        "--vec", write_json("x.json", {"coeffs": ["2"]}),
    )
    assert code == 0
    assert data["value"] == ["4"]
    assert "decomposition" in data


def test_identity_l1_examples(write_json, invoke):
    f = write_json("f.json", {"coeffs": ["1", "0"]})
    code, data = invoke("identity-l1", "--f", f, "--g", f)
    assert (code, data) == (0, {"lhs": "0", "rhs": "0", "ok": True})
    code, data = invoke("identity-l1", "--f", f, "--g", write_json("g.json", {"coeffs": ["0", "1"]}))
    assert data == {"lhs": "2", "rhs": "2", "ok": True}


def test_report_goes_to_stdout_without_out(write_json, capsys):
    f = write_json("f.json", {"coeffs": ["1/2"]})
    assert run(["identity-l1", "--f", f, "--g", f]) == 0
    assert json.loads(capsys.readouterr().out)["ok"] is True


def test_narrow_search_on_weighted_space(write_json, invoke):
    code, data = invoke(
        "narrow-search",
        "--space", write_json("space.json", {"weights": ["3/7", "2/7", "2/7"]}),
        "--op", write_json("op.json", {"kind": "norm_power"}),
        "--vec", write_json("e.json", {"coeffs": ["1", "1", "1"]}),
        "--mode", "frontier",
    )
    assert code == 0
    assert data["discrepancy"] == "1/7"
    assert data["weights"] == ["3/7", "2/7", "2/7"]


def test_lambda_with_branch_and_bound(write_json, invoke):
    code, data = invoke(
        "lambda", "--op", write_json("op.json", DIFFERENCE), "--vec", write_json("x.json", {"coeffs": ["1", "1"]}),
        "--mode", "bb",
    )
    assert code == 0
    assert data["value"] == ["0"]
    assert data["strategy"] == "branch_and_bound"


def test_check_oa_on_threshold_sum(write_json, invoke):
    code, data = invoke(
        "check-oa",
        "--space", write_json("space.json", {"weights": ["1", "1"]}),
        "--op", write_json("op.json", {"kind": "threshold_sum"}),
        "--trials", "20",
        "--seed", "5",
    )
    assert code == 0
    assert data["ok"] is True
    assert data["checked"] == 20


def test_tree_pipeline_and_rounding(write_json, invoke):
    space = write_json("space.json", {"weights": ["1/4"] * 4})
    op = write_json("op.json", {"kind": "norm_power"})
    e = write_json("e.json", {"coeffs": ["1"] * 4})
    code, tree = invoke("tree", "--space", space, "--op", op, "--vec", e, "--depth", "2")
    assert code == 0 and tree["depth"] == 2 and tree["halving_ok"] is True
    code, pipeline = invoke("pipeline", "--space", space, "--op", op, "--vec", e)
    assert code == 0
    assert pipeline["discrepancy"] == "0"
    assert pipeline["stats"]["bound_squared"] == "1/2"
    code, rounding = invoke("rounding", "--space", space, "--op", op, "--vec", e, "--depth", "2")
    assert code == 0
    assert rounding["bound"] == "1/4"


def test_rounding_and_permutation_instances(write_json, invoke):
    code, data = invoke(
        "rounding", "--instance", write_json("r.json", {"vectors": [["1"], ["1"]], "lambdas": ["1/2", "1/2"]})
    )
    assert code == 0 and data["achieved"] == "0"
    instance = write_json("p.json", {"vectors": [["1"], ["1"]]})
    code, data = invoke("permutation", "--instance", instance, "--mode", "greedy")
    assert code == 0
    assert (data["bound_sq"], data["achieved_sq"], data["mode"]) == ("4", "0", "greedy")


def test_diagnose_csv(write_json, tmp_path):
    out = tmp_path / "curve.csv"
    code = run(
        [
            "diagnose",
            "--space", write_json("space.json", {"weights": ["1"], "levels": 3}),
            "--op", write_json("op.json", {"kind": "norm_power"}),
            "--vec", write_json("e.json", {"coeffs": ["1"]}),
            "--format", "csv",
            "--out", str(out),
        ]
    )
    assert code == 0
    assert out.read_text(encoding="utf-8") == "level,delta,num,den\n0,1,1,1\n1,0,0,1\n2,0,0,1\n3,0,0,1\n"


def test_domination_json(write_json, invoke):
    table = [[{"fn": "poly", "coeffs": [0, 1]}] * 4 for _ in range(4)]
    code, data = invoke(
        "domination",
        "--space", write_json("space.json", {"weights": ["1"], "levels": 2}),
        "--op", write_json("op.json", {"kind": "kernel_family", "table": table}),
        "--vec", write_json("e.json", {"coeffs": ["1"]}),
    )
    assert code == 0
    assert data["operator_curve"]["deltas"] == ["1", "0", "0"]
    assert data["zero_flags"][1] == {"level": 1, "operator_zero": True, "modulus_zero": True}


def test_extract_dp(write_json, invoke):
    square = {"fn": "poly", "coeffs": [0, 0, 1]}
    op = {"kind": "uryson_matrix", "rows": [[square, {"fn": "zero"}], [{"fn": "zero"}, square]]}
    code, data = invoke(
        "extract-dp", "--op", write_json("op.json", op), "--vec", write_json("e.json", {"coeffs": ["1", "1"]})
    )
    assert code == 0
    assert data["lambda_zero"] is False
    assert data["witness"]["s_of_e"] == ["1", "1"]


def test_monteiro_instance(write_json, invoke):
    instance = {"domain_atoms": 2, "codomain_atoms": 1, "phi": {"1": 1, "2": 1}, "psi0": {"0": 0, "3": 1}}
    code, data = invoke("monteiro", "--instance", write_json("m.json", instance))
    assert code == 0
    assert data["feasible"] is True
    assert data["psi"]["atom_images"] == {"1": 1, "2": 0}
    assert data["classification"]["kind"] == "homomorphism"


def test_malformed_json_exits_2(tmp_path, write_json, capsys):
    bad = tmp_path / "op.json"
    bad.write_text("[1, 2", encoding="utf-8")
    assert run(["modulus", "--op", str(bad), "--vec", write_json("x.json", {"coeffs": ["1"]})]) == 2
    assert str(bad) in capsys.readouterr().err


def test_schema_error_names_the_field(write_json, capsys):
    x = write_json("x.json", {"coeffs": [0.25]})
    assert run(["modulus", "--op", write_json("op.json", DIFFERENCE), "--vec", x]) == 2
    assert "coeffs.0" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["transform"],
        ["modulus", "--depth", "many"],
        ["suite", "--scale", "huge"],
    ],
)
def test_argument_errors_exit_2(argv):
    assert run(argv) == 2


def test_help_exits_0():
    assert run(["--help"]) == 0


def test_contract_errors_exit_2(write_json):
    op = write_json("op.json", DIFFERENCE)
    x = write_json("x.json", {"coeffs": ["1", "1"]})
    assert run(["modulus", "--op", op]) == 2
    assert run(["modulus", "--op", op, "--vec", x, "--format", "csv"]) == 2
    assert run(["lambda", "--op", op, "--vec", x, "--mode", "greedy"]) == 2
    assert run(["modulus", "--op", op, "--vec", x, "--cap-partitions", "0"]) == 2


def test_cap_refusal_exits_3(write_json, capsys):
    op = write_json("op.json", DIFFERENCE)
    x = write_json("x.json", {"coeffs": ["1", "1"]})
    assert run(["modulus", "--op", op, "--vec", x, "--cap-partitions", "1"]) == 3
    assert "exceeds cap 1" in capsys.readouterr().err


def test_suite_output_is_reproducible(tmp_path):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    assert run(["suite", "--scale", "smoke", "--seed", "11", "--out", str(first)]) == 0
    assert run(["suite", "--scale", "smoke", "--seed", "11", "--out", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()
