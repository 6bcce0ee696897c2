"""Command-line front door: read JSON inputs, run one computation, write a JSON or CSV report.

Usage: python cli.py <subcommand> [flags]. Exit codes: 0 ok, 1 invariant/infeasible/failed
suite, 2 bad input, 3 cap refused.
"""

import argparse
import logging
import sys
from typing import Any, Callable, Optional

import pandas as pd

import config
import schemas
import storage
from boolean_ext import BoolMap, FiniteBoolAlg, classify_map, monteiro_extend
from errors import ContractError, InfeasibleError, WorkbenchError
from lattice import LatVec, MeasureSpace, RefinementChain
from narrowness import (
    balanced_tree,
    domination_diagnostic,
    dp_witness_extract,
    l1_identity_check,
    lambda_ES,
    lambda_to_narrow_pipeline,
    min_discrepancy,
    refinement_diagnostics,
    rounding_decomposition,
)
from operators import (
    SearchResult,
    check_orthogonal_additivity,
    modulus,
    op_join,
    op_meet,
)
from rounding import round_coefficients, signed_permutation
from suite import SCALES, run_suite
from utils import bits_of, to_fraction

logger = logging.getLogger(__name__)

Outcome = tuple[Any, int]

LAMBDA_MODES = {None: "brute", "brute": "brute", "bb": "branch_and_bound", "finest": "finest"}
PERMUTATION_MODES = {None: "auto", "auto": "auto", "brute": "brute", "greedy": "greedy_verified"}
SEARCH_MODES = {None: "auto", "auto": "auto", "scan": "scan", "frontier": "frontier"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cli.py", description="Exact workbench for orthogonally additive operators.")
    parser.add_argument("command", choices=sorted(HANDLERS), help="computation to run")
    parser.add_argument("--op", action="append", default=[], metavar="PATH", help="operator JSON (repeat for op-join/op-meet)")
    parser.add_argument("--vec", action="append", default=[], metavar="PATH", help="vector JSON")
    parser.add_argument("--space", metavar="PATH", help="space JSON (weights and refinement levels)")
    parser.add_argument("--levels", type=int, metavar="N", help="highest refinement level to report")
    parser.add_argument("--depth", type=int, default=1, metavar="N", help="tree depth / rounding level")
    parser.add_argument("--cap-fragments", type=int, metavar="N")
    parser.add_argument("--cap-partitions", type=int, metavar="N")
    parser.add_argument("--seed", type=int, default=config.DEFAULT_SEED, metavar="N")
    parser.add_argument("--out", metavar="PATH", help="write the report here instead of stdout")
    parser.add_argument("--format", choices=("json", "csv"), default="json")
    parser.add_argument("--mode", choices=("auto", "brute", "bb", "finest", "greedy", "scan", "frontier"))
    parser.add_argument("--f", dest="f", metavar="PATH")
    parser.add_argument("--g", dest="g", metavar="PATH")
    parser.add_argument("--instance", metavar="PATH", help="rounding, permutation or monteiro instance JSON")
    parser.add_argument("--epsilon", metavar="Q", help="target bound as a rational string")
    parser.add_argument("--trials", type=int, default=100, metavar="N")
    parser.add_argument("--scale", choices=sorted(SCALES), default="full")
    parser.add_argument("--log-level", default=config.LOG_LEVEL, metavar="LEVEL")
    return parser


# --- Input helpers ---


def _require(args: argparse.Namespace, name: str, count: int = 1) -> list[str]:
    value = getattr(args, name)
    values = value if isinstance(value, list) else [value] if value else []
    if len(values) < count:
        flag = "--" + name.replace("_", "-")
        raise ContractError(f"{args.command} needs {count} {flag} argument(s), got {len(values)}")
    return values


def _chain(args: argparse.Namespace) -> Optional[RefinementChain]:
    if not args.space:
        return None
    chain = storage.load_chain(args.space)
    if args.levels is not None and chain.depth == 0:
        chain = RefinementChain.dyadic(chain.spaces[0].weights, args.levels)
    return chain


def _mode(args: argparse.Namespace, table: dict) -> str:
    if args.mode not in table:
        allowed = sorted(k for k in table if k)
        raise ContractError(f"--mode {args.mode} does not apply to {args.command}; use one of {allowed}")
    return table[args.mode]


def _input_space(spec: Any, chain: Optional[RefinementChain]) -> MeasureSpace:
    level = getattr(spec, "level", None) or 0
    if chain is not None:
        if level > chain.depth:
            raise ContractError(f"operator level {level} exceeds the chain depth {chain.depth}")
        return chain.spaces[level]
    if isinstance(spec, schemas.UrysonMatrixSpec):
        return MeasureSpace.counting(len(spec.rows[0]))
    if isinstance(spec, schemas.LiftedLinearSpec) and spec.matrix:
        return MeasureSpace.counting(len(spec.matrix[0]))
    raise ContractError(f"operator kind {spec.kind!r} needs --space or --vec to fix its input space")


def _operator(args: argparse.Namespace, index: int = 0, need_vector: bool = True):
    """The index-th --op with the first --vec (or the space it must act on)."""
    chain = _chain(args)
    spec = storage.load_operator_spec(_require(args, "op", index + 1)[index])
    if args.vec:
        space = _input_space(spec, chain) if chain is not None else None
        x = storage.load_vector(args.vec[0], space)
    elif need_vector:
        raise ContractError(f"{args.command} needs a --vec argument")
    else:
        x = None
    space = x.space if x is not None else _input_space(spec, chain)
    return storage.build_operator(spec, space, chain), x, chain


def _certificate(blocks: Optional[tuple[int, ...]]) -> Optional[list[list[int]]]:
    return None if blocks is None else [list(bits_of(b)) for b in blocks]


def _search_payload(result: SearchResult, key: str) -> dict[str, Any]:
    payload: dict[str, Any] = {"value": result.value, key: _certificate(result.certificate)}
    if result.certificate is None:
        payload["per_coordinate"] = [_certificate(c) for c in result.per_coordinate]
    return payload


# --- Handlers ---


def cmd_check_oa(args: argparse.Namespace) -> Outcome:
    op, _, _ = _operator(args, need_vector=False)
    return check_orthogonal_additivity(op, args.trials, args.seed), 0


def cmd_modulus(args: argparse.Namespace) -> Outcome:
    op, x, _ = _operator(args)
    return _search_payload(modulus(op, x), "argmin_partition"), 0


def _binary(args: argparse.Namespace, oracle: Callable) -> Outcome:
    op, x, _ = _operator(args, 0)
    other, _, _ = _operator(args, 1)
    return _search_payload(oracle(op, other, x), "decomposition"), 0


def cmd_op_join(args: argparse.Namespace) -> Outcome:
    return _binary(args, op_join)


def cmd_op_meet(args: argparse.Namespace) -> Outcome:
    return _binary(args, op_meet)


def cmd_lambda(args: argparse.Namespace) -> Outcome:
    op, x, _ = _operator(args)
    return lambda_ES(op, x, _mode(args, LAMBDA_MODES)), 0


def cmd_narrow_search(args: argparse.Namespace) -> Outcome:
    op, x, _ = _operator(args)
    return min_discrepancy(op, x, _mode(args, SEARCH_MODES)), 0


def cmd_tree(args: argparse.Namespace) -> Outcome:
    op, x, _ = _operator(args)
    return balanced_tree(op, x, args.depth), 0


def cmd_pipeline(args: argparse.Namespace) -> Outcome:
    op, x, _ = _operator(args)
    target = to_fraction(args.epsilon) if args.epsilon is not None else None
    return lambda_to_narrow_pipeline(op, x, target, _mode(args, PERMUTATION_MODES)), 0


def _instance_vectors(weights, vectors) -> list[LatVec]:
    if not vectors:
        return []
    space = MeasureSpace(tuple(weights)) if weights is not None else MeasureSpace.counting(len(vectors[0]))
    return [LatVec(space, tuple(v)) for v in vectors]


def cmd_rounding(args: argparse.Namespace) -> Outcome:
    """With --instance, the coefficient rounding lemma; otherwise a tree-based decomposition."""
    if args.instance:
        spec = storage.load_model(args.instance, schemas.RoundingInstance)
        return round_coefficients(_instance_vectors(spec.weights, spec.vectors), spec.lambdas), 0
    op, x, _ = _operator(args)
    return rounding_decomposition(op, x, args.depth), 0


def cmd_permutation(args: argparse.Namespace) -> Outcome:
    spec = storage.load_model(_require(args, "instance")[0], schemas.PermutationInstance)
    mode = _mode(args, PERMUTATION_MODES)
    z = _instance_vectors(spec.weights, spec.vectors)
    if mode == "auto":
        mode = "brute" if len(z) <= config.PERMUTATION_BRUTE_CAP else "greedy_verified"
    return signed_permutation(z, mode), 0


def _family_inputs(args: argparse.Namespace):
    chain = _chain(args)
    if chain is None:
        raise ContractError(f"{args.command} needs --space with refinement levels")
    spec = storage.load_operator_spec(_require(args, "op")[0])
    e = storage.load_vector(_require(args, "vec")[0], chain.spaces[0])
    top = chain.depth if args.levels is None else min(args.levels, chain.depth)
    return storage.build_family(spec, chain), e, range(top + 1)


def cmd_diagnose(args: argparse.Namespace) -> Outcome:
    family, e, levels = _family_inputs(args)
    curve = refinement_diagnostics(family, e, levels, _mode(args, SEARCH_MODES | {None: "frontier"}))
    if args.format == "csv":
        return storage.curve_to_frame(curve), 0
    return curve, 0


def cmd_domination(args: argparse.Namespace) -> Outcome:
    family, e, levels = _family_inputs(args)
    report = domination_diagnostic(family, e, levels, _mode(args, SEARCH_MODES | {None: "frontier"}))
    if args.format == "csv":
        frames = [
            storage.curve_to_frame(report.operator_curve, "operator"),
            storage.curve_to_frame(report.modulus_curve, "modulus"),
        ]
        return pd.concat(frames, ignore_index=True), 0
    return report, 0


def cmd_extract_dp(args: argparse.Namespace) -> Outcome:
    op, e, _ = _operator(args)
    witness = dp_witness_extract(op, e, args.seed)
    if witness is None:
        return {"lambda_zero": True, "witness": None}, 0
    return {"lambda_zero": False, "witness": witness}, 0 if witness.report.ok else 1


def _bool_map(domain: FiniteBoolAlg, codomain: FiniteBoolAlg, given: dict[int, int]) -> BoolMap:
    """A full table when every element is listed, atom images otherwise."""
    if len(given) == domain.order:
        return BoolMap(domain, codomain, given)
    return BoolMap.from_atom_images(domain, codomain, given)


def cmd_monteiro(args: argparse.Namespace) -> Outcome:
    spec = storage.load_model(_require(args, "instance")[0], schemas.MonteiroInstance)
    domain, codomain = FiniteBoolAlg(spec.domain_atoms), FiniteBoolAlg(spec.codomain_atoms)
    phi = _bool_map(domain, codomain, spec.phi)
    sub = FiniteBoolAlg.generated_by(spec.domain_atoms, spec.sub_generators)
    psi0 = _bool_map(sub, codomain, spec.psi0)
    try:
        psi = monteiro_extend(phi, sub, psi0)
    except InfeasibleError as exc:
        logger.warning("extension infeasible: %s", exc.core)
        return {"feasible": False, "message": str(exc), "core": exc.core}, 1
    return {"feasible": True, "psi": psi, "classification": classify_map(psi)}, 0


def cmd_identity_l1(args: argparse.Namespace) -> Outcome:
    f = storage.load_vector(_require(args, "f")[0])
    g = storage.load_vector(_require(args, "g")[0], f.space)
    report = l1_identity_check(f, g)
    return {"lhs": report.values["lhs"], "rhs": report.values["rhs"], "ok": report.ok}, 0


def cmd_suite(args: argparse.Namespace) -> Outcome:
    result = run_suite(args.seed, args.scale)
    return result, 0 if result["ok"] else 1


HANDLERS: dict[str, Callable[[argparse.Namespace], Outcome]] = {
    "check-oa": cmd_check_oa,
    "modulus": cmd_modulus,
    "op-join": cmd_op_join,
    "op-meet": cmd_op_meet,
    "lambda": cmd_lambda,
    "narrow-search": cmd_narrow_search,
    "tree": cmd_tree,
    "pipeline": cmd_pipeline,
    "rounding": cmd_rounding,
    "permutation": cmd_permutation,
    "diagnose": cmd_diagnose,
    "domination": cmd_domination,
    "extract-dp": cmd_extract_dp,
    "monteiro": cmd_monteiro,
    "identity-l1": cmd_identity_l1,
    "suite": cmd_suite,
}


def _configure_logging(level_name: str) -> None:
    level = logging.getLevelName(str(level_name).upper())
    if not isinstance(level, int):
        raise ContractError(f"unknown log level {level_name!r}")
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger().setLevel(level)


def run(argv: Optional[list[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if not exc.code else 2
    try:
        _configure_logging(args.log_level)
        config.apply_overrides(args.cap_fragments, args.cap_partitions)
        if args.format == "csv" and args.command not in ("diagnose", "domination"):
            raise ContractError("--format csv applies to diagnose and domination only")
        payload, code = HANDLERS[args.command](args)
        if isinstance(payload, pd.DataFrame):
            storage.write_csv(payload, args.out)
        else:
            storage.write_text(storage.dump_json(payload), args.out)
    except WorkbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return code


def main() -> None:
    try:
        code = run()
    except Exception as e:
        print(f"Error: {e}", file=sys.stderr)
        code = 1
    sys.exit(code)


if __name__ == "__main__":
    main()
