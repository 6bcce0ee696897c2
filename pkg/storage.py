"""Reading JSON inputs into domain objects and writing reports atomically."""

import dataclasses
import json
import os
import sys
import tempfile
from contextlib import contextmanager
from fractions import Fraction
from functools import singledispatch
from pathlib import Path
from typing import Any, Iterator, Optional, Union

import pandas as pd

import schemas
from boolean_ext import BoolMap, MapClassification
from errors import ContractError, StructuralError
from lattice import LatVec, MeasureSpace, Partition, RefinementChain
from narrowness import (
    DecompositionWitness,
    DeltaCurve,
    DisjointTree,
    DominationReport,
    DPWitness,
    EnfloStarbirdResult,
    Family,
)
from operators import (
    Abs,
    AbsPower,
    Combination,
    KernelFamily,
    LiftedLinear,
    NegPartOperator,
    NormPower,
    OrthAddOperator,
    PiecewiseLinear,
    PointwiseMax,
    PointwiseMin,
    Polynomial,
    ScalarFunc,
    SignSplit,
    SupportMeasure,
    Threshold,
    ThresholdSum,
    UrysonMatrix,
    ZERO_FUNC,
    identity_family,
    norm_power_family,
    support_measure_family,
)
from reports import CheckReport
from rounding import PermutationWitness, RoundingWitness
from utils import bits_of, mask_of

PathLike = Union[str, Path]


# --- Reading ---


def load_json(path: PathLike) -> Any:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ContractError(f"{path}: cannot read file: {exc.strerror}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ContractError(f"{path}: invalid JSON: {exc.msg} at line {exc.lineno}")


def load_model(path: PathLike, schema: Any) -> Any:
    return schemas.validate(schema, load_json(path), str(path))


def build_chain(spec: schemas.SpaceSpec) -> RefinementChain:
    """Level 0 carries the given weights; `levels` adds refinements below it."""
    if spec.levels is None:
        return RefinementChain.from_splits(spec.weights, [])
    if isinstance(spec.levels, int):
        return RefinementChain.dyadic(spec.weights, spec.levels)
    return RefinementChain.from_splits(spec.weights, spec.levels)


def load_chain(path: PathLike) -> RefinementChain:
    return build_chain(load_model(path, schemas.SpaceSpec))


@singledispatch
def build_scalar_func(spec: Any) -> ScalarFunc:
    raise ContractError(f"unknown scalar function spec {spec!r}")


@build_scalar_func.register
def _(spec: schemas.PolySpec) -> ScalarFunc:
    return Polynomial(tuple(spec.coeffs))


@build_scalar_func.register
def _(spec: schemas.AbsPowerSpec) -> ScalarFunc:
    return AbsPower(spec.coefficient, spec.exponent)


@build_scalar_func.register
def _(spec: schemas.PiecewiseLinearSpec) -> ScalarFunc:
    return PiecewiseLinear(tuple(spec.nodes))


@build_scalar_func.register
def _(spec: schemas.ThresholdSpec) -> ScalarFunc:
    return Threshold(spec.scale)


@build_scalar_func.register
def _(spec: schemas.ZeroSpec) -> ScalarFunc:
    return ZERO_FUNC


@build_scalar_func.register
def _(spec: schemas.SignSplitSpec) -> ScalarFunc:
    return SignSplit(build_scalar_func(spec.positive), build_scalar_func(spec.negative))


@build_scalar_func.register
def _(spec: schemas.AbsSpec) -> ScalarFunc:
    return Abs(build_scalar_func(spec.inner))


@build_scalar_func.register
def _(spec: schemas.CombinationSpec) -> ScalarFunc:
    return Combination(tuple((c, build_scalar_func(f)) for c, f in spec.terms))


@build_scalar_func.register
def _(spec: schemas.MaxSpec) -> ScalarFunc:
    return PointwiseMax(build_scalar_func(spec.left), build_scalar_func(spec.right))


@build_scalar_func.register
def _(spec: schemas.MinSpec) -> ScalarFunc:
    return PointwiseMin(build_scalar_func(spec.left), build_scalar_func(spec.right))


def _table(rows) -> tuple[tuple[ScalarFunc, ...], ...]:
    return tuple(tuple(build_scalar_func(f) for f in row) for row in rows)


def _output_space(weights: Optional[list[Fraction]], rows: int) -> MeasureSpace:
    if weights is None:
        return MeasureSpace.counting(rows)
    if len(weights) != rows:
        raise StructuralError(f"{len(weights)} output weights for {rows} rows")
    return MeasureSpace(tuple(weights))


def build_vector(spec: schemas.VectorSpec, space: Optional[MeasureSpace] = None) -> LatVec:
    """Without a space, the counting measure of the vector's length."""
    return LatVec(space or MeasureSpace.counting(len(spec.coeffs)), tuple(spec.coeffs))


def load_vector(path: PathLike, space: Optional[MeasureSpace] = None) -> LatVec:
    return build_vector(load_model(path, schemas.VectorSpec), space)


def build_operator(
    spec: Any, input_space: MeasureSpace, chain: Optional[RefinementChain] = None
) -> OrthAddOperator:
    if isinstance(spec, schemas.UrysonMatrixSpec):
        output = _output_space(spec.output_weights, len(spec.rows))
        return UrysonMatrix(input_space, output, _table(spec.rows))
    if isinstance(spec, schemas.NormPowerSpec):
        return NormPower(input_space, spec.p)
    if isinstance(spec, schemas.SupportMeasureSpec):
        return SupportMeasure(input_space, tuple(spec.nu) if spec.nu is not None else input_space.weights)
    if isinstance(spec, schemas.ThresholdSumSpec):
        return ThresholdSum(input_space)
    if isinstance(spec, schemas.LiftedLinearSpec):
        if spec.identity:
            return LiftedLinear.identity(input_space)
        output = _output_space(spec.output_weights, len(spec.matrix))
        return LiftedLinear(input_space, output, tuple(tuple(row) for row in spec.matrix))
    if isinstance(spec, schemas.NegPartSpec):
        return NegPartOperator(input_space)
    if isinstance(spec, schemas.KernelFamilySpec):
        if chain is None:
            raise ContractError("kernel_family needs a --space file")
        family = KernelFamily(chain, _table(spec.table))
        level = spec.level if spec.level is not None else chain.level_of(input_space)
        return family.at_level(level)
    raise ContractError(f"unknown operator spec {spec!r}")


def build_family(spec: Any, chain: RefinementChain) -> Family:
    """Operator family across the levels of `chain`."""
    if isinstance(spec, schemas.KernelFamilySpec):
        return KernelFamily(chain, _table(spec.table))
    if isinstance(spec, schemas.NormPowerSpec):
        return norm_power_family(chain, spec.p)
    if isinstance(spec, schemas.LiftedLinearSpec) and spec.identity:
        return identity_family(chain)
    if isinstance(spec, schemas.SupportMeasureSpec) and spec.nu is None:
        return support_measure_family(chain)
    raise ContractError(f"operator kind {spec.kind!r} has no family form across levels")


def load_operator_spec(path: PathLike) -> Any:
    return load_model(path, schemas.OperatorSpec)


def _space_for(weights: Optional[list[Fraction]], size: int, space: Optional[MeasureSpace]) -> MeasureSpace:
    if space is not None:
        if weights is not None and tuple(weights) != space.weights:
            raise ContractError("recorded weights differ from the operator's input space")
        return space
    return MeasureSpace(tuple(weights)) if weights is not None else MeasureSpace.counting(size)


def load_decomposition_witness(
    source: Union[PathLike, dict], op: Optional[OrthAddOperator] = None
) -> DecompositionWitness:
    """Rebuild an emitted witness and re-check its invariants (and its value, given T)."""
    label = "witness" if isinstance(source, dict) else str(source)
    data = source if isinstance(source, dict) else load_json(source)
    spec = schemas.validate(schemas.WitnessSpec, data, label)
    space = _space_for(spec.weights, len(spec.base), op.input_space if op else None)
    base = LatVec(space, tuple(spec.base))
    witness = DecompositionWitness(
        base, mask_of(spec.first), mask_of(spec.second), spec.discrepancy, spec.bound, dict(spec.stats)
    )
    if spec.bound is not None and spec.discrepancy > spec.bound:
        raise ContractError(f"{label}: discrepancy {spec.discrepancy} exceeds its bound {spec.bound}")
    bound_sq = spec.stats.get("bound_squared")
    if bound_sq is not None and spec.discrepancy ** 2 > Fraction(bound_sq):
        raise ContractError(f"{label}: discrepancy^2 exceeds bound_squared {bound_sq}")
    if op is not None and not witness.recheck(op):
        raise ContractError(f"{label}: recorded discrepancy does not match the operator")
    return witness


def load_partition(source: Union[PathLike, dict], space: Optional[MeasureSpace] = None) -> Partition:
    label = "partition" if isinstance(source, dict) else str(source)
    data = source if isinstance(source, dict) else load_json(source)
    spec = schemas.validate(schemas.PartitionSpec, data, label)
    base = LatVec(_space_for(spec.weights, len(spec.base), space), tuple(spec.base))
    return Partition.from_lists(base, spec.blocks)


# --- Serialization ---


def indices(mask: int) -> list[int]:
    return list(bits_of(mask))


def _fields(obj: Any) -> dict:
    """Top-level dataclass fields; nested values go through to_jsonable, not asdict."""
    return {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}


@singledispatch
def to_jsonable(obj: Any) -> Any:
    return obj


@to_jsonable.register
def _(obj: Fraction) -> str:
    return str(obj)


@to_jsonable.register
def _(obj: LatVec) -> list[str]:
    return [str(c) for c in obj.coeffs]


@to_jsonable.register(list)
@to_jsonable.register(tuple)
def _(obj) -> list:
    return [to_jsonable(v) for v in obj]


@to_jsonable.register
def _(obj: dict) -> dict:
    return {str(k): to_jsonable(v) for k, v in obj.items()}


@to_jsonable.register
def _(obj: Partition) -> list[list[int]]:
    return obj.as_lists()


@to_jsonable.register
def _(obj: CheckReport) -> dict:
    return to_jsonable(_fields(obj))


@to_jsonable.register
def _(obj: DecompositionWitness) -> dict:
    return to_jsonable(
        {
            "base": obj.base,
            "weights": obj.base.space.weights,
            "first": indices(obj.first),
            "second": indices(obj.second),
            "discrepancy": obj.discrepancy,
            "bound": obj.bound,
            "stats": obj.stats,
        }
    )


@to_jsonable.register
def _(obj: EnfloStarbirdResult) -> dict:
    return to_jsonable(
        {
            "value": obj.value,
            "argmin_partition": obj.argmin,
            "per_coordinate": obj.per_coordinate,
            "strategy": obj.strategy,
            "nodes_visited": obj.nodes_visited,
            "pruned": obj.pruned,
            "shortcut": obj.shortcut,
        }
    )


@to_jsonable.register
def _(obj: DisjointTree) -> dict:
    return to_jsonable(
        {
            "nodes": [indices(m) for m in obj.nodes],
            "depth": obj.depth,
            "requested_depth": obj.requested_depth,
            "gammas": obj.gammas,
            "gaps": obj.gaps,
            "epsilon_one": obj.epsilon_one,
            "halving_ok": obj.halving_ok,
            "notices": obj.notices,
        }
    )


@to_jsonable.register
def _(obj: DeltaCurve) -> dict:
    return to_jsonable(
        {
            "levels": obj.levels,
            "deltas": obj.deltas,
            "masks": [indices(m) for m in obj.masks],
            "baseline": obj.baseline,
            "trend": obj.trend,
            "notices": obj.notices,
        }
    )


@to_jsonable.register
def _(obj: DominationReport) -> dict:
    return to_jsonable(
        {
            "operator_curve": obj.operator_curve,
            "modulus_curve": obj.modulus_curve,
            "zero_flags": [
                {"level": n, "operator_zero": t, "modulus_zero": m} for n, t, m in obj.zero_flags
            ],
            "closed_form": obj.closed_form,
        }
    )


@to_jsonable.register
def _(obj: RoundingWitness) -> dict:
    return to_jsonable(_fields(obj))


@to_jsonable.register
def _(obj: PermutationWitness) -> dict:
    return to_jsonable(_fields(obj))


@to_jsonable.register
def _(obj: BoolMap) -> dict:
    return to_jsonable({"atom_images": obj.atom_images(), "codomain_atoms": obj.codomain.size})


@to_jsonable.register
def _(obj: MapClassification) -> dict:
    return to_jsonable(_fields(obj))


@to_jsonable.register
def _(obj: DPWitness) -> dict:
    return to_jsonable(
        {"f": obj.f, "s_of_e": obj.s_of_e, "psi": obj.psi, "report": obj.report}
    )


def dump_json(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n"


# --- Writing ---


@contextmanager
def atomic_write(path: PathLike) -> Iterator[Any]:
    """Write to a temp file next to `path`, then rename over it; the temp file never survives."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    handle = tempfile.NamedTemporaryFile(
        "w", dir=target.parent, prefix=f".{target.name}.", suffix=".tmp",
        delete=False, encoding="utf-8", newline="",
    )
    try:
        yield handle
        handle.flush()
        os.fsync(handle.fileno())
        handle.close()
        os.replace(handle.name, target)
    except BaseException:
        handle.close()
        if os.path.exists(handle.name):
            os.remove(handle.name)
        raise


def write_text(text: str, path: Optional[PathLike] = None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    with atomic_write(path) as fh:
        fh.write(text)


def curve_to_frame(curve: DeltaCurve, label: Optional[str] = None) -> pd.DataFrame:
    frame = pd.DataFrame(
        {
            "level": list(curve.levels),
            "delta": [str(d) for d in curve.deltas],
            "num": [d.numerator for d in curve.deltas],
            "den": [d.denominator for d in curve.deltas],
        }
    )
    if label is not None:
        frame.insert(0, "curve", label)
    return frame


def write_csv(frame: pd.DataFrame, path: Optional[PathLike] = None) -> None:
    write_text(frame.to_csv(index=False, lineterminator="\n"), path)
