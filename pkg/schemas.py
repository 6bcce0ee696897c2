"""Validation models for every JSON file the CLI reads.

Rationals are "p/q" strings or JSON integers; JSON floats are refused.
"""

from fractions import Fraction
from typing import Annotated, Any, Literal, Optional, Union

from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    NonNegativeInt,
    TypeAdapter,
    ValidationError,
    model_validator,
)

from errors import ContractError
from utils import to_fraction


def _rational(value: Any) -> Fraction:
    if isinstance(value, float):
        raise ValueError(f'{value!r} is a float; write rationals as "p/q" strings')
    try:
        return to_fraction(value)
    except ContractError as exc:
        raise ValueError(str(exc)) from exc


Rational = Annotated[Fraction, BeforeValidator(_rational)]


class SchemaModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, extra="forbid")


# --- Scalar functions ---


class PolySpec(SchemaModel):
    fn: Literal["poly"]
    coeffs: list[Rational]


class AbsPowerSpec(SchemaModel):
    fn: Literal["abs_power"]
    coefficient: Rational = Fraction(1)
    exponent: Rational = Fraction(1)


class PiecewiseLinearSpec(SchemaModel):
    fn: Literal["piecewise_linear"]
    nodes: list[tuple[Rational, Rational]]


class ThresholdSpec(SchemaModel):
    fn: Literal["threshold"]
    scale: Rational = Fraction(1)


class ZeroSpec(SchemaModel):
    fn: Literal["zero"]


class SignSplitSpec(SchemaModel):
    fn: Literal["sign_split"]
    positive: "ScalarFuncSpec"
    negative: "ScalarFuncSpec"


class AbsSpec(SchemaModel):
    fn: Literal["abs"]
    inner: "ScalarFuncSpec"


class CombinationSpec(SchemaModel):
    fn: Literal["combination"]
    terms: list[tuple[Rational, "ScalarFuncSpec"]]


class MaxSpec(SchemaModel):
    fn: Literal["max"]
    left: "ScalarFuncSpec"
    right: "ScalarFuncSpec"


class MinSpec(SchemaModel):
    fn: Literal["min"]
    left: "ScalarFuncSpec"
    right: "ScalarFuncSpec"


ScalarFuncSpec = Annotated[
    Union[
        PolySpec,
        AbsPowerSpec,
        PiecewiseLinearSpec,
        ThresholdSpec,
        ZeroSpec,
        SignSplitSpec,
        AbsSpec,
        CombinationSpec,
        MaxSpec,
        MinSpec,
    ],
    Field(discriminator="fn"),
]

for _model in (SignSplitSpec, AbsSpec, CombinationSpec, MaxSpec, MinSpec):
    _model.model_rebuild()


# --- Spaces and vectors ---


class SpaceSpec(SchemaModel):
    id: Optional[str] = None
    weights: list[Rational] = Field(min_length=1)
    # an integer means dyadic halving that many times
    levels: Union[NonNegativeInt, list[list[list[Rational]]], None] = None


class VectorSpec(SchemaModel):
    space: Optional[str] = None
    coeffs: list[Rational]


# --- Operators ---


class UrysonMatrixSpec(SchemaModel):
    kind: Literal["uryson_matrix"]
    rows: list[list[ScalarFuncSpec]] = Field(min_length=1)
    output_weights: Optional[list[Rational]] = None


class NormPowerSpec(SchemaModel):
    kind: Literal["norm_power"]
    p: Rational = Fraction(1)


class SupportMeasureSpec(SchemaModel):
    kind: Literal["support_measure"]
    nu: Optional[list[Rational]] = None


class ThresholdSumSpec(SchemaModel):
    kind: Literal["threshold_sum"]


class LiftedLinearSpec(SchemaModel):
    kind: Literal["lifted_linear"]
    matrix: Optional[list[list[Rational]]] = None
    identity: bool = False
    output_weights: Optional[list[Rational]] = None

    @model_validator(mode="after")
    def _one_source(self) -> "LiftedLinearSpec":
        if (self.matrix is None) == (not self.identity):
            raise ValueError('give exactly one of "matrix" or "identity": true')
        return self


class NegPartSpec(SchemaModel):
    kind: Literal["neg_part_op"]


class KernelFamilySpec(SchemaModel):
    kind: Literal["kernel_family"]
    table: list[list[ScalarFuncSpec]] = Field(min_length=1)
    level: Optional[NonNegativeInt] = None


OperatorSpec = Annotated[
    Union[
        UrysonMatrixSpec,
        NormPowerSpec,
        SupportMeasureSpec,
        ThresholdSumSpec,
        LiftedLinearSpec,
        NegPartSpec,
        KernelFamilySpec,
    ],
    Field(discriminator="kind"),
]


# --- Instances ---


class RoundingInstance(SchemaModel):
    weights: Optional[list[Rational]] = None
    vectors: list[list[Rational]]
    lambdas: list[Rational]


class PermutationInstance(SchemaModel):
    weights: Optional[list[Rational]] = None
    vectors: list[list[Rational]]


class MonteiroInstance(SchemaModel):
    domain_atoms: NonNegativeInt
    codomain_atoms: NonNegativeInt
    phi: dict[int, int]
    sub_generators: list[int] = Field(default_factory=list)
    psi0: dict[int, int]


# --- Re-ingested outputs ---


class WitnessSpec(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, extra="ignore")

    base: list[Rational]
    weights: Optional[list[Rational]] = None
    first: list[NonNegativeInt]
    second: list[NonNegativeInt]
    discrepancy: Rational
    bound: Optional[Rational] = None
    stats: dict[str, Any] = Field(default_factory=dict)


class PartitionSpec(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, extra="ignore")

    base: list[Rational]
    weights: Optional[list[Rational]] = None
    blocks: list[list[NonNegativeInt]]


def validate(schema: Any, data: Any, source: str) -> Any:
    """Validate `data` against a model or annotated type; errors name the file and field."""
    try:
        if isinstance(schema, type) and issubclass(schema, BaseModel):
            return schema.model_validate(data)
        return TypeAdapter(schema).validate_python(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = ".".join(str(part) for part in first["loc"]) or "(root)"
        raise ContractError(f"{source}: {loc}: {first['msg']}") from None
