"""Seeded acceptance suite: every property runs with exact arithmetic on generated instances.

Each property draws from its own child of one SeedSequence, so a seed fixes the whole report.
"""

import logging
from fractions import Fraction
from typing import Any, Callable, Optional

import numpy as np

import config
from boolean_ext import BoolMap, FiniteBoolAlg, classify_map, monteiro_extend
from errors import ContractError, WorkbenchError
from lattice import (
    LatVec,
    MeasureSpace,
    Partition,
    RefinementChain,
    absolute,
    join,
    meet,
    one_f,
)
from narrowness import (
    dp_witness_extract,
    finest_shortcut,
    l1_identity_check,
    lambda_ES,
    lambda_join_law,
    lambda_to_narrow_pipeline,
    min_discrepancy,
    refinement_diagnostics,
    verify_l1_partition_bound,
)
from operators import (
    ZERO_FUNC,
    AbsPower,
    PiecewiseLinear,
    Polynomial,
    ScalarFunc,
    Threshold,
    UrysonMatrix,
    identity_family,
    modulus,
    modulus_closed_form,
    modulus_matrix,
    neg_part_op_calc,
    norm_power_family,
    op_join,
    op_meet,
    pos_part_op,
)
from reports import CheckReport
from rounding import round_coefficients, signed_permutation
from sampling import pick, random_mask, random_rational, random_vector
from utils import submasks_ascending

logger = logging.getLogger(__name__)

ZERO = Fraction(0)
HALF = Fraction(1, 2)
LAMBDA_GRID = tuple(Fraction(k, 4) for k in range(5))
EPSILON_GRID = tuple(Fraction(v) for v in ("1/2", "1", "2", "4"))

SCALES: dict[str, dict[str, int]] = {
    "full": {
        "operators": 200,
        "rounding": 100,
        "permutation": 25,
        "lambda": 50,
        "pipeline": 50,
        "curve_depth": 6,
        "dp": 25,
        "one_f": 200,
        "monteiro": 50,
        "l1_pairs": 200,
        "l1_bound": 100,
    },
    "smoke": {
        "operators": 12,
        "rounding": 10,
        "permutation": 3,
        "lambda": 5,
        "pipeline": 5,
        "curve_depth": 3,
        "dp": 3,
        "one_f": 20,
        "monteiro": 6,
        "l1_pairs": 20,
        "l1_bound": 10,
    },
}


# --- Random instances ---


def random_scalar_func(rng: np.random.Generator, positive: bool = False) -> ScalarFunc:
    """A random entry vanishing at 0; with `positive`, nonnegative everywhere."""

    def coefficient() -> Fraction:
        q = random_rational(rng, nonzero=True)
        return abs(q) if positive else q

    kind = pick(rng, ("zero", "poly", "abs_power", "threshold", "piecewise_linear"))
    if kind == "zero":
        return ZERO_FUNC
    if kind == "poly":
        if positive:
            return Polynomial((ZERO, ZERO, coefficient()))
        return Polynomial((ZERO, coefficient(), random_rational(rng)))
    if kind == "abs_power":
        return AbsPower(coefficient(), pick(rng, (Fraction(1), Fraction(2))))
    if kind == "threshold":
        return Threshold(coefficient())
    return PiecewiseLinear(((Fraction(-1), coefficient()), (ZERO, ZERO), (Fraction(1), coefficient())))


def random_uryson_matrix(
    rng: np.random.Generator,
    n_in: int,
    n_out: int,
    positive: bool = False,
    input_space: Optional[MeasureSpace] = None,
) -> UrysonMatrix:
    rows = [[random_scalar_func(rng, positive) for _ in range(n_in)] for _ in range(n_out)]
    return UrysonMatrix.from_rows(rows, input_space)


def _size(rng: np.random.Generator, low: int, high: int) -> int:
    return int(rng.integers(low, high + 1))


def _random_partition(rng: np.random.Generator, x: LatVec) -> Partition:
    labels: dict[int, int] = {}
    for a in x.support():
        labels[a] = int(rng.integers(0, len(labels) + 1))
    blocks: dict[int, int] = {}
    for a, label in labels.items():
        blocks[label] = blocks.get(label, 0) | 1 << a
    return Partition(x, tuple(blocks.values()))


def _guarded(report: CheckReport, case: Callable[[], None], **context: Any) -> None:
    """Run one instance; a library error becomes a counterexample, not an abort."""
    try:
        case()
    except WorkbenchError as exc:
        report.fail(error=type(exc).__name__, message=str(exc), **context)


# --- Properties ---


def check_modulus_oracle(rng: np.random.Generator, count: int) -> CheckReport:
    """Partition-sup modulus equals the closed form sum_j |phi_ij(x_j)|."""
    report = CheckReport("modulus_oracle")
    for _ in range(count):
        op = random_uryson_matrix(rng, _size(rng, 1, 6), _size(rng, 1, 3))
        x = random_vector(rng, op.input_space)

        def case() -> None:
            brute, closed = modulus(op, x).value, modulus_closed_form(op, x)
            report.checked += 1
            if brute != closed:
                report.fail(x=x, brute=brute, closed=closed)

        _guarded(report, case)
    return report


def check_lattice_identities(rng: np.random.Generator, count: int) -> CheckReport:
    """(T∨S) + (T∧S) = T + S, T+ - T- = T and |T(x)| <= |T|(x)."""
    report = CheckReport("lattice_identities")
    for _ in range(count):
        n_in, n_out = _size(rng, 1, 6), _size(rng, 1, 3)
        op = random_uryson_matrix(rng, n_in, n_out)
        other = random_uryson_matrix(rng, n_in, n_out)
        x = random_vector(rng, op.input_space)

        def case() -> None:
            tx, sx = op.apply(x), other.apply(x)
            report.checked += 1
            if op_join(op, other, x).value + op_meet(op, other, x).value != tx + sx:
                report.fail(law="join_plus_meet", x=x)
            if pos_part_op(op, x).value - neg_part_op_calc(op, x).value != tx:
                report.fail(law="positive_minus_negative", x=x)
            if not absolute(tx) <= modulus(op, x).value:
                report.fail(law="abs_below_modulus", x=x)

        _guarded(report, case)
    return report


def check_rounding(rng: np.random.Generator, count: int) -> CheckReport:
    report = CheckReport("rounding")
    for _ in range(count):
        d = _size(rng, 1, 4)
        space = MeasureSpace(tuple(pick(rng, (HALF, Fraction(1), Fraction(2))) for _ in range(d)))
        vectors = [random_vector(rng, space) for _ in range(_size(rng, 1, 10))]
        lambdas = [pick(rng, LAMBDA_GRID) for _ in vectors]

        def case() -> None:
            witness = round_coefficients(vectors, lambdas)
            report.checked += 1
            if witness.achieved > witness.bound:
                report.fail(achieved=witness.achieved, bound=witness.bound)
            if witness.steps > len(vectors):
                report.fail(reason="kernel walk took more steps than indices", steps=witness.steps)

        _guarded(report, case)
    return report


def check_permutation(rng: np.random.Generator, per_size: int) -> CheckReport:
    report = CheckReport("signed_permutation")
    for n2 in range(2, 9, 2):
        for _ in range(per_size):
            space = MeasureSpace.counting(_size(rng, 1, 3))
            z = [random_vector(rng, space, positive=True) for _ in range(n2)]
            for mode in ("brute", "greedy_verified"):

                def case() -> None:
                    witness = signed_permutation(z, mode)
                    report.checked += 1
                    if not witness.certified or witness.achieved_sq > witness.bound_sq:
                        report.fail(mode=mode, size=n2, achieved_sq=witness.achieved_sq, bound_sq=witness.bound_sq)

                _guarded(report, case, mode=mode, size=n2)
    return report


def check_lambda(rng: np.random.Generator, count: int) -> CheckReport:
    """Join law, lambda_T <= lambda_|T|, the positive shortcut, and branch and bound vs brute."""
    report = CheckReport("lambda")
    for _ in range(count):
        n_in = _size(rng, 2, 6)
        op = random_uryson_matrix(rng, n_in, _size(rng, 1, 3))
        positive_op = random_uryson_matrix(rng, n_in, _size(rng, 1, 3), positive=True)
        base = random_vector(rng, op.input_space)
        mask = random_mask(rng, n_in, 0.5)
        px = random_vector(rng, op.input_space, positive=True)
        x, y = px.restrict(mask), px.restrict(op.input_space.full_mask & ~mask)

        def case() -> None:
            report.merge(lambda_join_law(positive_op, x, y), "join_law")
            brute = lambda_ES(op, base, "brute")
            if not brute.value <= lambda_ES(modulus_matrix(op), base, "brute").value:
                report.fail(law="lambda_below_modulus_lambda", x=base)
            if lambda_ES(op, base, "branch_and_bound").value != brute.value:
                report.fail(law="branch_and_bound_equals_brute", x=base)
            positive = lambda_ES(positive_op, px, "brute")
            if positive.value != finest_shortcut(positive_op, px):
                report.fail(law="positive_shortcut", x=px)
            report.checked += 3

        _guarded(report, case)
    return report


def check_pipeline(rng: np.random.Generator, count: int) -> CheckReport:
    report = CheckReport("pipeline")
    for _ in range(count):
        op = random_uryson_matrix(rng, _size(rng, 1, 8), _size(rng, 1, 3), positive=True)
        x = random_vector(rng, op.input_space, positive=True)

        def case() -> None:
            witness = lambda_to_narrow_pipeline(op, x)
            best = min_discrepancy(op, x, "scan").discrepancy
            report.checked += 1
            bound_sq = witness.stats.get("bound_squared", ZERO)
            if witness.discrepancy ** 2 > bound_sq:
                report.fail(reason="pipeline exceeds 2·alpha·K", x=x, value=witness.discrepancy)
            if witness.discrepancy < best:
                report.fail(reason="pipeline beats the exhaustive minimum", x=x, value=witness.discrepancy, best=best)

        _guarded(report, case)
    return report


def check_contrast_curves(depth: int) -> CheckReport:
    """norm_power p=1 decays to 0 on dyadic levels; the identity stalls at ||e||."""
    report = CheckReport("contrast_curves")
    chain = RefinementChain.dyadic([1], depth)
    e = chain.spaces[0].constant(1)
    levels = range(1, depth + 1)

    def case() -> None:
        narrow = refinement_diagnostics(norm_power_family(chain, 1), e, levels)
        stalled = refinement_diagnostics(identity_family(chain), e, levels)
        report.checked += 2
        report.values.update(norm_power=narrow.deltas, identity=stalled.deltas)
        if any(d != 0 for d in narrow.deltas) or narrow.trend != "decaying":
            report.fail(family="norm_power", deltas=narrow.deltas, trend=narrow.trend)
        if any(d != e.norm() for d in stalled.deltas) or stalled.trend != "stalled":
            report.fail(family="identity", deltas=stalled.deltas, trend=stalled.trend)

    _guarded(report, case)
    return report


def check_dp_extraction(rng: np.random.Generator, count: int) -> CheckReport:
    report = CheckReport("dp_extraction")
    found = attempts = 0
    while found < count and attempts < 4 * count:
        attempts += 1
        op = random_uryson_matrix(rng, _size(rng, 1, 3), _size(rng, 1, 3), positive=True)
        e = random_vector(rng, op.input_space, positive=True)
        if e.is_zero():
            continue
        seed = int(rng.integers(2**32))
        try:
            witness = dp_witness_extract(op, e, seed)
        except WorkbenchError as exc:
            report.fail(error=type(exc).__name__, message=str(exc), e=e)
            found += 1
            continue
        if witness is None:
            continue
        found += 1
        report.merge(witness.report, "witness")
        if witness.s_of_e.is_zero() or witness.s_of_e != witness.f:
            report.fail(reason="S(e) is not the positive lambda_T(e)", e=e)
    report.values["instances"] = found
    if found < count:
        report.notice(f"only {found} of {count} instances had lambda_T(e) > 0")
    return report


def check_one_f(rng: np.random.Generator, count: int) -> CheckReport:
    """𝟙_f preserves joins and meets of positive vectors and fixes 0 and f."""
    report = CheckReport("one_f_homomorphism")
    for _ in range(count):
        space = MeasureSpace.counting(_size(rng, 1, 6))
        f, y, z = (random_vector(rng, space, positive=True) for _ in range(3))
        report.checked += 1
        if one_f(f, join(y, z)) != join(one_f(f, y), one_f(f, z)):
            report.fail(law="join", f=f, y=y, z=z)
        if one_f(f, meet(y, z)) != meet(one_f(f, y), one_f(f, z)):
            report.fail(law="meet", f=f, y=y, z=z)
        if one_f(f, f) != f or not one_f(f, space.zero()).is_zero():
            report.fail(law="bounds", f=f)
    return report


def _random_extension_instance(rng: np.random.Generator):
    k, m = _size(rng, 1, 4), _size(rng, 1, 4)
    domain, codomain = FiniteBoolAlg(k), FiniteBoolAlg(m)
    images = {1 << a: random_mask(rng, m, 0.5) for a in range(k)}
    for b in range(m):
        if not any(img >> b & 1 for img in images.values()):
            images[1 << int(rng.integers(k))] |= 1 << b
    phi = BoolMap.from_atom_images(domain, codomain, images)
    sub = FiniteBoolAlg.generated_by(k, [random_mask(rng, k, 0.5) for _ in range(_size(rng, 0, 2))])
    owned = {block: 0 for block in sub.blocks}
    for b in range(m):
        holders = [block for block in sub.blocks if phi(block) >> b & 1]
        owned[pick(rng, holders)] |= 1 << b
    psi0 = BoolMap.from_atom_images(sub, codomain, owned)
    return phi, sub, psi0


def check_monteiro(rng: np.random.Generator, count: int) -> CheckReport:
    report = CheckReport("monteiro_extension")
    for _ in range(count):
        phi, sub, psi0 = _random_extension_instance(rng)

        def case() -> None:
            psi = monteiro_extend(phi, sub, psi0)
            report.checked += 1
            if classify_map(psi).kind != "homomorphism" or psi.dominated_by(phi) is not None:
                report.fail(reason="extension is not a dominated homomorphism", phi=phi.atom_images())

        _guarded(report, case, phi=phi.atom_images())
    return report


def check_l1(rng: np.random.Generator, pairs: int, bounds: int) -> CheckReport:
    report = CheckReport("l1")
    for _ in range(pairs):
        space = MeasureSpace(tuple(pick(rng, (HALF, Fraction(1), Fraction(2))) for _ in range(_size(rng, 1, 6))))
        report.merge(l1_identity_check(random_vector(rng, space), random_vector(rng, space)), "identity")
    for _ in range(bounds):
        op = random_uryson_matrix(rng, _size(rng, 1, 4), _size(rng, 1, 3))
        x = random_vector(rng, op.input_space)
        partition = _random_partition(rng, x)
        splits = [pick(rng, list(submasks_ascending(block))) for block in partition.blocks]
        epsilon = pick(rng, EPSILON_GRID)
        _guarded(
            report,
            lambda: report.merge(verify_l1_partition_bound(op, x, partition, splits, epsilon), "partition_bound"),
        )
    return report


def run_suite(seed: int = config.DEFAULT_SEED, scale: str = "full") -> dict[str, Any]:
    """All acceptance properties; `ok` is false when any property has a counterexample."""
    if scale not in SCALES:
        raise ContractError(f"unknown suite scale {scale!r}; use one of {sorted(SCALES)}")
    if seed < 0:
        raise ContractError(f"seed must be >= 0, got {seed}")
    n = SCALES[scale]
    rngs = [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(10)]
    reports = [
        check_modulus_oracle(rngs[0], n["operators"]),
        check_lattice_identities(rngs[1], n["operators"]),
        check_rounding(rngs[2], n["rounding"]),
        check_permutation(rngs[3], n["permutation"]),
        check_lambda(rngs[4], n["lambda"]),
        check_pipeline(rngs[5], n["pipeline"]),
        check_contrast_curves(n["curve_depth"]),
        check_dp_extraction(rngs[6], n["dp"]),
        check_one_f(rngs[7], n["one_f"]),
        check_monteiro(rngs[8], n["monteiro"]),
        check_l1(rngs[9], n["l1_pairs"], n["l1_bound"]),
    ]
    for report in reports:
        level = logging.INFO if report.ok else logging.WARNING
        logger.log(level, "%s: %d checked, ok=%s", report.name, report.checked, report.ok)
    return {
        "seed": seed,
        "scale": scale,
        "ok": all(r.ok for r in reports),
        "properties": {r.name: r for r in reports},
    }
