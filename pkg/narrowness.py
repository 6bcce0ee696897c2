"""Narrowness diagnostics and constructions.

Discrepancy minimization over mutually complemented fragments, the Enflo-Starbird function
lambda_T, balanced disjoint trees, the lambda-to-narrow pipeline, refinement curves, the L1
domination checks and extraction of disjointness preserving minorants.
All norms here are the weighted l1 norm of the output space.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, ClassVar, Iterable, Optional, Sequence, Union

import config
from boolean_ext import (
    BoolMap,
    FiniteBoolAlg,
    classify_map,
    compress,
    fragment_algebra_check,
    monteiro_extend,
    trivial_subalgebra,
)
from errors import CapExceededError, ContractError, InfeasibleError, InvariantError, StructuralError
from lattice import (
    ZERO,
    LatVec,
    Partition,
    absolute,
    band_projection,
    disjoint,
    embed_to,
    join,
    neg_part,
    one_f,
    partition_blocks,
    pos_part,
    sup_of,
    total,
)
from operators import (
    AbsPower,
    BlockEvaluator,
    BuiltinFamily,
    FunctionOperator,
    KernelFamily,
    OrthAddOperator,
    PointwiseMax,
    PointwiseMin,
    UrysonMatrix,
    ZERO_FUNC,
    extremum,
    is_disjointness_preserving,
    is_positive_on,
    modulus,
    modulus_matrix,
    modulus_value,
    op_meet,
    pos_part_op,
)
from reports import CheckReport
from rounding import round_coefficients, signed_permutation
from sampling import grid_points, make_rng, random_vector
from utils import bits_of, lowest_bit, popcount, spread, submasks_ascending

logger = logging.getLogger(__name__)

Family = Union[KernelFamily, BuiltinFamily]

STRATEGIES = ("auto", "scan", "frontier")

# Largest support on which domination_diagnostic cross-checks |T| against the partition oracle.
MODULUS_CROSSCHECK_ATOMS = 6
# Grid points on which the literal S4∘P_e chain is compared with its matrix form.
LITERAL_CHAIN_POINTS = 25


def discrepancy(op: OrthAddOperator, first: LatVec, second: LatVec) -> Fraction:
    """||T(e1) - T(e2)||."""
    return (op.apply(first) - op.apply(second)).norm()


@dataclass(frozen=True)
class DecompositionWitness:
    base: LatVec
    first: int
    second: int
    discrepancy: Fraction
    bound: Optional[Fraction] = None
    stats: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if self.first & self.second:
            raise ContractError("decomposition parts overlap")
        if self.first | self.second != self.base.support_mask:
            raise ContractError("decomposition parts do not cover the support of the base")

    def parts(self) -> tuple[LatVec, LatVec]:
        return self.base.restrict(self.first), self.base.restrict(self.second)

    def recheck(self, op: OrthAddOperator) -> bool:
        return discrepancy(op, *self.parts()) == self.discrepancy


# --- Minimum discrepancy ---


def _scan(op: OrthAddOperator, e: LatVec, cap: int) -> DecompositionWitness:
    positions = e.support()
    if len(positions) > cap:
        raise CapExceededError(
            "fragments", len(positions), cap, "raise --cap-fragments or use the frontier strategy"
        )
    ev = BlockEvaluator(op, e)
    support = e.support_mask
    lower = positions[:-1]
    best, best_mask = None, 0
    visited = 0
    for counter in range(1 << len(lower)):
        first = spread(counter, lower)
        value = (ev(first) - ev(support & ~first)).norm()
        visited += 1
        if best is None or value < best:
            best, best_mask = value, first
    logger.debug("scanned %d unordered pairs", visited)
    return DecompositionWitness(
        e, best_mask, support & ~best_mask, best, stats={"strategy": "scan", "visited": visited}
    )


def _components(images: dict[int, LatVec]) -> list[list[int]]:
    """Atoms grouped so that images in different groups have disjoint supports."""
    parent = {a: a for a in images}

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    owner: dict[int, int] = {}
    for a, z in images.items():
        for i in z.support():
            if i in owner:
                ra, rb = find(a), find(owner[i])
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
            else:
                owner[i] = a
    groups: dict[int, list[int]] = {}
    for a in sorted(images):
        groups.setdefault(find(a), []).append(a)
    return list(groups.values())


def _frontier(op: OrthAddOperator, e: LatVec, cap: int) -> DecompositionWitness:
    """Exact minimum for orthogonally additive T: T(e1) - T(e2) = sum of ±T(atom fragment)."""
    weights = op.output_space.weights
    images = {a: op.apply(e.restrict(1 << a)) for a in e.support()}
    mask, value, states = 0, ZERO, 0
    groups = _components(images)
    for atoms in groups:
        coords = sorted({i for a in atoms for i in images[a].support()})
        totals = [sum((images[a].coeffs[i] for a in atoms), ZERO) for i in coords]
        frontier: dict[tuple[Fraction, ...], int] = {tuple(ZERO for _ in coords): 0}
        for a in atoms:
            step = [images[a].coeffs[i] for i in coords]
            nxt = dict(frontier)
            for state, m in frontier.items():
                key = tuple(s + d for s, d in zip(state, step))
                cand = m | (1 << a)
                if key not in nxt or cand < nxt[key]:
                    nxt[key] = cand
            frontier = nxt
            if len(frontier) > cap:
                raise CapExceededError("frontier states", len(frontier), cap, "raise URYSON_FRONTIER_CAP")
        states += len(frontier)

        def gap(state: tuple[Fraction, ...]) -> Fraction:
            return sum(
                (weights[i] * abs(2 * s - t) for i, s, t in zip(coords, state, totals)), ZERO
            )

        state, m = min(frontier.items(), key=lambda item: (gap(item[0]), item[1]))
        value += gap(state)
        mask |= m
    support = e.support_mask
    direct = discrepancy(op, e.restrict(mask), e.restrict(support & ~mask))
    if direct != value:
        raise ContractError(
            f"frontier strategy requires an orthogonally additive operator: predicted {value}, got {direct}"
        )
    logger.debug("frontier search: %d components, %d states", len(groups), states)
    return DecompositionWitness(
        e, mask, support & ~mask, value,
        stats={"strategy": "frontier", "components": len(groups), "states": states},
    )


def min_discrepancy(
    op: OrthAddOperator, e: LatVec, strategy: str = "auto", cap: Optional[int] = None
) -> DecompositionWitness:
    """Exact minimizer of ||T(e1) - T(e2)|| over e = e1 ⊔ e2; smallest e1 mask on ties."""
    if strategy not in STRATEGIES:
        raise ContractError(f"unknown discrepancy strategy {strategy!r}; use one of {STRATEGIES}")
    if e.space != op.input_space:
        raise StructuralError("e is not on the operator's input space")
    fragment_cap = config.FRAGMENT_CAP if cap is None else cap
    if strategy == "auto":
        strategy = "scan" if popcount(e.support_mask) <= fragment_cap else "frontier"
    if strategy == "scan":
        return _scan(op, e, fragment_cap)
    return _frontier(op, e, config.FRONTIER_CAP)


def combine_signed(
    op: OrthAddOperator, x: LatVec, w_plus: DecompositionWitness, w_minus: DecompositionWitness
) -> DecompositionWitness:
    """Witness for x from witnesses for x+ and -x-: e = (e1 + e1') ⊔ (e2 + e2')."""
    if w_plus.base.support_mask & w_minus.base.support_mask:
        raise ContractError("witnesses for x+ and -x- must have disjoint supports")
    if w_plus.base != pos_part(x) or w_minus.base != -neg_part(x):
        raise ContractError("witness bases must be x+ and -x-")
    first = w_plus.first | w_minus.first
    second = w_plus.second | w_minus.second
    value = discrepancy(op, x.restrict(first), x.restrict(second))
    if value > w_plus.discrepancy + w_minus.discrepancy:
        raise InvariantError(
            f"combined discrepancy {value} exceeds {w_plus.discrepancy} + {w_minus.discrepancy}"
        )
    return DecompositionWitness(
        x, first, second, value,
        stats={"plus": w_plus.discrepancy, "minus": w_minus.discrepancy},
    )


def strict_narrow_check(
    op: OrthAddOperator, e: LatVec, cap: Optional[int] = None
) -> Optional[DecompositionWitness]:
    """MC fragments with T(e1) = T(e2) exactly, or None."""
    witness = min_discrepancy(op, e, "auto", cap)
    return witness if witness.discrepancy == 0 else None


def local_narrowness_report(
    op: OrthAddOperator, e0: LatVec, seed: Optional[int] = None, trials: int = 10
) -> CheckReport:
    """Minimum discrepancy at e0 and at random positive and negative vectors.

    Some operators cancel on one sign side only (T(x) = x- vanishes on positive vectors), so
    the zero rates of both sides are reported separately.
    """
    rng = make_rng(seed)
    report = CheckReport("local_narrowness")
    report.values["at_e0"] = min_discrepancy(op, e0).discrepancy
    for side in ("positive", "negative"):
        deltas = []
        for _ in range(trials):
            x = random_vector(rng, op.input_space, positive=True)
            if side == "negative":
                x = -x
            deltas.append(min_discrepancy(op, x).discrepancy)
            report.checked += 1
        report.values[f"{side}_deltas"] = deltas
        report.values[f"{side}_zero"] = all(d == 0 for d in deltas)
    report.values["one_sided"] = report.values["positive_zero"] != report.values["negative_zero"]
    return report


# --- Enflo-Starbird function ---


@dataclass(frozen=True)
class EnfloStarbirdResult:
    """lambda_T(x) with certificates.

    `argmin` attains every coordinate at once (None if no single partition does);
    `per_coordinate[i]` attains coordinate i.
    """

    value: LatVec
    argmin: Optional[Partition]
    per_coordinate: tuple[Partition, ...]
    strategy: str
    nodes_visited: int = 0
    pruned: int = 0
    shortcut: Optional[LatVec] = None


class _AbsCache:
    def __init__(self, op: OrthAddOperator, x: LatVec) -> None:
        self.ev = BlockEvaluator(op, x)
        self._abs: dict[int, LatVec] = {}

    def __call__(self, mask: int) -> LatVec:
        value = self._abs.get(mask)
        if value is None:
            value = self._abs[mask] = absolute(self.ev(mask))
        return value


def finest_shortcut(op: OrthAddOperator, x: LatVec) -> LatVec:
    """Blockwise max of |T| at the finest partition of x."""
    return sup_of((absolute(op.apply(x.restrict(1 << a))) for a in x.support()), op.output_space)


def _positive_on(op: OrthAddOperator, x: LatVec) -> Optional[bool]:
    """is_positive_on, or None when the fragments of x are beyond the cap."""
    if popcount(x.support_mask) > config.FRAGMENT_CAP:
        return None
    return is_positive_on(op, x)


def _lambda_brute(op, x, cap) -> EnfloStarbirdResult:
    absval = _AbsCache(op, x)
    space = op.output_space
    result = extremum(
        ((blocks, sup_of((absval(b) for b in blocks), space)) for blocks in partition_blocks(x, cap=cap)),
        False,
        space,
    )
    argmin = Partition(x, result.certificate) if result.certificate is not None else None
    per = tuple(Partition(x, blocks) for blocks in result.per_coordinate)
    return EnfloStarbirdResult(result.value, argmin, per, "brute", nodes_visited=result.visited)


def _lambda_branch_and_bound(op, x, cap) -> EnfloStarbirdResult:
    positions = x.support()
    if len(positions) > cap:
        raise CapExceededError("partitions", len(positions), cap, "raise --cap-partitions")
    absval = _AbsCache(op, x)
    support = x.support_mask
    space = op.output_space
    nodes = pruned = 0
    best_values: list[Fraction] = []
    best_blocks: list[tuple[int, ...]] = []

    for i in range(space.size):
        best = absval(support).coeffs[i]
        incumbent: tuple[int, ...] = (support,) if support else ()

        def descend(remaining: int, blocks: tuple[int, ...], bound: Fraction) -> None:
            nonlocal best, incumbent, nodes, pruned
            nodes += 1
            completion = max(bound, absval(remaining).coeffs[i])
            if completion < best:
                best, incumbent = completion, blocks + (remaining,)
            low = lowest_bit(remaining)
            for sub in submasks_ascending(remaining & ~low):
                block = low | sub
                if block == remaining:
                    continue
                nb = max(bound, absval(block).coeffs[i])
                if nb >= best:
                    pruned += 1
                    continue
                descend(remaining & ~block, blocks + (block,), nb)

        if support:
            descend(support, (), ZERO)
        best_values.append(best)
        best_blocks.append(incumbent)

    value = LatVec(space, tuple(best_values))
    found: Optional[tuple[int, ...]] = None

    def feasible(remaining: int, blocks: tuple[int, ...]) -> bool:
        nonlocal found, nodes
        nodes += 1
        if not remaining:
            found = blocks
            return True
        low = lowest_bit(remaining)
        for sub in submasks_ascending(remaining & ~low):
            block = low | sub
            if absval(block) <= value and feasible(remaining & ~block, blocks + (block,)):
                return True
        return False

    feasible(support, ())
    argmin = Partition(x, found) if found is not None else None
    per = tuple(Partition(x, b) for b in best_blocks)
    logger.debug("branch and bound: %d nodes, %d pruned", nodes, pruned)
    return EnfloStarbirdResult(value, argmin, per, "branch_and_bound", nodes, pruned)


def lambda_ES(
    op: OrthAddOperator, x: LatVec, strategy: str = "brute", cap: Optional[int] = None
) -> EnfloStarbirdResult:
    """lambda_T(x): coordinatewise inf over partitions of the blockwise sup of |T(block)|."""
    if x.space != op.input_space:
        raise StructuralError("x is not on the operator's input space")
    cap = config.PARTITION_CAP if cap is None else cap
    positive = _positive_on(op, x)
    if strategy == "finest":
        if not positive:
            raise ContractError("the finest-partition shortcut needs T >= 0 on the fragments of x")
        value = finest_shortcut(op, x)
        finest = Partition.finest(x)
        per = tuple(finest for _ in range(op.output_space.size))
        return EnfloStarbirdResult(value, finest, per, "finest", shortcut=value)
    if strategy == "brute":
        result = _lambda_brute(op, x, cap)
    elif strategy in ("branch_and_bound", "bb"):
        result = _lambda_branch_and_bound(op, x, cap)
    else:
        raise ContractError(f"unknown lambda strategy {strategy!r}")
    if positive:
        shortcut = finest_shortcut(op, x)
        if shortcut != result.value:
            raise InvariantError(f"finest-partition shortcut {shortcut} differs from lambda {result.value}")
        result = EnfloStarbirdResult(
            result.value, result.argmin, result.per_coordinate, result.strategy,
            result.nodes_visited, result.pruned, shortcut,
        )
    return result


def lambda_join_law(
    op: OrthAddOperator, x: LatVec, y: LatVec, strategy: str = "brute"
) -> CheckReport:
    """lambda_T(x ⊔ y) = lambda_T(x) ∨ lambda_T(y) for disjoint x, y.

    Holds when T >= 0 on the fragments of x ⊔ y. A signed T can cancel across x and y inside
    one block (T(x) = x1 - x2 at x = (1, 0), y = (0, 1)), and the report then fails.
    """
    if not disjoint(x, y):
        raise ContractError("lambda join law needs disjoint x and y")
    report = CheckReport("lambda_join_law", checked=1)
    lhs = lambda_ES(op, x + y, strategy).value
    rhs = join(lambda_ES(op, x, strategy).value, lambda_ES(op, y, strategy).value)
    report.values.update(lhs=lhs, rhs=rhs)
    if lhs != rhs:
        report.fail(x=x, y=y, lhs=lhs, rhs=rhs)
    return report


# --- Balanced disjoint trees ---


@dataclass(frozen=True)
class DisjointTree:
    """Heap-ordered nodes: nodes[i - 1] is e_i, with e_i = e_2i ⊔ e_2i+1 and e_1 = e."""

    base: LatVec
    nodes: tuple[int, ...]
    depth: int
    requested_depth: int
    gammas: tuple[Fraction, ...]
    gaps: tuple[Fraction, ...]
    epsilon_one: Fraction
    halving_ok: bool
    notices: tuple[str, ...] = ()

    def node(self, i: int) -> int:
        return self.nodes[i - 1]

    def level(self, m: int) -> tuple[int, ...]:
        if not 0 <= m <= self.depth:
            raise ContractError(f"tree level {m} out of range 0..{self.depth}")
        return self.nodes[(1 << m) - 1 : (1 << (m + 1)) - 1]


def _balanced_split(ev: BlockEvaluator, mask: int, cap: int) -> tuple[int, int, Fraction]:
    positions = list(bits_of(mask))
    if len(positions) > cap:
        raise CapExceededError("fragments", len(positions), cap, "raise --cap-fragments")
    lower = positions[:-1]
    best, best_left = None, 0
    for counter in range(1, 1 << len(lower)):
        left = spread(counter, lower)
        gap = abs(ev(left).norm() - ev(mask & ~left).norm())
        if best is None or gap < best:
            best, best_left = gap, left
    return best_left, mask & ~best_left, best


def balanced_tree(
    op: OrthAddOperator, e: LatVec, depth: int, cap: Optional[int] = None
) -> DisjointTree:
    if depth < 0:
        raise ContractError(f"tree depth must be >= 0, got {depth}")
    cap = config.FRAGMENT_CAP if cap is None else cap
    ev = BlockEvaluator(op, e)
    nodes = [e.support_mask]
    notices: list[str] = []
    realized = 0
    for m in range(depth):
        level = nodes[(1 << m) - 1 :]
        if any(popcount(node) < 2 for node in level):
            notices.append(f"tree truncated at depth {m}: a node has fewer than two atoms")
            logger.warning("balanced tree truncated at depth %d of %d", m, depth)
            break
        for node in level:
            left, right, _ = _balanced_split(ev, node, cap)
            nodes.extend((left, right))
        realized = m + 1
    gammas = tuple(
        max(ev(node).norm() for node in nodes[(1 << m) - 1 : (1 << (m + 1)) - 1])
        for m in range(realized + 1)
    )
    internal = (1 << realized) - 1
    gaps = tuple(abs(ev(nodes[2 * i - 1]).norm() - ev(nodes[2 * i]).norm()) for i in range(1, internal + 1))
    split_discrepancies = [
        (ev(nodes[2 * i - 1]) - ev(nodes[2 * i])).norm() for i in range(1, internal + 1)
    ]
    epsilon_one = max(split_discrepancies, default=ZERO)
    root = ev(e.support_mask)
    halving_ok = all(
        (ev(nodes[i - 1]) - root.scale(Fraction(1, 1 << m))).norm() <= epsilon_one
        for m in range(realized + 1)
        for i in range(1 << m, 1 << (m + 1))
    )
    return DisjointTree(
        e, tuple(nodes), realized, depth, gammas, gaps, epsilon_one, halving_ok, tuple(notices)
    )


def rounding_decomposition(
    op: OrthAddOperator, e: LatVec, level_m: int, tree: Optional[DisjointTree] = None
) -> DecompositionWitness:
    """Round lambda_i = 1/2 over the level-m leaves: f1 = leaves with theta 0, f2 = theta 1."""
    tree = tree or balanced_tree(op, e, level_m)
    if tree.depth < level_m:
        raise ContractError(f"balanced tree reaches depth {tree.depth} < {level_m}")
    leaves = tree.level(level_m)
    vectors = [op.apply(e.restrict(leaf)) for leaf in leaves]
    witness = round_coefficients(vectors, [Fraction(1, 2)] * len(leaves))
    first = second = 0
    for leaf, theta in zip(leaves, witness.theta):
        if theta:
            second |= leaf
        else:
            first |= leaf
    value = discrepancy(op, e.restrict(first), e.restrict(second))
    gamma = tree.gammas[level_m]
    bound = op.output_space.size * gamma
    if value > bound:
        raise InvariantError(f"rounding decomposition {value} exceeds dim(F)·gamma = {bound}")
    return DecompositionWitness(
        e, first, second, value, bound,
        stats={"level": level_m, "gamma": gamma, "theta": list(witness.theta), "rounding": witness.achieved},
    )


def lambda_to_narrow_pipeline(
    op: OrthAddOperator, x: LatVec, target_bound: Optional[Fraction] = None, mode: str = "auto"
) -> DecompositionWitness:
    """Alternate the blocks of a small-alpha partition along a signed permutation.

    For T >= 0 the finest partition attains lambda_T(x); its images z_i = T(x_i) feed the
    permutation lemma and ||T(y1) - T(y2)||^2 <= 2·alpha·K.
    """
    if not _positive_on(op, x):
        raise ContractError("the pipeline needs T >= 0 on the fragments of x")
    if op.apply(x).is_zero():
        return DecompositionWitness(
            x, x.support_mask, 0, ZERO, ZERO, stats={"trivial": True, "meets_target": True}
        )
    blocks = [1 << a for a in x.support()]
    if len(blocks) % 2:
        blocks.append(0)
    z = [op.apply(x.restrict(b)) for b in blocks]
    if mode == "auto":
        mode = "brute" if len(z) <= config.PERMUTATION_BRUTE_CAP else "greedy_verified"
    witness = signed_permutation(z, mode)
    if not witness.certified:
        raise CapExceededError(
            "signed permutation", len(z), config.PERMUTATION_BRUTE_CAP, "greedy ordering could not be certified"
        )
    first = second = 0
    for position, index in enumerate(witness.tau, start=1):
        if position % 2:
            first |= blocks[index - 1]
        else:
            second |= blocks[index - 1]
    value = discrepancy(op, x.restrict(first), x.restrict(second))
    if value * value > witness.bound_sq:
        raise InvariantError(f"pipeline discrepancy^2 {value * value} exceeds 2·alpha·K = {witness.bound_sq}")
    stats = {
        "alpha": witness.alpha,
        "k": witness.k,
        "bound_squared": witness.bound_sq,
        "blocks": len(blocks),
        "mode": witness.mode,
        "tau": list(witness.tau),
        "meets_target": target_bound is None or value <= target_bound,
    }
    return DecompositionWitness(x, first, second, value, stats=stats)


# --- Refinement curves ---


@dataclass(frozen=True)
class DeltaCurve:
    levels: tuple[int, ...]
    deltas: tuple[Fraction, ...]
    masks: tuple[int, ...]
    baseline: Fraction
    trend: str
    notices: tuple[str, ...] = ()


def _classify_trend(baseline: Fraction, last: Optional[Fraction]) -> str:
    # reporting heuristic only
    if last is not None and (last == 0 or last < baseline / 2):
        return "decaying"
    return "stalled"


def refinement_diagnostics(
    family: Family, e: LatVec, levels: Optional[Iterable[int]] = None, strategy: str = "frontier"
) -> DeltaCurve:
    """delta_n = min discrepancy of T_n at e embedded into level n."""
    chain = family.chain
    if chain.level_of(e.space) != 0:
        raise ContractError("e must live on level 0 of the family's chain")
    wanted = sorted(set(range(chain.depth + 1) if levels is None else levels))
    for n in wanted:
        if not 0 <= n <= chain.depth:
            raise ContractError(f"level out of range: {n} not in 0..{chain.depth}")
    base_witness = min_discrepancy(family.at_level(0), e, strategy)
    baseline = base_witness.discrepancy
    done_levels, deltas, masks, notices = [], [], [], []
    for n in wanted:
        try:
            witness = base_witness if n == 0 else min_discrepancy(
                family.at_level(n), embed_to(e, chain, n), strategy
            )
        except CapExceededError as exc:
            notices.append(f"curve truncated at level {n}: {exc}")
            logger.warning("refinement curve truncated at level %d: %s", n, exc)
            break
        done_levels.append(n)
        deltas.append(witness.discrepancy)
        masks.append(witness.first)
    trend = _classify_trend(baseline, deltas[-1] if deltas else None)
    return DeltaCurve(tuple(done_levels), tuple(deltas), tuple(masks), baseline, trend, tuple(notices))


@dataclass(frozen=True)
class DominationReport:
    operator_curve: DeltaCurve
    modulus_curve: DeltaCurve
    zero_flags: tuple[tuple[int, bool, bool], ...]
    closed_form: CheckReport


def modulus_family(family: KernelFamily) -> BuiltinFamily:
    """|T_n| at every level, from the matrix form of each level operator."""
    chain = family.chain
    return BuiltinFamily(
        chain, "modulus", lambda space: modulus_matrix(family.as_matrix(chain.level_of(space)))
    )


def domination_diagnostic(
    family: KernelFamily, e: LatVec, levels: Optional[Iterable[int]] = None, strategy: str = "frontier"
) -> DominationReport:
    """delta_n(T) and delta_n(|T|) side by side; reported, never asserted per level."""
    if not isinstance(family, KernelFamily):
        raise ContractError("domination diagnostics need a kernel family (matrix form at each level)")
    levels = None if levels is None else list(levels)
    curve_t = refinement_diagnostics(family, e, levels, strategy)
    curve_abs = refinement_diagnostics(modulus_family(family), e, levels, strategy)
    abs_by_level = dict(zip(curve_abs.levels, curve_abs.deltas))
    flags = tuple(
        (n, d == 0, abs_by_level[n] == 0)
        for n, d in zip(curve_t.levels, curve_t.deltas)
        if n in abs_by_level
    )
    check = CheckReport("modulus_closed_form")
    chain = family.chain
    for n in curve_t.levels:
        en = embed_to(e, chain, n)
        if popcount(en.support_mask) > MODULUS_CROSSCHECK_ATOMS:
            check.notice(f"level {n}: support too large for the partition oracle, skipped")
            continue
        check.checked += 1
        closed = modulus_matrix(family.as_matrix(n)).apply(en)
        brute = modulus(family.at_level(n), en).value
        if closed != brute:
            check.fail(level=n, closed=closed, brute=brute)
    return DominationReport(curve_t, curve_abs, flags, check)


# --- L1 identities ---


def verify_l1_partition_bound(
    op: OrthAddOperator,
    x: LatVec,
    partition: Partition,
    splits: Sequence[int],
    epsilon: Fraction,
) -> CheckReport:
    """If ||(|T|(x) - sum |T(y_i)|)|| < eps then the split defect sum is < eps too.

    splits[i] is the mask of u_i inside block y_i; v_i = y_i - u_i. The stronger
    rhs <= lhs is recorded as well.
    """
    if partition.base != x:
        raise ContractError("partition is not a partition of x")
    if len(splits) != len(partition.blocks):
        raise ContractError(f"{len(splits)} splits for {len(partition.blocks)} blocks")
    for i, (block, u) in enumerate(zip(partition.blocks, splits)):
        if u & ~block:
            raise ContractError(f"split {i} is not inside block {i}")
    space = op.output_space

    def defect(mask: int) -> Fraction:
        y = x.restrict(mask)
        return (modulus_value(op, y) - absolute(op.apply(y))).norm()

    lhs = (
        modulus_value(op, x) - total((absolute(op.apply(y)) for y in partition.values()), space)
    ).norm()
    rhs = sum((defect(u) + defect(block & ~u) for block, u in zip(partition.blocks, splits)), ZERO)
    hypothesis, conclusion = lhs < epsilon, rhs < epsilon
    report = CheckReport("l1_partition_bound", checked=1)
    report.values.update(
        lhs=lhs, rhs=rhs, hypothesis=hypothesis, conclusion=conclusion, strong_form=rhs <= lhs
    )
    if hypothesis and not conclusion:
        report.fail(reason="hypothesis holds but conclusion fails", lhs=lhs, rhs=rhs)
    if rhs > lhs:
        report.fail(reason="split defect exceeds partition defect", lhs=lhs, rhs=rhs)
    return report


def l1_identity_check(f: LatVec, g: LatVec) -> CheckReport:
    """||f - g|| = |||f| - |g||| + ||f|| + ||g|| - ||f + g||."""
    lhs = (f - g).norm()
    rhs = (absolute(f) - absolute(g)).norm() + f.norm() + g.norm() - (f + g).norm()
    report = CheckReport("l1_identity", checked=1)
    report.values.update(lhs=lhs, rhs=rhs)
    if lhs != rhs:
        report.fail(f=f, g=g, lhs=lhs, rhs=rhs)
    return report


# --- Disjointness preserving minorants ---


@dataclass(frozen=True, eq=False)
class DPMinorant(OrthAddOperator):
    """S = S4∘P_e with S4 = sup over fragments of S3, S3 = T ∧ S2, S2 built from psi.

    psi maps the fragment algebra of e (bits = support atoms of e, ascending) into the fragment
    algebra of f (bits = support atoms of f).
    """

    kind: ClassVar[str] = "dp_minorant"
    op: OrthAddOperator
    e: LatVec
    f: LatVec
    psi: BoolMap

    def __post_init__(self) -> None:
        object.__setattr__(self, "_from", list(self.e.support()))
        object.__setattr__(self, "_to", list(self.f.support()))
        object.__setattr__(
            self, "_s2_op", FunctionOperator(self.input_space, self.output_space, self.s2, "S2")
        )
        object.__setattr__(
            self, "_s3_op", FunctionOperator(self.input_space, self.output_space, self.s3, "S3")
        )

    @property
    def input_space(self):
        return self.op.input_space

    @property
    def output_space(self):
        return self.op.output_space

    def psi_value(self, mask: int) -> LatVec:
        """psi on the fragment of e with the given atom mask, as a fragment of f."""
        return self.f.restrict(spread(self.psi(compress(mask, self._from)), self._to))

    def s2(self, x: LatVec) -> LatVec:
        """sum over a in supp(e) of (|x_a| / e_a)·psi(atom a)."""
        out = self.output_space.zero()
        for a in self._from:
            if x.coeffs[a]:
                out = out + self.psi_value(1 << a).scale(abs(x.coeffs[a]) / self.e.coeffs[a])
        return out

    def s2_grid(self, x: LatVec) -> LatVec:
        """sup of S1(y) over e-step y with y_a in {0, ±|x_a|/2, ±|x_a|}."""
        atoms = [a for a in self._from if x.coeffs[a]]
        best = self.output_space.zero()
        choices = [
            (abs(x.coeffs[a]), abs(x.coeffs[a]) / 2, ZERO, -abs(x.coeffs[a]) / 2, -abs(x.coeffs[a]))
            for a in atoms
        ]
        for combo in itertools.product(*choices):
            value = total(
                (self.psi_value(1 << a).scale(abs(c) / self.e.coeffs[a]) for a, c in zip(atoms, combo)),
                self.output_space,
            )
            best = join(best, value)
        return best

    def s3(self, x: LatVec) -> LatVec:
        return op_meet(self.op, self._s2_op, x).value

    def s4(self, x: LatVec) -> LatVec:
        return pos_part_op(self._s3_op, x).value

    def _evaluate(self, x: LatVec) -> LatVec:
        return self.s4(band_projection(self.e, x))

    def as_matrix(self) -> UrysonMatrix:
        """Closed form of S for a matrix T: entries max(min(phi_ij, c_ij|r|), 0)."""
        if not isinstance(self.op, UrysonMatrix):
            raise ContractError("the matrix form of S needs a uryson_matrix operator")
        columns = {a: self.psi_value(1 << a) for a in self._from}
        rows = []
        for i, row in enumerate(self.op.entries):
            entries = []
            for j, phi in enumerate(row):
                c = columns[j].coeffs[i] / self.e.coeffs[j] if j in columns else ZERO
                if c == 0:
                    entries.append(ZERO_FUNC)
                else:
                    entries.append(PointwiseMax(PointwiseMin(phi, AbsPower(c, 1)), ZERO_FUNC))
            rows.append(tuple(entries))
        return UrysonMatrix(self.input_space, self.output_space, tuple(rows))


@dataclass(frozen=True)
class DPWitness:
    minorant: DPMinorant
    psi: BoolMap
    f: LatVec
    s_of_e: LatVec
    report: CheckReport
    matrix: Optional[UrysonMatrix] = None


def _check_psi_below_t(op: OrthAddOperator, s: DPMinorant) -> None:
    e = s.e
    for counter in range(1 << len(s._from)):
        mask = spread(counter, s._from)
        value, bound = s.psi_value(mask), op.apply(e.restrict(mask))
        if not value <= bound:
            raise ContractError(
                f"psi exceeds T at fragment {list(bits_of(mask))}: {value} vs {bound}"
            )


def dp_minorant_from_homomorphism(
    op: OrthAddOperator, e: LatVec, f: LatVec, psi: BoolMap, seed: Optional[int] = None
) -> DPWitness:
    """Build S from psi and verify it: DP, 0 <= S <= T on the grid, S = psi on fragments of e."""
    if not e.is_positive() or not f.is_positive():
        raise ContractError("e and f must be >= 0")
    if f.space != op.output_space:
        raise StructuralError("f is not on the operator's output space")
    if psi.domain.size != popcount(e.support_mask) or psi.codomain.size != popcount(f.support_mask):
        raise ContractError("psi must map the fragment algebra of e into that of f")
    if classify_map(psi).kind != "homomorphism":
        raise ContractError("psi is not a Boolean homomorphism")
    if not _positive_on(op, e):
        raise ContractError("the DP minorant construction needs T >= 0 on the fragments of e")
    s = DPMinorant(op, e, f, psi)
    _check_psi_below_t(op, s)

    report = CheckReport("dp_minorant")
    matrix = s.as_matrix() if isinstance(op, UrysonMatrix) else None
    if matrix is not None:
        dp = is_disjointness_preserving(matrix, "exact_matrix")
        report.values["dp_mode"] = "exact_matrix"
    else:
        dp = is_disjointness_preserving(s, "sampled", trials=20, seed=seed)
        report.values["dp_mode"] = "sampled"
    report.values["disjointness_preserving"] = dp.ok
    if not dp.ok:
        report.fail(reason="S is not disjointness preserving", details=dp.counterexamples[:1])

    for counter in range(1 << len(s._from)):
        mask = spread(counter, s._from)
        report.checked += 1
        got, want = s.apply(e.restrict(mask)), s.psi_value(mask)
        if got != want:
            report.fail(reason="S differs from psi on a fragment", fragment=list(bits_of(mask)), got=got, want=want)

    rng = make_rng(seed)
    points = grid_points(op.input_space, rng)
    s2_skipped = 0
    for index, x in enumerate(points):
        report.checked += 1
        literal = index < LITERAL_CHAIN_POINTS or matrix is None
        value = s.apply(x) if literal else matrix.apply(x)
        if literal and matrix is not None and matrix.apply(x) != value:
            report.fail(reason="matrix form disagrees with the literal chain", x=x)
        if not value.is_positive() or not value <= op.apply(x):
            report.fail(reason="0 <= S(x) <= T(x) fails", x=x, s=value)
        if popcount(x.support_mask & e.support_mask) <= 4:
            if s.s2(x) != s.s2_grid(x):
                report.fail(reason="closed-form S2 differs from the grid sup", x=x)
        else:
            s2_skipped += 1
    if s2_skipped:
        report.notice(f"S2 grid comparison skipped on {s2_skipped} points with large support")

    s_of_e = s.apply(e)
    report.values.update(grid_points=len(points), s_of_e=s_of_e)
    if s_of_e != s.psi_value(e.support_mask):
        report.fail(reason="S(e) differs from psi(e)", s_of_e=s_of_e)
    return DPWitness(s, psi, f, s_of_e, report, matrix)


def _join_map_table(op: OrthAddOperator, e: LatVec, f: LatVec) -> dict[int, int]:
    """phi = 𝟙_f ∘ lambda_T on the fragments of e, in compressed masks."""
    positions, targets = list(e.support()), list(f.support())
    space = op.output_space
    atom_values = {a: op.apply(e.restrict(1 << a)) for a in positions}
    table = {}
    for counter in range(1 << len(positions)):
        mask = spread(counter, positions)
        # lambda_T of a fragment of e, by the finest shortcut (T >= 0 here)
        lam = sup_of((atom_values[a] for a in bits_of(mask)), space)
        table[counter] = compress(one_f(f, lam).support_mask, targets)
    return table


def dp_witness_extract(
    op: OrthAddOperator, e: LatVec, seed: Optional[int] = None
) -> Optional[DPWitness]:
    """DP minorant S with S(e) = lambda_T(e) when lambda_T(e) > 0, else None."""
    if not e.is_positive():
        raise ContractError("e must be >= 0")
    if not _positive_on(op, e):
        raise ContractError("dp extraction needs T >= 0 on the fragments of e")
    f = lambda_ES(op, e, "finest").value
    if f.is_zero():
        logger.info("lambda_T(e) = 0: no DP witness from this e")
        return None
    k, m = popcount(e.support_mask), popcount(f.support_mask)
    domain, codomain = FiniteBoolAlg(k), FiniteBoolAlg(m)
    phi = BoolMap(domain, codomain, _join_map_table(op, e, f))
    kind = classify_map(phi)
    if not kind.join_preserving:
        raise InvariantError(f"𝟙_f ∘ lambda_T is not join-preserving: {kind.violation}")
    sub = trivial_subalgebra(k)
    psi0 = BoolMap(sub, codomain, {0: 0, sub.top: codomain.top})
    try:
        psi = monteiro_extend(phi, sub, psi0)
    except InfeasibleError as exc:
        raise InvariantError(f"extension below 𝟙_f ∘ lambda_T failed: {exc} {exc.core}") from exc
    witness = dp_minorant_from_homomorphism(op, e, f, psi, seed)
    if witness.s_of_e != f or f.is_zero():
        raise InvariantError(f"S(e) = {witness.s_of_e} differs from lambda_T(e) = {f}")
    if not f >= witness.s_of_e:
        raise InvariantError("lambda_T(e) >= S(e) fails")
    witness.report.values["phi_kind"] = kind.kind
    witness.report.merge(fragment_algebra_check(e))
    return witness
