"""Certified rounding lemmas.

round_coefficients: given vectors x_i in a d-dimensional space and lambda_i in [0, 1],
finds theta_i in {0, 1} with ||sum (lambda_i - theta_i) x_i|| <= (d/2) max ||x_i||.

signed_permutation: given 2n vectors z_i >= 0, finds an ordering tau with
||sum (-1)^i z_tau(i)||^2 <= 2·alpha·K, alpha = ||sup z_i||, K = sum ||z_i||.
"""

import itertools
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import config
from errors import CapExceededError, ContractError, InvariantError, StructuralError
from lattice import ZERO, LatVec, MeasureSpace, sup_of, total
from utils import fractions_of

logger = logging.getLogger(__name__)

HALF = Fraction(1, 2)
EXHAUSTIVE_ROUNDING_LIMIT = 20


@dataclass(frozen=True)
class RoundingWitness:
    theta: tuple[int, ...]
    achieved: Fraction
    bound: Fraction
    steps: int
    exhaustive: bool = False


@dataclass(frozen=True)
class PermutationWitness:
    tau: tuple[int, ...]  # 1-based
    achieved_sq: Fraction
    bound_sq: Fraction
    alpha: Fraction
    k: Fraction
    mode: str
    certified: bool = True


def _common_space(vectors: Sequence[LatVec]) -> MeasureSpace:
    space = vectors[0].space
    for v in vectors[1:]:
        if v.space != space:
            raise StructuralError("all vectors must live on one space")
    return space


def nullspace_vector(rows: list[list[Fraction]], ncols: int) -> Optional[list[Fraction]]:
    """A nonzero kernel vector by exact Gauss-Jordan elimination; the first free column is 1."""
    m = [list(r) for r in rows]
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        if r == len(m):
            break
        pivot = next((i for i in range(r, len(m)) if m[i][c] != 0), None)
        if pivot is None:
            continue
        m[r], m[pivot] = m[pivot], m[r]
        pv = m[r][c]
        m[r] = [v / pv for v in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c] != 0:
                factor = m[i][c]
                m[i] = [a - factor * b for a, b in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
    free = [c for c in range(ncols) if c not in pivots]
    if not free:
        return None
    f0 = free[0]
    v = [ZERO] * ncols
    v[f0] = Fraction(1)
    for row_idx, c in enumerate(pivots):
        v[c] = -m[row_idx][f0]
    return v


def _first_hit(lam: list[Fraction], frac: list[int], v: list[Fraction], sign: int):
    """Smallest step s > 0 along sign·v that drives a coordinate to 0 or 1, and its index."""
    best, where = None, None
    for pos, i in enumerate(frac):
        vi = sign * v[pos]
        if vi > 0:
            step = (1 - lam[i]) / vi
        elif vi < 0:
            step = lam[i] / -vi
        else:
            continue
        if best is None or step < best:
            best, where = step, i
    return best, where


def _residual_norm(vectors, lambdas, theta, space) -> Fraction:
    return total(
        (v.scale(lam - t) for v, lam, t in zip(vectors, lambdas, theta)), space
    ).norm()


def round_coefficients(vectors: Sequence[LatVec], lambdas: Sequence) -> RoundingWitness:
    lambdas = fractions_of(lambdas)
    if len(vectors) != len(lambdas):
        raise ContractError(f"{len(vectors)} vectors but {len(lambdas)} coefficients")
    for i, lam in enumerate(lambdas):
        if not 0 <= lam <= 1:
            raise ContractError(f"lambda[{i}] = {lam} is outside [0, 1]")
    if not vectors:
        return RoundingWitness((), ZERO, ZERO, 0)
    space = _common_space(vectors)
    d = space.size
    lam = list(lambdas)
    steps = 0
    while True:
        frac = [i for i, value in enumerate(lam) if 0 < value < 1]
        if len(frac) <= d:
            break
        rows = [[vectors[i].coeffs[r] for i in frac] for r in range(d)]
        v = nullspace_vector(rows, len(frac))
        if v is None:
            raise InvariantError("no kernel vector although columns outnumber rows")
        up, up_at = _first_hit(lam, frac, v, 1)
        down, down_at = _first_hit(lam, frac, v, -1)
        if down < up or (down == up and down_at < up_at):
            step = -down
        else:
            step = up
        for pos, i in enumerate(frac):
            lam[i] += step * v[pos]
        steps += 1
        logger.debug("kernel walk step %d: %d fractional left", steps, len(frac) - 1)
    theta = tuple(1 if value > HALF else 0 for value in lam)
    achieved = _residual_norm(vectors, lambdas, theta, space)
    bound = Fraction(d, 2) * max(v.norm() for v in vectors)
    if achieved <= bound:
        return RoundingWitness(theta, achieved, bound, steps)
    if d * len(vectors) > EXHAUSTIVE_ROUNDING_LIMIT:
        raise InvariantError(f"rounding bound failed: {achieved} > {bound}")
    logger.warning("kernel-walk rounding missed the bound; searching theta exhaustively")
    best_theta = min(
        itertools.product((0, 1), repeat=len(vectors)),
        key=lambda t: _residual_norm(vectors, lambdas, t, space),
    )
    achieved = _residual_norm(vectors, lambdas, best_theta, space)
    if achieved > bound:
        raise InvariantError(f"no rounding meets the bound: {achieved} > {bound}")
    return RoundingWitness(tuple(best_theta), achieved, bound, steps, exhaustive=True)


# --- Signed permutation ---


def _alternating(z: Sequence[LatVec], minus: Sequence[int], space: MeasureSpace) -> LatVec:
    minus_set = set(minus)
    plus = total((v for i, v in enumerate(z) if i not in minus_set), space)
    return plus - total((z[i] for i in minus), space)


def _interleave(minus: Sequence[int], plus: Sequence[int]) -> tuple[int, ...]:
    """tau(2k-1) = minus[k], tau(2k) = plus[k], 1-based."""
    tau = []
    for m, p in zip(sorted(minus), sorted(plus)):
        tau.extend((m + 1, p + 1))
    return tuple(tau)


def _brute(z, space, bound_sq, alpha, k) -> PermutationWitness:
    n2 = len(z)
    best, best_minus = None, None
    for minus in itertools.combinations(range(n2), n2 // 2):
        value = _alternating(z, minus, space).norm()
        if best is None or value < best:
            best, best_minus = value, minus
    plus = [i for i in range(n2) if i not in best_minus]
    achieved_sq = best * best
    if achieved_sq > bound_sq:
        raise InvariantError(f"brute permutation search missed the bound: {achieved_sq} > {bound_sq}")
    return PermutationWitness(_interleave(best_minus, plus), achieved_sq, bound_sq, alpha, k, "brute")


def _greedy(z, space) -> tuple[list[int], list[int], Fraction]:
    n = len(z) // 2
    order = sorted(range(len(z)), key=lambda i: (-z[i].norm(), i))
    minus: list[int] = []
    plus: list[int] = []
    sum_minus, sum_plus = space.zero(), space.zero()
    for i in order:
        if len(minus) == n:
            to_plus = True
        elif len(plus) == n:
            to_plus = False
        else:
            to_plus = sum_plus.norm() < sum_minus.norm()
        if to_plus:
            plus.append(i)
            sum_plus = sum_plus + z[i]
        else:
            minus.append(i)
            sum_minus = sum_minus + z[i]
    return minus, plus, (sum_plus - sum_minus).norm()


def signed_permutation(
    z: Sequence[LatVec], mode: str = "brute", brute_cap: Optional[int] = None
) -> PermutationWitness:
    if mode not in ("brute", "greedy_verified"):
        raise ContractError(f"unknown permutation mode {mode!r}")
    if len(z) % 2:
        raise ContractError(f"signed permutation needs an even count, got {len(z)}")
    brute_cap = config.PERMUTATION_BRUTE_CAP if brute_cap is None else brute_cap
    if not z:
        return PermutationWitness((), ZERO, ZERO, ZERO, ZERO, mode)
    space = _common_space(z)
    for i, v in enumerate(z):
        if not v.is_positive():
            raise ContractError(f"z[{i}] must be >= 0")
    alpha = sup_of(z, space).norm()
    k = sum((v.norm() for v in z), ZERO)
    bound_sq = 2 * alpha * k
    if mode == "brute":
        if len(z) > brute_cap:
            raise CapExceededError("signed permutation (brute)", len(z), brute_cap)
        return _brute(z, space, bound_sq, alpha, k)
    minus, plus, achieved = _greedy(z, space)
    achieved_sq = achieved * achieved
    if achieved_sq <= bound_sq:
        return PermutationWitness(_interleave(minus, plus), achieved_sq, bound_sq, alpha, k, "greedy")
    if len(z) <= brute_cap:
        logger.info("greedy ordering missed the bound; falling back to brute search")
        return _brute(z, space, bound_sq, alpha, k)
    logger.warning("greedy ordering failed to certify and 2n=%d exceeds the brute cap", len(z))
    return PermutationWitness(
        _interleave(minus, plus), achieved_sq, bound_sq, alpha, k, "greedy", certified=False
    )
