"""Seeded generators of rational test data: vectors, disjoint pairs and grid points."""

import itertools
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

import config
from lattice import LatVec, MeasureSpace


def make_rng(seed: Optional[int] = None) -> np.random.Generator:
    return np.random.default_rng(config.DEFAULT_SEED if seed is None else seed)


def pick(rng: np.random.Generator, items: Sequence):
    return items[int(rng.integers(len(items)))]


def random_rational(
    rng: np.random.Generator, grid: Sequence[Fraction] = config.RATIONAL_GRID, nonzero: bool = False
) -> Fraction:
    choices = [q for q in grid if q != 0] if nonzero else list(grid)
    return pick(rng, choices)


def random_mask(rng: np.random.Generator, size: int, density: float = 0.6) -> int:
    mask = 0
    for i in range(size):
        if rng.random() < density:
            mask |= 1 << i
    return mask


def random_vector(
    rng: np.random.Generator,
    space: MeasureSpace,
    density: float = 0.7,
    positive: bool = False,
    grid: Sequence[Fraction] = config.RATIONAL_GRID,
) -> LatVec:
    """Random vector with coefficients from `grid`; nonzero on roughly `density` of the atoms."""
    coeffs = []
    for _ in range(space.size):
        if rng.random() < density:
            q = random_rational(rng, grid, nonzero=True)
            coeffs.append(abs(q) if positive else q)
        else:
            coeffs.append(Fraction(0))
    return LatVec(space, tuple(coeffs))


def random_disjoint_pair(
    rng: np.random.Generator, space: MeasureSpace, positive: bool = False
) -> tuple[LatVec, LatVec]:
    """A random vector split along a random mask into two disjoint parts."""
    base = random_vector(rng, space, positive=positive)
    mask = random_mask(rng, space.size, 0.5)
    return base.restrict(mask), base.restrict(space.full_mask & ~mask)


def grid_points(
    space: MeasureSpace,
    rng: Optional[np.random.Generator] = None,
    limit: Optional[int] = None,
    grid: Sequence[Fraction] = config.RATIONAL_GRID,
    positive: bool = False,
) -> list[LatVec]:
    """The full coefficient grid on `space`, or a seeded sample of `limit` points from it."""
    limit = config.GRID_SAMPLE_LIMIT if limit is None else limit
    values = sorted({abs(q) for q in grid}) if positive else list(grid)
    if len(values) ** space.size <= limit:
        return [LatVec(space, combo) for combo in itertools.product(values, repeat=space.size)]
    rng = make_rng() if rng is None else rng
    points = [space.zero()]
    while len(points) < limit:
        points.append(LatVec(space, tuple(pick(rng, values) for _ in range(space.size))))
    return points
