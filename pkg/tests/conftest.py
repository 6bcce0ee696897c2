import json
from fractions import Fraction

import pytest
from hypothesis import strategies as st

from lattice import LatVec, MeasureSpace
from operators import AbsPower, Polynomial, Threshold, UrysonMatrix, ZERO_FUNC

rationals = st.fractions(min_value=-3, max_value=3, max_denominator=4)
positive_rationals = st.fractions(min_value=0, max_value=3, max_denominator=4)
weights = st.sampled_from([Fraction(1, 2), Fraction(1), Fraction(2), Fraction(1, 3)])


@st.composite
def spaces(draw, min_size=1, max_size=4):
    size = draw(st.integers(min_size, max_size))
    return MeasureSpace(tuple(draw(weights) for _ in range(size)))


@st.composite
def vectors(draw, space, positive=False):
    elems = positive_rationals if positive else rationals
    return LatVec(space, tuple(draw(elems) for _ in range(space.size)))


@st.composite
def space_and_vectors(draw, count=1, positive=False, min_size=1, max_size=4):
    space = draw(spaces(min_size, max_size))
    return (space, *(draw(vectors(space, positive)) for _ in range(count)))


@st.composite
def scalar_funcs(draw, positive=False):
    coeff = draw(positive_rationals if positive else rationals)
    kind = draw(st.sampled_from(["zero", "poly", "abs_power", "threshold"]))
    if kind == "zero":
        return ZERO_FUNC
    if kind == "poly":
        return Polynomial((0, 0, abs(coeff))) if positive else Polynomial((0, coeff, draw(rationals)))
    if kind == "abs_power":
        return AbsPower(coeff, draw(st.sampled_from([1, 2])))
    return Threshold(coeff)


@st.composite
def uryson_matrices(draw, positive=False, max_in=4, max_out=3):
    n_in = draw(st.integers(1, max_in))
    n_out = draw(st.integers(1, max_out))
    rows = [[draw(scalar_funcs(positive)) for _ in range(n_in)] for _ in range(n_out)]
    return UrysonMatrix.from_rows(rows)


@st.composite
def matrix_and_vector(draw, positive=False, max_in=4, max_out=3):
    op = draw(uryson_matrices(positive, max_in, max_out))
    return op, draw(vectors(op.input_space, positive))


@pytest.fixture
def write_json(tmp_path):
    """Write a JSON document under tmp_path and return its path as a string."""

    def write(name, data):
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return str(path)

    return write
