from fractions import Fraction

import numpy as np
import pytest

import storage
from errors import ContractError
from suite import (
    check_contrast_curves,
    check_l1,
    check_monteiro,
    random_scalar_func,
    run_suite,
)

PROPERTIES = {
    "modulus_oracle",
    "lattice_identities",
    "rounding",
    "signed_permutation",
    "lambda",
    "pipeline",
    "contrast_curves",
    "dp_extraction",
    "one_f_homomorphism",
    "monteiro_extension",
    "l1",
}


@pytest.mark.parametrize("seed", [0, 7, 2024])
def test_smoke_suite_passes_and_is_deterministic(seed):
    first = run_suite(seed, "smoke")
    assert first["ok"], [name for name, r in first["properties"].items() if not r.ok]
    assert set(first["properties"]) == PROPERTIES
    assert storage.dump_json(first) == storage.dump_json(run_suite(seed, "smoke"))


def test_suite_contracts():
    with pytest.raises(ContractError, match="scale"):
        run_suite(1, "huge")
    with pytest.raises(ContractError, match="seed"):
        run_suite(-1, "smoke")


def test_contrast_curves_are_seed_free():
    report = check_contrast_curves(2)
    assert report.ok
    assert report.checked > 0


def test_individual_checks():
    assert check_l1(np.random.default_rng(3), 10, 5).ok
    assert check_monteiro(np.random.default_rng(3), 4).ok


def test_positive_scalar_funcs_stay_nonnegative():
    rng = np.random.default_rng(11)
    points = [Fraction(k, 2) for k in range(-4, 5)]
    for _ in range(20):
        f = random_scalar_func(rng, positive=True)
        assert f(Fraction(0)) == 0
        assert all(f(r) >= 0 for r in points)
