"""Runtime configuration: enumeration caps, seeds and logging, read from the environment."""

import os
from fractions import Fraction
from typing import Optional

from dotenv import load_dotenv

from errors import ContractError

load_dotenv()


def _int_env(name: str, default: int, minimum: int = 1) -> int:
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return default
    try:
        value = int(raw.strip())
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {raw!r}. Fix it in .env or unset it.")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}.")
    return value


FRAGMENT_CAP = _int_env("URYSON_FRAGMENT_CAP", 20)
PARTITION_CAP = _int_env("URYSON_PARTITION_CAP", 12)
PERMUTATION_BRUTE_CAP = _int_env("URYSON_PERMUTATION_BRUTE_CAP", 8, minimum=2)
FRONTIER_CAP = _int_env("URYSON_FRONTIER_CAP", 1 << 18)
BOOLEAN_CAP = _int_env("URYSON_BOOLEAN_CAP", 1 << 10)
GRID_SAMPLE_LIMIT = _int_env("URYSON_GRID_SAMPLE_LIMIT", 343)
DEFAULT_SEED = _int_env("URYSON_SEED", 7, minimum=0)
LOG_LEVEL = (os.getenv("URYSON_LOG_LEVEL") or "WARNING").strip().upper()

# Coefficients used for grid checks and random instances.
RATIONAL_GRID: tuple[Fraction, ...] = tuple(
    Fraction(v) for v in ("-2", "-1", "-1/2", "0", "1/2", "1", "2")
)


def apply_overrides(
    fragment_cap: Optional[int] = None,
    partition_cap: Optional[int] = None,
) -> None:
    """Replace caps for the current process (CLI flags)."""
    global FRAGMENT_CAP, PARTITION_CAP
    if fragment_cap is not None:
        if fragment_cap < 1:
            raise ContractError(f"--cap-fragments must be >= 1, got {fragment_cap}")
        FRAGMENT_CAP = fragment_cap
    if partition_cap is not None:
        if partition_cap < 1:
            raise ContractError(f"--cap-partitions must be >= 1, got {partition_cap}")
        PARTITION_CAP = partition_cap
