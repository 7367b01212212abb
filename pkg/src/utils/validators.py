"""
Input validation functions.
Checks arguments before any numerical work starts so failures carry
the offending field name instead of surfacing as NaNs downstream.
"""

import math
from typing import Iterable, Sequence

import numpy as np

from src.utils.errors import InvalidParamsError


def validate_positive(value: float, field: str) -> float:
    """
    Validate a strictly positive finite real.

    Args:
        value: Value to check
        field: Parameter name reported on failure

    Returns:
        The value as float

    Raises:
        InvalidParamsError: If value is not finite or not > 0
    """
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise InvalidParamsError(
            f"{field} must be a positive finite number, got {value}",
            data={'field': field, 'value': value}
        )
    return value


def validate_nonnegative(value: float, field: str) -> float:
    """
    Validate a nonnegative finite real.

    Raises:
        InvalidParamsError: If value is negative or not finite
    """
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise InvalidParamsError(
            f"{field} must be a nonnegative finite number, got {value}",
            data={'field': field, 'value': value}
        )
    return value


def validate_count(value: int, field: str, minimum: int = 1) -> int:
    """
    Validate an integer count.

    Args:
        value: Count to check
        field: Parameter name reported on failure
        minimum: Smallest accepted value

    Returns:
        The count as int

    Raises:
        InvalidParamsError: If value is not an integer >= minimum
    """
    if isinstance(value, bool) or int(value) != value or value < minimum:
        raise InvalidParamsError(
            f"{field} must be an integer >= {minimum}, got {value}",
            data={'field': field, 'value': value, 'minimum': minimum}
        )
    return int(value)


def validate_finite_array(array, field: str, ndim: int) -> np.ndarray:
    """
    Validate a finite float array of the given rank.

    Raises:
        InvalidParamsError: If shape rank differs or entries are not finite
    """
    arr = np.asarray(array, dtype=float)
    if arr.ndim != ndim:
        raise InvalidParamsError(
            f"{field} must be {ndim}-dimensional, got shape {arr.shape}",
            data={'field': field, 'shape': list(arr.shape)}
        )
    if not np.all(np.isfinite(arr)):
        raise InvalidParamsError(
            f"{field} contains non-finite entries",
            data={'field': field}
        )
    return arr


def validate_labels(labels) -> np.ndarray:
    """
    Validate a label vector with entries exactly +1 or -1.

    Raises:
        InvalidParamsError: If any label is not ±1
    """
    y = validate_finite_array(labels, 'labels', ndim=1)
    bad = np.flatnonzero(np.abs(y) != 1.0)
    if bad.size:
        raise InvalidParamsError(
            f"labels must be +1 or -1; {bad.size} invalid entries",
            data={'field': 'labels', 'first_invalid_index': int(bad[0])}
        )
    return y


def validate_choice(value: str, allowed: Sequence[str], field: str = "operation") -> str:
    """
    Validate a name against an allowed set.

    Args:
        value: Name to validate
        allowed: Accepted names
        field: Parameter name reported on failure

    Returns:
        Normalized (lowercase, stripped) name

    Raises:
        InvalidParamsError: If the name is not allowed
    """
    if not value:
        raise InvalidParamsError(f"{field} cannot be empty", data={'field': field})

    value = value.lower().strip()

    if value not in allowed:
        raise InvalidParamsError(
            f"Invalid {field}: {value}. Allowed: {', '.join(allowed)}",
            data={'field': field, 'value': value, 'allowed': list(allowed)}
        )

    return value


def validate_grid(values: Iterable[float], field: str, allow_zero: bool = True) -> list:
    """
    Validate a nonempty grid of nonnegative (or positive) reals.

    Raises:
        InvalidParamsError: If the grid is empty or contains invalid entries
    """
    grid = [float(v) for v in values]
    if not grid:
        raise InvalidParamsError(f"{field} must be nonempty", data={'field': field})
    check = validate_nonnegative if allow_zero else validate_positive
    for v in grid:
        check(v, field)
    return grid
