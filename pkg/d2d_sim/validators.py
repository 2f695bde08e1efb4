"""
Field validators shared by the configuration models.

Each helper returns the checked value so it can end a pydantic validator,
and raises ValueError with the field name so the offending key shows up in
ConfigurationError messages.
"""
from typing import Any, Iterable, Sequence, Tuple


def validate_positive(value: float, field_name: str) -> float:
    if not value > 0:
        raise ValueError(f"{field_name} must be positive, got {value}")
    return value


def validate_non_negative(value: float, field_name: str) -> float:
    if value < 0:
        raise ValueError(f"{field_name} must be non-negative, got {value}")
    return value


def validate_in_range(value: float, field_name: str, low: float, high: float,
                      closed_low: bool = True, closed_high: bool = True) -> float:
    """
    Check `value` against the interval between `low` and `high`.

    Args:
        value: Value to check
        field_name: Name used in the error message
        low, high: Interval bounds
        closed_low, closed_high: Whether each bound belongs to the interval

    Raises:
        ValueError: Naming the interval in bracket notation, e.g. "[0.0, 1.0]"
    """
    above = value >= low if closed_low else value > low
    below = value <= high if closed_high else value < high
    if above and below:
        return value
    interval = f"{'[' if closed_low else '('}{low}, {high}{']' if closed_high else ')'}"
    raise ValueError(f"{field_name} must lie in {interval}, got {value}")


def validate_nonempty_range(value: Sequence[float], field_name: str) -> Tuple[float, float]:
    """A [low, high] pair with low <= high, returned as floats."""
    if len(value) != 2:
        raise ValueError(f"{field_name} must contain exactly two values [low, high]")
    low, high = float(value[0]), float(value[1])
    if low > high:
        raise ValueError(f"{field_name} is empty: low {low} is greater than high {high}")
    return low, high


def validate_choice(value: Any, field_name: str, allowed: Iterable[Any]) -> Any:
    allowed = tuple(allowed)
    if value not in allowed:
        raise ValueError(f"{field_name} must be one of {', '.join(map(str, allowed))}; got '{value}'")
    return value
