"""
Conversions between trace time, slots and region geometry.

Trace times are seconds from the start of the trace; slot T covers
[T * L, (T + 1) * L) for slot length L.
"""
# Standard library imports
from typing import Any, NewType, Tuple

# Application-specific imports
from config.constants import REGION_SIDE_M, SECONDS_PER_WEEK

# Custom Types
Seconds = NewType('Seconds', float)
SlotIndex = NewType('SlotIndex', int)
Metres = NewType('Metres', float)


def slot_of(time_s: Seconds, slot_length_s: Seconds) -> SlotIndex:
    """
    Slot containing a trace time.

    Args:
        time_s: Seconds since the start of the trace
        slot_length_s: Slot length in seconds

    Returns:
        The slot index (a time on a boundary belongs to the later slot)
    """
    return SlotIndex(int(time_s // slot_length_s))


def slot_start(slot: SlotIndex, slot_length_s: Seconds) -> Seconds:
    return Seconds(slot * slot_length_s)


def slots_per_week(slot_length_s: Seconds) -> int:
    return max(1, int(round(SECONDS_PER_WEEK / slot_length_s)))


def grid_cell_centre(column: Any, row: Any, side_m: Metres = REGION_SIDE_M) -> Tuple[Any, Any]:
    """Centre (x, y) in metres of grid cells of side `side_m`; accepts scalars or numpy arrays."""
    return ((column + 0.5) * side_m, (row + 0.5) * side_m)
