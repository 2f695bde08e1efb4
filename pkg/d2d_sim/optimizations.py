"""
Performance utilities for the simulator.

Phase timings are collected by the `timed` decorator into a module-level
`PerformanceMonitor`; the CLI embeds the report in the run manifest.
"""

import functools
import logging
import time
from contextlib import contextmanager
from typing import Any, Callable, Dict, Iterator, TypeVar

logger = logging.getLogger(__name__)

R = TypeVar('R')


class PerformanceMonitor:
    """Accumulates wall-clock time and call counts per named phase."""

    def __init__(self):
        self.timings: Dict[str, float] = {}
        self.call_counts: Dict[str, int] = {}

    def reset(self) -> None:
        self.timings = {}
        self.call_counts = {}

    def record(self, name: str, elapsed: float) -> None:
        self.timings[name] = self.timings.get(name, 0.0) + elapsed
        self.call_counts[name] = self.call_counts.get(name, 0) + 1

    def get_report(self) -> Dict[str, Any]:
        """Seconds and call counts per phase, plus the total over all phases."""
        return {
            'timings': {name: round(seconds, 4) for name, seconds in self.timings.items()},
            'call_counts': dict(self.call_counts),
            'total_time': round(sum(self.timings.values()), 4),
        }

    def log_report(self, level: int = logging.DEBUG) -> None:
        """Log the phases sorted by total time spent."""
        for name in sorted(self.timings, key=lambda k: self.timings[k], reverse=True):
            calls = self.call_counts.get(name, 0)
            logger.log(level, f"{name}: {self.timings[name]:.4f}s over {calls} call(s)")


performance_monitor = PerformanceMonitor()


def timed(func: Callable[..., R]) -> Callable[..., R]:
    """Record the wall-clock time of every call under the function's qualified name."""
    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> R:
        start_time = time.perf_counter()
        try:
            return func(*args, **kwargs)
        finally:
            performance_monitor.record(func.__qualname__, time.perf_counter() - start_time)
    return wrapper


@contextmanager
def timed_block(name: str) -> Iterator[None]:
    """Time an inline block under `name`."""
    start_time = time.perf_counter()
    try:
        yield
    finally:
        performance_monitor.record(name, time.perf_counter() - start_time)
