"""Time-tag streams and inter-arrival histograms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DomainError

FS_PER_PS = 1000


def ps_to_fs(value_ps: float) -> int:
    """Convert picoseconds to an exact integer number of femtoseconds."""
    fs = round(value_ps * FS_PER_PS)
    if abs(fs - value_ps * FS_PER_PS) > 1e-6 * max(1.0, abs(fs)):
        raise DomainError(f"{value_ps} ps is not a whole number of femtoseconds")
    return int(fs)


@dataclass(frozen=True)
class TimeTagStream:
    """Detection timestamps in integer ticks of ``tick_resolution_fs`` femtoseconds."""

    ticks: np.ndarray
    tick_resolution_fs: int

    def __post_init__(self):
        ticks = np.ascontiguousarray(self.ticks, dtype=np.uint64)
        object.__setattr__(self, "ticks", ticks)
        if int(self.tick_resolution_fs) <= 0:
            raise DomainError("tick resolution must be > 0 fs")
        object.__setattr__(self, "tick_resolution_fs", int(self.tick_resolution_fs))

    def __len__(self):
        return len(self.ticks)

    def check_monotonic(self):
        bad = first_non_increasing(self.ticks)
        if bad is not None:
            raise DataError(f"tick {bad} does not exceed its predecessor", index=bad)


def first_non_increasing(ticks: np.ndarray):
    """Index of the first tick not strictly greater than its predecessor, or None."""
    if len(ticks) < 2:
        return None
    bad = np.flatnonzero(ticks[1:] <= ticks[:-1])
    return int(bad[0]) + 1 if len(bad) else None


@dataclass
class InterArrivalHistogram:
    """Counts of consecutive-event waiting times.

    ``counts[b - 1]`` holds bin ``b`` covering ``[(b-1) w, b w)`` with
    ``w = bin_width`` (ps).  ``slot_offset`` is the number of leading bins
    that precede live slot 1, so bin ``b`` is live slot ``b - slot_offset``.
    Use ``dead_slots`` for continuous-time data and ``dead_slots + 1`` for
    slot-lattice data where an event in live slot ``m`` is recorded at the
    slot's end.
    """

    bin_width: int
    counts: np.ndarray
    total_intervals: int
    range_max: int
    overflow: int = 0
    slot_offset: int = 0

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if np.any(self.counts < 0):
            raise DataError("histogram counts must be non-negative")
        if int(self.counts.sum()) + self.overflow > self.total_intervals:
            raise DataError("bin counts plus overflow exceed total_intervals")

    @property
    def n_bins(self) -> int:
        return len(self.counts)

    def bin_index(self) -> np.ndarray:
        return np.arange(1, self.n_bins + 1)

    def slot_index(self) -> np.ndarray:
        return self.bin_index() - self.slot_offset

    def bin_lo(self) -> np.ndarray:
        return (self.bin_index() - 1) * self.bin_width

    def bin_hi(self) -> np.ndarray:
        return self.bin_index() * self.bin_width

    def pmf_estimate(self) -> np.ndarray:
        if self.total_intervals == 0:
            return np.zeros(self.n_bins)
        return self.counts / self.total_intervals

    def merged(self, other: InterArrivalHistogram) -> InterArrivalHistogram:
        if (other.bin_width, other.range_max, other.slot_offset) != (
                self.bin_width, self.range_max, self.slot_offset):
            raise DomainError("histograms with different binning cannot be merged")
        return InterArrivalHistogram(self.bin_width, self.counts + other.counts,
                                     self.total_intervals + other.total_intervals,
                                     self.range_max, self.overflow + other.overflow,
                                     self.slot_offset)

    def __eq__(self, other):
        if not isinstance(other, InterArrivalHistogram):
            return NotImplemented
        return (self.bin_width == other.bin_width and self.range_max == other.range_max
                and self.total_intervals == other.total_intervals
                and self.overflow == other.overflow and self.slot_offset == other.slot_offset
                and np.array_equal(self.counts, other.counts))
