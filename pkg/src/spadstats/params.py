"""Slot-level constants of the counting model."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

PS_PER_S = 1e12


@dataclass(frozen=True)
class SlotParams:
    """Per-slot Poissonian means and the slot width.

    Parameters
    ----------
    mu_s : float
        Expected detected source photons per slot.
    mu_d : float
        Expected dark counts per slot.
    slot_width : float
        Slot duration in picoseconds.
    """

    mu_s: float
    mu_d: float
    slot_width: float

    def __post_init__(self):
        if not (self.mu_s >= 0 and self.mu_d >= 0):
            raise DomainError(f"mean counts must be >= 0, got mu_s={self.mu_s}, mu_d={self.mu_d}")
        if not (self.slot_width > 0 and math.isfinite(self.slot_width)):
            raise DomainError(f"slot_width must be > 0, got {self.slot_width}")
        if not (math.isfinite(self.mu_s) and math.isfinite(self.mu_d)):
            raise DomainError("mean counts must be finite")

    @classmethod
    def from_rates(cls, source_hz: float, dark_hz: float, slot_width: float) -> SlotParams:
        """Build from detected event rates in events per second."""
        dt = slot_width / PS_PER_S
        return cls(source_hz * dt, dark_hz * dt, slot_width)

    @classmethod
    def total(cls, mu: float, slot_width: float = 100_000.0) -> SlotParams:
        """Dark-only parameters carrying the whole Poissonian mean ``mu``."""
        return cls(0.0, mu, slot_width)

    def mu_total(self) -> float:
        return self.mu_s + self.mu_d

    def p_poisson_slot(self) -> float:
        """Probability of at least one Poissonian arrival in one slot."""
        return -math.expm1(-self.mu_total())

    def rate_hz(self) -> float:
        return self.mu_total() * PS_PER_S / self.slot_width


@dataclass(frozen=True)
class DeadTime:
    """Dead time expressed as a whole number of slots."""

    dead_slots: int = 0

    def __post_init__(self):
        if int(self.dead_slots) != self.dead_slots or self.dead_slots < 0:
            raise DomainError(f"dead_slots must be a non-negative integer, got {self.dead_slots}")
        object.__setattr__(self, "dead_slots", int(self.dead_slots))

    @classmethod
    def from_duration(cls, duration_ps: float, slot_width: float) -> DeadTime:
        """Quantize a duration to slots, rounding fractional requests up."""
        if duration_ps < 0:
            raise DomainError("dead time must be >= 0")
        ratio = duration_ps / slot_width
        nearest = round(ratio)
        # absorb float noise such as 0.30000000000000004 / 0.1
        n = nearest if abs(ratio - nearest) < 1e-9 else math.ceil(ratio)
        return cls(int(n))

    def duration(self, slot_width: float) -> float:
        return self.dead_slots * slot_width
