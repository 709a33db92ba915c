"""Per-slot afterpulse probability models and dead-time arithmetic.

Every model maps an elapsed slot index ``k >= 1`` (slots since the
triggering detection, dead time not yet removed) to the probability of an
afterpulse in that slot.  Counting after a dead time of ``n`` slots uses
``k = i + n`` for the i-th live slot.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DomainError, ModelError
from .params import DeadTime

MAX_SERIES_TERMS = 10_000_000


class AfterpulseModel(ABC):
    kind: str = ""

    @abstractmethod
    def slot_probability(self, k, slot_width: float) -> np.ndarray:
        """Afterpulse probability in elapsed slot(s) ``k`` (no validation)."""

    @abstractmethod
    def tail_bound(self, k: int, slot_width: float) -> float:
        """Upper bound on the sum of ``slot_probability(j)`` over ``j >= k``."""

    @abstractmethod
    def to_dict(self) -> dict:
        ...

    def is_null(self) -> bool:
        return False


@dataclass(frozen=True)
class NullModel(AfterpulseModel):
    kind = "null"

    def slot_probability(self, k, slot_width):
        return np.zeros(np.shape(k))

    def tail_bound(self, k, slot_width):
        return 0.0

    def is_null(self):
        return True

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class ExponentialModel(AfterpulseModel):
    """Single trap: ``p_a0 * exp(-k * slot_width / tau0)``; ``tau0`` in ps."""

    p_a0: float
    tau0: float
    kind = "exponential"

    def __post_init__(self):
        if not (0.0 <= self.p_a0 < 1.0):
            raise ModelError(f"p_a0 must lie in [0, 1), got {self.p_a0}")
        if not (self.tau0 > 0 and math.isfinite(self.tau0)):
            raise ModelError(f"tau0 must be > 0, got {self.tau0}")

    def ratio(self, slot_width: float) -> float:
        return math.exp(-slot_width / self.tau0)

    def slot_probability(self, k, slot_width):
        k = np.asarray(k, dtype=float)
        return self.p_a0 * np.exp(-k * (slot_width / self.tau0))

    def tail_bound(self, k, slot_width):
        q = self.ratio(slot_width)
        return self.p_a0 * math.exp(-k * slot_width / self.tau0) / (1.0 - q)

    def to_dict(self):
        return {"kind": self.kind, "p_a0": self.p_a0, "tau0_ps": self.tau0}


@dataclass(frozen=True)
class MultiExponentialModel(AfterpulseModel):
    """Several trap species; ``terms`` holds ``(amplitude, tau_ps)`` pairs."""

    terms: tuple = field(default_factory=tuple)
    kind = "multi-exponential"

    def __post_init__(self):
        terms = tuple((float(a), float(t)) for a, t in self.terms)
        for amp, tau in terms:
            if amp < 0 or not math.isfinite(amp):
                raise ModelError(f"amplitudes must be >= 0, got {amp}")
            if not (tau > 0 and math.isfinite(tau)):
                raise ModelError(f"lifetimes must be > 0, got {tau}")
        if sum(a for a, _ in terms) >= 1.0:
            raise ModelError("summed amplitudes must stay below 1")
        object.__setattr__(self, "terms", terms)

    def slot_probability(self, k, slot_width):
        k = np.asarray(k, dtype=float)
        out = np.zeros(k.shape)
        for amp, tau in self.terms:
            out = out + amp * np.exp(-k * (slot_width / tau))
        return out

    def tail_bound(self, k, slot_width):
        total = 0.0
        for amp, tau in self.terms:
            q = math.exp(-slot_width / tau)
            total += amp * math.exp(-k * slot_width / tau) / (1.0 - q)
        return total

    def to_dict(self):
        return {"kind": self.kind, "terms": [{"amplitude": a, "tau_ps": t} for a, t in self.terms]}


@dataclass(frozen=True)
class PowerLawModel(AfterpulseModel):
    """``amplitude * (k + onset) ** -exponent`` in slot units."""

    amplitude: float
    exponent: float
    onset: int = 1
    kind = "power-law"

    def __post_init__(self):
        if self.amplitude < 0 or not math.isfinite(self.amplitude):
            raise ModelError(f"amplitude must be >= 0, got {self.amplitude}")
        if not self.exponent > 1:
            raise ModelError(f"exponent must exceed 1 for a summable tail, got {self.exponent}")
        if int(self.onset) != self.onset or self.onset < 1:
            raise ModelError(f"onset must be an integer >= 1, got {self.onset}")
        if self.amplitude * (1 + self.onset) ** -self.exponent >= 1:
            raise ModelError("per-slot probability at k=1 must stay below 1")

    def slot_probability(self, k, slot_width):
        k = np.asarray(k, dtype=float)
        return self.amplitude * (k + self.onset) ** -self.exponent

    def tail_bound(self, k, slot_width):
        x = k + self.onset
        a = self.amplitude
        return a * x ** -self.exponent + a * x ** (1 - self.exponent) / (self.exponent - 1)

    def to_dict(self):
        return {"kind": self.kind, "amplitude": self.amplitude,
                "exponent": self.exponent, "onset_slots": self.onset}


def model_from_dict(d: dict) -> AfterpulseModel:
    kind = d.get("kind")
    if kind == "null":
        return NullModel()
    if kind == "exponential":
        return ExponentialModel(d["p_a0"], d["tau0_ps"])
    if kind == "multi-exponential":
        return MultiExponentialModel(tuple((t["amplitude"], t["tau_ps"]) for t in d["terms"]))
    if kind == "power-law":
        return PowerLawModel(d["amplitude"], d["exponent"], d["onset_slots"])
    raise ModelError(f"unknown afterpulse model kind {kind!r}")


def _checked(values: np.ndarray) -> np.ndarray:
    bad = ~((values >= 0) & (values < 1))
    if np.any(bad):
        raise ModelError(f"afterpulse probability outside [0, 1): {values[bad][0]!r}")
    return values


def prob_at_slot(model: AfterpulseModel, dead: DeadTime, i, slot_width: float):
    """Dead-time-shifted afterpulse probability of live slot ``i``.

    Accepts a scalar or an integer array; returns the same shape.
    """
    arr = np.asarray(i)
    if np.any(arr < 1):
        raise DomainError("slot index must be >= 1")
    values = _checked(np.asarray(model.slot_probability(arr + dead.dead_slots, slot_width), dtype=float))
    return float(values) if values.ndim == 0 else values


def shifted_probs(model: AfterpulseModel, dead: DeadTime, n: int, slot_width: float) -> np.ndarray:
    """Shifted probabilities for live slots ``1..n`` as an array of length ``n``."""
    if n <= 0:
        return np.zeros(0)
    k = np.arange(1, n + 1) + dead.dead_slots
    return _checked(np.asarray(model.slot_probability(k, slot_width), dtype=float))


def total_prob(model: ExponentialModel, slot_width: float) -> float:
    """Closed-form total afterpulse probability summed over all slots."""
    if not isinstance(model, ExponentialModel):
        raise DomainError("closed form exists only for the single-exponential model")
    q = model.ratio(slot_width)
    total = model.p_a0 * q / -math.expm1(-slot_width / model.tau0)
    if total >= 1.0:
        raise ModelError(f"total afterpulse probability {total:.6g} is not below 1")
    return total


def total_prob_with_dead(model: ExponentialModel, dead: DeadTime, slot_width: float) -> float:
    return math.exp(-dead.dead_slots * slot_width / model.tau0) * total_prob(model, slot_width)


def total_prob_by_sum(model: AfterpulseModel, dead: DeadTime, slot_width: float,
                      tolerance: float = 1e-13) -> float:
    """Sum of shifted per-slot probabilities, truncated by the model tail bound."""
    if model.is_null():
        return 0.0
    n0 = dead.dead_slots
    acc = 0.0
    start = 1
    chunk = 1024
    while start <= MAX_SERIES_TERMS:
        k = np.arange(start, start + chunk) + n0
        acc += math.fsum(_checked(np.asarray(model.slot_probability(k, slot_width), dtype=float)))
        start += chunk
        if model.tail_bound(start + n0, slot_width) < tolerance:
            return acc
        chunk = min(chunk * 2, 1 << 20)
    raise ConvergenceError(f"afterpulse sum did not converge within {MAX_SERIES_TERMS} slots")


def min_dead_time_for_target(model: AfterpulseModel, slot_width: float, target: float) -> DeadTime:
    """Smallest whole-slot dead time whose total afterpulse probability is <= ``target``."""
    if not target > 0:
        raise DomainError(f"target must be > 0, got {target}")
    if isinstance(model, ExponentialModel):
        def total(n):
            return total_prob_with_dead(model, DeadTime(n), slot_width)
        base = total(0)
        if target >= base:
            return DeadTime(0)
        n = max(0, math.ceil(model.tau0 / slot_width * math.log(base / target)))
        # the ceiling can land one slot off when the target sits on a grid point
        while n > 0 and total(n - 1) <= target:
            n -= 1
        while total(n) > target:
            n += 1
        return DeadTime(n)

    # slow power-law tails cannot reach an absolute 1e-13 within the term cap, so
    # sum to a target-relative tolerance and add it back to stay conservative
    tol = 1e-6 * target

    def total(n):
        return total_prob_by_sum(model, DeadTime(n), slot_width, tolerance=tol) + tol
    if target >= total(0):
        return DeadTime(0)
    lo, hi = 0, 1
    while total(hi) > target:
        lo, hi = hi, hi * 2
        if hi > MAX_SERIES_TERMS:
            raise ConvergenceError("target unreachable within the slot cap")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if total(mid) > target:
            lo = mid
        else:
            hi = mid
    return DeadTime(hi)
