"""Discrete waiting-time distribution of a dead-time limited detector.

Slot ``n = 1`` is the first live slot after the dead time of the triggering
detection.  ``a_i`` below denotes the dead-time-shifted afterpulse
probability of live slot ``i`` and ``mu`` the total Poissonian mean per slot.
All probabilities are evaluated in log space and exponentiated at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConvergenceError, DomainError
from .models import MAX_SERIES_TERMS, AfterpulseModel, _checked, shifted_probs
from .params import DeadTime, SlotParams


@dataclass(frozen=True)
class WaitingPmf:
    """Waiting probabilities for slots ``1..len(values)`` plus the mass beyond."""

    values: np.ndarray
    survival: float

    def total(self) -> float:
        return math.fsum(self.values) + self.survival


@dataclass
class BoundSet:
    """Cumulative afterpulsing bounds.

    ``pa_upper`` is the model-free bound ``1 - exp(r0_delta)``; the optional
    fields carry the series-evaluated bounds when a model is known.
    """

    r0_delta: float
    pa_upper: float
    n_ap_per_trigger_upper: float
    per_slot_ap_upper: Optional[np.ndarray] = None
    pa_lower: Optional[float] = None
    pa_upper_exact: Optional[float] = None
    ps_lower: Optional[float] = None
    ps_upper: Optional[float] = None
    clamped: bool = False
    r0_delta_raw: Optional[float] = None

    @classmethod
    def from_r0(cls, r0: float, **extra) -> BoundSet:
        raw = r0
        clamped = r0 > 0
        r0 = min(r0, 0.0)
        return cls(r0_delta=r0, pa_upper=-math.expm1(r0), n_ap_per_trigger_upper=math.expm1(-r0),
                   clamped=clamped, r0_delta_raw=raw, **extra)


class WaitingBounds(NamedTuple):
    lower: float
    lower_of_lower: float
    upper: float


def _check_index(n) -> np.ndarray:
    arr = np.asarray(n)
    if arr.dtype.kind not in "iu":
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise DomainError("slot index must be an integer")
        arr = arr.astype(np.int64)
    if np.any(arr < 1):
        raise DomainError("slot index must be >= 1")
    return arr


def _scalar_or_array(values: np.ndarray, like):
    return float(values) if np.ndim(like) == 0 else values


def _tables(model: AfterpulseModel, dead: DeadTime, n_max: int, slot_width: float):
    """Return ``a[0..n_max-1]`` (slots 1..n_max) and ``R[k] = sum_{i<=k} ln(1-a_i)``."""
    a = shifted_probs(model, dead, n_max, slot_width)
    r = np.concatenate(([0.0], np.cumsum(np.log1p(-a))))
    return a, r


def _log_first(mu: float, a):
    # ln(1 - e^-mu (1 - a)) without cancellation at small mu
    with np.errstate(divide="ignore"):
        return np.log(-math.expm1(-mu) + math.exp(-mu) * np.asarray(a, dtype=float))


def pmf_no_afterpulse(params: SlotParams, n):
    """Geometric waiting probability ``(1 - e^-mu) e^(-mu (n-1))``."""
    arr = _check_index(n)
    mu = params.mu_total()
    out = -math.expm1(-mu) * np.exp(-mu * (arr - 1.0))
    return _scalar_or_array(out, n)


def _log_pmf(params, model, dead, arr):
    mu = params.mu_total()
    a, r = _tables(model, dead, int(arr.max()), params.slot_width)
    return _log_first(mu, a[arr - 1]) - mu * (arr - 1.0) + r[arr - 1]


def log_pmf_full(params: SlotParams, model: AfterpulseModel, dead: DeadTime, n):
    """Natural log of the waiting probability of live slot ``n``."""
    arr = _check_index(n)
    out = _log_pmf(params, model, dead, np.atleast_1d(arr))
    if np.any(np.isneginf(out)):
        raise DomainError("waiting probability is zero; its logarithm is undefined")
    return _scalar_or_array(out.reshape(np.shape(arr)), n)


def pmf_full(params: SlotParams, model: AfterpulseModel, dead: DeadTime, n):
    """Waiting probability of live slot ``n`` including afterpulsing and dead time."""
    arr = _check_index(n)
    out = np.exp(_log_pmf(params, model, dead, np.atleast_1d(arr)))
    return _scalar_or_array(out.reshape(np.shape(arr)), n)


def pmf_raw(params: SlotParams, model: AfterpulseModel, dead: DeadTime, n):
    """Waiting probability indexed from the triggering detection (dead slots included).

    Evaluated directly from the unshifted model; zero inside the dead time.
    """
    arr = np.atleast_1d(_check_index(n))
    mu = params.mu_total()
    nd = dead.dead_slots
    n_max = int(arr.max())
    k = np.arange(nd + 1, n_max + 1)
    raw = _checked(np.asarray(model.slot_probability(k, params.slot_width), dtype=float))
    logs = np.concatenate(([0.0], np.cumsum(np.log1p(-raw))))
    out = np.zeros(arr.shape)
    live = arr > nd
    m = arr[live] - nd
    with np.errstate(divide="ignore"):
        first = np.log(-math.expm1(-mu) + math.exp(-mu) * raw[m - 1])
    out[live] = np.exp(first - mu * (m - 1.0) + logs[m - 1])
    return _scalar_or_array(out.reshape(np.shape(n)), n)


def waiting_pmf(params: SlotParams, model: AfterpulseModel, dead: DeadTime, n_max: int) -> WaitingPmf:
    """Probabilities for slots ``1..n_max`` and the survival mass beyond ``n_max``."""
    if n_max < 1:
        raise DomainError("n_max must be >= 1")
    mu = params.mu_total()
    a, r = _tables(model, dead, n_max, params.slot_width)
    n = np.arange(1, n_max + 1)
    values = np.exp(_log_first(mu, a) - mu * (n - 1.0) + r[:-1])
    survival = math.exp(-mu * n_max + r[-1])
    return WaitingPmf(values, survival)


def residual_term(model: AfterpulseModel, dead: DeadTime, n, slot_width: float = 100_000.0):
    """Cumulative log-attenuation ``sum_{i<n} ln(1 - a_i)``; zero for ``n = 1``."""
    arr = _check_index(n)
    _, r = _tables(model, dead, int(np.max(arr)) - 1, slot_width)
    return _scalar_or_array(r[np.asarray(arr) - 1], n)


def _log_tail_bound(model, dead, n, a_next, slot_width):
    """Bound on ``|sum_{i>n} ln(1 - a_i)|`` using ``-ln(1-x) <= x / (1-x)``."""
    return model.tail_bound(n + 1 + dead.dead_slots, slot_width) / (1.0 - a_next)


def _afterpulse_blocks(model, dead, slot_width, tolerance, weight=None):
    """Yield ``(start, a_block)`` chunks until the weighted log-tail bound meets ``tolerance``.

    ``weight(n)`` scales the bound for series whose terms carry an extra
    decaying factor.
    """
    start = 1
    chunk = 4096
    while start <= MAX_SERIES_TERMS:
        k = np.arange(start, start + chunk) + dead.dead_slots
        a = _checked(np.asarray(model.slot_probability(k, slot_width), dtype=float))
        yield start, a
        end = start + chunk - 1
        a_next = float(model.slot_probability(end + 1 + dead.dead_slots, slot_width))
        bound = _log_tail_bound(model, dead, end, a_next, slot_width)
        if weight is not None:
            bound *= weight(end)
        if bound < tolerance:
            return
        start = end + 1
        chunk = min(chunk * 2, 1 << 20)
    raise ConvergenceError(f"series did not reach tolerance {tolerance:g} within {MAX_SERIES_TERMS} terms")


def r0_limit(model: AfterpulseModel, dead: DeadTime, slot_width: float = 100_000.0,
             tolerance: float = 1e-12) -> float:
    """Limit of the cumulative log-attenuation as the slot index grows (always <= 0)."""
    if not tolerance > 0:
        raise DomainError("tolerance must be > 0")
    if model.is_null():
        return 0.0
    parts = [math.fsum(np.log1p(-a)) for _, a in _afterpulse_blocks(model, dead, slot_width, tolerance)]
    return math.fsum(parts)


def linear_tail(mu: float, c_delta: float, n):
    """Asymptotic log waiting probability ``-mu n + c_delta``."""
    arr = _check_index(n)
    return _scalar_or_array(-mu * np.asarray(arr, dtype=float) + c_delta, n)


def tail_intercept(params: SlotParams, model: AfterpulseModel, dead: DeadTime,
                   tolerance: float = 1e-12) -> float:
    """Additive constant of the asymptotic line for a known model."""
    mu = params.mu_total()
    if mu <= 0:
        raise DomainError("tail intercept needs mu > 0")
    return math.log(-math.expm1(-mu)) + mu + r0_limit(model, dead, params.slot_width, tolerance)


def poissonian_waiting_bounds(params: SlotParams, model: AfterpulseModel, dead: DeadTime, n,
                              tolerance: float = 1e-12) -> WaitingBounds:
    """Lower bound, its simple lower estimate and the upper bound for the
    first detection in slot ``n`` being a Poissonian one."""
    n = int(_check_index(n))
    mu = params.mu_total()
    a, r = _tables(model, dead, n, params.slot_width)
    p = -math.expm1(-mu)
    upper = p * math.exp(-(n - 1) * mu + r[n - 1])
    lower = (1.0 - a[n - 1]) * upper
    r0 = r0_limit(model, dead, params.slot_width, tolerance)
    lower_of_lower = p * math.exp(-(n - 1) * mu + r0)
    return WaitingBounds(lower, lower_of_lower, upper)


def afterpulse_waiting_upper(params: SlotParams, model: AfterpulseModel, dead: DeadTime, n,
                             tolerance: float = 1e-12):
    """Upper bound on the probability that the first detection in slot ``n`` is an afterpulse.

    Returns ``(value, clamped)``; a negative difference is reported as 0 with
    ``clamped=True``.
    """
    n = int(_check_index(n))
    mu = params.mu_total()
    total = pmf_full(params, model, dead, n)
    r0 = r0_limit(model, dead, params.slot_width, tolerance)
    value = total - (-math.expm1(-mu)) * math.exp(-(n - 1) * mu + r0)
    if value < 0:
        return 0.0, True
    return value, False


def _poisson_series(params, model, dead, tolerance, r0, include_current):
    """Sum ``(1-e^-mu) e^{-(i-1)mu} prod(1-a_k)`` over ``i``, product up to ``i`` or ``i-1``."""
    mu = params.mu_total()
    p = -math.expm1(-mu)
    parts = []
    log_prod = 0.0
    last_n = 0
    for start, a in _afterpulse_blocks(model, dead, params.slot_width, tolerance,
                                       weight=lambda n: math.exp(-mu * n)):
        i = np.arange(start, start + len(a))
        cum = log_prod + np.cumsum(np.log1p(-a))
        prev = np.concatenate(([log_prod], cum[:-1]))
        logs = cum if include_current else prev
        parts.append(math.fsum(p * np.exp(-(i - 1.0) * mu + logs)))
        log_prod = float(cum[-1])
        last_n = int(i[-1])
    # remaining terms: product already within the tail bound of exp(r0)
    parts.append(math.exp(-mu * last_n) * math.exp(0.5 * (log_prod + r0)))
    return math.fsum(parts)


def cumulative_bounds(params: SlotParams, model: AfterpulseModel, dead: DeadTime,
                      tolerance: float = 1e-12) -> BoundSet:
    """Cumulative bounds on the first detection being Poissonian or an afterpulse."""
    mu = params.mu_total()
    if mu <= 0:
        raise DomainError("cumulative bounds need a positive Poissonian mean")
    r0 = r0_limit(model, dead, params.slot_width, tolerance)
    bounds = BoundSet.from_r0(r0)
    if model.is_null():
        ps_lower = ps_upper = 1.0
    else:
        ps_lower = _poisson_series(params, model, dead, tolerance, r0, include_current=True)
        ps_upper = _poisson_series(params, model, dead, tolerance, r0, include_current=False)
    slack = 10 * tolerance
    lower_of_lower = math.exp(r0)
    if not (lower_of_lower <= ps_lower + slack and ps_lower <= ps_upper + slack
            and ps_upper <= 1.0 + slack):
        raise ConvergenceError(
            f"bound ordering violated: {lower_of_lower!r}, {ps_lower!r}, {ps_upper!r}")
    bounds.ps_lower = ps_lower
    bounds.ps_upper = ps_upper
    bounds.pa_lower = 1.0 - ps_upper
    bounds.pa_upper_exact = 1.0 - ps_lower
    return bounds


def bound_error_series(params: SlotParams, model: AfterpulseModel, dead: DeadTime,
                       tolerance: float = 1e-12):
    """Per-slot and total excess of the simple afterpulse bound over the exact one.

    Term ``n`` is ``(1-e^-mu) e^{-mu(n-1)} [prod_{i<n}(1-a_i) - prod_{i<=n}(1-a_i)]``.
    Returns ``(per_slot, total)`` with ``per_slot[0]`` belonging to slot 1.
    """
    mu = params.mu_total()
    if model.is_null():
        return np.zeros(1), 0.0
    p = -math.expm1(-mu)
    blocks = []
    log_prod = 0.0
    for start, a in _afterpulse_blocks(model, dead, params.slot_width, tolerance,
                                       weight=lambda n: math.exp(-mu * n)):
        i = np.arange(start, start + len(a))
        cum = log_prod + np.cumsum(np.log1p(-a))
        prev = np.concatenate(([log_prod], cum[:-1]))
        blocks.append(p * np.exp(-(i - 1.0) * mu + prev) * a)
        log_prod = float(cum[-1])
    per_slot = np.concatenate(blocks)
    return per_slot, math.fsum(per_slot)
