"""Labeled detection streams drawn from the slotted counting model.

Each waiting time is sampled by inverting the cumulative hazard of the
per-slot firing probabilities, with thinning beyond the tabulated range, so
the output has exactly the distribution of the slot-by-slot Bernoulli
process.  Randomness comes from ``numpy.random.Generator(PCG64(seed))``;
events are produced in fixed batches, so shorter runs with the same seed are
prefixes of longer ones.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .data import TimeTagStream, ps_to_fs
from .errors import DomainError
from .models import AfterpulseModel, _checked
from .params import DeadTime, SlotParams

BATCH = 1 << 16
TABLE_CAP = 1 << 20
TABLE_TAIL_TOL = 1e-13


class Cause(enum.IntEnum):
    SOURCE = 0
    DARK = 1
    AFTERPULSE = 2
    COINCIDENT = 3


@dataclass(frozen=True)
class SimConfig:
    params: SlotParams
    model: AfterpulseModel
    dead: DeadTime
    seed: int = 0
    n_events: Optional[int] = None
    n_slots: Optional[int] = None

    def __post_init__(self):
        if (self.n_events is None) == (self.n_slots is None):
            raise DomainError("give exactly one of n_events or n_slots")
        target = self.n_events if self.n_events is not None else self.n_slots
        if int(target) != target or target <= 0:
            raise DomainError(f"stop target must be a positive integer, got {target}")
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("seed must fit in 64 bits")


class LabeledEvent(NamedTuple):
    tick: int
    cause: Cause


@dataclass(frozen=True)
class LabeledEvents:
    """Event slot indices since stream start together with their latent causes."""

    ticks: np.ndarray
    causes: np.ndarray

    def __len__(self):
        return len(self.ticks)

    def __iter__(self):
        for t, c in zip(self.ticks.tolist(), self.causes.tolist()):
            yield LabeledEvent(t, Cause(c))

    def __getitem__(self, i):
        return LabeledEvent(int(self.ticks[i]), Cause(int(self.causes[i])))

    def gaps(self) -> np.ndarray:
        return np.diff(self.ticks)

    def afterpulse_possible_fraction(self) -> float:
        """Fraction of triggered detections (all but the first) carrying an afterpulse."""
        c = self.causes[1:]
        if len(c) == 0:
            return 0.0
        return float(np.count_nonzero(c >= Cause.AFTERPULSE)) / len(c)


class WaitingSampler:
    """Exact sampler of the live-slot index of the next detection."""

    def __init__(self, params: SlotParams, model: AfterpulseModel, dead: DeadTime):
        self.mu = params.mu_total()
        self.model = model
        self.dead = dead
        self.slot_width = params.slot_width
        m = 0
        if not model.is_null():
            m = 64
            while m < TABLE_CAP and model.tail_bound(m + 1 + dead.dead_slots, self.slot_width) > TABLE_TAIL_TOL:
                m *= 2
            m = min(m, TABLE_CAP)
        self.table_len = m
        self.a = self._a(np.arange(1, m + 1))
        hazard = self.mu - np.log1p(-self.a)
        self.cum_hazard = np.concatenate(([0.0], np.cumsum(hazard)))

    def _a(self, i):
        return _checked(np.asarray(self.model.slot_probability(
            np.asarray(i) + self.dead.dead_slots, self.slot_width), dtype=float))

    def afterpulse_at(self, m: np.ndarray) -> np.ndarray:
        out = np.empty(len(m))
        inside = m <= self.table_len
        out[inside] = self.a[m[inside] - 1]
        if np.any(~inside):
            out[~inside] = self._a(m[~inside])
        return out

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        e = rng.standard_exponential(size)
        m = np.searchsorted(self.cum_hazard, e, side="left").astype(np.int64)
        beyond = np.flatnonzero(m > self.table_len)
        if len(beyond):
            m[beyond] = self._thin(rng, len(beyond))
        return m

    def _thin(self, rng, count):
        # past the table the hazard is non-increasing; propose at the rate of
        # the next slot and accept with the true-to-proposed probability ratio
        pos = np.full(count, self.table_len, dtype=np.int64)
        result = np.empty(count, dtype=np.int64)
        pending = np.arange(count)
        while len(pending):
            p_max = -np.expm1(-(self.mu - np.log1p(-self._a(pos + 1))))
            cand = pos + rng.geometric(p_max)
            p_cand = -np.expm1(-(self.mu - np.log1p(-self._a(cand))))
            accept = rng.random(len(cand)) * p_max < p_cand
            result[pending[accept]] = cand[accept]
            pending = pending[~accept]
            pos = cand[~accept]
        return result


def _label(rng, mu_s, mu_d, p_poisson, a):
    """Sample causes given that the slot fired, with afterpulse probability ``a``."""
    u = rng.random(len(a))
    v = rng.random(len(a))
    only_p = p_poisson * (1.0 - a)
    only_a = (1.0 - p_poisson) * a
    fire = p_poisson + a - p_poisson * a
    x = u * fire
    causes = np.full(len(a), Cause.COINCIDENT, dtype=np.uint8)
    poisson = x < only_p
    causes[(x >= only_p) & (x < only_p + only_a)] = Cause.AFTERPULSE
    mu = mu_s + mu_d
    is_source = v * mu < mu_s
    causes[poisson & is_source] = Cause.SOURCE
    causes[poisson & ~is_source] = Cause.DARK
    return causes


def simulate(config: SimConfig) -> LabeledEvents:
    """Generate a labeled detection stream.

    The stream starts at slot 0 with a detector that has not fired yet, so
    the first event carries neither afterpulsing nor dead time.  Every later
    event lies ``dead_slots + m`` slots after its predecessor, ``m >= 1``
    being the live waiting slot.
    """
    params, dead = config.params, config.dead
    mu = params.mu_total()
    empty = LabeledEvents(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.uint8))
    if mu <= 0:
        return empty
    rng = np.random.Generator(np.random.PCG64(int(config.seed)))
    sampler = WaitingSampler(params, config.model, dead)
    p = -math.expm1(-mu)

    first_tick = int(rng.geometric(p))
    first_cause = _label(rng, params.mu_s, params.mu_d, p, np.zeros(1))[0]
    if config.n_slots is not None and first_tick > config.n_slots:
        return empty
    tick_parts = [np.array([first_tick], dtype=np.int64)]
    cause_parts = [np.array([first_cause], dtype=np.uint8)]
    produced = 1
    last = first_tick
    while True:
        if config.n_events is not None:
            need = config.n_events - produced
            if need <= 0:
                break
        m = sampler.sample(rng, BATCH)
        causes = _label(rng, params.mu_s, params.mu_d, p, sampler.afterpulse_at(m))
        ticks = last + np.cumsum(m + dead.dead_slots)
        if config.n_events is not None:
            ticks, causes = ticks[:need], causes[:need]
        else:
            keep = int(np.searchsorted(ticks, config.n_slots, side="right"))
            if keep < len(ticks):
                tick_parts.append(ticks[:keep])
                cause_parts.append(causes[:keep])
                break
        tick_parts.append(ticks)
        cause_parts.append(causes)
        produced += len(ticks)
        last = int(ticks[-1])
    return LabeledEvents(np.concatenate(tick_parts), np.concatenate(cause_parts))


def simulate_slotwise(config: SimConfig) -> LabeledEvents:
    """Literal slot-by-slot Bernoulli walk; slow reference for small streams."""
    params, dead = config.params, config.dead
    mu = params.mu_total()
    if mu <= 0:
        return LabeledEvents(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.uint8))
    rng = np.random.default_rng(config.seed)
    p = -math.expm1(-mu)
    share_s = params.mu_s / mu
    ticks, causes = [], []
    tick = 0
    m = 0
    fresh = True
    while True:
        if config.n_events is not None and len(ticks) >= config.n_events:
            break
        tick += 1
        if config.n_slots is not None and tick > config.n_slots:
            break
        m += 1
        a = 0.0 if fresh else float(config.model.slot_probability(m + dead.dead_slots, params.slot_width))
        poisson = rng.random() < p
        after = rng.random() < a
        if not (poisson or after):
            continue
        if poisson and after:
            cause = Cause.COINCIDENT
        elif after:
            cause = Cause.AFTERPULSE
        else:
            cause = Cause.SOURCE if rng.random() < share_s else Cause.DARK
        ticks.append(tick)
        causes.append(cause)
        tick += dead.dead_slots
        m = 0
        fresh = False
    return LabeledEvents(np.array(ticks, dtype=np.int64), np.array(causes, dtype=np.uint8))


def to_timetags(events: LabeledEvents, slot_width: float, tick_resolution: float) -> TimeTagStream:
    """Convert slot indices to integer ticks; both arguments in picoseconds."""
    slot_fs = ps_to_fs(slot_width)
    res_fs = ps_to_fs(tick_resolution)
    if res_fs <= 0 or slot_fs % res_fs:
        raise DomainError(f"tick resolution {tick_resolution} ps does not divide slot width {slot_width} ps")
    ratio = slot_fs // res_fs
    ticks = np.asarray(events.ticks, dtype=np.uint64) * np.uint64(ratio)
    stream = TimeTagStream(ticks, res_fs)
    stream.check_monotonic()
    return stream


def lattice_slot_offset(dead: DeadTime) -> int:
    """Histogram slot offset for streams produced by :func:`to_timetags`."""
    return dead.dead_slots + 1
