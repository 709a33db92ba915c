"""Histogram construction, tail regression and afterpulsing bounds from measured data.

Histogram counts are normalized by the number of intervals before any
logarithm is taken, so fitted intercepts live on the log-pmf scale.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np
from scipy import optimize

from .data import InterArrivalHistogram, TimeTagStream, first_non_increasing
from .errors import DataError, DomainError, FitError, FitQualityError
from .models import ExponentialModel
from .params import PS_PER_S
from .waiting import BoundSet

DEFAULT_BIN_WIDTH_PS = 100_000
DEFAULT_RANGE_PS = 20_000_000
DEFAULT_TAU_GRID_PS = tuple(range(500_000, 10_000_001, 500_000))

P_A0_LIMITS = (1e-4, 0.99)
TAU0_MAX_PS = 100e6


class BoundaryWarning(UserWarning):
    """An optimizer settled on the edge of its search box."""


@dataclass(frozen=True)
class TailFitResult:
    mu_hat: float
    c_delta_hat: float
    fit_window: tuple
    residual_rms: float
    bins_used: int
    bin_width: int = DEFAULT_BIN_WIDTH_PS
    weighted: bool = False

    def __post_init__(self):
        if not self.mu_hat > 0:
            raise FitQualityError(f"fitted Poissonian mean must be > 0, got {self.mu_hat}")
        if not self.fit_window[0] < self.fit_window[1]:
            raise FitError("fit window is empty")
        if self.bins_used < 2:
            raise FitError("a line needs at least two bins")

    def rate_hz(self) -> float:
        return self.mu_hat * PS_PER_S / self.bin_width

    def line(self, n) -> np.ndarray:
        return -self.mu_hat * np.asarray(n, dtype=float) + self.c_delta_hat


@dataclass(frozen=True)
class TauSweepResult:
    taus: np.ndarray
    pa_bounds: np.ndarray
    plateau_tau: Optional[float]
    errors: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExpFitResult:
    p_a0_hat: float
    tau0_hat: float
    objective_value: float
    p_a0_delta_hat: float
    at_boundary: bool = False

    def model(self) -> ExponentialModel:
        return ExponentialModel(self.p_a0_hat, self.tau0_hat)


@dataclass(frozen=True)
class EfficiencyEstimate:
    eta: float
    mu_s_hat: float
    mu_d_hat: Optional[float]
    source_rate: float
    clamped: bool = False


class RateSeparation(NamedTuple):
    mu_s_hat: float
    mu_d_hat: float
    clamped: bool


class ExcessProfile(NamedTuple):
    slots: np.ndarray
    values: np.ndarray
    clamped: np.ndarray

    def total(self) -> float:
        return math.fsum(self.values)


class HistogramAccumulator:
    """Chunk-wise histogram builder; the last tick of each chunk bridges to the next."""

    def __init__(self, tick_resolution_fs: int, bin_width: int = DEFAULT_BIN_WIDTH_PS,
                 range_max: int = DEFAULT_RANGE_PS, slot_offset: int = 0):
        if bin_width <= 0 or range_max <= 0:
            raise DomainError("bin width and range must be > 0")
        self.res_fs = int(tick_resolution_fs)
        self.bin_fs = int(bin_width) * 1000
        self.range_fs = int(range_max) * 1000
        self.bin_width = int(bin_width)
        self.range_max = int(range_max)
        self.slot_offset = slot_offset
        self.n_bins = -(-self.range_fs // self.bin_fs)
        self.counts = np.zeros(self.n_bins, dtype=np.int64)
        self.total = 0
        self.overflow = 0
        self.seen = 0
        self._last = None

    def update(self, ticks: np.ndarray):
        ticks = np.asarray(ticks, dtype=np.uint64)
        if len(ticks) == 0:
            return
        if self._last is not None:
            ticks = np.concatenate((np.array([self._last], dtype=np.uint64), ticks))
            base = self.seen - 1
        else:
            base = 0
        bad = first_non_increasing(ticks)
        if bad is not None:
            raise DataError(f"tick {base + bad} does not exceed its predecessor", index=base + bad)
        gaps = np.diff(ticks)
        self.seen += len(ticks) - (1 if self._last is not None else 0)
        self._last = int(ticks[-1])
        if len(gaps) == 0:
            return
        # compare in ticks so huge gaps never overflow the fs product
        inside = gaps < np.uint64(-(-self.range_fs // self.res_fs))
        idx = gaps[inside].astype(np.int64) * self.res_fs // self.bin_fs
        self.counts += np.bincount(idx, minlength=self.n_bins)
        self.overflow += int(len(gaps) - np.count_nonzero(inside))
        self.total += len(gaps)

    def result(self) -> InterArrivalHistogram:
        return InterArrivalHistogram(self.bin_width, self.counts.copy(), self.total, self.range_max,
                                     self.overflow, self.slot_offset)


def build_histogram(tags: TimeTagStream, bin_width: int = DEFAULT_BIN_WIDTH_PS,
                    range_max: int = DEFAULT_RANGE_PS, slot_offset: int = 0) -> InterArrivalHistogram:
    """Histogram of consecutive tag differences; bin ``n`` covers ``[(n-1)w, nw)`` ps."""
    acc = HistogramAccumulator(tags.tick_resolution_fs, bin_width, range_max, slot_offset)
    acc.update(tags.ticks)
    return acc.result()


def build_histogram_chunked(chunks: Iterable[np.ndarray], tick_resolution_fs: int,
                            bin_width: int = DEFAULT_BIN_WIDTH_PS, range_max: int = DEFAULT_RANGE_PS,
                            slot_offset: int = 0) -> InterArrivalHistogram:
    acc = HistogramAccumulator(tick_resolution_fs, bin_width, range_max, slot_offset)
    for chunk in chunks:
        acc.update(chunk)
    return acc.result()


def _window_mask(hist: InterArrivalHistogram, window) -> np.ndarray:
    lo, hi = window
    return (hist.bin_lo() >= lo) & (hist.bin_hi() <= hi) & (hist.slot_index() >= 1)


def fit_tail(hist: InterArrivalHistogram, window: Sequence[float] = (5_000_000, DEFAULT_RANGE_PS),
             weighted: bool = False) -> TailFitResult:
    """Least-squares line through the log pmf estimate over ``window`` (ps).

    Empty bins are skipped.  With ``weighted`` each bin is weighted by its count.
    """
    if hist.total_intervals <= 0:
        raise FitError("histogram holds no intervals")
    mask = _window_mask(hist, window) & (hist.counts > 0)
    n = hist.slot_index()[mask].astype(float)
    if len(n) < 2:
        raise FitError(f"window {tuple(window)} ps contains {len(n)} non-empty bins; need 2")
    y = np.log(hist.counts[mask] / hist.total_intervals)
    w = np.sqrt(hist.counts[mask]) if weighted else None
    slope, intercept = np.polyfit(n, y, 1, w=w)
    resid = y - (slope * n + intercept)
    mu_hat = -float(slope)
    if not mu_hat > 0:
        raise FitQualityError(f"fitted slope {slope:.4g} is not negative; check the fit window")
    return TailFitResult(mu_hat, float(intercept), (int(n[0]), int(n[-1])),
                         float(np.sqrt(np.mean(resid ** 2))), int(len(n)), hist.bin_width, weighted)


def bound_afterpulsing(fit: TailFitResult) -> BoundSet:
    """Model-free afterpulsing bounds from the fitted tail line.

    A positive implied log-attenuation (a statistical fluctuation) clamps the
    bounds to zero and sets ``clamped``.
    """
    mu = fit.mu_hat
    if not mu > 0:
        raise DomainError("fitted Poissonian mean must be > 0")
    r0 = fit.c_delta_hat - math.log(-math.expm1(-mu)) - mu
    return BoundSet.from_r0(r0)


def sweep_tau(hist: InterArrivalHistogram, tau_candidates: Sequence[float] = DEFAULT_TAU_GRID_PS,
              weighted: bool = False, rel_tol: float = 0.01) -> TauSweepResult:
    """Tail fit and bound for each fit-window start ``tau`` (ps), window end at the histogram range."""
    taus = np.asarray(tau_candidates, dtype=float)
    if len(taus) < 3 or np.any(np.diff(taus) <= 0):
        raise DomainError("need at least three strictly increasing tau candidates")
    bounds = np.full(len(taus), np.nan)
    errors = {}
    for k, tau in enumerate(taus):
        try:
            bounds[k] = bound_afterpulsing(fit_tail(hist, (tau, hist.range_max), weighted)).pa_upper
        except FitError as exc:
            errors[float(tau)] = str(exc)
    return TauSweepResult(taus, bounds, plateau_start(taus, bounds, rel_tol), errors)


def relative_change(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(b - a) / scale


def plateau_start(taus, bounds, rel_tol: float = 0.01, run: int = 3,
                  abs_tol: float = 1e-9) -> Optional[float]:
    """First tau from which ``run`` consecutive bounds differ by less than ``rel_tol``.

    Steps smaller than ``abs_tol`` count as flat, so bounds that are zero up to
    rounding form a plateau.
    """
    def flat(a, b):
        return abs(b - a) < abs_tol or relative_change(a, b) < rel_tol

    for k in range(len(taus) - run + 1):
        seg = bounds[k:k + run]
        if np.all(np.isfinite(seg)) and all(flat(seg[j], seg[j + 1]) for j in range(run - 1)):
            return float(taus[k])
    return None


def _log_model(n, mu, p_a0_delta, tau0, slot_width, n_max):
    a = p_a0_delta * np.exp(-np.arange(1, n_max + 1) * (slot_width / tau0))
    r = np.concatenate(([0.0], np.cumsum(np.log1p(-a))))
    first = np.log(-math.expm1(-mu) + math.exp(-mu) * a[n - 1])
    return first - mu * (n - 1.0) + r[n - 1]


def fit_exponential(hist: InterArrivalHistogram, tail: TailFitResult,
                    region: Sequence[float] = (0, 5_000_000), dead_slots: int = 0,
                    grid_points: int = 25) -> ExpFitResult:
    """Fit the single-exponential afterpulse amplitude and lifetime below ``region[1]`` ps.

    The Poissonian mean is held at ``tail.mu_hat``.  The search runs over the
    dead-time-attenuated amplitude; ``p_a0_hat`` undoes the attenuation using
    ``dead_slots``.
    """
    mask = _window_mask(hist, region) & (hist.counts > 0)
    n = hist.slot_index()[mask]
    if len(n) < 3:
        raise FitError(f"region {tuple(region)} ps holds {len(n)} non-empty bins; need 3")
    y = np.log(hist.counts[mask] / hist.total_intervals)
    mu = tail.mu_hat
    w = float(hist.bin_width)
    n_max = int(n.max())

    def sse(log_p, log_tau):
        resid = y - _log_model(n, mu, math.exp(log_p), math.exp(log_tau), w, n_max)
        return float(resid @ resid)

    bounds = [(math.log(P_A0_LIMITS[0]), math.log(P_A0_LIMITS[1])),
              (math.log(w), math.log(TAU0_MAX_PS))]
    grid_p = np.linspace(*bounds[0], grid_points)
    grid_t = np.linspace(*bounds[1], grid_points)
    scores = np.array([[sse(lp, lt) for lt in grid_t] for lp in grid_p])
    i, j = np.unravel_index(np.argmin(scores), scores.shape)
    res = optimize.minimize(lambda x: sse(*x), x0=[grid_p[i], grid_t[j]], method="Nelder-Mead",
                            bounds=bounds, options={"xatol": 1e-6, "fatol": 1e-14, "maxiter": 4000})
    log_p, log_tau = res.x
    at_edge = any(min(abs(v - lo), abs(v - hi)) < 1e-4 for v, (lo, hi) in zip(res.x, bounds))
    if at_edge:
        warnings.warn("exponential fit converged on the search-box boundary", BoundaryWarning, stacklevel=2)
    p_delta = math.exp(log_p)
    tau0 = math.exp(log_tau)
    return ExpFitResult(p_delta * math.exp(dead_slots * w / tau0), tau0, float(res.fun), p_delta, at_edge)


def separate_rates(fit_dark: TailFitResult, fit_light: TailFitResult) -> RateSeparation:
    """Dark mean from the dark fit and source mean as the light-minus-dark difference."""
    if fit_dark.bin_width != fit_light.bin_width:
        raise DomainError("dark and light fits use different slot widths")
    mu_s = fit_light.mu_hat - fit_dark.mu_hat
    if mu_s < 0:
        return RateSeparation(0.0, fit_dark.mu_hat, True)
    return RateSeparation(mu_s, fit_dark.mu_hat, False)


def estimate_efficiency(mu_s_hat: float, slot_width: float, source_rate: float,
                        mu_d_hat: Optional[float] = None) -> EfficiencyEstimate:
    """Detection efficiency from the per-slot source mean and the incident photon rate (1/s)."""
    if not source_rate > 0:
        raise DomainError("source rate must be > 0")
    if not slot_width > 0:
        raise DomainError("slot width must be > 0")
    # slot_width * source_rate is an exact product for integral inputs
    eta = mu_s_hat * PS_PER_S / (slot_width * source_rate)
    clamped = not 0.0 <= eta <= 1.0
    return EfficiencyEstimate(min(max(eta, 0.0), 1.0), mu_s_hat, mu_d_hat, source_rate, clamped)


def afterpulse_excess(hist: InterArrivalHistogram, fit: TailFitResult) -> ExcessProfile:
    """Per-slot upper bound on the afterpulse waiting probability: data minus the fitted line."""
    slots = hist.slot_index()
    live = slots >= 1
    slots = slots[live]
    p_hat = hist.pmf_estimate()[live]
    raw = p_hat - np.exp(fit.line(slots))
    clamped = raw < 0
    return ExcessProfile(slots, np.where(clamped, 0.0, raw), clamped)
