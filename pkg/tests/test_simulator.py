import math

import numpy as np
import pytest
from scipy import stats

import spadstats.simulator as sim
from conftest import SLOT_PS
from spadstats import (DeadTime, ExponentialModel, NullModel, PowerLawModel, SlotParams,
                       build_histogram, pmf_full)
from spadstats.errors import DomainError
from spadstats.simulator import (Cause, LabeledEvent, SimConfig, lattice_slot_offset, simulate,
                                 simulate_slotwise, to_timetags)
from spadstats.waiting import bound_error_series

AP_MODEL = ExponentialModel(0.03, 1.66e6)


def config(mu=0.0015, model=AP_MODEL, nd=1, seed=1, **kw):
    kw.setdefault("n_events", 200_000)
    return SimConfig(SlotParams.total(mu, SLOT_PS), model, DeadTime(nd), seed=seed, **kw)


def live_waits(events, nd):
    return events.gaps() - nd


def assert_matches_pmf(waits, mu, model, nd, sigmas=5.0, min_expected=100):
    n_max = int(waits.max())
    counts = np.bincount(waits, minlength=n_max + 1)[1:]
    expected = len(waits) * pmf_full(SlotParams.total(mu, SLOT_PS), model, DeadTime(nd), np.arange(1, n_max + 1))
    ok = expected >= min_expected
    assert ok.any()
    z = (counts[ok] - expected[ok]) / np.sqrt(expected[ok])
    assert np.abs(z).max() < sigmas, f"max |z| = {np.abs(z).max():.2f}"


def test_zero_rate_gives_empty_stream():
    assert len(simulate(config(mu=0.0, model=NullModel()))) == 0


def test_config_validation():
    with pytest.raises(DomainError):
        config(n_events=0)
    with pytest.raises(DomainError):
        SimConfig(SlotParams.total(0.1), NullModel(), DeadTime(0), n_events=5, n_slots=5)
    with pytest.raises(DomainError):
        SimConfig(SlotParams.total(0.1), NullModel(), DeadTime(0))


def test_determinism_and_prefix_consistency():
    a = simulate(config(seed=42, n_events=150_000))
    b = simulate(config(seed=42, n_events=150_000))
    c = simulate(config(seed=42, n_events=70_000))
    d = simulate(config(seed=43, n_events=70_000))
    np.testing.assert_array_equal(a.ticks, b.ticks)
    np.testing.assert_array_equal(a.causes, b.causes)
    np.testing.assert_array_equal(a.ticks[:70_000], c.ticks)
    assert not np.array_equal(c.ticks, d.ticks)


def test_slot_target_stops_inside_horizon():
    ev = simulate(config(n_events=None, n_slots=2_000_000))
    assert ev.ticks[-1] <= 2_000_000
    longer = simulate(config(n_events=None, n_slots=3_000_000))
    np.testing.assert_array_equal(longer.ticks[: len(ev)], ev.ticks)
    assert longer.ticks[len(ev)] > 2_000_000


@pytest.mark.parametrize("nd", [0, 1, 5])
def test_dead_time_respected(nd):
    ev = simulate(config(mu=0.3, model=ExponentialModel(0.4, 2e5), nd=nd))
    assert ev.gaps().min() >= nd + 1
    assert np.all(np.diff(ev.ticks) > 0)


def test_first_event_comes_from_fresh_detector():
    firsts = [simulate(config(mu=0.2, model=ExponentialModel(0.5, 1e6), seed=s, n_events=1))[0]
              for s in range(300)]
    assert all(e.cause in (Cause.SOURCE, Cause.DARK) for e in firsts)
    mean_tick = np.mean([e.tick for e in firsts])
    assert mean_tick == pytest.approx(1 / -math.expm1(-0.2), rel=0.15)


def test_geometric_histogram_null_model():
    ev = simulate(config(mu=0.05, model=NullModel(), nd=0, n_events=1_000_001))
    assert_matches_pmf(live_waits(ev, 0), 0.05, NullModel(), 0)


def test_afterpulse_histogram_matches_analytic():
    ev = simulate(config(n_events=1_000_001))
    assert_matches_pmf(live_waits(ev, 1), 0.0015, AP_MODEL, 1)


def test_thinning_beyond_table(monkeypatch):
    # a short table forces most draws through the thinning branch
    monkeypatch.setattr(sim, "TABLE_CAP", 16)
    model = PowerLawModel(0.5, 1.5, 1)
    ev = simulate(config(mu=0.002, model=model, nd=2, n_events=300_001))
    waits = live_waits(ev, 2)
    assert (waits > 16).mean() > 0.5
    assert_matches_pmf(waits, 0.002, model, 2)


def test_vectorized_sampler_matches_slot_walk():
    model = ExponentialModel(0.4, 3e5)
    fast = simulate(config(mu=0.08, model=model, nd=2, seed=7, n_events=40_001))
    slow = simulate_slotwise(config(mu=0.08, model=model, nd=2, seed=8, n_events=40_001))
    assert slow.gaps().min() >= 3
    for ev in (fast, slow):
        assert_matches_pmf(live_waits(ev, 2), 0.08, model, 2, min_expected=50)
    # cause shares agree between the two generators
    for cause in Cause:
        f = np.mean(fast.causes[1:] == cause)
        s = np.mean(slow.causes[1:] == cause)
        assert abs(f - s) < 5 * math.sqrt(max(f, 1e-4) * (1 - f) * 2 / 40_000) + 1e-3


def test_firing_frequency_per_waiting_slot():
    ev = simulate(config(n_events=1_000_001, seed=5))
    waits = live_waits(ev, 1)
    n_max = int(waits.max())
    fired = np.bincount(waits, minlength=n_max + 2)[1:]
    visits = len(waits) - np.concatenate(([0], np.cumsum(fired)[:-1]))
    m = np.arange(1, len(fired) + 1)
    a = AP_MODEL.slot_probability(m + 1, SLOT_PS)
    p_fire = 1 - math.exp(-0.0015) * (1 - a)
    ok = visits >= 100
    # exact binomial tails: expected fires per slot are far below one deep in the tail
    upper = stats.binom.sf(fired[ok] - 1, visits[ok], p_fire[ok])
    lower = stats.binom.cdf(fired[ok], visits[ok], p_fire[ok])
    assert np.minimum(upper, lower).min() > stats.norm.sf(5)


def test_label_marginals():
    mu_s, mu_d = 0.001, 0.0005
    params = SlotParams(mu_s, mu_d, SLOT_PS)
    ev = simulate(SimConfig(params, AP_MODEL, DeadTime(1), seed=11, n_events=1_000_001))
    causes = ev.causes[1:]
    n = len(causes)
    _, coincident_mass = bound_error_series(params, AP_MODEL, DeadTime(1))
    frac = np.mean(causes == Cause.COINCIDENT)
    assert abs(frac - coincident_mass) < 5 * math.sqrt(coincident_mass / n)
    source, dark = np.sum(causes == Cause.SOURCE), np.sum(causes == Cause.DARK)
    share = source / (source + dark)
    assert abs(share - 2 / 3) < 5 * math.sqrt(2 / 9 / (source + dark))


def test_labeled_events_container():
    ev = simulate(config(n_events=10))
    assert len(ev) == 10
    assert isinstance(ev[0], LabeledEvent)
    assert [e.tick for e in ev] == ev.ticks.tolist()
    assert 0.0 <= ev.afterpulse_possible_fraction() <= 1.0


def test_to_timetags_examples():
    ev = sim.LabeledEvents(np.array([3, 10]), np.array([0, 1], dtype=np.uint8))
    tags = to_timetags(ev, 100_000, 100)
    assert tags.ticks.tolist() == [3000, 10000]
    assert tags.tick_resolution_fs == 100_000
    with pytest.raises(DomainError):
        to_timetags(ev, 100_000, 82)


def test_histogram_of_tags_equals_slot_gap_histogram():
    ev = simulate(config(n_events=50_001))
    nd = 1
    hist = build_histogram(to_timetags(ev, SLOT_PS, 1), 100_000, 50_000_000, lattice_slot_offset(DeadTime(nd)))
    waits = live_waits(ev, nd)
    direct = np.bincount(waits, minlength=hist.n_bins)
    slots = hist.slot_index()
    live = slots >= 1
    inside = waits + nd < hist.n_bins
    np.testing.assert_array_equal(hist.counts[live], direct[slots[live]][: live.sum()])
    assert hist.counts[~live].sum() == 0
    assert hist.overflow == np.count_nonzero(~inside)
