"""Throughput of the vectorized simulator against the slot-by-slot reference walk.

    python3 benchmarks/bench_simulate.py [events]
"""
import sys
import time

from spadstats import DeadTime, ExponentialModel, SlotParams
from spadstats.simulator import SimConfig, simulate, simulate_slotwise


def timed(fn, config):
    t0 = time.perf_counter()
    events = fn(config)
    return len(events), time.perf_counter() - t0


def main(n_events=1_000_000):
    params = SlotParams.total(0.0015, 100_000.0)
    model = ExponentialModel(0.03, 1.66e6)
    fast = SimConfig(params, model, DeadTime(1), seed=1, n_events=n_events)
    slow = SimConfig(params, model, DeadTime(1), seed=1, n_events=max(n_events // 1000, 1))
    for name, fn, cfg in (("vectorized", simulate, fast), ("slotwise", simulate_slotwise, slow)):
        n, dt = timed(fn, cfg)
        print(f"{name:>10}: {n:>9} events in {dt:7.3f} s  ({n / dt:,.0f} events/s)")


if __name__ == "__main__":
    main(int(float(sys.argv[1])) if len(sys.argv) > 1 else 1_000_000)
