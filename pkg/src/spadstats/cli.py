"""Command-line entry point: ``spadstats {simulate,analyze,optimize-deadtime,plot-data}``.

Exit codes: 0 success, 2 usage or invalid parameters, 3 I/O or format
errors, 4 fit or convergence failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings
from contextlib import contextmanager

import numpy as np

from . import __version__
from .errors import (ConvergenceError, DataError, DomainError, FitError, FormatError,
                     ModelError)
from .estimation import (BoundaryWarning, HistogramAccumulator, afterpulse_excess,
                         bound_afterpulsing, estimate_efficiency, fit_exponential, fit_tail,
                         sweep_tau)
from .io.histcsv import read_histogram_csv, write_histogram_csv
from .io.report import ReportDocument, read_report, write_report
from .io.tags import iter_tag_chunks, write_tags
from .models import ExponentialModel, NullModel, min_dead_time_for_target, total_prob_with_dead
from .params import PS_PER_S, DeadTime, SlotParams
from .simulator import Cause, SimConfig, lattice_slot_offset, simulate, to_timetags

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_FIT = 4

PS_PER_NS = 1_000
PS_PER_US = 1_000_000

log = logging.getLogger("spadstats")


class CliError(Exception):
    def __init__(self, message, code=EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _count(text: str) -> int:
    """Non-negative integer that may be written in float notation such as ``1e6``."""
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not math.isfinite(value) or value != int(value) or value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text!r}")
    return int(value)


def _tau_range(text: str) -> np.ndarray:
    """``start:stop:step`` in microseconds, both ends inclusive; returns picoseconds."""
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected start:stop:step, got {text!r}") from None
    if not step > 0 or stop < start:
        raise argparse.ArgumentTypeError(f"empty tau range {text!r}")
    k = np.arange(int(round((stop - start) / step)) + 1)
    return np.round((start + k * step) * PS_PER_US)


def _whole_ps(value: float, what: str) -> int:
    ps = round(value)
    if abs(ps - value) > 1e-6 or ps <= 0:
        raise CliError(f"{what} must be a positive whole number of picoseconds, got {value} ps")
    return int(ps)


def _fmt(x) -> str:
    return repr(float(x))


@contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="\n") as fh:
            yield fh


# -- subcommands -----------------------------------------------------------

SIM_KEYS = ("rate_source_hz", "rate_dark_hz", "slot_ns", "ap_model", "ap_p0", "ap_tau0_us",
            "dead_us", "events", "seed", "out", "labels", "tick_ps")


def _model(kind, p0, tau0_us):
    if kind == "null":
        return NullModel()
    return ExponentialModel(p0, tau0_us * PS_PER_US)


def cmd_simulate(args, out):
    slot_ps = _whole_ps(args.slot_ns * PS_PER_NS, "--slot-ns")
    params = SlotParams.from_rates(args.rate_source_hz, args.rate_dark_hz, slot_ps)
    model = _model(args.ap_model, args.ap_p0, args.ap_tau0_us)
    dead = DeadTime.from_duration(args.dead_us * PS_PER_US, slot_ps)
    config = SimConfig(params, model, dead, seed=args.seed, n_events=args.events)
    log.info("simulating %d events, mu=%.6g per slot", args.events, params.mu_total())
    events = simulate(config)
    stream = to_timetags(events, slot_ps, args.tick_ps)
    write_tags(stream, args.out)
    if args.labels:
        with open(args.labels, "w", newline="\n") as fh:
            fh.write("event_index,slot,cause\n")
            names = {c.value: c.name.lower() for c in Cause}
            for i, (slot, cause) in enumerate(zip(events.ticks.tolist(), events.causes.tolist())):
                fh.write(f"{i},{slot},{names[cause]}\n")
    span_s = (int(events.ticks[-1]) - int(events.ticks[0])) * slot_ps / PS_PER_S if len(events) > 1 else 0.0
    rate = (len(events) - 1) / span_s if span_s > 0 else 0.0
    print(f"events {len(events)}", file=out)
    print(f"span_s {_fmt(span_s)}", file=out)
    print(f"mean_rate_hz {_fmt(rate)}", file=out)
    print(f"afterpulse_fraction {_fmt(events.afterpulse_possible_fraction())}", file=out)
    print(f"slot_offset {lattice_slot_offset(dead)}", file=out)


def _histogram(path, bin_ps, range_ps, slot_offset):
    acc = None
    for res_fs, ticks in iter_tag_chunks(path):
        if acc is None:
            acc = HistogramAccumulator(res_fs, bin_ps, range_ps, slot_offset)
        acc.update(ticks)
    if acc is None:
        raise FitError(f"{path} holds no time tags")
    return acc.result()


def cmd_analyze(args, out):
    bin_ps = _whole_ps(args.bin_ns * PS_PER_NS, "--bin-ns")
    range_ps = _whole_ps(args.range_us * PS_PER_US, "--range-us")
    tau_ps = _whole_ps(args.tau_us * PS_PER_US, "--tau-us")
    dead = DeadTime.from_duration(args.dead_us * PS_PER_US, bin_ps)
    offset = dead.dead_slots if args.slot_offset is None else args.slot_offset
    if offset < 0:
        raise CliError("--slot-offset must be >= 0")
    hist = _histogram(args.input, bin_ps, range_ps, offset)
    log.info("histogram: %d intervals, %d overflow", hist.total_intervals, hist.overflow)
    if args.hist:
        write_histogram_csv(hist, args.hist)

    tail = fit_tail(hist, (tau_ps, range_ps), weighted=args.weighted)
    bounds = bound_afterpulsing(tail)
    sweep = None
    if args.sweep_tau is not None:
        sweep = sweep_tau(hist, args.sweep_tau, weighted=args.weighted)
    exp_fit = None
    if args.fit_exp:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", BoundaryWarning)
            exp_fit = fit_exponential(hist, tail, (0, tau_ps), dead_slots=dead.dead_slots)
    efficiency = None
    if args.source_rate_hz is not None:
        mu_d = args.dark_mu if args.dark_mu is not None else 0.0
        efficiency = estimate_efficiency(max(tail.mu_hat - mu_d, 0.0), bin_ps, args.source_rate_hz,
                                         args.dark_mu)

    inputs = {"file": str(args.input), "bin_width_ps": bin_ps, "range_max_ps": range_ps,
              "fit_window_ps": [tau_ps, range_ps], "tau_ps": tau_ps, "dead_slots": dead.dead_slots,
              "slot_offset": offset, "weighted": args.weighted,
              "total_intervals": hist.total_intervals, "overflow": hist.overflow}
    if args.dark_mu is not None:
        inputs["dark_mu_per_slot"] = args.dark_mu
    doc = ReportDocument(inputs, tail, bounds, exp_fit, sweep, efficiency, tool_version=__version__)
    if args.report:
        write_report(doc, args.report)

    print(f"intervals {hist.total_intervals}", file=out)
    print(f"mu_hat_per_slot {_fmt(tail.mu_hat)}", file=out)
    print(f"rate_hz {_fmt(tail.rate_hz())}", file=out)
    print(f"pa_upper {_fmt(bounds.pa_upper)}{' (clamped)' if bounds.clamped else ''}", file=out)
    if sweep is not None:
        plateau = "none" if sweep.plateau_tau is None else _fmt(sweep.plateau_tau / PS_PER_US)
        print(f"plateau_tau_us {plateau}", file=out)
    if exp_fit is not None:
        print(f"p_a0_hat {_fmt(exp_fit.p_a0_hat)}", file=out)
        print(f"tau0_hat_us {_fmt(exp_fit.tau0_hat / PS_PER_US)}", file=out)
    if efficiency is not None:
        print(f"eta {_fmt(efficiency.eta)}{' (clamped)' if efficiency.clamped else ''}", file=out)


def cmd_optimize(args, out):
    slot_ps = _whole_ps(args.slot_ns * PS_PER_NS, "--slot-ns")
    model = ExponentialModel(args.ap_p0, args.ap_tau0_us * PS_PER_US)
    dead = min_dead_time_for_target(model, slot_ps, args.target)
    achieved = total_prob_with_dead(model, dead, slot_ps)
    print(f"dead_slots {dead.dead_slots}", file=out)
    print(f"dead_time_us {_fmt(dead.duration(slot_ps) / PS_PER_US)}", file=out)
    print(f"achieved {_fmt(achieved)}", file=out)


PLOT_COLUMNS = ("time_us", "empirical_log_pmf", "fitted_line", "excess_bound")


def cmd_plot(args, out):
    doc = read_report(args.report)
    hist = read_histogram_csv(args.hist)
    tail = doc.tail_fit
    if hist.bin_width != tail.bin_width:
        raise CliError(f"histogram bin width {hist.bin_width} ps does not match the report's "
                       f"{tail.bin_width} ps; pass the histogram written by the same analyze run")
    window = doc.input.get("fit_window_ps")
    if args.emit != "waiting-pmf" and window is None:
        raise CliError("report has no input.fit_window_ps section needed for this emission")
    excess = afterpulse_excess(hist, tail)
    live = hist.slot_index() >= 1
    lo = hist.bin_lo()[live]
    hi = hist.bin_hi()[live]
    counts = hist.counts[live]
    if args.emit == "tail-fit":
        keep = (lo >= window[0]) & (hi <= window[1])
    elif args.emit == "excess":
        keep = hi <= window[0]
    else:
        keep = np.ones(len(lo), dtype=bool)
    print(",".join(PLOT_COLUMNS), file=out)
    n = excess.slots
    for i in np.flatnonzero(keep):
        emp = "" if counts[i] == 0 else _fmt(math.log(counts[i] / hist.total_intervals))
        print(f"{_fmt(lo[i] / PS_PER_US)},{emp},{_fmt(tail.line(n[i]))},{_fmt(excess.values[i])}",
              file=out)


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spadstats", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")
    p.add_argument("--seed", type=_count, default=0, help="default RNG seed")
    p.add_argument("--output", "-o", default=None, help="write the printed summary here instead of stdout")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="write a simulated time-tag file")
    s.add_argument("--config", help="JSON file with defaults for the flags below (underscored keys)")
    s.add_argument("--rate-source-hz", type=float, default=0.0)
    s.add_argument("--rate-dark-hz", type=float, default=15_000.0)
    s.add_argument("--slot-ns", type=float, default=100.0)
    s.add_argument("--ap-model", choices=("null", "exp"), default="null")
    s.add_argument("--ap-p0", type=float, default=0.03, help="afterpulse amplitude at zero elapsed time")
    s.add_argument("--ap-tau0-us", type=float, default=1.66)
    s.add_argument("--dead-us", type=float, default=0.0)
    s.add_argument("--events", type=_count, default=1_000_000)
    s.add_argument("--seed", type=_count, default=None, dest="sub_seed")
    s.add_argument("--out", required=True, help="output tag file")
    s.add_argument("--labels", help="optional CSV of ground-truth causes")
    s.add_argument("--tick-ps", type=float, default=1.0, help="tick resolution of the written file")
    s.set_defaults(func=cmd_simulate)
    p.simulate_parser = s

    a = sub.add_parser("analyze", help="histogram, tail fit and afterpulsing bounds for a tag file")
    a.add_argument("--in", dest="input", required=True)
    a.add_argument("--bin-ns", type=float, default=100.0)
    a.add_argument("--range-us", type=float, default=20.0)
    a.add_argument("--tau-us", type=float, default=5.0, help="start of the tail fit window")
    a.add_argument("--sweep-tau", type=_tau_range, default=None, metavar="START:STOP:STEP",
                   help="fit-window starts in microseconds, inclusive")
    a.add_argument("--fit-exp", action="store_true", help="also fit a single-exponential afterpulse model")
    a.add_argument("--dead-us", type=float, default=0.0)
    a.add_argument("--slot-offset", type=int, default=None,
                   help="bins preceding live slot 1 (default: dead time in bins; simulate prints the lattice value)")
    a.add_argument("--weighted", action="store_true", help="weight tail-fit bins by their counts")
    a.add_argument("--dark-mu", type=float, default=None, help="dark counts per slot from a dark run")
    a.add_argument("--source-rate-hz", type=float, default=None, help="incident photon rate for the efficiency")
    a.add_argument("--report", help="JSON report path")
    a.add_argument("--hist", help="histogram CSV path")
    a.set_defaults(func=cmd_analyze)

    o = sub.add_parser("optimize-deadtime", help="minimal dead time for a target afterpulse probability")
    o.add_argument("--ap-p0", type=float, required=True)
    o.add_argument("--ap-tau0-us", type=float, required=True)
    o.add_argument("--slot-ns", type=float, default=100.0)
    o.add_argument("--target", type=float, default=0.01)
    o.set_defaults(func=cmd_optimize)

    d = sub.add_parser("plot-data", help="plot-ready CSV columns from a report and its histogram")
    d.add_argument("--report", required=True)
    d.add_argument("--hist", required=True)
    d.add_argument("--emit", choices=("waiting-pmf", "tail-fit", "excess"), default="waiting-pmf")
    d.set_defaults(func=cmd_plot)
    return p


def _parse(parser, argv):
    args = parser.parse_args(argv)
    if args.command == "simulate" and args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {args.config}: {exc}", EXIT_IO) from None
        unknown = set(cfg) - set(SIM_KEYS)
        if unknown:
            raise CliError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if "seed" in cfg:
            cfg["sub_seed"] = cfg.pop("seed")
        parser.simulate_parser.set_defaults(**cfg)
        args = parser.parse_args(argv)
    if args.command == "simulate":
        args.seed = args.sub_seed if args.sub_seed is not None else args.seed
    return args


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _parse(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except CliError as exc:
        print(f"spadstats: error: {exc}", file=sys.stderr)
        return exc.code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        with _output(args.output) as out:
            args.func(args, out)
    except CliError as exc:
        code, msg = exc.code, str(exc)
    except (FitError, ConvergenceError) as exc:
        code, msg = EXIT_FIT, str(exc)
    except (FormatError, DataError, OSError) as exc:
        code, msg = EXIT_IO, str(exc)
    except (DomainError, ModelError) as exc:
        code, msg = EXIT_USAGE, str(exc)
    else:
        return EXIT_OK
    print(f"spadstats: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
