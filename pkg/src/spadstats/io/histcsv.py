"""Histogram CSV: one row per bin up to the last non-empty one, then a metadata comment."""

from __future__ import annotations

import numpy as np

from ..data import InterArrivalHistogram
from ..errors import HistogramParseError

HEADER = "bin_index,count,bin_lo_ps,bin_hi_ps"
_META_KEYS = ("total_intervals", "overflow", "bin_width_ps", "range_max_ps", "slot_offset")


def write_histogram_csv(hist: InterArrivalHistogram, path):
    nonzero = np.flatnonzero(hist.counts)
    last = int(nonzero[-1]) + 1 if len(nonzero) else 0
    w = hist.bin_width
    lines = [HEADER]
    for b in range(1, last + 1):
        lines.append(f"{b},{int(hist.counts[b - 1])},{(b - 1) * w},{b * w}")
    lines.append(f"# total_intervals={hist.total_intervals} overflow={hist.overflow} "
                 f"bin_width_ps={w} range_max_ps={hist.range_max} slot_offset={hist.slot_offset}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _int(text, lineno):
    try:
        return int(text)
    except ValueError:
        raise HistogramParseError(f"line {lineno}: {text!r} is not an integer", line=lineno) from None


def read_histogram_csv(path) -> InterArrivalHistogram:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != HEADER:
        raise HistogramParseError("line 1: missing or wrong header", line=1)
    rows = []
    meta = None
    for lineno, line in enumerate(lines[1:], start=2):
        if line.startswith("#"):
            if meta is not None or lineno != len(lines):
                raise HistogramParseError(f"line {lineno}: metadata must be the single final row", line=lineno)
            fields = dict(item.split("=", 1) for item in line[1:].split() if "=" in item)
            missing = [k for k in _META_KEYS if k not in fields]
            if missing:
                raise HistogramParseError(f"line {lineno}: metadata lacks {', '.join(missing)}", line=lineno)
            meta = {k: _int(fields[k], lineno) for k in _META_KEYS}
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise HistogramParseError(f"line {lineno}: expected 4 fields, got {len(parts)}", line=lineno)
        rows.append([_int(p, lineno) for p in parts] + [lineno])
    if meta is None:
        raise HistogramParseError(f"line {len(lines)}: missing metadata row", line=len(lines))
    w = meta["bin_width_ps"]
    if w <= 0 or meta["range_max_ps"] <= 0:
        raise HistogramParseError("metadata: bin width and range must be > 0", line=len(lines))
    n_bins = -(-meta["range_max_ps"] // w)
    counts = np.zeros(n_bins, dtype=np.int64)
    for expected, (b, count, lo, hi, lineno) in enumerate(rows, start=1):
        if b != expected or lo != (b - 1) * w or hi != b * w or count < 0 or b > n_bins:
            raise HistogramParseError(f"line {lineno}: inconsistent bin row", line=lineno)
        counts[b - 1] = count
    try:
        return InterArrivalHistogram(w, counts, meta["total_intervals"], meta["range_max_ps"],
                                     meta["overflow"], meta["slot_offset"])
    except ValueError as exc:
        raise HistogramParseError(f"metadata: {exc}", line=len(lines)) from None
