import csv
import json
import math

import numpy as np
import pytest

from spadstats import InterArrivalHistogram, NullModel
from spadstats.cli import PLOT_COLUMNS, main
from spadstats.estimation import bound_afterpulsing, fit_tail
from spadstats.io.histcsv import write_histogram_csv
from spadstats.io.report import ReportDocument, read_report, write_report
from spadstats.params import DeadTime, SlotParams
from spadstats.waiting import pmf_full


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def summary(out):
    return dict(line.split(" ", 1) for line in out.strip().splitlines())


@pytest.fixture(scope="module")
def null_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("null")
    assert main(["simulate", "--out", str(d / "t.ttg"), "--seed", "3"]) == 0
    return d


def test_default_simulation_recovers_rate(null_run, capsys):
    code, out, _ = run(capsys, "analyze", "--in", null_run / "t.ttg", "--range-us", 300, "--tau-us", 0.1,
                       "--slot-offset", 1, "--weighted", "--report", null_run / "r.json")
    assert code == 0
    s = summary(out)
    assert float(s["mu_hat_per_slot"]) == pytest.approx(0.0015, rel=0.02)
    assert float(s["pa_upper"].split()[0]) < 0.01


def test_default_window_on_null_data(null_run, capsys):
    code, out, _ = run(capsys, "analyze", "--in", null_run / "t.ttg", "--report", null_run / "d.json",
                       "--hist", null_run / "d.csv")
    assert code == 0
    # a 1e6-interval fit on 5..20 us leaves a few percent of slope noise, and ln(mu_hat) passes it
    # straight into the log attenuation, so only a loose band holds here
    doc = read_report(null_run / "d.json")
    assert 0.0 <= doc.bounds.pa_upper < 0.06
    assert float(summary(out)["pa_upper"]) == doc.bounds.pa_upper
    assert (null_run / "d.csv").read_text().startswith("bin_index,count,")


def test_zero_events_is_an_error(tmp_path, capsys):
    code, _, err = run(capsys, "simulate", "--events", 0, "--out", tmp_path / "x.ttg")
    assert code == 2 and "positive" in err


def test_invalid_model_parameters(tmp_path, capsys):
    code, _, err = run(capsys, "simulate", "--ap-model", "exp", "--ap-p0", 1.5, "--out", tmp_path / "x.ttg")
    assert code == 2 and "p_a0" in err


def test_same_seed_same_file(tmp_path, capsys):
    for name in ("a", "b"):
        assert run(capsys, "--seed", 77, "simulate", "--events", 20_000, "--ap-model", "exp",
                   "--out", tmp_path / f"{name}.ttg")[0] == 0
    assert (tmp_path / "a.ttg").read_bytes() == (tmp_path / "b.ttg").read_bytes()
    run(capsys, "simulate", "--events", 20_000, "--seed", 78, "--out", tmp_path / "c.ttg")
    assert (tmp_path / "a.ttg").read_bytes() != (tmp_path / "c.ttg").read_bytes()


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"events": 1000, "rate_dark_hz": 50_000, "seed": 4}))
    code, out, _ = run(capsys, "simulate", "--config", cfg, "--out", tmp_path / "x.ttg")
    assert code == 0 and summary(out)["events"] == "1000"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(capsys, "simulate", "--config", cfg, "--out", tmp_path / "x.ttg")[0] == 2


def test_missing_input_is_io_error(tmp_path, capsys):
    code, _, err = run(capsys, "analyze", "--in", tmp_path / "nope.ttg")
    assert code == 3 and "nope.ttg" in err


def test_corrupt_input_is_io_error(tmp_path, capsys):
    bad = tmp_path / "bad.ttg"
    bad.write_bytes(b"XXXX" + bytes(16))
    assert run(capsys, "analyze", "--in", bad)[0] == 3


def test_fit_failure_exit_code(null_run, capsys):
    code, _, err = run(capsys, "analyze", "--in", null_run / "t.ttg", "--tau-us", 19.95)
    assert code == 4 and "bins" in err


def test_usage_error_exit_code(capsys):
    assert run(capsys, "analyze")[0] == 2
    assert run(capsys, "frobnicate")[0] == 2


def test_afterpulse_bound_covers_labels(tmp_path, capsys):
    code, _, _ = run(capsys, "simulate", "--ap-model", "exp", "--ap-p0", 0.03, "--ap-tau0-us", 1.66,
                     "--dead-us", 0.1, "--events", 1e6, "--seed", 5,
                     "--out", tmp_path / "t.ttg", "--labels", tmp_path / "l.csv")
    assert code == 0
    with open(tmp_path / "l.csv") as fh:
        causes = [row["cause"] for row in csv.DictReader(fh)][1:]
    truth = sum(c in ("afterpulse", "coincident") for c in causes) / len(causes)
    code, out, _ = run(capsys, "analyze", "--in", tmp_path / "t.ttg", "--dead-us", 0.1, "--slot-offset", 2)
    assert code == 0
    assert float(summary(out)["pa_upper"]) >= truth


def test_analyze_is_deterministic(null_run, capsys):
    args = ["analyze", "--in", null_run / "t.ttg", "--sweep-tau", "0.5:10:0.5", "--fit-exp"]
    run(capsys, *args, "--report", null_run / "p.json")
    run(capsys, *args, "--report", null_run / "q.json")
    assert (null_run / "p.json").read_bytes() == (null_run / "q.json").read_bytes()
    doc = read_report(null_run / "p.json")
    assert len(doc.tau_sweep.taus) == 20 and doc.exp_fit is not None


def test_efficiency_in_report(null_run, capsys):
    code, out, _ = run(capsys, "analyze", "--in", null_run / "t.ttg", "--dark-mu", 0.0005,
                       "--source-rate-hz", 1e4, "--report", null_run / "e.json")
    assert code == 0
    eff = read_report(null_run / "e.json").efficiency
    assert eff.mu_d_hat == 0.0005 and 0 <= eff.eta <= 1


def calibrated_args():
    tau0_us = 2.9 / math.log(0.135 / 0.0098)
    q = math.exp(-0.1 / tau0_us)
    p0 = 0.135 * (1 - q) / q / q  # 13.5 % remaining after one dead slot
    return p0, tau0_us


def test_optimize_deadtime_calibrated(capsys):
    p0, tau0 = calibrated_args()
    code, out, _ = run(capsys, "optimize-deadtime", "--ap-p0", p0, "--ap-tau0-us", tau0, "--target", 0.01)
    assert code == 0
    s = summary(out)
    assert 2.8 <= float(s["dead_time_us"]) <= 3.2
    assert float(s["achieved"]) <= 0.01


def test_optimize_deadtime_loose_target(capsys):
    code, out, _ = run(capsys, "optimize-deadtime", "--ap-p0", 0.01, "--ap-tau0-us", 1.0, "--target", 0.5)
    assert code == 0 and summary(out)["dead_slots"] == "0"


def test_optimize_deadtime_unreachable(capsys):
    code, _, err = run(capsys, "optimize-deadtime", "--ap-p0", 0.9, "--ap-tau0-us", 10, "--target", 0.01)
    assert code == 2 and "not below 1" in err


@pytest.fixture
def geometric_files(tmp_path):
    mu = 0.0015
    n = np.arange(1, 201)
    counts = np.round(pmf_full(SlotParams.total(mu), NullModel(), DeadTime(0), n) * 1e15).astype(np.int64)
    hist = InterArrivalHistogram(100_000, counts, 10**15, 20_000_000)
    fit = fit_tail(hist)
    doc = ReportDocument({"file": "analytic", "fit_window_ps": [5_000_000, 20_000_000]}, fit,
                         bound_afterpulsing(fit))
    write_report(doc, tmp_path / "r.json")
    write_histogram_csv(hist, tmp_path / "h.csv")
    return tmp_path


def emit(capsys, files, kind):
    code, out, _ = run(capsys, "plot-data", "--report", files / "r.json", "--hist", files / "h.csv",
                       "--emit", kind)
    assert code == 0
    return list(csv.DictReader(out.splitlines()))


def test_plot_tail_fit_on_exact_data(geometric_files, capsys):
    rows = emit(capsys, geometric_files, "tail-fit")
    assert len(rows) == 150
    for r in rows:
        assert float(r["fitted_line"]) == pytest.approx(float(r["empirical_log_pmf"]), abs=1e-9)


def test_plot_excess_on_null_data(geometric_files, capsys):
    rows = emit(capsys, geometric_files, "excess")
    assert rows and all(abs(float(r["excess_bound"])) < 1e-12 for r in rows)


def test_plot_columns_are_stable(geometric_files, capsys):
    code, out, _ = run(capsys, "plot-data", "--report", geometric_files / "r.json",
                       "--hist", geometric_files / "h.csv")
    lines = out.splitlines()
    assert lines[0] == "time_us,empirical_log_pmf,fitted_line,excess_bound"
    assert tuple(lines[0].split(",")) == PLOT_COLUMNS
    assert lines[1].split(",")[0] == "0.0"
    assert len(lines) == 201


def test_plot_mismatched_histogram(geometric_files, capsys):
    write_histogram_csv(InterArrivalHistogram(50_000, [1, 2], 3, 100_000), geometric_files / "h.csv")
    code, _, err = run(capsys, "plot-data", "--report", geometric_files / "r.json",
                       "--hist", geometric_files / "h.csv")
    assert code == 2 and "bin width" in err


def test_output_flag_redirects_summary(tmp_path, capsys):
    code, out, _ = run(capsys, "--output", tmp_path / "s.txt", "optimize-deadtime",
                       "--ap-p0", 0.03, "--ap-tau0-us", 1.66)
    assert code == 0 and out == ""
    assert (tmp_path / "s.txt").read_text().startswith("dead_slots ")
