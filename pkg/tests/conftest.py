import pytest

from spadstats import ExponentialModel, MultiExponentialModel, NullModel, PowerLawModel

SLOT_PS = 100_000.0


def exp_model(p_a0, dt_over_tau, slot_width=SLOT_PS):
    """Exponential model specified through the ratio of slot width to lifetime."""
    return ExponentialModel(p_a0, slot_width / dt_over_tau)


def random_model(rng, slot_width=SLOT_PS):
    """One of the four model families with synthetic parameters."""
    kind = rng.integers(4)
    if kind == 0:
        return NullModel()
    if kind == 1:
        return ExponentialModel(rng.uniform(0.0, 0.6), rng.uniform(0.2, 30.0) * slot_width)
    if kind == 2:
        a1, a2 = rng.uniform(0.0, 0.3, size=2)
        return MultiExponentialModel(((a1, rng.uniform(0.2, 5.0) * slot_width),
                                      (a2, rng.uniform(5.0, 40.0) * slot_width)))
    return PowerLawModel(rng.uniform(0.0, 0.8), rng.uniform(1.5, 3.5), int(rng.integers(1, 5)))


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def acceptance_log(request):
    lines = request.config._acceptance_lines

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
