import time
from pathlib import Path

import pytest

from airyphoton.bench import load_bench, run_bench

ROOT = Path(__file__).resolve().parents[1]
AIRY_BENCH = ROOT / "benches" / "airy_bench.bench"
SCENARIOS = ROOT / "scenarios"


@pytest.fixture(scope="session")
def airy_bench():
    return load_bench(AIRY_BENCH)


@pytest.fixture(scope="session")
def airy_taps(airy_bench):
    """``{label: ElementResult}`` for the shipped bench, computed once."""
    return {r.label: r for r in run_bench(airy_bench)}


# --- acceptance reporting -------------------------------------------------------------

_SESSION_START = time.perf_counter()
ACCEPTANCE_LINES: list[str] = []

#: Budget for the whole suite, checked in the terminal summary.
SUITE_BUDGET_S = 600.0


class CriterionLog:
    """Collects one PASS/FAIL line per check; the test fails if any check failed."""

    def __init__(self, name: str):
        self.name = name
        self.failures: list[str] = []

    def check(self, label: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {self.name} {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        if not ok:
            self.failures.append(line)
        return ok

    def verdict(self) -> None:
        assert not self.failures, "\n".join(self.failures)


@pytest.fixture
def criterion(request):
    return lambda name: CriterionLog(name)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    elapsed = time.perf_counter() - _SESSION_START
    tr = terminalreporter
    tr.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        tr.write_line(line)
    ok = elapsed <= SUITE_BUDGET_S
    tr.write_line(f"{'PASS' if ok else 'FAIL'}  criterion 6 suite runtime: {elapsed:.0f} s (budget {SUITE_BUDGET_S:.0f} s)")
