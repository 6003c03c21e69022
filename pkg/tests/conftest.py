"""Shared fixtures and the per-criterion acceptance summary."""

from __future__ import annotations

import datetime as dt
from pathlib import Path

import pytest

from spendlens.ingest import Transaction
from spendlens.ledger import Ledger

FIXTURES = Path(__file__).parent / "fixtures"

ACCEPTANCE_TITLES = {
    1: "exact recovery (power, DGBD, segmented k=1,2, AC5)",
    2: "noisy recovery (beta, k=1 / k=0 selection rates)",
    3: "Davies calibration (null size, power on two-regime data)",
    4: "nesting and reduction identities",
    5: "transparency fixtures and scale invariance",
    6: "three-file ingest round trip and parallel determinism",
    7: "performance (2M-row pipeline, 20k-point fits)",
    8: "optional real-data reproduction",
}
_outcomes: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        _outcomes.setdefault(n, []).append(rep.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_TITLES):
        results = _outcomes.get(n)
        if not results:
            continue
        if "failed" in results:
            status = "FAIL"
        elif all(r == "skipped" for r in results):
            status = "SKIP"
        else:
            status = "PASS"
        terminalreporter.write_line(f"criterion {n}: {status}  {ACCEPTANCE_TITLES[n]}  ({len(results)} checks)")


def txn(amount_minor: int, entity: str = "E1", supplier: str = "S1", date: dt.date = dt.date(2023, 1, 1),
        expense_type: str = "T", expense_area: str = "A", row: int = 1, source: str = "f.csv") -> Transaction:
    return Transaction(entity, date, supplier, expense_type, expense_area, amount_minor, source, row)


def ledger_of(*amounts: int, entity: str = "E1") -> Ledger:
    return Ledger.from_transactions(
        [txn(a, entity=entity, supplier=f"S{i}", row=i + 1) for i, a in enumerate(amounts)])


@pytest.fixture
def fixture_dir() -> Path:
    return FIXTURES / "ingest3"
