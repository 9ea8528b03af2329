"""Shared fixtures.

``POISSON_HOMOGENEITY_SCALE`` selects the size of the acceptance runs:
``paper`` (default: 200 000 calibration samples, 20 000 replications) or
``desk`` (20 000 and 2 000, with the wider tolerances). Calibrated tables are
cached under ``.cache/tables`` in the repository, or wherever
``POISSON_HOMOGENEITY_TABLES`` points.
"""

import os
from pathlib import Path

import pytest

from poisson_homogeneity.harness import TableStore

ROOT = Path(__file__).resolve().parent.parent
SCALE = os.environ.get("POISSON_HOMOGENEITY_SCALE", "paper")
TABLE_DIR = os.environ.get("POISSON_HOMOGENEITY_TABLES", str(ROOT / ".cache" / "tables"))

# criterion number -> list of (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record(criterion, title, passed, detail=""):
    ACCEPTANCE.setdefault(criterion, {"title": title, "results": []})["results"].append(
        (bool(passed), detail))


@pytest.fixture(scope="session")
def scale():
    if SCALE not in ("paper", "desk"):
        raise pytest.UsageError("POISSON_HOMOGENEITY_SCALE must be 'paper' or 'desk'")
    return SCALE


@pytest.fixture(scope="session")
def table_store():
    return TableStore(TABLE_DIR)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section(f"acceptance criteria ({SCALE} scale)")
    for number in sorted(ACCEPTANCE):
        entry = ACCEPTANCE[number]
        ok = all(p for p, _ in entry["results"])
        failed = [d for p, d in entry["results"] if not p]
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {entry['title']}"
        if failed:
            line += " [" + "; ".join(failed[:5]) + (" ..." if len(failed) > 5 else "") + "]"
        tr.write_line(line)
