import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from proflab.towers import build_affine_tower, build_congruence_tower  # noqa: E402


@pytest.fixture(scope="session")
def sl_tower():
    """SL_2(Z) on SL_2(Z/m) for m = 1, 2, 6: sizes 1, 6, 144."""
    return build_congruence_tower(2, [2, 3])


@pytest.fixture(scope="session")
def affine_tower():
    return build_affine_tower(2, [2, 4, 8, 16])


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    rows = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            name = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" in name and (rep.when == "call" or outcome == "error"):
                num = int(name.split("test_criterion_")[1].split("_")[0])
                rows.append((num, "PASS" if outcome == "passed" else "FAIL", name.split("::")[-1]))
    if rows:
        terminalreporter.section("acceptance criteria")
        for num, verdict, name in sorted(rows):
            terminalreporter.write_line(f"criterion {num:2d}: {verdict}  {name}")
