import os
from pathlib import Path

import pytest

ACCEPTANCE = {}


def record(criterion: int, ok: bool, detail: str):
    line = f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE.setdefault(criterion, []).append((ok, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        results = ACCEPTANCE[n]
        ok = all(r[0] for r in results)
        details = "; ".join(line.split(" - ", 1)[1] for _, line in results)
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {details}")


@pytest.fixture(scope="session")
def desk():
    """Bank, networks and held-out report of the seeded desk-scale run (cached)."""
    from nnlfnst.desk import DeskConfig, run_desk
    cache = os.environ.get("NNLFNST_DESK_CACHE", Path(__file__).resolve().parent.parent / "desk_cache")
    return run_desk(DeskConfig(), cache_dir=cache, log=print)
