from __future__ import annotations

import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report_line():
    """Record one PASS/FAIL line for the terminal summary."""
    def record(label: str, ok: bool, detail: str, seconds: float, budget: float | None = None):
        late = budget is not None and seconds > budget
        verdict = "PASS" if ok and not late else "FAIL"
        timing = f"{seconds:.1f}s" + ("" if budget is None else f" / {budget:g}s")
        line = f"{label:5s} {verdict}  {detail}  [{timing}]"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok and not late
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s[2:5].strip())):
            terminalreporter.write_line(line)
