"""Shared pytest hooks.

Acceptance tests call ``record`` with one line per criterion; the lines are
repeated in the terminal summary so they show up even when output is
captured.
"""

ACCEPTANCE_LINES = []


def record(number, passed, detail):
    """Log a criterion result; ``passed=None`` marks it as skipped."""
    status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
    line = f"criterion {number}: {status}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES,
                           key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
