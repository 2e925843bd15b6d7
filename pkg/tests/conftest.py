import numpy as np
import pytest

HEADER = "subject_id,minute,heart_rate,calories,met,steps,activity_level\n"


def csv_rows(rows):
    """CSV text from ``(subject, minute, hr, cal, met, steps, level)`` tuples."""
    return HEADER + "".join(",".join("" if v is None else str(v) for v in r) + "\n"
                            for r in rows)


def run_rows(subject, start, n, level="sedentary", hr=70, cal=1.2, met=1.0, steps=0):
    return [(subject, start + i, hr + i % 3, cal, met, steps, level) for i in range(n)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
