import pytest

from certiglobe.sigmoid import remez_sigmoid


@pytest.fixture(scope="session")
def pwl():
    return remez_sigmoid(0.005)


@pytest.fixture(scope="session")
def pwl_fine():
    return remez_sigmoid(0.0006)


# Acceptance tests record (criterion, passed, seconds, note) here; the
# summary hook prints one line per criterion at the end of the run.
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, secs, note = ACCEPTANCE[k]
        terminalreporter.write_line(
            f"criterion {k}: {'PASS' if ok else 'FAIL'} ({secs:.2f} s){' - ' + note if note else ''}")
