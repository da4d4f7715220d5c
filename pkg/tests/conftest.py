import pytest

from rmflab.numtheory import build_prime_table

# Acceptance tests append "A<n> PASS/FAIL: detail" lines here; the terminal
# summary prints them after the run so they survive output capture.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def table_1e4():
    return build_prime_table(10**4)


@pytest.fixture(scope="session")
def table_1e6():
    return build_prime_table(10**6)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
