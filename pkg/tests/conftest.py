import pytest

from nonuni.generators import gen_diestel_leader, gen_grandmother, gen_regular_tree, gen_self_similar


@pytest.fixture(scope="session")
def gm2():
    return gen_grandmother(2, up=6, down=6)


@pytest.fixture(scope="session")
def gm2_small():
    return gen_grandmother(2, up=3, down=3)


@pytest.fixture(scope="session")
def dl22():
    return gen_diestel_leader(2, 2, 4)


@pytest.fixture(scope="session")
def tree3():
    return gen_regular_tree(3, 5)


@pytest.fixture(scope="session")
def selfsim():
    return gen_self_similar(3, 3)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record():
    """Log one acceptance line and assert on it."""
    def _record(number: int, title: str, ok: bool, detail: str = "") -> None:
        ACCEPTANCE_LINES.append(f"[{number:2d}] {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        assert ok, detail
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
