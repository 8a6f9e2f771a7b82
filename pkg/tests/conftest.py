import os

import pytest

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session", autouse=True)
def _cache_dir(tmp_path_factory):
    """Keep reference-sample caches out of the home directory unless the caller chose a location."""
    if "KPZLAB_CACHE_DIR" not in os.environ:
        os.environ["KPZLAB_CACHE_DIR"] = str(tmp_path_factory.mktemp("kpzlab-cache"))
    yield


@pytest.fixture
def acceptance_log():
    def log(line: str) -> None:
        print(line)
        _ACCEPTANCE_LINES.append(line)

    return log


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
