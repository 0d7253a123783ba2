import numpy as np
import pytest

from quatkg import kernels
from quatkg.data import load_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=sorted(kernels.BACKENDS))
def backend(request):
    return request.param


def write_split_files(directory, train, valid=(), test=()):
    directory.mkdir(parents=True, exist_ok=True)
    for name, rows in (("train", train), ("valid", valid), ("test", test)):
        with open(directory / f"{name}.txt", "w", encoding="utf-8") as f:
            for row in rows:
                f.write("\t".join(row) + "\n")
    return directory


@pytest.fixture
def toy_dir(tmp_path):
    train = [("a", "r1", "b"), ("b", "r1", "c"), ("a", "r2", "c"), ("c", "r2", "d"), ("d", "r1", "e")]
    valid = [("b", "r2", "d")]
    test = [("a", "r1", "c"), ("e", "r2", "a")]
    return write_split_files(tmp_path / "toy", train, valid, test)


@pytest.fixture
def toy_ds(toy_dir):
    return load_dataset(toy_dir)


# -- acceptance summary -------------------------------------------------------

_CRITERIA = {}


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    number, title = marker
    if report.when == "call" or report.outcome != "passed":
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        prev = _CRITERIA.get(number, (title, "PASS", ""))[1]
        # a criterion fails if any of its tests fail
        if prev == "FAIL" or (prev == "SKIP" and status == "PASS"):
            status = prev
        detail = ""
        if report.outcome == "skipped" and isinstance(report.longrepr, tuple):
            detail = report.longrepr[2]
        _CRITERIA[number] = (title, status, detail)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status, detail = _CRITERIA[number]
        line = f"criterion {number}: {status}  {title}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
