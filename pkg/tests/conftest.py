import functools

import pytest

from fmotrimer.propagator import PropagationError
from fmotrimer.scenarios import get_preset, simulate


@functools.lru_cache(maxsize=None)
def _run(name, changes):
    cfg = get_preset(name).replace(**dict(changes))
    try:
        return simulate(cfg)
    except Exception as exc:  # cached so that a failing preset is only run once
        return exc


def run_preset(name, **changes):
    """Simulate a preset once per session; re-raise its failure on every call."""
    out = _run(name, tuple(sorted(changes.items())))
    if isinstance(out, Exception):
        raise out
    return out


@pytest.fixture(scope="session")
def preset_runner():
    return run_preset


CRITERIA = {}


def record_criterion(number, title, passed, detail):
    CRITERIA[number] = (title, bool(passed), detail)
    print(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        title, passed, detail = CRITERIA[number]
        terminalreporter.write_line(
            f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}")
