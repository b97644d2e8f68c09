import numpy as np
import pytest

from measlr.protocols import (
    build_bell_distill,
    build_estp,
    build_ghz_1d,
    build_multiqubit_estp,
    build_stp,
    sabotage,
)

MAX_DILATED = 12
_CRITERIA = {}


def _corpus():
    out = {
        "stp": build_stp(),
        "stp-nofb": build_stp(feedback=False),
        "estp-0-3": build_estp(0, 3),
        "estp-0-4": build_estp(0, 4),
        "estp-1-3": build_estp(1, 3),
        "estp-1-3-bell": build_estp(1, 3, bell_measure=True),
        "estp-1-3-strip": sabotage(build_estp(1, 3), "strip_feedback"),
        "estp-1-3-stretch": sabotage(build_estp(1, 3), "stretch_regions", 1),
        "bell-0-3": build_bell_distill(0, 3),
        "bell-0-3-flip": build_bell_distill(0, 3, flip_a=True),
        "bell-1-3": build_bell_distill(1, 3),
        "ghz-0-2": build_ghz_1d(0, 2),
        "ghz-1-2": build_ghz_1d(1, 2),
        "ghz-2-2": build_ghz_1d(2, 2),
        "ghz-1-4": build_ghz_1d(1, 4),
        "multi-2-0-3": build_multiqubit_estp(2, 0, 3),
        "multi-1-1-3": build_multiqubit_estp(1, 1, 3),
    }
    for name, inst in out.items():
        c = inst.circuit
        assert c.n_physical + c.n_registers <= MAX_DILATED, name
    return out


CORPUS = _corpus()


@pytest.fixture(params=sorted(CORPUS))
def corpus_instance(request):
    return request.param, CORPUS[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(k, label): acceptance criterion k")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call":
        return
    k, label = mark.args
    _CRITERIA[k] = (label, call.excinfo is None, call.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        label, ok, secs = _CRITERIA[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {label}  ({secs:.2f} s)")
