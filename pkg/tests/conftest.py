"""Shared fixtures and the acceptance summary printer."""

from __future__ import annotations

import time
from collections import OrderedDict

import numpy as np
import pytest

from elastonp.core_types import EllipseGeometry, LameParams, make_disk_curve, make_ellipse_curve
from elastonp.discrete_np import assemble

_ACCEPTANCE: "OrderedDict[int, list]" = OrderedDict()


@pytest.fixture(scope="session")
def unit_params():
    return LameParams(1.0, 1.0)


@pytest.fixture(scope="session")
def ellipse21():
    return EllipseGeometry(2.0, 1.0)


@pytest.fixture(scope="session")
def ellipse_np128(unit_params, ellipse21):
    return assemble(unit_params, make_ellipse_curve(ellipse21, 128))


@pytest.fixture(scope="session")
def ellipse_np256(unit_params, ellipse21):
    return assemble(unit_params, make_ellipse_curve(ellipse21, 256))


@pytest.fixture(scope="session")
def disk_np128(unit_params):
    return assemble(unit_params, make_disk_curve(1.0, 128))


@pytest.fixture(scope="session")
def generic_A():
    return np.array([[1.0, 0.3], [-0.2, 0.7]])


@pytest.fixture
def record():
    """``record(criterion, ok, detail)`` logs one sub-result for the summary."""

    def _rec(criterion: int, ok: bool, detail: str):
        _ACCEPTANCE.setdefault(criterion, []).append((bool(ok), detail))

    return _rec


@pytest.fixture
def stopwatch():
    class _SW:
        def __enter__(self):
            self.t0 = time.perf_counter()
            return self

        def __exit__(self, *exc):
            self.elapsed = time.perf_counter() - self.t0

    return _SW


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(_ACCEPTANCE):
        entries = _ACCEPTANCE[crit]
        ok = all(e[0] for e in entries)
        tr.write_line(f"CRITERION {crit:2d}: {'PASS' if ok else 'FAIL'}")
        for e_ok, detail in entries:
            tr.write_line(f"    [{'ok' if e_ok else 'FAILED'}] {detail}")
