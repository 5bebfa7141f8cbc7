import math

import numpy as np
import pytest

from fringedet.geometry import Ellipse


def monte_carlo_iou(e1: Ellipse, e2: Ellipse, n: int = 1_000_000, seed: int = 0) -> float:
    """IoU by uniform point sampling over the joint bounding box."""
    hx1, hy1 = e1.half_extents()
    hx2, hy2 = e2.half_extents()
    x0, x1 = min(e1.cx - hx1, e2.cx - hx2), max(e1.cx + hx1, e2.cx + hx2)
    y0, y1 = min(e1.cy - hy1, e2.cy - hy2), max(e1.cy + hy1, e2.cy + hy2)
    rng = np.random.default_rng(seed)
    xs = rng.uniform(x0, x1, n)
    ys = rng.uniform(y0, y1, n)
    in1 = e1.contains(xs, ys)
    in2 = e2.contains(xs, ys)
    union = np.count_nonzero(in1 | in2)
    return np.count_nonzero(in1 & in2) / union if union else 0.0


def random_overlapping_pair(rng) -> tuple:
    a1 = rng.uniform(2, 20)
    e1 = Ellipse(rng.uniform(-5, 5), rng.uniform(-5, 5), a1, a1 * rng.uniform(0.2, 1.0), rng.uniform(0, 180))
    a2 = rng.uniform(2, 20)
    ang = rng.uniform(0, 2 * math.pi)
    dist = rng.uniform(0, 0.9) * (a1 + a2) * 0.6
    e2 = Ellipse(e1.cx + dist * math.cos(ang), e1.cy + dist * math.sin(ang), a2,
                 a2 * rng.uniform(0.2, 1.0), rng.uniform(0, 180))
    return e1, e2


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): one acceptance criterion")
    config._acceptance = {}


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("acceptance")
    if mark is None or call.when not in ("setup", "call"):
        return
    if call.when == "setup" and call.excinfo is None:
        return
    number, title = mark.args
    if call.excinfo is None:
        status = "PASS"
    elif call.excinfo.errisinstance(pytest.skip.Exception):
        status = "SKIPPED"
    else:
        status = "FAIL"
    results = item.config._acceptance
    line = f"criterion {number} ({title}): {status}"
    results[number] = line
    # shows up inline with -s, and in the terminal summary otherwise
    print(f"\n{line}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_acceptance", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
