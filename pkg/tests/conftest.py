import numpy as np
import pytest
from hypothesis import settings

from sparsekma.grid import Interval, SampledCurve, UniformGrid

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def curve_on(grid, func, lo=None, hi=None, cid="c"):
    lo = grid.start if lo is None else lo
    hi = grid.stop if hi is None else hi
    return SampledCurve.from_function(cid, func, Interval(lo, hi), grid)


def random_curves(rng, n, grid, p=1, ragged=False):
    """n random smooth-ish curves; ragged ones get random sub-domains."""
    x = grid.points
    out = []
    for i in range(n):
        coef = rng.normal(size=(p, 4))
        vals = np.stack([np.polyval(c, x) + 0.1 * np.sin(3 * x + c[0]) for c in coef])
        lo, hi = grid.start, grid.stop
        if ragged:
            cut = rng.integers(0, grid.count // 4, size=2)
            lo_i, hi_i = cut[0], grid.count - 1 - cut[1]
            vals[:, :lo_i] = np.nan
            vals[:, hi_i + 1 :] = np.nan
            lo, hi = x[lo_i], x[hi_i]
        out.append(SampledCurve(f"c{i}", Interval(lo, hi), grid, vals))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_grid():
    return UniformGrid.spanning(-1.0, 1.0, 101)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def record_acceptance(label: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} {label}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
