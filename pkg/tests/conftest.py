import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hypdecay.models import WaveFamilyParams, wave_family_symbol  # noqa: E402
from hypdecay.symbolcore import OperatorSymbol, SparsePoly  # noqa: E402


def wave(n=1, c=1.0, delta=0.0, mu=0.0) -> OperatorSymbol:
    return wave_family_symbol(WaveFamilyParams(c, delta, mu), n)


def product_symbol(n: int, speeds, damping) -> OperatorSymbol:
    """prod_k (tau - speeds[k] . xi - i damping[k]); stable when damping >= 0."""
    one = SparsePoly.constant(n, 1.0)
    coeffs = [one]  # descending powers of tau
    for a, d in zip(speeds, damping):
        lin = SparsePoly.constant(n, -1j * d)
        for j, aj in enumerate(np.atleast_1d(a)):
            lin = lin + SparsePoly.variable(n, j) * (-float(aj))
        # (tau + lin) * sum c_k tau^(deg-k)
        nxt = coeffs + [SparsePoly.constant(n, 0.0)]
        for k in range(len(coeffs)):
            nxt[k + 1] = nxt[k + 1] + coeffs[k] * lin
        coeffs = nxt
    return OperatorSymbol(n, len(speeds), tuple(coeffs[1:]))


def random_stable_symbol(rng: np.random.Generator, n: int = 1, m: int | None = None) -> OperatorSymbol:
    m = m or int(rng.integers(2, 5))
    speeds = rng.normal(size=(m, n))
    damping = rng.uniform(0.0, 2.0, size=m)
    return product_symbol(n, speeds, damping)


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)


@pytest.fixture
def dissipative():
    return wave(1, delta=1.0)


# -- acceptance summary ---------------------------------------------------------------

_CRITERIA: dict[str, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_criterion_"):
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        measured = dict(report.user_properties).get("measured", "")
        _CRITERIA[name] = ("PASS" if report.passed else "FAIL", measured)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA):
        status, measured = _CRITERIA[name]
        _, _, num, *title = name.split("_")
        line = f"criterion {int(num):2d} {' '.join(title):<32} {status}"
        terminalreporter.write_line(line + (f"  [{measured}]" if measured else ""))
