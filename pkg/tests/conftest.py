import numpy as np
import pytest

from homcone.cones import ConeSpec
from homcone.families import PowerFamily, build_model
from homcone.model import BoundaryCoefficients, HomogeneousModel, RegimeParams


def callback_model(b=None, sigma=None, f=None, g=(1.0, 1.0), p=2.0, T=1.0, m=1, n=1, cone=None, **kw):
    """A model from plain callbacks of (t, v); the same maps are used on both half-lines
    unless pairs are given."""
    zero_b = lambda t, v: 0.0  # noqa: E731
    zero_s = lambda t, v: np.zeros(n)  # noqa: E731
    zero_f = lambda t, v: 0.0  # noqa: E731
    b = b or zero_b
    sigma = sigma or zero_s
    f = f or zero_f
    pair = lambda x: x if isinstance(x, tuple) else (x, x)  # noqa: E731
    bp, bm = pair(b)
    sp, sm = pair(sigma)
    fp, fm = pair(f)
    coeffs = BoundaryCoefficients(bp, bm, sp, sm, fp, fm, lambda v: 0.0, float(g[0]), float(g[1]))
    return HomogeneousModel(p=p, T=T, m=m, n=n, cone=cone or ConeSpec.full(m), coeffs=coeffs, **kw)


def lq_model(A=0.1, B=1.0, C=0.3, Q=1.0, R=1.0, G=1.0, p=2.0, T=1.0, cone=None, D=None):
    fam = PowerFamily.symmetric(p=p, T=T, m=1, n=1, A=A, B=[B], C=[C], Q=Q, R=[[R]], G=G,
                                D=None if D is None else [[D]])
    return build_model(fam, cone or ConeSpec.full(1), "I", RegimeParams(delta=4.0, L=4.0), "lq")


@pytest.fixture
def lq():
    return lq_model()


# one "CRITERION k: PASS|FAIL ..." line per acceptance criterion, echoed in the summary
ACCEPTANCE_LINES = []


def record_criterion(number: int, passed: bool, detail: str) -> str:
    line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
