import numpy as np
import pytest
from hypothesis import strategies as st

from delta_piston.problem import RiemannSetup

# ranges used for random admissible setups
RHO = (0.1, 10.0)
VEL = (-5.0, 5.0)
MASS = (0.1, 10.0)
MIN_GAP = 0.05


def random_setup(case: int, rng: np.random.Generator, l: float = 0.0) -> RiemannSetup:
    """Admissible setup of the given case with velocities at least MIN_GAP apart."""
    while True:
        r1, r2 = rng.uniform(*RHO, 2)
        m0 = rng.uniform(*MASS)
        a, b, c = np.sort(rng.uniform(*VEL, 3))
        if b - a >= MIN_GAP and c - b >= MIN_GAP:
            break
    order = {1: ("u2", "u0", "u1"), 2: ("u0", "u1", "u2"), 3: ("u0", "u2", "u1"),
             4: ("u1", "u2", "u0"), 5: ("u2", "u1", "u0"), 6: ("u1", "u0", "u2")}[case]
    vals = dict(zip(order, (a, b, c)))
    return RiemannSetup(r1, vals["u1"], r2, vals["u2"], m0, vals["u0"], l)


def random_setups(case: int, count: int, seed: int = 0):
    rng = np.random.default_rng(seed * 10 + case)
    return [random_setup(case, rng) for _ in range(count)]


@st.composite
def setups(draw, case=None, l=False):
    """Hypothesis strategy for admissible setups (optionally of a fixed case)."""
    c = draw(st.sampled_from([1, 2, 3, 4, 5, 6])) if case is None else case
    seed = draw(st.integers(0, 2**32 - 1))
    length = draw(st.floats(0.0, 2.0)) if l else 0.0
    return random_setup(c, np.random.default_rng(seed), length)


@pytest.fixture
def sym_case1():
    return RiemannSetup(1.0, 1.0, 1.0, -1.0, 1.0, 0.0, 0.0)


@pytest.fixture
def asym_case1():
    return RiemannSetup(4.0, 1.0, 1.0, -1.0, 1.0, 0.0, 0.0)


@pytest.fixture
def ref_case2():
    return RiemannSetup(1.0, 1.0, 1.0, 2.0, 1.0, 0.0, 0.0)


@pytest.fixture
def ref_case3():
    return RiemannSetup(1.0, 3.0, 1.0, 1.0, 1.0, 0.0, 0.0)


ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
