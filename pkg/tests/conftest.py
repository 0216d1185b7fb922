import numpy as np
import pytest

from levyclear.levy_model import Exponential, LevyModel, Pareto, brownian, cpp_exponential
from levyclear.scale_fn import ScaleFunction

# acceptance outcome lines, printed once at the end of the session
CRITERIA = {}


def record(number, passed, detail=""):
    CRITERIA.setdefault(number, []).append((bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        parts = CRITERIA[number]
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts if d)
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def bm():
    return brownian(1.0, 1.0)


@pytest.fixture(scope="session")
def cpp():
    return cpp_exponential(2.0, 1.0, 1.0)


@pytest.fixture(scope="session")
def pareto_model():
    return LevyModel(sigma=0.0, drift=2.0, jump_rate=1.0, jumps=Pareto(2.5, 1.0))


@pytest.fixture(scope="session")
def jump_diffusion():
    return LevyModel(sigma=0.8, drift=1.5, jump_rate=1.0, jumps=Exponential(2.0))


@pytest.fixture(scope="session")
def ev_bm(bm):
    return ScaleFunction(bm, 1.0)


@pytest.fixture(scope="session")
def ev_cpp(cpp):
    return ScaleFunction(cpp, 1.0)


@pytest.fixture(scope="session")
def ev_pareto(pareto_model):
    return ScaleFunction(pareto_model, 1.0)


@pytest.fixture(scope="session")
def ev_jd(jump_diffusion):
    return ScaleFunction(jump_diffusion, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20261018)
