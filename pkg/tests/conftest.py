import numpy as np
import pytest

from app.models.coefficients import (
    ConstantWindowRate,
    CyclinGrowth,
    HillAgeRate,
    LogisticGrowth,
    ModelCoefficients,
    UniformKernel,
)
from app.models.eigen import EigenSolution
from app.models.grid import Grid
from tests.helpers import CONFIG_TEMPLATE


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running solver test, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def logistic():
    return LogisticGrowth(c1=1.0, x_max=1.0)


@pytest.fixture
def window_model(logistic):
    return ModelCoefficients(
        growth=logistic,
        division=ConstantWindowRate(level=1.0, window_end=2.0),
        kernel=UniformKernel(),
    )


@pytest.fixture
def subcritical_model(logistic):
    return ModelCoefficients(
        growth=logistic,
        division=ConstantWindowRate(level=0.3, window_end=2.0),
        kernel=UniformKernel(),
    )


@pytest.fixture
def cyclin_model():
    return ModelCoefficients(
        growth=CyclinGrowth(c1=0.1, c2=0.075, r1=3.0, r2=1.95, c4=0.4),
        division=HillAgeRate(k1=1.2, k2=1.5, gamma1=5.0, a_star=23.0),
        kernel=UniformKernel(),
    )


@pytest.fixture
def cyclin_grid():
    return Grid(x_max=3.0, a_max=46.0, n_x=101, n_a=601)


@pytest.fixture
def small_grid():
    return Grid(x_max=1.0, a_max=4.0, n_x=33, n_a=81)


@pytest.fixture
def synthetic_solution():
    """Separable N with ∬N = 1 and φ ≡ 1, so ∬Nφ = 1"""
    grid = Grid(x_max=1.0, a_max=4.0, n_x=21, n_a=41)
    a, x = grid.a, grid.x
    density = np.exp(-a)[:, None] * (x * (1.0 - x))[None, :]
    density /= grid.integrate(density)
    return EigenSolution(
        lambda0=0.3,
        steps=[],
        epsilon_schedule=[],
        grid=grid,
        boundary=density[0].copy(),
        density=density,
        adjoint_boundary=np.ones(grid.n_x),
        adjoint=np.ones((grid.n_a, grid.n_x)),
    )


@pytest.fixture
def write_config(tmp_path):
    def write(text: str, name: str = "run.ini") -> str:
        path = tmp_path / name
        path.write_text(text)
        return str(path)

    return write


@pytest.fixture
def window_config(write_config):
    return write_config(CONFIG_TEMPLATE.format(level=1.0))
