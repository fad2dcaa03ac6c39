import math

import numpy as np
import pytest
from pydantic import ValidationError

from app.core.exceptions import CFLError, ConfigError
from app.models.coefficients import ConstantWindowRate, ModelCoefficients, UniformKernel
from app.models.grid import Grid
from app.models.transport import EntropyFunctional, EntropyKind, TimeField
from app.services.eigen_service import eigen_service
from app.services.transport_service import TransportScheme, transport_service
from tests.helpers import window_lambda

SCHEDULE = [1e-3, 1e-4]


def make_scheme(model, grid):
    return TransportScheme(model, grid, eigen_service.kernel_table(model, grid))


@pytest.fixture
def scheme(window_model, small_grid):
    return make_scheme(window_model, small_grid)


def test_zero_density_stays_zero(scheme, small_grid):
    n = np.zeros((small_grid.n_a, small_grid.n_x))
    for _ in range(5):
        n = scheme.advance(n)
    assert np.all(n == 0.0)


def test_upwind_step_keeps_positivity(scheme, small_grid):
    scheme.check_cfl()
    rng = np.random.default_rng(3)
    n = rng.uniform(0.0, 1.0, size=(small_grid.n_a, small_grid.n_x))
    for _ in range(10):
        n = scheme.advance(n)
        assert np.all(n >= 0.0)


def test_renewal_doubles_the_dividing_mass(scheme, small_grid):
    n = np.ones((small_grid.n_a, small_grid.n_x))
    newborn = scheme.renewal(n)
    h = small_grid.da
    # 39 full age cells and the half cell at a = 0 lie inside the window
    divided = 39.5 * h * 2.0 * (1.0 - math.exp(-h))
    assert small_grid.wx @ newborn == pytest.approx(divided * small_grid.x_max / h, rel=1e-8)


def test_division_loss_follows_the_characteristics(scheme, small_grid):
    assert np.allclose(scheme.survival[:40], math.exp(-small_grid.da), rtol=1e-8)
    assert np.allclose(scheme.survival[40:], 1.0)
    assert np.all(scheme.offspring[-1] == 0.0)
    half = 0.5 * small_grid.da
    assert np.allclose(scheme.early, math.expm1(half) / half, rtol=1e-8)
    assert np.allclose(scheme.late, math.exp(half) * scheme.early)


def test_ageing_loses_only_the_mass_leaving_a_max(logistic, small_grid):
    model = ModelCoefficients(
        growth=logistic,
        division=ConstantWindowRate(level=0.0, window_end=2.0),
        kernel=UniformKernel(),
    )
    scheme = make_scheme(model, small_grid)
    n = np.ones((small_grid.n_a, small_grid.n_x))
    moved = scheme.advance(n)
    assert np.all(moved[0] == 0.0)
    lost = small_grid.integrate(n) - small_grid.integrate(moved)
    assert lost == pytest.approx(small_grid.da * small_grid.x_max, rel=1e-12)


def test_coarse_age_grid_violates_cfl(window_model):
    scheme = make_scheme(window_model, Grid(x_max=1.0, a_max=20.0, n_x=201, n_a=41))
    with pytest.raises(CFLError) as excinfo:
        scheme.check_cfl()
    assert excinfo.value.exit_code == 4


def test_scheme_steady_state_is_a_fixed_point(scheme):
    steady = scheme.steady_state(window_lambda(1.0, 2.0))
    renewed = scheme.advance(steady.density, rate=steady.lam)
    assert np.allclose(renewed, steady.density, rtol=1e-7, atol=1e-7 * steady.density.max())
    assert scheme.grid.integrate(steady.density) == pytest.approx(1.0)
    assert np.all(steady.density >= 0.0)


def test_scheme_rate_tracks_the_malthus_parameter(scheme):
    steady = scheme.steady_state(0.5)
    assert steady.lam == pytest.approx(window_lambda(1.0, 2.0), rel=5e-3)


def test_steady_state_is_cached(window_model, small_grid):
    first = transport_service.steady_state(window_model, small_grid, 0.9)
    assert transport_service.steady_state(window_model, small_grid, 0.1) is first


def test_entropy_of_doubled_eigenfunction(synthetic_solution):
    state = TimeField(density=2.0 * synthetic_solution.density, dt=synthetic_solution.grid.da,
                      grid=synthetic_solution.grid)
    entropy = transport_service.gre_entropy(state, synthetic_solution)
    assert entropy == pytest.approx(1.0, rel=1e-12)
    absolute = transport_service.gre_entropy(state, synthetic_solution, EntropyFunctional(kind=EntropyKind.ABSOLUTE))
    assert absolute == pytest.approx(1.0, rel=1e-12)


def test_entropy_vanishes_at_the_eigenfunction(synthetic_solution):
    state = TimeField(density=synthetic_solution.density, dt=0.1, grid=synthetic_solution.grid)
    assert transport_service.gre_entropy(state, synthetic_solution) == pytest.approx(0.0, abs=1e-15)


def test_unrenormalized_field_is_scaled_back(synthetic_solution):
    state = TimeField(t=2.0, density=np.ones((2, 2)), dt=0.1, grid=synthetic_solution.grid,
                      renormalized=False, rate=0.5)
    assert np.allclose(state.scaled, np.exp(-1.0))


def test_tabulated_entropy_extends_linearly():
    H = EntropyFunctional(kind=EntropyKind.TABULATED, u=(0.0, 1.0, 2.0), values=(1.0, 0.0, 1.0))
    assert np.allclose(H.evaluate(np.array([-1.0, 0.5, 3.0])), [2.0, 0.5, 2.0])
    with pytest.raises(ValidationError):
        EntropyFunctional(kind=EntropyKind.TABULATED, u=(0.0, 1.0, 2.0), values=(0.0, 1.0, 0.0))


def test_initial_conditions(synthetic_solution):
    N = synthetic_solution.density
    assert np.allclose(transport_service.initial_condition(synthetic_solution, "scaled", scale=3.0), 3.0 * N)
    perturbed = transport_service.initial_condition(synthetic_solution, "perturbed", perturbation=0.5)
    assert np.all(perturbed >= 0.0)
    with pytest.raises(ConfigError):
        transport_service.initial_condition(synthetic_solution, "spiral")


def test_simulate_needs_the_adjoint(window_model, synthetic_solution):
    sol = synthetic_solution.model_copy(update={"adjoint": None})
    with pytest.raises(ConfigError):
        transport_service.simulate(sol.density, window_model, sol, horizon=1.0)


def test_simulate_records_observables(window_model, synthetic_solution):
    trajectory = transport_service.simulate(
        synthetic_solution.density, window_model, synthetic_solution, horizon=1.0,
        snapshot_times=[0.0, 0.5], output_every=2,
    )
    times = trajectory.series("t")
    assert times[0] == 0.0
    assert times[-1] == pytest.approx(1.0)
    assert sorted(trajectory.snapshots) == [0.0, 0.5]
    assert trajectory.m0 == pytest.approx(1.0)
    assert np.all(trajectory.final.density >= 0.0)


def test_raw_run_grows_at_the_scheme_rate(window_model, small_grid):
    sol = eigen_service.solve(window_model, small_grid, SCHEDULE)
    steady = transport_service.steady_state(window_model, small_grid, sol.lambda0)
    trajectory = transport_service.simulate(steady.density, window_model, sol, horizon=2.0, renormalize=False)
    assert trajectory.scheme_lambda == steady.lam
    mass = trajectory.series("mass")
    times = trajectory.series("t")
    assert np.log(mass[-1] / mass[0]) / times[-1] == pytest.approx(steady.lam, rel=1e-6)
    # the scaled field sees a constant profile
    assert trajectory.duality_drift < 1e-6


def test_renormalized_run_keeps_duality_and_contracts(window_model, small_grid):
    sol = eigen_service.solve(window_model, small_grid, SCHEDULE)
    n0 = transport_service.initial_condition(sol, "perturbed", perturbation=0.5)
    trajectory = transport_service.simulate(n0, window_model, sol, horizon=6.0, output_every=4)
    assert trajectory.duality_drift < 1e-2
    entropy = trajectory.series("entropy")
    assert trajectory.entropy_increase <= 1e-2 * entropy[0]
    assert entropy[-1] < entropy[0]
    distance = trajectory.series("distance")
    assert distance[-1] < 0.5 * distance[0]


@pytest.mark.slow
def test_duality_drift_shrinks_under_refinement(window_model):
    drifts = []
    for n_x, n_a in ((33, 81), (65, 161)):
        grid = Grid(x_max=1.0, a_max=4.0, n_x=n_x, n_a=n_a)
        sol = eigen_service.solve(window_model, grid, SCHEDULE)
        n0 = transport_service.initial_condition(sol, "perturbed", perturbation=0.5)
        drifts.append(transport_service.simulate(n0, window_model, sol, horizon=6.0, output_every=8).duality_drift)
    assert drifts[0] < 1e-2
    assert drifts[1] < 0.5 * drifts[0]


@pytest.mark.slow
def test_cyclin_run_conserves_duality(cyclin_model, cyclin_grid):
    sol = eigen_service.solve(cyclin_model, cyclin_grid, SCHEDULE)
    trajectory = transport_service.simulate(sol.density, cyclin_model, sol, horizon=300.0, output_every=50)
    assert trajectory.scheme_lambda == pytest.approx(sol.lambda0, rel=3e-2)
    assert trajectory.duality_drift < 1e-2
