import numpy as np
import pytest
from scipy.linalg import expm

from app.core.exceptions import ConfigError, DegenerateError, PreconditionError
from app.models.coefficients import ConstantTransition, RecruitmentHill, TwoPhaseParams, WeightMode
from app.models.eigen import EigenSolution
from app.models.twophase import Regime
from app.services.transport_service import transport_service
from app.services.twophase_service import twophase_service


def make_params(d1=0.1, d2=0.0, l=0.5, alpha1=8.0, alpha2=0.0, theta=1.0, n=1.0, weights=WeightMode.UNIT):
    return TwoPhaseParams(
        d1=d1,
        d2=d2,
        transition=ConstantTransition(l=l),
        recruitment=RecruitmentHill(alpha1=alpha1, alpha2=alpha2, theta=theta, n=n),
        weights=weights,
    )


def test_no_transition_leaves_shifted_exponent():
    result = twophase_service.lambda_from_lambda0(0.5, 0.1, 0.0, 0.0, 0.2)
    assert result.lam == pytest.approx(0.4)
    assert result.residual < 1e-12


def test_zero_recruitment_and_quiescent_death():
    # G̃ = d2 = 0 reduces the dispersion relation to λ (λ + d1 - λ0 + L) = 0
    result = twophase_service.lambda_from_lambda0(0.3, 0.1, 0.0, 0.5, 0.0)
    assert result.lam == pytest.approx(0.0, abs=1e-15)
    assert twophase_service.lambda_zero_criterion(0.3, 0.1, 0.0, 0.5, 0.0).holds


def test_criterion_sign_tracks_the_exponent():
    lambda0, d2, l_const, g_tilde = 0.4, 0.05, 0.3, 0.2
    # G₊ (d1 - λ0) + L d2 = 0 at d1 = λ0 - L d2 / G₊
    d1 = lambda0 - l_const * d2 / (g_tilde + d2)
    at_root = twophase_service.lambda_from_lambda0(lambda0, d1, d2, l_const, g_tilde)
    assert at_root.lam == pytest.approx(0.0, abs=1e-12)
    assert twophase_service.lambda_zero_criterion(lambda0, d1, d2, l_const, g_tilde).holds
    assert twophase_service.lambda_from_lambda0(lambda0, d1 - 0.05, d2, l_const, g_tilde).lam > 0
    assert twophase_service.lambda_from_lambda0(lambda0, d1 + 0.05, d2, l_const, g_tilde).lam < 0
    assert not twophase_service.lambda_zero_criterion(lambda0, d1 + 0.05, d2, l_const, g_tilde).holds


def test_dispersion_root_satisfies_link_on_random_rates():
    rng = np.random.default_rng(11)
    for _ in range(200):
        lambda0 = rng.uniform(0.0, 2.0)
        d1, d2 = rng.uniform(0.0, 1.0, size=2)
        l_const = rng.uniform(0.05, 2.0)
        g_tilde = rng.uniform(0.1, 2.0)
        result = twophase_service.lambda_from_lambda0(lambda0, d1, d2, l_const, g_tilde)
        assert result.lam > -result.g_plus
        assert result.residual < 1e-9
        assert result.lam >= result.lower_bound - 1e-12
        assert result.lam_sqrt == pytest.approx(result.lam_rationalized, abs=1e-9)


def test_negative_rates_are_rejected():
    with pytest.raises(ConfigError):
        twophase_service.lambda_from_lambda0(0.5, -0.1, 0.0, 0.2, 0.1)


def test_growth_exponent_of_square_root_law():
    times = np.linspace(0.0, 100.0, 201)
    fit = twophase_service.growth_exponent(times, 3.0 * times ** 0.5, fraction=0.5)
    assert fit.slope == pytest.approx(0.5, abs=1e-10)
    assert np.exp(fit.intercept) == pytest.approx(3.0, rel=1e-9)
    assert fit.window_start == pytest.approx(50.0)


def test_regime_labels():
    times = np.linspace(0.0, 50.0, 101)
    assert twophase_service.classify_regime(times, np.exp(0.2 * times), 0.2) == Regime.EXPONENTIAL_GROWTH
    assert twophase_service.classify_regime(times, 1.0 + times, 0.0) == Regime.POLYNOMIAL_GROWTH
    assert twophase_service.classify_regime(times, np.exp(-0.1 * times), -0.1) == Regime.EXPONENTIAL_DECAY


def test_supersolution_holds_below_envelope():
    times = np.linspace(0.0, 10.0, 51)
    s2 = 0.9 * (times + 1.0) ** 0.5
    report = twophase_service.s2_supersolution_check(times, s2, 2.0, a=1.0, t0=1.0)
    assert report.holds
    assert report.enlargements == 0
    assert report.first_crossing is None
    assert report.tightest_a == pytest.approx(0.9)


def test_supersolution_is_enlarged_after_crossing():
    times = np.linspace(0.0, 10.0, 51)
    s2 = 1.2 * (times + 1.0) ** 0.5
    report = twophase_service.s2_supersolution_check(times, s2, 2.0, a=1.0, t0=1.0)
    assert report.holds
    assert report.first_crossing == 0.0
    assert report.enlargements >= 1
    assert report.a >= 1.2


def test_supersolution_amplitude_from_recruitment_bound():
    times = np.linspace(0.0, 10.0, 11)
    report = twophase_service.s2_supersolution_check(times, 0.5 + 0.0 * times, 1.0, alpha1=2.0, theta=1.0,
                                                     c=0.5, c3=1.0)
    assert report.a_min == pytest.approx(1.0)
    assert report.holds
    with pytest.raises(DegenerateError):
        twophase_service.s2_supersolution_check(times, 0.0 * times, 1.0)


def test_limit_eigensystem_ratios(synthetic_solution, window_model):
    params = make_params(d1=0.1, l=0.5)
    limit = twophase_service.limit_eigensystem(params, window_model, synthetic_solution)
    l_plus = 0.5 + 0.1 - 0.3
    assert limit.strict
    assert limit.l_plus == pytest.approx(l_plus)
    assert np.allclose(limit.q2, l_plus * limit.p2)
    assert np.allclose(limit.psi2, (l_plus / 0.5) * limit.phi2)
    assert limit.mass_residual < 1e-12
    assert limit.duality_residual < 1e-12


def test_limit_eigensystem_preconditions(synthetic_solution, window_model):
    with pytest.raises(PreconditionError):
        twophase_service.limit_eigensystem(make_params(d2=0.1), window_model, synthetic_solution)
    relaxed = twophase_service.limit_eigensystem(make_params(d2=0.1), window_model, synthetic_solution, strict=False)
    assert not relaxed.strict


def test_stiff_recruitment_runs_and_stays_nonnegative(synthetic_solution, window_model):
    p0 = synthetic_solution.density
    trajectory = twophase_service.simulate_twophase(make_params(alpha1=20.0), window_model, synthetic_solution,
                                                    p0, np.zeros_like(p0), horizon=1.0)
    assert np.all(trajectory.final.p >= 0.0)
    assert np.all(trajectory.final.q >= 0.0)
    assert np.all(np.isfinite(trajectory.series("N")))


def test_exchange_is_the_matrix_exponential():
    rng = np.random.default_rng(5)
    p, q = rng.uniform(0.0, 1.0, size=(2, 4, 3))
    transition = rng.uniform(0.0, 3.0, size=(4, 3))
    transition[0, 0] = 0.0
    d1, d2, g, tau = 0.2, 0.1, 6.0, 0.3
    p_next, q_next = twophase_service.exchange(p, q, transition, g, d1, d2, tau)
    for i in range(4):
        for j in range(3):
            l = transition[i, j]
            flow = expm(tau * np.array([[-(d1 + l), g], [l, -(g + d2)]]))
            expected = flow @ np.array([p[i, j], q[i, j]])
            assert p_next[i, j] == pytest.approx(expected[0], rel=1e-10)
            assert q_next[i, j] == pytest.approx(expected[1], rel=1e-10)


def test_exchange_without_death_conserves_cells():
    p = np.array([1.0, 0.0, 0.3])
    q = np.array([0.0, 2.0, 0.7])
    transition = np.array([0.5, 4.0, 1e-3])
    p_next, q_next = twophase_service.exchange(p, q, transition, 50.0, 0.0, 0.0, 1.0)
    assert np.allclose(p_next + q_next, p + q, rtol=1e-12)
    assert np.all(p_next >= 0.0) and np.all(q_next >= 0.0)


def scheme_solution(model, grid, guess):
    """Scheme steady state dressed as an eigen solution, so p stays on the discrete eigenvector"""
    steady = transport_service.steady_state(model, grid, guess)
    solution = EigenSolution(
        lambda0=steady.lam,
        steps=[],
        epsilon_schedule=[],
        grid=grid,
        boundary=steady.density[0].copy(),
        density=steady.density,
        adjoint_boundary=np.ones(grid.n_x),
        adjoint=np.ones((grid.n_a, grid.n_x)),
    )
    return steady, solution


def test_constant_rates_follow_the_split_exchange(window_model, small_grid):
    d1, l, g = 0.05, 1.0, 8.0
    steady, solution = scheme_solution(window_model, small_grid, 0.9)
    # θ far above N keeps G(N) = α1 to machine precision
    params = make_params(d1=d1, l=l, alpha1=g, theta=1e12)
    trajectory = twophase_service.simulate_twophase(params, window_model, solution, steady.density,
                                                    np.zeros_like(steady.density), horizon=1.0)
    dt = small_grid.da
    half = expm(0.5 * dt * np.array([[-(d1 + l), g], [l, -g]]))
    step = half @ np.diag([np.exp(steady.lam * dt), 1.0]) @ half
    state = np.array([1.0, 0.0])
    expected = [1.0]
    for _ in range(len(trajectory.records) - 1):
        state = step @ state
        expected.append(state.sum())
    assert np.allclose(trajectory.series("N"), expected, rtol=1e-5)


def test_constant_rates_grow_at_the_dispersion_root(window_model, small_grid):
    d1, l, g = 0.05, 1.0, 2.0
    steady, solution = scheme_solution(window_model, small_grid, 0.9)
    params = make_params(d1=d1, l=l, alpha1=g, theta=1e12)
    trajectory = twophase_service.simulate_twophase(params, window_model, solution, steady.density,
                                                    np.zeros_like(steady.density), horizon=8.0)
    times, population = trajectory.series("t"), trajectory.series("N")
    late = len(times) // 2
    rate = np.log(population[-1] / population[late]) / (times[-1] - times[late])
    expected = twophase_service.lambda_from_lambda0(steady.lam, d1, 0.0, l, g).lam
    assert rate == pytest.approx(expected, rel=5e-3)


@pytest.mark.slow
def test_cyclin_decay_matches_the_dispersion_root(cyclin_model, cyclin_grid):
    d1, l, g = 0.05, 1.0, 8.0
    steady, solution = scheme_solution(cyclin_model, cyclin_grid, 0.03)
    params = make_params(d1=d1, l=l, alpha1=g, theta=1e12)
    trajectory = twophase_service.simulate_twophase(params, cyclin_model, solution, steady.density,
                                                    np.zeros_like(steady.density), horizon=100.0)
    times, population = trajectory.series("t"), trajectory.series("N")
    late = len(times) // 2
    rate = np.log(population[-1] / population[late]) / (times[-1] - times[late])
    expected = twophase_service.lambda_from_lambda0(steady.lam, d1, 0.0, l, g).lam
    assert expected < 0
    assert rate == pytest.approx(expected, abs=1e-3)


def test_quiescent_cells_decay_at_the_frozen_recruitment(synthetic_solution, window_model):
    q0 = synthetic_solution.density
    params = make_params(d2=0.2, l=0.0, alpha1=3.0)
    trajectory = twophase_service.simulate_twophase(params, window_model, synthetic_solution,
                                                    np.zeros_like(q0), q0, horizon=1.0)
    dt = synthetic_solution.grid.da
    records = trajectory.records
    for before, after in zip(records[:-1], records[1:]):
        assert after.Q == pytest.approx(before.Q * np.exp(-(before.G + 0.2) * dt), rel=1e-12)


def test_no_transition_keeps_quiescent_compartment_empty(synthetic_solution, window_model):
    p0 = synthetic_solution.density
    trajectory = twophase_service.simulate_twophase(make_params(l=0.0), window_model, synthetic_solution,
                                                    p0, np.zeros_like(p0), horizon=1.0)
    assert np.all(trajectory.series("Q") == 0.0)
    assert np.allclose(trajectory.series("R"), 1.0)
    assert np.all(np.isnan(trajectory.series("S2")))


def test_two_phase_run_stays_nonnegative(synthetic_solution, window_model):
    p0 = synthetic_solution.density
    trajectory = twophase_service.simulate_twophase(make_params(alpha1=4.0, weights=WeightMode.ADJOINT),
                                                    window_model, synthetic_solution, p0, np.zeros_like(p0),
                                                    horizon=2.0, output_every=5)
    assert np.all(trajectory.final.p >= 0.0)
    assert np.all(trajectory.final.q >= 0.0)
    assert trajectory.series("Q")[-1] > 0.0
    assert trajectory.transition_mean == pytest.approx(0.5)
    assert np.all(np.isfinite(trajectory.series("S2")))
    report = twophase_service.check_trajectory_supersolution(trajectory, make_params(alpha1=4.0), 0.3)
    assert report is not None
    assert report.c == pytest.approx((0.3 - 0.1) / trajectory.limit.l_plus)
