from typing import Optional, Sequence, Tuple
import logging
import math

import numpy as np

from app.core.exceptions import ConfigError, DegenerateError, PreconditionError, RegimeError
from app.models.coefficients import ModelCoefficients, TwoPhaseParams, WeightMode
from app.models.eigen import EigenSolution
from app.models.twophase import (
    CriterionResult,
    DispersionResult,
    GrowthFit,
    LimitEigensystem,
    Regime,
    SupersolutionReport,
    TwoPhaseRecord,
    TwoPhaseState,
    TwoPhaseTrajectory,
)
from app.services.coefficient_service import coefficient_service
from app.services.transport_service import transport_service

logger = logging.getLogger(__name__)


class TwoPhaseService:
    """Proliferating/quiescent dynamics with Hill recruitment"""

    def lambda_from_lambda0(self, lambda0: float, d1: float, d2: float, l_const: float,
                            g_tilde: float) -> DispersionResult:
        """Root λ > -G₊ of (λ + d₊)(λ + G₊) + L(λ + d2) = 0"""
        if min(d1, d2, l_const, g_tilde) < 0:
            raise ConfigError("dispersion rates must be nonnegative")
        g_plus = g_tilde + d2
        d_plus = d1 - lambda0
        l_plus = l_const + d_plus
        s = g_plus + l_plus
        c = d_plus * g_plus + d2 * l_const
        discriminant = max(s * s - 4.0 * c, 0.0)
        root = math.sqrt(discriminant)
        lam_sqrt = 0.5 * (-s + root)
        denominator = s + root
        lam_rationalized = -2.0 * c / denominator if denominator != 0 else lam_sqrt
        # the rationalized form avoids cancellation when s >= 0
        lam = lam_rationalized if s >= 0 and denominator != 0 else lam_sqrt

        l_inner = l_const + d1
        lower_disc = max((g_plus + l_inner) ** 2 - 4.0 * (d1 * g_plus + l_const * d2), 0.0)
        lower = 0.5 * (-(g_plus + l_inner) + math.sqrt(lower_disc))

        residual = abs(self._link(lam, d1, d2, l_const, g_tilde) - lambda0) if lam + g_plus != 0 else math.inf
        return DispersionResult(
            lambda0=lambda0,
            g_tilde=g_tilde,
            g_plus=g_plus,
            d_plus=d_plus,
            l_plus=l_plus,
            lam=lam,
            lam_sqrt=lam_sqrt,
            lam_rationalized=lam_rationalized,
            lower_bound=lower,
            discriminant=s * s - 4.0 * c,
            residual=residual,
        )

    @staticmethod
    def _link(lam: float, d1: float, d2: float, l_const: float, g_tilde: float) -> float:
        return lam + d1 + l_const * (lam + d2) / (lam + g_tilde + d2)

    def lambda_zero_criterion(self, lambda0: float, d1: float, d2: float, l_const: float,
                              g_tilde: float, tol: float = 1e-10) -> CriterionResult:
        """λ = 0 exactly when G₊ d₊ + L d2 = 0"""
        residual = (g_tilde + d2) * (d1 - lambda0) + l_const * d2
        scale = max(1.0, abs(lambda0), (g_tilde + d2) * abs(d1 - lambda0), l_const * d2)
        return CriterionResult(holds=abs(residual) <= tol * scale, residual=residual)

    def transition_mean(self, params: TwoPhaseParams, sol: EigenSolution) -> float:
        """Constant L for the dispersion formulas: L itself, or its N-weighted mean"""
        transition = params.transition
        if transition.kind == "constant":
            return transition.l
        grid = sol.grid
        values = transition.rate(grid.a[:, None], grid.x[None, :])
        return grid.integrate(values * sol.density) / grid.integrate(sol.density)

    def limit_eigensystem(self, params: TwoPhaseParams, model: ModelCoefficients, sol: EigenSolution,
                          strict: bool = True) -> LimitEigensystem:
        """(P2, 𝒬2, φ2, ψ2) of the G̃ → 0 limit, built on the one-phase (N, φ)"""
        if sol.adjoint is None:
            raise ConfigError("limit eigensystem needs the adjoint eigenfunction φ")
        lambda0 = sol.lambda0
        d1, d2 = params.d1, params.d2
        transition = self.transition_mean(params, sol)
        l_plus = transition + d1 - lambda0
        satisfied = d2 == 0 and 0 < d1 < lambda0 and l_plus > 0
        if strict and not satisfied:
            raise PreconditionError(
                f"limit system needs d2 = 0, 0 < d1 < λ0 and L > λ0 - d1 "
                f"(d1={d1}, d2={d2}, L={transition:.6g}, λ0={lambda0:.6g})"
            )
        if l_plus <= 0 or transition <= 0:
            raise PreconditionError(f"L + d1 - λ0 = {l_plus:.6g} leaves 𝒬2 or ψ2 nonpositive")

        grid = sol.grid
        c_p = 1.0 / (1.0 + l_plus)
        c_phi = 1.0 / (c_p * (1.0 + l_plus ** 2 / transition))
        p2 = c_p * sol.density
        q2 = l_plus * p2
        phi2 = c_phi * sol.adjoint
        psi2 = (l_plus / transition) * phi2
        mass = grid.integrate(p2 + q2)
        duality = grid.integrate(phi2 * p2 + psi2 * q2)
        logger.info(f"Limit system: L₊={l_plus:.6g}, c_P={c_p:.6g}, c_φ={c_phi:.6g}, strict={satisfied}")
        return LimitEigensystem(
            p2=p2, q2=q2, phi2=phi2, psi2=psi2,
            l_plus=l_plus,
            transition=transition,
            c_p=c_p,
            c_phi=c_phi,
            strict=satisfied,
            mass_residual=abs(mass - 1.0),
            duality_residual=abs(duality - 1.0),
        )

    def _weights(self, params: TwoPhaseParams, limit: Optional[LimitEigensystem]) -> Tuple:
        if params.weights == WeightMode.ADJOINT:
            if limit is None:
                raise PreconditionError("adjoint weights need the limit eigensystem (L + d1 > λ0)")
            return limit.phi2, limit.psi2
        return params.phi_weight, params.psi_weight

    @staticmethod
    def exchange(p: np.ndarray, q: np.ndarray, transition: np.ndarray, recruitment: float,
                 d1: float, d2: float, tau: float) -> Tuple[np.ndarray, np.ndarray]:
        """Exact flow over τ of p' = -(d1 + L)p + Gq, q' = Lp - (G + d2)q at every (a, x)"""
        u = d1 + transition
        w = recruitment + d2
        m = -0.5 * (u + w)
        half_gap = 0.5 * (w - u)
        s = np.sqrt(half_gap ** 2 + recruitment * transition)
        # m + s <= 0 for nonnegative rates, so neither exponential overflows
        grow = np.exp((m + s) * tau)
        fall = np.exp((m - s) * tau)
        even = 0.5 * (grow + fall)
        width = 2.0 * s * tau
        safe = np.where(s > 0, 2.0 * s, 1.0)
        # e^{mτ} sinh(sτ)/s, through expm1 while sτ is small
        odd = np.where(width < 1.0, fall * np.expm1(np.minimum(width, 1.0)) / safe, (grow - fall) / safe)
        odd = np.where(s > 0, odd, tau * grow)
        p_next = (even + odd * half_gap) * p + odd * recruitment * q
        q_next = odd * transition * p + (even - odd * half_gap) * q
        return p_next, q_next

    def simulate_twophase(self, params: TwoPhaseParams, model: ModelCoefficients, sol: EigenSolution,
                          n0p: np.ndarray, n0q: np.ndarray, horizon: float,
                          output_every: int = 1) -> TwoPhaseTrajectory:
        """p transported with death d1, quiescent exchange split symmetrically around the transport step.

        L and G(N) act at the same (a, x) in both directions: q keeps the age
        and content it left p with. G is frozen from N(t) over each step.
        """
        try:
            grid = sol.grid
            scheme = transport_service.get_scheme(model, grid)
            scheme.check_cfl()
            dt = scheme.dt
            half = 0.5 * dt
            transition = np.asarray(params.transition.rate(grid.a[:, None], grid.x[None, :]), dtype=float)
            transition = np.broadcast_to(transition, (grid.n_a, grid.n_x))

            try:
                limit = self.limit_eigensystem(params, model, sol, strict=False)
            except PreconditionError as e:
                logger.warning(f"S2 unavailable: {e}")
                limit = None
            phi_w, psi_w = self._weights(params, limit)

            def record(state: TwoPhaseState) -> Tuple[TwoPhaseRecord, float]:
                weighted = grid.integrate(phi_w * state.p + psi_w * state.q)
                recruitment = coefficient_service.recruitment(weighted, params)
                total_p = grid.integrate(state.p)
                total_q = grid.integrate(state.q)
                s2 = math.nan if limit is None else grid.integrate(limit.phi2 * state.p + limit.psi2 * state.q)
                share = total_p / (total_p + total_q) if total_p + total_q > 0 else math.nan
                return TwoPhaseRecord(t=state.t, N=weighted, P=total_p, Q=total_q, G=recruitment,
                                      S2=s2, R=share), recruitment

            state = TwoPhaseState(t=0.0, p=np.asarray(n0p, dtype=float), q=np.asarray(n0q, dtype=float), grid=grid)
            current, recruitment = record(state)
            records = [current]
            steps = int(math.ceil(horizon / dt - 1e-9))
            for k in range(1, steps + 1):
                p, q = self.exchange(state.p, state.q, transition, recruitment, params.d1, params.d2, half)
                p = scheme.advance(p, rate=0.0)
                p, q = self.exchange(p, q, transition, recruitment, params.d1, params.d2, half)
                state = TwoPhaseState(t=k * dt, p=p, q=q, grid=grid)
                current, recruitment = record(state)
                if not np.isfinite(current.N):
                    raise DegenerateError(f"weighted population is not finite at t = {state.t:.6g}")
                if k % output_every == 0 or k == steps:
                    records.append(current)
            logger.info(f"Two-phase run: N {records[0].N:.6g} -> {records[-1].N:.6g} over {steps} steps")
            return TwoPhaseTrajectory(
                records=records,
                final=state,
                transition_mean=self.transition_mean(params, sol),
                limit=limit,
            )
        except Exception as e:
            logger.error(f"Error simulating two-phase system: {e}")
            raise

    def growth_exponent(self, times: Sequence[float], values: Sequence[float], fraction: float = 0.5) -> GrowthFit:
        """Least-squares slope of log N against log t on the last `fraction` of the horizon"""
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        end = times.max()
        window = (times >= (1.0 - fraction) * end) & (times > 0)
        if window.sum() < 2:
            raise RegimeError("fit window holds fewer than two positive times")
        t, v = times[window], values[window]
        if np.any(~np.isfinite(v)) or np.any(v <= 0):
            raise RegimeError("nonpositive population in the fit window: decay, not growth")
        (slope, intercept), residuals, *_ = np.polyfit(np.log(t), np.log(v), 1, full=True)
        semilog = np.polyfit(t, np.log(v), 1)[0]
        residual = float(math.sqrt(residuals[0] / len(t))) if len(residuals) else 0.0
        return GrowthFit(slope=float(slope), intercept=float(intercept), residual=residual,
                         window_start=float(t[0]), window_end=float(t[-1]), semilog_slope=float(semilog))

    def classify_regime(self, times: Sequence[float], values: Sequence[float], lambda_infinity: float,
                        fraction: float = 0.5, tol: float = 1e-8) -> Regime:
        """Decay from a falling late window, exponential growth from λ(G̃ = α2) > 0, otherwise polynomial"""
        try:
            fit = self.growth_exponent(times, values, fraction)
        except RegimeError:
            return Regime.EXPONENTIAL_DECAY
        if fit.semilog_slope < 0:
            return Regime.EXPONENTIAL_DECAY
        if lambda_infinity > tol:
            return Regime.EXPONENTIAL_GROWTH
        return Regime.POLYNOMIAL_GROWTH

    def s2_supersolution_check(self, times: Sequence[float], s2: Sequence[float], n: float,
                               alpha1: Optional[float] = None, theta: Optional[float] = None,
                               c: Optional[float] = None, c3: Optional[float] = None,
                               a: Optional[float] = None, t0: Optional[float] = None,
                               max_enlargements: int = 20) -> SupersolutionReport:
        """S2(t) <= Σ(t) = a (t + t0)^{1/n} on the horizon, with Σ(0) >= S2(0)"""
        times = np.asarray(times, dtype=float)
        s2 = np.asarray(s2, dtype=float)
        if np.any(~np.isfinite(s2)) or s2[0] <= 0:
            raise DegenerateError("S2 series must be finite and start positive")
        power = 1.0 / n

        a_min = None
        if None not in (alpha1, theta, c, c3) and c > 0 and c3 > 0:
            a_min = (n * c * alpha1) ** (1.0 / n) * theta / c3
        if a is None:
            a = a_min if a_min is not None else s2[0]
        if t0 is None:
            t0 = (s2[0] / a) ** n

        def envelope(amplitude: float, shift: float) -> np.ndarray:
            return amplitude * (times + shift) ** power

        tolerance = 1e-12 * np.maximum(np.abs(s2), 1.0)
        first_crossing = None
        enlargements = 0
        holds = bool(np.all(s2 <= envelope(a, t0) + tolerance))
        if not holds:
            first_crossing = float(times[np.argmax(s2 > envelope(a, t0) + tolerance)])
            logger.warning(f"S2 crosses the supersolution at t = {first_crossing:.6g}; enlarging a")
            while not holds and enlargements < max_enlargements:
                enlargements += 1
                a = max(a, float(np.max(s2 / (times + t0) ** power))) * (1.0 + 1e-9)
                t0 = (s2[0] / a) ** n
                holds = bool(np.all(s2 <= envelope(a, t0) + tolerance))
        tightest = float(np.max(s2 / (times + t0) ** power))
        return SupersolutionReport(holds=holds, a=a, t0=t0, a_min=a_min, tightest_a=tightest,
                                   first_crossing=first_crossing, enlargements=enlargements, c=c, c3=c3)

    def check_trajectory_supersolution(self, trajectory: TwoPhaseTrajectory, params: TwoPhaseParams,
                                       lambda0: float) -> Optional[SupersolutionReport]:
        """S2 bound with C = (λ0 - d1)/L₊ and C3 = min N/S2 estimated from the run"""
        if trajectory.limit is None:
            return None
        s2 = trajectory.series("S2")
        population = trajectory.series("N")
        valid = np.isfinite(s2) & (s2 > 0)
        if not np.any(valid):
            return None
        c = (lambda0 - params.d1) / trajectory.limit.l_plus
        c3 = float(np.min(population[valid] / s2[valid]))
        hill = params.recruitment
        return self.s2_supersolution_check(trajectory.series("t"), s2, hill.n, alpha1=hill.alpha1,
                                           theta=hill.theta, c=c, c3=c3)


# Service instance
twophase_service = TwoPhaseService()
