from typing import Dict, Iterable, Optional, Tuple
import logging
import math
import threading

import numpy as np
from scipy.optimize import brentq

from app.core.config import settings
from app.core.exceptions import CFLError, ConfigError, DegenerateError, NumericError
from app.models.coefficients import ModelCoefficients
from app.models.eigen import EigenSolution
from app.models.grid import Grid
from app.models.transport import DiscreteSteadyState, EntropyFunctional, Observation, TimeField, Trajectory
from app.services.eigen_service import KernelTable, eigen_service
from app.utils.power_iteration import power_iteration

logger = logging.getLogger(__name__)


class TransportScheme:
    """Upwind discretization of ∂ₜn + ∂ₐn + ∂ₓ(Γn) = -Bn with Δt = Δa.

    Content control volumes are centered on the nodes with trapezoid
    volumes; Γ is sampled at mid-step ages on the faces between them and
    vanishes through x = 0 and x = x_M. Each row first loses the division
    integral ∫B taken along the characteristic through its nodes over one
    age step, from the same flow table and daughter projector the eigen
    operator is assembled with. Age rows are trapezoid cells: the row 0
    half cell and the lower half of row 1 share the mass born in the step.
    """

    def __init__(self, model: ModelCoefficients, grid: Grid, table: KernelTable):
        x = grid.x
        faces = 0.5 * (x[:-1] + x[1:])
        mid_age = grid.a[:, None] + 0.5 * grid.da
        speed = model.growth.rate(mid_age, faces[None, :])
        self.grid = grid
        self.dt = grid.da
        self.wx = grid.wx
        self.wa = grid.wa
        self.plus = np.maximum(speed, 0.0)
        self.minus = np.maximum(-speed, 0.0)
        self.projection = table.node_projection

        decrement = self._division_decrement(table)
        self.survival = np.exp(-decrement)
        self.offspring = 2.0 * (-np.expm1(-decrement))
        # the oldest half cell ages out during the step
        self.offspring[-1] = 0.0
        # newborns keep dividing inside their first step: mass grows like e^{B u} over age u
        half = 0.5 * decrement[0]
        small = half < 1e-12
        self.early = np.where(small, 1.0 + 0.5 * half, np.expm1(half) / np.where(small, 1.0, half))
        self.late = np.exp(half) * self.early

        leaving = np.zeros((grid.n_a, grid.n_x))
        leaving[:, :-1] += self.plus
        leaving[:, 1:] += self.minus
        self.positivity = float(np.max(self.dt * leaving / self.wx[None, :]))
        self.courant = float(self.dt * np.max(np.abs(speed)) / grid.dx)

    def _division_decrement(self, table: KernelTable) -> np.ndarray:
        """∫B over [a_c, a_c + Δa] along the characteristic through each node of row c"""
        grid = self.grid
        rows = table.node_index
        cols = table.nodal
        position = np.maximum.accumulate(table.position[rows][:, cols], axis=1)
        cum_birth = table.cum_birth[rows][:, cols]
        decrement = np.zeros((grid.n_a, grid.n_x))
        for c in range(grid.n_a - 1):
            step = np.maximum(cum_birth[c + 1] - cum_birth[c], 0.0)
            decrement[c] = np.interp(grid.x, position[c], step)
        return decrement

    def check_cfl(self) -> None:
        if self.positivity > 1.0 + 1e-12:
            raise CFLError(
                f"upwind step loses positivity: Δt (Γ⁺ + Γ⁻)/V reaches {self.positivity:.4g} > 1 "
                f"(Courant number {self.courant:.4g}); refine the age grid"
            )

    def _move(self, kept: np.ndarray, plus: np.ndarray, minus: np.ndarray) -> np.ndarray:
        flux = plus * kept[..., :-1] - minus * kept[..., 1:]
        moved = kept.copy()
        moved[..., :-1] -= self.dt * flux / self.wx[:-1]
        moved[..., 1:] += self.dt * flux / self.wx[1:]
        return moved

    def renewal(self, n: np.ndarray) -> np.ndarray:
        """Newborn row: the mass divided over one step, doubled and projected on the content hats, per unit time"""
        divided = self.wa @ (self.offspring * n)
        return (self.projection @ (self.wx * divided)) / (self.wx * self.dt)

    def advance(self, n: np.ndarray, rate: float = 0.0) -> np.ndarray:
        """One step of length Δt = Δa; `rate` is a uniform extra death rate"""
        newborn = self.renewal(n)
        moved = self._move(self.survival[:-1] * n[:-1], self.plus[:-1], self.minus[:-1])
        out = np.empty_like(n)
        out[0] = self.early * newborn
        out[1] = 0.5 * (moved[0] + self.late * newborn)
        out[2:] = moved[1:]
        if rate:
            out *= math.exp(-rate * self.dt)
        return out

    def _cohort(self, start: np.ndarray, lam: float):
        """Rows r_c of a separable solution e^{λt} r with r_0 = start (rows of `start` are independent)"""
        factor = math.exp(-lam * self.dt)
        row = start
        yield row
        for c in range(self.grid.n_a - 1):
            moved = factor * self._move(self.survival[c] * row, self.plus[c], self.minus[c])
            row = 0.5 * (moved + (self.late / self.early) * start) if c == 0 else moved
            yield row

    def renewal_operator(self, lam: float) -> np.ndarray:
        """Matrix taking r_0 to the newborn row the scheme regenerates from it at rate λ"""
        n = self.grid.n_x
        divided = np.zeros((n, n))
        with np.errstate(over="raise", invalid="raise"):
            try:
                for c, rows in enumerate(self._cohort(np.eye(n), lam)):
                    divided += self.wa[c] * self.offspring[c] * rows
            except FloatingPointError:
                raise NumericError(f"scheme renewal operator overflows at λ = {lam:.6g}")
        factor = math.exp(-lam * self.dt)
        births = (self.projection @ (self.wx[:, None] * divided.T)) / (self.wx[:, None] * self.dt)
        return factor * self.early[:, None] * births

    def steady_state(self, guess: float) -> DiscreteSteadyState:
        """Discrete Malthus rate λ_h (ρ of the renewal operator equal to 1) and its profile"""
        state = {"v": None, "count": 0}

        def excess(lam: float) -> float:
            mu, state["v"], _ = power_iteration(self.renewal_operator(lam), self.wx, start=state["v"])
            state["count"] += 1
            return mu - 1.0

        width = max(0.25 * abs(guess), 1e-3)
        lo, hi = guess - width, guess + width
        for _ in range(60):
            if excess(lo) > 0:
                break
            lo -= width
            width *= 2.0
        else:
            raise NumericError(f"scheme renewal never reaches μ = 1 above λ = {lo:.6g}")
        width = max(0.25 * abs(guess), 1e-3)
        for _ in range(60):
            if excess(hi) <= 0:
                break
            hi += width
            width *= 2.0
        else:
            raise NumericError(f"no upper bracket for the scheme rate below λ = {hi:.6g}")
        lam = brentq(excess, lo, hi, xtol=settings.BISECTION_TOLERANCE)
        excess(lam)
        newborn = np.maximum(state["v"], 0.0)
        density = np.array(list(self._cohort(newborn, lam)))
        mass = self.grid.integrate(density)
        if not np.isfinite(mass) or mass <= 0:
            raise DegenerateError("scheme steady state has no mass")
        logger.info(f"Scheme Malthus rate λ_h = {lam:.10g} after {state['count']} evaluations")
        return DiscreteSteadyState(lam=float(lam), density=density / mass, newborn=newborn / mass,
                                   evaluations=state["count"])


class TransportService:
    """Time integration of the renewal transport equation and its entropy diagnostics"""

    def __init__(self):
        self._schemes: Dict[tuple, TransportScheme] = {}
        self._steady: Dict[tuple, DiscreteSteadyState] = {}
        self._lock = threading.Lock()

    def get_scheme(self, model: ModelCoefficients, grid: Grid) -> TransportScheme:
        key = (model, grid)
        with self._lock:
            scheme = self._schemes.get(key)
        if scheme is None:
            scheme = TransportScheme(model, grid, eigen_service.kernel_table(model, grid))
            with self._lock:
                self._schemes[key] = scheme
        return scheme

    def steady_state(self, model: ModelCoefficients, grid: Grid, guess: float) -> DiscreteSteadyState:
        """Cached discrete eigenpair of the scheme, searched around the guess"""
        key = (model, grid)
        with self._lock:
            steady = self._steady.get(key)
        if steady is None:
            steady = self.get_scheme(model, grid).steady_state(guess)
            with self._lock:
                self._steady[key] = steady
        return steady

    def step(self, state: TimeField, model: ModelCoefficients, renormalize: Optional[bool] = None) -> TimeField:
        """Advance one Δt; the renormalized form removes the state's growth rate"""
        scheme = self.get_scheme(model, state.grid)
        scheme.check_cfl()
        renormalize = state.renormalized if renormalize is None else renormalize
        density = scheme.advance(state.density, rate=state.rate if renormalize else 0.0)
        return state.model_copy(update={
            "t": state.t + scheme.dt,
            "density": density,
            "renormalized": renormalize,
        })

    def initial_condition(self, sol: EigenSolution, kind: str = "eigen", scale: float = 1.0,
                          perturbation: float = 0.5) -> np.ndarray:
        """n0 = N, scale·N, or N (1 + p sin(2πx/x_M))"""
        density = sol.density
        if kind == "eigen":
            return density.copy()
        if kind == "scaled":
            return scale * density
        if kind == "perturbed":
            x = sol.grid.x
            return scale * density * (1.0 + perturbation * np.sin(2.0 * math.pi * x / sol.grid.x_max))[None, :]
        raise ConfigError(f"simulate.initial: unknown initial profile '{kind}'")

    def _support(self, density: np.ndarray) -> np.ndarray:
        return density > 1e-14 * np.max(density)

    def gre_entropy(self, state: TimeField, ref: EigenSolution, H: Optional[EntropyFunctional] = None) -> float:
        """𝓗 = ∬ Nφ H(ñ/N) over the support of N"""
        H = EntropyFunctional() if H is None else H
        N = ref.density
        support = self._support(N)
        ratio = np.where(support, state.scaled / np.where(support, N, 1.0), 1.0)
        integrand = np.where(support, N * ref.adjoint * H.evaluate(ratio), 0.0)
        return state.grid.integrate(integrand)

    def observe(self, state: TimeField, ref: EigenSolution, m0: float,
                H: Optional[EntropyFunctional] = None) -> Observation:
        grid = state.grid
        scaled = state.scaled
        phi = ref.adjoint
        N = ref.density
        support = self._support(N)
        envelope = np.max(np.abs(scaled[support]) / N[support]) if np.any(support) else 0.0
        return Observation(
            t=state.t,
            mass=grid.integrate(state.density),
            duality=grid.integrate(scaled * phi),
            entropy=self.gre_entropy(state, ref, H),
            distance=grid.integrate(np.abs(scaled - m0 * N) * phi),
            abs_duality=grid.integrate(np.abs(scaled) * phi),
            envelope=float(envelope),
        )

    def simulate(self, n0: np.ndarray, model: ModelCoefficients, sol: EigenSolution, horizon: float,
                 renormalize: bool = True, entropy: Optional[EntropyFunctional] = None,
                 snapshot_times: Iterable[float] = (), output_every: int = 1) -> Trajectory:
        """Evolve n0 to the horizon, recording the duality, entropy and distance observables.

        Growth is removed at the scheme's own Malthus rate λ_h, so D(t) only
        moves by the gap between the discrete and the eigen profiles.
        """
        try:
            if sol.adjoint is None:
                raise ConfigError("simulate needs the adjoint eigenfunction φ")
            grid = sol.grid
            n0 = np.asarray(n0, dtype=float)
            if n0.shape != (grid.n_a, grid.n_x):
                raise ConfigError(f"initial density shape {n0.shape} does not match the grid")
            scheme = self.get_scheme(model, grid)
            scheme.check_cfl()
            steady = self.steady_state(model, grid, sol.lambda0)
            logger.info(f"Transport: Δt = {scheme.dt:.6g}, Courant {scheme.courant:.4g}, "
                        f"positivity {scheme.positivity:.4g}, λ_h = {steady.lam:.8g} (λ0 = {sol.lambda0:.8g})")

            state = TimeField(t=0.0, density=n0, dt=scheme.dt, grid=grid,
                              renormalized=renormalize, rate=steady.lam)
            m0 = grid.integrate(n0 * sol.adjoint)
            if not np.isfinite(m0):
                raise DegenerateError("initial duality pairing is not finite")
            pairing = grid.integrate(steady.density * sol.adjoint)
            profile = steady.density / pairing if pairing > 0 else steady.density
            steady_distance = grid.integrate(np.abs(profile - sol.density) * sol.adjoint)
            steps = int(math.ceil(horizon / scheme.dt - 1e-9))
            pending = sorted(float(t) for t in snapshot_times)
            snapshots = {}
            while pending and pending[0] <= 0.0:
                snapshots[pending.pop(0)] = n0.copy()
            rate = steady.lam if renormalize else 0.0

            observations = [self.observe(state, sol, m0, entropy)]
            for k in range(1, steps + 1):
                density = scheme.advance(state.density, rate=rate)
                state = state.model_copy(update={"t": k * scheme.dt, "density": density})
                while pending and pending[0] <= state.t + 1e-9 * scheme.dt:
                    snapshots[pending.pop(0)] = state.density.copy()
                if k % output_every == 0 or k == steps:
                    observations.append(self.observe(state, sol, m0, entropy))
            trajectory = Trajectory(
                observations=observations,
                final=state,
                snapshots=snapshots,
                m0=m0,
                courant=scheme.courant,
                positivity=scheme.positivity,
                scheme_lambda=steady.lam,
                steady_distance=steady_distance,
            )
            logger.info(
                f"Transport done: {steps} steps, duality drift {trajectory.duality_drift:.3e}, "
                f"distance {observations[0].distance:.4g} -> {observations[-1].distance:.4g}"
            )
            return trajectory
        except Exception as e:
            logger.error(f"Error simulating transport: {e}")
            raise


# Service instance
transport_service = TransportService()
