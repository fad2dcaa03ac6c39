from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple
import logging
import math
import threading

import numpy as np
from scipy.integrate import solve_ivp, trapezoid
from scipy.optimize import brentq

from app.core.config import settings
from app.core.exceptions import DomainError, NoSolutionError, NumericError, OutOfRangeError
from app.models.flow import CharacteristicWeights, FlowTable, WeakAssumptionReport
from app.models.grid import Grid
from app.utils.quadrature import HatProjector, age_partition

logger = logging.getLogger(__name__)


class Characteristic:
    """Dense output of the augmented flow [X, ∫∂ₓΓ, ∫B] for a batch of launches"""

    def __init__(self, launches: np.ndarray, edges: List[float], solutions: list, initial: np.ndarray):
        self.launches = launches
        self.edges = np.asarray(edges)
        self.solutions = solutions
        self.initial = initial

    @property
    def a_end(self) -> float:
        return float(self.edges[-1])

    def evaluate(self, ages) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        ages = np.atleast_1d(np.asarray(ages, dtype=float))
        n = len(self.launches)
        if not self.solutions:
            state = np.repeat(self.initial[None, :], len(ages), axis=0)
        else:
            state = np.empty((len(ages), 3 * n))
            segment = np.clip(np.searchsorted(self.edges, ages, side="right") - 1, 0, len(self.solutions) - 1)
            for k, solution in enumerate(self.solutions):
                mask = segment == k
                if np.any(mask):
                    state[mask] = solution(ages[mask]).T
        return state[:, :n], state[:, n:2 * n], state[:, 2 * n:]


class FlowSolver:
    """Integrates dX/da = Γ(a, X) together with the divergence and birth line integrals"""

    def __init__(
        self,
        field,
        rtol: Optional[float] = None,
        atol: Optional[float] = None,
        max_step: Optional[float] = None,
        first_step: Optional[float] = None,
        method: Optional[str] = None,
        horizon: Optional[float] = None,
        threads: Optional[int] = None,
    ):
        self.field = field
        self.rtol = settings.ODE_RTOL if rtol is None else rtol
        self.atol = settings.ODE_ATOL if atol is None else atol
        self.max_step = settings.ODE_MAX_STEP if max_step is None else max_step
        self.first_step = settings.ODE_FIRST_STEP if first_step is None else first_step
        self.method = settings.ODE_METHOD if method is None else method
        self.horizon = settings.FLOW_HORIZON if horizon is None else horizon
        self.threads = max(1, settings.THREADS if threads is None else threads)
        self._cache: Dict[tuple, Characteristic] = {}
        self._lock = threading.Lock()

    @property
    def x_max(self) -> float:
        return self.field.x_max

    def _rhs(self, rate, lo: float, hi: float, n: int):
        guard = 1e-12 * max(1.0, abs(hi))
        field = self.field
        x_max = self.x_max

        def rhs(a, state):
            x = np.clip(state[:n], 0.0, x_max)
            out = np.empty_like(state)
            out[:n] = field.rate(a, x)
            out[n:2 * n] = field.rate_dx(a, x)
            if rate is None:
                out[2 * n:] = 0.0
            else:
                # rates may jump at segment ends; keep their evaluation inside the segment
                a_rate = min(max(a, lo + guard), hi - guard) if hi - lo > 2 * guard else 0.5 * (lo + hi)
                out[2 * n:] = rate.rate(a_rate, x)
            return out

        return rhs

    def _integrate(self, launches: np.ndarray, a_start: float, a_end: float, rate=None,
                   initial: Optional[np.ndarray] = None) -> Characteristic:
        launches = np.asarray(launches, dtype=float)
        n = len(launches)
        state = np.concatenate([launches, np.zeros(2 * n)]) if initial is None else np.asarray(initial, dtype=float)
        breaks = [] if rate is None else [p for p in rate.breakpoints if p is not None and a_start < p < a_end]
        edges = [a_start] + sorted(breaks) + [a_end]
        solutions = []
        if a_end <= a_start:
            return Characteristic(launches, [a_start, a_start], [], state)
        for lo, hi in zip(edges[:-1], edges[1:]):
            options = {"rtol": self.rtol, "atol": self.atol, "max_step": self.max_step}
            if self.first_step is not None:
                options["first_step"] = min(self.first_step, hi - lo)
            result = solve_ivp(self._rhs(rate, lo, hi, n), (lo, hi), state, method=self.method,
                               dense_output=True, **options)
            if not result.success:
                logger.error(f"Flow integration failed on [{lo}, {hi}]: {result.message}")
                raise NumericError(
                    f"characteristic integration failed on ages [{lo:.6g}, {hi:.6g}] "
                    f"for launches in [{launches.min():.6g}, {launches.max():.6g}]: {result.message}"
                )
            solutions.append(result.sol)
            state = result.y[:, -1]
        return Characteristic(launches, edges, solutions, np.concatenate([launches, np.zeros(2 * n)]))

    def trace(self, launch: float, a_end: float, rate=None) -> Characteristic:
        """Cached characteristic of a single launch, integrated at least to the solver horizon"""
        a_end = max(float(a_end), self.horizon)
        key = (float(launch), a_end, rate, self.rtol, self.atol)
        with self._lock:
            cached = self._cache.get(key)
        if cached is None:
            cached = self._integrate(np.array([float(launch)]), 0.0, a_end, rate)
            with self._lock:
                self._cache[key] = cached
        return cached

    def tabulate(self, launches: Sequence[float], ages: Sequence[float], rate=None) -> FlowTable:
        """Flows of all launches at the given ages, split over worker threads by launch"""
        launches = np.asarray(launches, dtype=float)
        ages = np.asarray(ages, dtype=float)
        a_end = float(ages.max())
        chunks = [c for c in np.array_split(launches, min(self.threads, len(launches))) if len(c)]

        def work(chunk):
            return self._integrate(chunk, 0.0, a_end, rate).evaluate(ages)

        if len(chunks) == 1:
            parts = [work(chunks[0])]
        else:
            with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
                parts = list(pool.map(work, chunks))
        position, divergence, birth = (np.concatenate([p[k] for p in parts], axis=1) for k in range(3))
        logger.debug(f"Tabulated {len(launches)} characteristics on {len(ages)} ages up to {a_end:.6g}")
        return FlowTable(
            ages=ages,
            launches=launches,
            position=np.clip(position, 0.0, self.x_max),
            cum_divergence=divergence,
            cum_birth=birth,
        )


class CharacteristicsService:
    """Forward and inverse flows, characteristic weights and arrival times"""

    def __init__(self):
        self._solvers: Dict[tuple, FlowSolver] = {}
        self._lock = threading.Lock()

    def get_solver(self, field, threads: Optional[int] = None) -> FlowSolver:
        """Shared solver per growth field so characteristic caches are reused"""
        key = (field, threads)
        with self._lock:
            solver = self._solvers.get(key)
            if solver is None:
                solver = FlowSolver(field, threads=threads)
                self._solvers[key] = solver
        return solver

    def _check_point(self, solver: FlowSolver, a: float, x: float) -> None:
        tolerance = 1e-12 * solver.x_max
        if a < 0 or not math.isfinite(a):
            raise DomainError(f"age {a} must be nonnegative")
        if x < -tolerance or x > solver.x_max + tolerance:
            raise DomainError(f"content {x} outside [0, {solver.x_max}]")

    def forward_flow(self, solver: FlowSolver, a: float, x: float) -> float:
        """X(a, x)"""
        self._check_point(solver, a, x)
        if a == 0:
            return float(x)
        position, _, _ = solver.trace(x, a).evaluate([a])
        return float(position[0, 0])

    def inverse_flow(self, solver: FlowSolver, a: float, x: float) -> float:
        """Y(a, x), the launch whose characteristic sits at x at age a"""
        self._check_point(solver, a, min(x, solver.x_max))
        if a == 0:
            return float(x)
        ceiling = self.forward_flow(solver, a, solver.x_max)
        if x > ceiling + 1e-10 * solver.x_max:
            raise OutOfRangeError(f"content {x} above X({a}, x_M) = {ceiling}")
        result = solve_ivp(
            lambda s, y: solver.field.rate(s, np.clip(y, 0.0, solver.x_max)),
            (a, 0.0), [min(x, ceiling)], method=solver.method, rtol=solver.rtol, atol=solver.atol,
        )
        if not result.success:
            raise NumericError(f"backward characteristic from ({a}, {x}) failed: {result.message}")
        return float(np.clip(result.y[0, -1], 0.0, solver.x_max))

    def divergence_weight(self, solver: FlowSolver, a: float, y: float) -> float:
        """j(a, y) = exp(-∫ ∂ₓΓ along the characteristic) = 1/∂_y X(a, y)"""
        self._check_point(solver, a, y)
        _, divergence, _ = solver.trace(y, a).evaluate([a])
        return float(np.exp(-divergence[0, 0]))

    def survival_weight(self, solver: FlowSolver, rate, a: float, y: float, lam: float) -> float:
        """s(a, y; λ) = exp(-λa - ∫ B along the characteristic)"""
        self._check_point(solver, a, y)
        _, _, birth = solver.trace(y, a, rate).evaluate([a])
        return float(np.exp(-lam * a - birth[0, 0]))

    def weights(self, table: FlowTable, lam: float) -> CharacteristicWeights:
        return CharacteristicWeights(
            survival=np.exp(-lam * table.ages[:, None] - table.cum_birth),
            divergence=np.exp(-table.cum_divergence),
        )

    def arrival_time(self, solver: FlowSolver, start: float, target: float) -> float:
        """Age f with Y(f, start) = target on the monotone branch of a ↦ Y(a, start)"""
        self._check_point(solver, 0.0, start)
        self._check_point(solver, 0.0, target)
        field = solver.field
        horizon = solver.horizon

        scan = np.linspace(0.0, horizon, 4001)
        speed = field.rate(scan, np.full_like(scan, start))
        if speed[0] > 0:
            branch_start = 0.0
        else:
            positive = np.nonzero(speed > 0)[0]
            if len(positive) == 0:
                if abs(target - start) <= 1e-12 * solver.x_max:
                    return 0.0
                raise NoSolutionError(f"Γ(·, {start}) never turns positive before age {horizon}")
            i = positive[0]
            branch_start = brentq(lambda s: float(field.rate(s, start)), scan[i - 1], scan[i], xtol=1e-14)

        if branch_start == 0.0 and abs(target - start) <= 1e-12 * solver.x_max:
            return 0.0

        characteristic = solver.trace(target, horizon)
        ages = np.concatenate([[branch_start], scan[scan > branch_start]])
        gap = characteristic.evaluate(ages)[0][:, 0] - start
        if gap[0] > 0:
            raise NoSolutionError(
                f"content {target} lies above Y({branch_start:.6g}, {start}); not on the monotone branch"
            )
        crossing = np.nonzero(gap > 0)[0]
        if len(crossing) == 0:
            raise NoSolutionError(f"characteristic from {target} does not reach {start} before age {horizon}")
        k = crossing[0]
        return float(brentq(
            lambda s: float(characteristic.evaluate([s])[0][0, 0] - start),
            ages[k - 1], ages[k], xtol=1e-13, rtol=1e-14,
        ))

    def check_weak_assumptions(self, solver: FlowSolver, rate, grid: Grid, kernel=None) -> WeakAssumptionReport:
        """Integrability, ln 2 birth budget, compact-support ratio and positivity checks"""
        try:
            points, _ = age_partition(grid.a, rate.breakpoints)
            x = grid.x
            table = solver.tabulate(x, points, rate)
            interior = slice(1, len(x) - 1)
            weights = grid.wx[interior]
            compact = rate.support_end is not None

            survive = np.exp(-table.cum_birth[:, interior])
            integrability = tail = integrability_passed = None
            if not compact:
                integrability = float(weights @ trapezoid(survive, points, axis=0))
                end_rate = rate.rate(grid.a_max, table.position[-1, interior])
                with np.errstate(divide="ignore"):
                    tail_per_launch = np.where(end_rate > 0, survive[-1] / np.where(end_rate > 0, end_rate, 1.0), np.inf)
                tail = float(weights @ tail_per_launch)
                integrability_passed = bool(np.isfinite(tail) and tail <= settings.DIAGNOSTIC_TOLERANCE * integrability)

            totals = table.cum_birth[-1, interior]
            min_total = float(totals.min())
            margin = min_total - math.log(2.0)

            ratio_sup = ratio_passed = None
            if compact and kernel is not None:
                closing = min(rate.support_end, grid.a_max)
                k = int(np.argmin(np.abs(points - closing)))
                leftover = np.exp(-table.cum_birth[k])
                mothers = x[1:]
                if kernel.is_dirac:
                    ratios = np.interp(mothers / 2.0, x, leftover)
                else:
                    ratios = leftover @ HatProjector(kernel, x).project(mothers)
                ratio_sup = float(ratios.max())
                ratio_passed = ratio_sup < 0.5

            positivity_min = positivity_passed = None
            start, end = rate.window
            end = grid.a_max if end is None else min(end, grid.a_max)
            ages = grid.a[(grid.a > start) & (grid.a < end)]
            if len(ages) and rate.kind != "tabulated":
                values = rate.rate(ages[:, None], x[None, interior])
                positivity_min = float(values.min())
                positivity_passed = positivity_min > 0

            report = WeakAssumptionReport(
                a_max=grid.a_max,
                compact_support=compact,
                integrability=integrability,
                integrability_tail=tail,
                integrability_passed=integrability_passed,
                min_total_birth=min_total,
                ln2_margin=margin,
                ln2_passed=margin > 0,
                ratio_sup=ratio_sup,
                ratio_passed=ratio_passed,
                positivity_min=positivity_min,
                positivity_passed=positivity_passed,
            )
            logger.info(
                f"Weak assumptions: ln2 margin {margin:.6g}, integrability {integrability}, ratio {ratio_sup}"
            )
            return report
        except NumericError:
            raise
        except Exception as e:
            logger.error(f"Error checking weak assumptions: {e}")
            raise


# Service instance
characteristics_service = CharacteristicsService()
