from typing import Dict, List, Optional, Sequence, Tuple
import logging
import math
import threading

import numpy as np
from scipy.integrate import quad, trapezoid
from scipy.optimize import brentq

from app.core.config import settings
from app.core.exceptions import (
    AssumptionError,
    ConfigError,
    DegenerateError,
    DomainError,
    NumericError,
    ResolutionError,
    SubcriticalError,
)
from app.models.coefficients import ModelCoefficients
from app.models.eigen import (
    AdjointSolution,
    ContinuationStep,
    EigenSolution,
    KernelOperator,
    ResidualReport,
)
from app.models.grid import Grid
from app.services.characteristics_service import characteristics_service
from app.services.coefficient_service import coefficient_service
from app.utils.power_iteration import power_iteration
from app.utils.quadrature import (
    HatProjector,
    age_partition,
    exponential_fit_integral,
    exponential_fit_ratio,
    trapezoid_weights,
    truncated_hat_weights,
)

logger = logging.getLogger(__name__)


class KernelTable:
    """λ-independent characteristic data of the birth operator for one (model, grid) pair.

    Flows are tabulated on the age partition (age nodes merged with the rate
    breakpoints) and at its cell midpoints. Launch column 0 is x1/3 and
    stands in for the node x0 = 0 in assembly, columns 1..n are the nodes.
    """

    def __init__(self, model: ModelCoefficients, grid: Grid, solver):
        rate = model.division
        self.model = model
        self.grid = grid
        self.x = grid.x
        self.wx = grid.wx
        self.compact = rate.support_end is not None
        if self.compact and rate.support_end > grid.a_max * (1 + 1e-12):
            raise ResolutionError(
                f"a_max = {grid.a_max} stops before the end {rate.support_end} of the division window"
            )
        self.support_end = rate.support_end if self.compact else grid.a_max

        n = len(self.x)
        self.points, self.node_index = age_partition(grid.a, rate.breakpoints)
        self.h = np.diff(self.points)
        self.mids = 0.5 * (self.points[:-1] + self.points[1:])
        ages = np.empty(2 * len(self.points) - 1)
        ages[0::2] = self.points
        ages[1::2] = self.mids
        self.launches = np.concatenate([[self.x[1] / 3.0], self.x])
        table = solver.tabulate(self.launches, ages, rate)

        self.position = table.position[0::2]
        self.mid_position = table.position[1::2]
        self.cum_birth = table.cum_birth[0::2]
        self.cum_divergence = table.cum_divergence[0::2]
        self.mean_birth = np.maximum(np.diff(self.cum_birth, axis=0), 0.0) / self.h[:, None]
        self.assembly = np.concatenate([[0], np.arange(2, n + 1)])
        self.nodal = np.arange(1, n + 1)
        # ε acts only on the division window for compact support
        self.regularized_age = np.minimum(self.points, self.support_end)
        self.regularized_cells = self.mids <= self.support_end

        projector = HatProjector(model.kernel, self.x)
        self.node_projection = projector.node_matrix()
        self.lower, self.theta = projector.lattice(self.mid_position)
        self.end_position = self.position[-1]
        self.end_lower, self.end_theta = projector.lattice(self.end_position)
        if self.compact:
            self.end_birth = np.zeros(len(self.launches))
        else:
            self.end_birth = np.asarray(rate.rate(grid.a_max, self.end_position), dtype=float)
        self.birth_sup = float(max(self.mean_birth.max(), self.end_birth.max()))
        self._dirac: Optional[Tuple[np.ndarray, np.ndarray]] = None
        self._quadrature: Optional[np.ndarray] = None

    def deposit(self, values: np.ndarray, lower: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """H[m, j] = Σ_c values[c, j] times the lattice weight of the mother content on node m"""
        n = len(self.x)
        columns = values.shape[1]
        flat = (lower * columns + np.arange(columns)[None, :]).ravel()
        size = n * columns
        H = np.bincount(flat, weights=((1.0 - theta) * values).ravel(), minlength=size)
        H += np.bincount(flat + columns, weights=(theta * values).ravel(), minlength=size)
        return H.reshape(n, columns)

    def node_quadrature(self) -> np.ndarray:
        """Daughter law of a mother on each node from nodal quadrature of the kernel density.

        Columns sum to 1; mothers with no node inside their daughter range
        fall back to the hat projection.
        """
        if self._quadrature is not None:
            return self._quadrature
        x = self.x
        mother = x[None, :]
        positive = mother > 0
        safe = np.where(positive, mother, 1.0)
        ratio = x[:, None] / safe
        inside = positive & (ratio <= 1.0 + 1e-12)
        density = np.where(inside, self.model.kernel.density(np.clip(ratio, 0.0, 1.0)) / safe, 0.0)
        weights = self.wx[:, None] * density
        totals = weights.sum(axis=0)
        usable = totals > 0
        self._quadrature = np.where(usable[None, :], weights / np.where(usable, totals, 1.0)[None, :],
                                    self.node_projection)
        return self._quadrature

    def dirac_split(self) -> Tuple[np.ndarray, np.ndarray]:
        """Arrival ages f[i, k] at 2 x_i and λ-free coefficients of the equal-mitosis operator"""
        if self._dirac is not None:
            return self._dirac
        growth = self.model.growth
        rate = self.model.division
        x = self.x
        half = 0.5 * self.grid.x_max
        n = len(x)
        cols = self.nodal
        position = self.position[:, cols]
        cum_birth = self.cum_birth[:, cols]
        arrival = np.zeros((n, n))
        coefficient = np.zeros((n, n))
        for i in range(1, n):
            if x[i] >= half:
                break
            level = 2.0 * x[i]
            reached = position >= level
            hit = reached.any(axis=0)
            first = np.argmax(reached, axis=0)
            before = np.maximum(first - 1, 0)
            k = np.arange(n)
            x_lo = position[before, k]
            x_hi = position[first, k]
            gap = np.where(x_hi > x_lo, x_hi - x_lo, 1.0)
            share = np.where(first > 0, np.clip((level - x_lo) / gap, 0.0, 1.0), 0.0)
            f = np.where(first > 0, self.points[before] + share * (self.points[first] - self.points[before]), 0.0)
            birth_f = np.where(first > 0, cum_birth[before, k] + share * (cum_birth[first, k] - cum_birth[before, k]), 0.0)
            speed = growth.rate(f, np.full(n, level))
            division = rate.rate(f, np.full(n, level))
            ratio = np.where(speed > 0, division / np.where(speed > 0, speed, 1.0), 0.0)
            weights = truncated_hat_weights(x, min(half, level))
            arrival[i] = np.where(hit, f, 0.0)
            coefficient[i] = np.where(hit, 4.0 * ratio * np.exp(-birth_f) * weights, 0.0)
        self._dirac = (arrival, coefficient)
        return self._dirac


class EigenService:
    """Malthus parameter, boundary profile, density and adjoint of the division problem"""

    def __init__(self):
        self.threads: Optional[int] = None
        self.bisection_tolerance: Optional[float] = None
        self.max_iterations: Optional[int] = None
        self._tables: Dict[tuple, KernelTable] = {}
        self._lock = threading.Lock()

    def configure(self, threads: Optional[int] = None, bisection_tolerance: Optional[float] = None,
                  max_iterations: Optional[int] = None) -> None:
        """Run-level overrides of the solver settings"""
        self.threads = threads
        self.bisection_tolerance = bisection_tolerance
        self.max_iterations = max_iterations

    def _solver(self, model: ModelCoefficients):
        return characteristics_service.get_solver(model.growth, self.threads)

    def kernel_table(self, model: ModelCoefficients, grid: Grid) -> KernelTable:
        key = (model, grid)
        with self._lock:
            table = self._tables.get(key)
        if table is None:
            table = KernelTable(model, grid, self._solver(model))
            with self._lock:
                self._tables[key] = table
        return table

    def _lattice_operator(self, table: KernelTable, lam: float, eps: float,
                          nodal_quadrature: bool = False) -> Tuple[np.ndarray, np.ndarray, float]:
        """Projected birth matrix P H, per-launch regularized survival mass and largest tail share.

        The direct operator integrates the survival exactly for a log-linear
        cell and splits daughters with the hat projector; `nodal_quadrature`
        switches the births to trapezoid cells and the nodal daughter law. The
        ε mass always uses the exact cell integral.
        """
        cols = table.assembly
        logs = -lam * table.points[:, None] - table.cum_birth[:, cols] - eps * table.regularized_age[:, None]
        S = exponential_fit_integral(logs[:-1], logs[1:], table.h[:, None])
        total = (S * table.regularized_cells[:, None]).sum(axis=0)
        if nodal_quadrature:
            survival = np.exp(logs)
            S = 0.5 * table.h[:, None] * (survival[:-1] + survival[1:])
        values = 2.0 * table.mean_birth[:, cols] * S
        H = table.deposit(values, table.lower[:, cols], table.theta[:, cols])

        share = 0.0
        if not table.compact:
            kappa = lam + table.end_birth[cols] + eps
            if np.any(kappa <= 0):
                raise ResolutionError(
                    f"survival does not decay past a_max = {table.grid.a_max} at λ = {lam:.6g}; "
                    f"increase a_max"
                )
            tail = np.exp(logs[-1]) / kappa
            tail_values = 2.0 * table.end_birth[cols] * tail
            H += table.deposit(tail_values[None, :], table.end_lower[None, cols], table.end_theta[None, cols])
            total = total + tail
            column = values.sum(axis=0) + tail_values
            with np.errstate(invalid="ignore", divide="ignore"):
                shares = np.where(column > 0, tail_values / np.where(column > 0, column, 1.0), 0.0)
            share = float(shares.max())
            if share > settings.QUADRATURE_TAIL_TOLERANCE:
                raise ResolutionError(
                    f"age quadrature tail carries {share:.3e} of the births at λ = {lam:.6g}; increase a_max"
                )
        projection = table.node_quadrature() if nodal_quadrature else table.node_projection
        return projection @ H, total, share

    def assemble_operator(self, model: ModelCoefficients, grid: Grid, lam: float, eps: float,
                          adjoint: bool = False) -> KernelOperator:
        """Nodal matrix of the regularized operator G^ε_λ (or its adjoint)"""
        if eps < 0:
            raise DomainError(f"ε = {eps} must be nonnegative")
        table = self.kernel_table(model, grid)
        if lam < 0 and not table.compact:
            raise DomainError(f"λ = {lam} must be nonnegative for an unbounded division window")
        wx = table.wx
        x_max = grid.x_max
        dirac = model.kernel.is_dirac

        if dirac and not adjoint:
            if not coefficient_service.check_split_geometry(model.growth, grid).passed:
                raise AssumptionError("equal mitosis needs Γ > 0 below x_M/2 and a nondecreasing zero curve")
            arrival, coefficient = table.dirac_split()
            below = (table.x <= 0.5 * x_max * (1 + 1e-12)).astype(float)
            half = truncated_hat_weights(table.x, 0.5 * x_max)
            matrix = coefficient * np.exp(-lam * arrival) + eps * np.outer(below, half)
            return KernelOperator(matrix=matrix, weights=wx, lam=lam, epsilon=eps, adjoint=False,
                                  dirac=True, birth_sup=table.birth_sup)

        if dirac:
            projected, _, share = self._lattice_operator(table, lam, 0.0)
            below = (table.x <= 0.5 * x_max * (1 + 1e-12)).astype(float)
            half = truncated_hat_weights(table.x, 0.5 * x_max)
            matrix = projected.T + eps * np.outer(below, half)
        else:
            projected, total, share = self._lattice_operator(table, lam, eps, nodal_quadrature=adjoint)
            regularization = 2.0 * eps / x_max
            if adjoint:
                matrix = projected.T + regularization * np.outer(total, wx)
            else:
                matrix = projected * wx[None, :] / wx[:, None] + regularization * np.outer(np.ones(len(wx)), total * wx)
        return KernelOperator(matrix=np.maximum(matrix, 0.0), weights=wx, lam=lam, epsilon=eps,
                              adjoint=adjoint, dirac=dirac, tail_share=share, birth_sup=table.birth_sup)

    def leading_eigenpair(self, op: KernelOperator, tol: Optional[float] = None,
                          start: Optional[np.ndarray] = None) -> Tuple[float, np.ndarray]:
        """Dominant (μ, v) with Σ w v = 1"""
        mu, v, iterations = power_iteration(op.matrix, op.weights, tol=tol, max_iter=self.max_iterations,
                                               start=start)
        logger.debug(f"Power iteration λ={op.lam:.10g} ε={op.epsilon:.3g}: μ={mu:.12g} in {iterations} steps")
        return mu, v

    def mu_of_lambda(self, model: ModelCoefficients, grid: Grid, lam: float, eps: float,
                     adjoint: bool = False) -> float:
        op = self.assemble_operator(model, grid, lam, eps, adjoint=adjoint)
        mu, _ = self.leading_eigenpair(op)
        return mu

    def _continuation(self, model: ModelCoefficients, grid: Grid, schedule: Sequence[float],
                      tol: Optional[float], adjoint: bool) -> Tuple[List[ContinuationStep], np.ndarray]:
        """Root of μ(λ, ε) = 1 for each ε, largest first, warm-starting the power iteration"""
        schedule = sorted({float(e) for e in schedule}, reverse=True)
        if not schedule or schedule[-1] < 0:
            raise ConfigError(f"invalid ε schedule {schedule}")
        state = {"v": None, "count": 0, "bound": 1.0}
        steps: List[ContinuationStep] = []

        for eps in schedule:
            state["count"] = 0

            def excess(lam: float) -> float:
                op = self.assemble_operator(model, grid, lam, eps, adjoint=adjoint)
                mu, state["v"] = self.leading_eigenpair(op, tol, start=state["v"])
                state["count"] += 1
                state["bound"] = op.mu_bound_numerator
                return mu - 1.0

            at_zero = excess(0.0)
            lo = 0.0
            if at_zero > 0:
                hi = 1.0 if model.kernel.is_dirac else max(state["bound"], 1e-12)
                for _ in range(60):
                    if excess(hi) <= 0:
                        break
                    hi *= 2.0
                else:
                    raise NumericError(f"no upper bracket for μ(λ, ε={eps:.3g}) = 1 below λ = {hi:.6g}")
            elif not self.kernel_table(model, grid).compact:
                raise SubcriticalError(
                    f"μ(0, ε={eps:.3g}) = {at_zero + 1:.8g} <= 1: no positive growth exponent"
                )
            else:
                # μ decreases in λ, so the root of a compact window lies below 0
                floor = -50.0 / self.kernel_table(model, grid).support_end
                hi, lo = 0.0, max(-1.0, floor)
                while excess(lo) <= 0:
                    if lo <= floor:
                        raise SubcriticalError(
                            f"μ(λ, ε={eps:.3g}) stays <= 1 down to λ = {lo:.6g}: no growth exponent"
                        )
                    hi, lo = lo, max(2.0 * lo, floor)
            xtol = settings.BISECTION_TOLERANCE if self.bisection_tolerance is None else self.bisection_tolerance
            lam = brentq(excess, lo, hi, xtol=xtol)
            mu_root = excess(lam) + 1.0
            steps.append(ContinuationStep(epsilon=eps, lam=float(lam), mu_at_root=mu_root,
                                          evaluations=state["count"]))
            logger.info(
                f"{'Adjoint' if adjoint else 'Direct'} ε={eps:.3g}: λ={lam:.12g}, μ={mu_root:.12g}, "
                f"{state['count']} evaluations"
            )
        return steps, state["v"]

    @staticmethod
    def _extrapolate(steps: List[ContinuationStep]) -> Tuple[float, bool]:
        """Linear extrapolation to ε = 0 over the two smallest ε, and the convergence flag"""
        if len(steps) < 2:
            return steps[-1].lam, True
        small, next_small = steps[-1], steps[-2]
        slope = (next_small.lam - small.lam) / (next_small.epsilon - small.epsilon)
        gaps = [abs(b.lam - a.lam) for a, b in zip(steps[:-1], steps[1:])]
        converged = all(later <= earlier * (1 + 1e-9) + 1e-14 for earlier, later in zip(gaps[:-1], gaps[1:]))
        return small.lam - small.epsilon * slope, converged

    def solve_eigenvalue(self, model: ModelCoefficients, grid: Grid,
                         epsilon_schedule: Optional[Sequence[float]] = None,
                         tol: Optional[float] = None) -> EigenSolution:
        """λ0 by ε-continuation and bisection, with the boundary profile and the density"""
        try:
            schedule = list(settings.EPSILON_SCHEDULE if epsilon_schedule is None else epsilon_schedule)
            steps, boundary = self._continuation(model, grid, schedule, tol, adjoint=False)
            lambda0, converged = self._extrapolate(steps)
            if lambda0 <= 0:
                raise SubcriticalError(f"extrapolated growth exponent {lambda0:.6g} is not positive")
            if not converged:
                logger.warning(f"ε-continuation gaps do not shrink: {[s.lam for s in steps]}")
            logger.info(f"Extrapolated λ0 = {lambda0:.12g}")
            boundary = np.maximum(boundary, 0.0)
            density = self.reconstruct_density(boundary, model, grid, lambda0)
            return EigenSolution(
                lambda0=lambda0,
                steps=steps,
                converged=converged,
                epsilon_schedule=sorted(schedule, reverse=True),
                grid=grid,
                boundary=boundary,
                density=density,
                dirac=model.kernel.is_dirac,
            )
        except Exception as e:
            logger.error(f"Error solving eigenvalue: {e}")
            raise

    def _nodal_flows(self, table: KernelTable) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        rows = table.node_index
        cols = table.nodal
        position = np.maximum.accumulate(table.position[rows][:, cols], axis=1)
        return position, table.cum_birth[rows][:, cols], table.cum_divergence[rows][:, cols]

    def reconstruct_density(self, boundary: np.ndarray, model: ModelCoefficients, grid: Grid,
                            lambda0: float) -> np.ndarray:
        """N(a, y) = N⁰(Y) s(a, Y; λ0) j(a, Y) below X(a, x_M), zero above, with ∬N = 1"""
        table = self.kernel_table(model, grid)
        boundary = np.maximum(np.asarray(boundary, dtype=float), 0.0)
        position, cum_birth, cum_divergence = self._nodal_flows(table)
        log_weight = -lambda0 * grid.a[:, None] - cum_birth - cum_divergence
        x = grid.x
        ceiling = 1e-12 * grid.x_max
        density = np.zeros((grid.n_a, grid.n_x))
        for k in range(grid.n_a):
            launch = np.interp(x, position[k], x)
            values = np.interp(launch, x, boundary) * np.exp(np.interp(launch, x, log_weight[k]))
            density[k] = np.where(x <= position[k, -1] + ceiling, values, 0.0)
        mass = grid.integrate(density)
        if not np.isfinite(mass) or mass <= 0:
            raise DegenerateError("reconstructed density has no mass")
        return density / mass

    def _adjoint_field(self, table: KernelTable, boundary: np.ndarray, lambda0: float) -> np.ndarray:
        """φ(a, x) integrated backward in age along every nodal characteristic"""
        grid = table.grid
        cols = table.nodal
        mother = table.node_projection.T @ boundary
        lower = table.lower[:, cols]
        theta = table.theta[:, cols]
        expected = (1.0 - theta) * mother[lower] + theta * mother[lower + 1]
        decrement = lambda0 * table.h[:, None] + np.diff(table.cum_birth[:, cols], axis=0)
        source = 2.0 * table.mean_birth[:, cols] * expected * exponential_fit_ratio(decrement, table.h[:, None])
        carry = np.exp(-decrement)

        phi = np.empty((len(table.points), len(cols)))
        if table.compact:
            phi[-1] = 0.0
        else:
            end = table.end_position[cols]
            lo, th = table.end_lower[cols], table.end_theta[cols]
            end_birth = table.end_birth[cols]
            phi[-1] = 2.0 * end_birth * ((1.0 - th) * mother[lo] + th * mother[lo + 1]) / (lambda0 + end_birth)
            logger.debug(f"Adjoint tail start at a_max over contents [{end.min():.4g}, {end.max():.4g}]")
        for c in range(len(table.h) - 1, -1, -1):
            phi[c] = source[c] + carry[c] * phi[c + 1]

        position, _, _ = self._nodal_flows(table)
        along = phi[table.node_index]
        field = np.empty((grid.n_a, grid.n_x))
        for k in range(grid.n_a):
            field[k] = np.interp(grid.x, position[k], along[k])
        return np.maximum(field, 0.0)

    def solve_adjoint(self, model: ModelCoefficients, grid: Grid, lambda0: float,
                      epsilon_schedule: Optional[Sequence[float]] = None, tol: Optional[float] = None,
                      density: Optional[np.ndarray] = None) -> AdjointSolution:
        """Adjoint eigenpair (λ1, φ) with ∬Nφ = 1 when the density is given"""
        try:
            schedule = list(settings.EPSILON_SCHEDULE if epsilon_schedule is None else epsilon_schedule)
            steps, boundary = self._continuation(model, grid, schedule, tol, adjoint=True)
            lambda1, _ = self._extrapolate(steps)
            boundary = np.maximum(boundary, 0.0)
            field = self._adjoint_field(self.kernel_table(model, grid), boundary, lambda0)
            if density is not None:
                pairing = grid.integrate(density * field)
                if not np.isfinite(pairing) or pairing <= 0:
                    raise DegenerateError("adjoint and density have no overlap")
                field = field / pairing
                boundary = boundary / pairing
            gap = abs(lambda1 - lambda0)
            if gap > settings.DIAGNOSTIC_TOLERANCE * max(lambda0, 1e-12):
                logger.warning(f"Adjoint eigenvalue {lambda1:.10g} differs from λ0 = {lambda0:.10g} by {gap:.3e}")
            return AdjointSolution(lambda1=lambda1, steps=steps, boundary=boundary, field=field)
        except Exception as e:
            logger.error(f"Error solving adjoint problem: {e}")
            raise

    def eigen_diagnostics(self, sol: EigenSolution, model: ModelCoefficients, grid: Grid,
                          etas: Optional[Sequence[float]] = None) -> ResidualReport:
        """Moment identity residuals, integrated along characteristics weighted by N⁰"""
        table = self.kernel_table(model, grid)
        lam = sol.lambda0
        etas = list(settings.ETA_MOMENTS if etas is None else etas)
        cols = table.assembly
        launch_mass = table.wx * np.maximum(sol.boundary, 0.0)

        logs = -lam * table.points[:, None] - table.cum_birth[:, cols]
        S = exponential_fit_integral(logs[:-1], logs[1:], table.h[:, None])
        birth = table.mean_birth[:, cols]
        content = table.mid_position[:, cols]
        speed = model.growth.rate(table.mids[:, None], content)
        age = table.mids[:, None]

        a_end = grid.a_max
        end_birth = table.end_birth[cols]
        end_content = table.end_position[cols]
        end_speed = model.growth.rate(a_end, end_content)
        kappa = lam + end_birth
        open_tail = kappa > 0
        safe = np.where(open_tail, kappa, 1.0)
        survive_end = np.exp(logs[-1])
        tail = np.where(open_tail, survive_end / safe, 0.0)
        tail_age = np.where(open_tail, survive_end * (a_end / safe + 1.0 / safe ** 2), 0.0)

        def moment(cells: np.ndarray, tail_part: np.ndarray) -> float:
            return float(launch_mass @ ((cells * S).sum(axis=0) + tail_part))

        mass = moment(np.ones_like(S), tail)
        if not np.isfinite(mass) or mass <= 0:
            raise DegenerateError("eigenfunction has no mass")
        birth_moment = moment(birth, end_birth * tail) / mass
        content_moment = moment(content, end_content * tail) / mass
        speed_moment = moment(speed, end_speed * tail) / mass
        age_moment = moment(age, tail_age) / mass
        age_birth_moment = moment(age * birth, end_birth * tail_age) / mass

        eta_moments = {}
        eta_passed = {}
        for eta in etas:
            growth = lam * eta
            slack = kappa - growth
            open_eta = slack > 0
            eta_tail = np.where(open_eta, survive_end * np.exp(growth * a_end) / np.where(open_eta, slack, 1.0), np.inf)
            value = moment(np.exp(growth * age), eta_tail) / mass
            eta_moments[eta] = value
            eta_passed[eta] = bool(value <= 1.0 / (1.0 - eta) + settings.DIAGNOSTIC_TOLERANCE)

        report = ResidualReport(
            r_b=abs(lam - birth_moment),
            r_x=abs(lam * content_moment - speed_moment),
            r_a=abs(lam * age_moment + age_birth_moment - 1.0),
            r_adjoint=None if sol.lambda1 is None else abs(sol.lambda1 - sol.lambda0),
            eta_moments=eta_moments,
            eta_bounds_passed=eta_passed,
            duality_normalization=None if sol.adjoint is None else grid.integrate(sol.density * sol.adjoint),
        )
        logger.info(f"Residuals: r_B={report.r_b:.3e}, r_x={report.r_x:.3e}, r_a={report.r_a:.3e}")
        return report

    def solve(self, model: ModelCoefficients, grid: Grid,
              epsilon_schedule: Optional[Sequence[float]] = None, tol: Optional[float] = None,
              with_adjoint: bool = True) -> EigenSolution:
        """Direct problem, adjoint and residual diagnostics in one pass"""
        solution = self.solve_eigenvalue(model, grid, epsilon_schedule, tol)
        if with_adjoint:
            adjoint = self.solve_adjoint(model, grid, solution.lambda0, epsilon_schedule, tol,
                                         density=solution.density)
            solution = solution.model_copy(update={
                "lambda1": adjoint.lambda1,
                "adjoint_steps": adjoint.steps,
                "adjoint_boundary": adjoint.boundary,
                "adjoint": adjoint.field,
            })
        residuals = self.eigen_diagnostics(solution, model, grid)
        return solution.model_copy(update={"residuals": residuals})

    def resolve_age_horizon(self, model: ModelCoefficients, n_x: int, n_a: int,
                            epsilon_schedule: Optional[Sequence[float]] = None,
                            tol: Optional[float] = None) -> float:
        """A_max for `a_max = auto`"""
        rate = model.division
        tol = settings.AGE_TAIL_TOLERANCE if tol is None else tol
        x_max = model.x_max

        if rate.support_end is not None:
            schedule = list(settings.EPSILON_SCHEDULE if epsilon_schedule is None else epsilon_schedule)
            pilot = Grid(x_max=x_max, a_max=rate.support_end, n_x=n_x, n_a=n_a)
            steps, _ = self._continuation(model, pilot, [min(schedule)], None, adjoint=False)
            estimate = steps[-1].lam
            if estimate <= 0:
                raise SubcriticalError(f"pilot growth exponent {estimate:.6g} is not positive")
            a_max = rate.support_end + math.log(1.0 / tol) / estimate
            logger.info(f"Age horizon {a_max:.6g} from pilot λ = {estimate:.6g}")
            return a_max

        solver = self._solver(model)
        launches = np.linspace(0.0, x_max, n_x)[1:-1]
        weights = trapezoid_weights(n_x, x_max)[1:-1]
        breakpoints = [p for p in rate.breakpoints if p is not None]
        a_max = max(10.0, 2.0 * max(breakpoints, default=0.0))
        for _ in range(settings.AGE_HORIZON_MAX_DOUBLINGS + 1):
            ages, _ = age_partition(np.linspace(0.0, 2.0 * a_max, 2 * (n_a - 1) + 1), breakpoints)
            table = solver.tabulate(launches, ages, rate)
            survive = np.exp(-table.cum_birth)
            start = int(np.searchsorted(ages, a_max))
            total = float(weights @ trapezoid(survive, ages, axis=0))
            tail = float(weights @ trapezoid(survive[start:], ages[start:], axis=0))
            logger.debug(f"Age horizon {a_max:.6g}: tail {tail:.3e} of {total:.6g}")
            if tail <= tol * total:
                logger.info(f"Age horizon {a_max:.6g} (tail share {tail / total:.3e})")
                return a_max
            a_max *= 2.0
        raise ResolutionError(
            f"survival tail stays above {tol:g} after {settings.AGE_HORIZON_MAX_DOUBLINGS} doublings"
        )

    def age_only_eigenvalue(self, rate) -> float:
        """Malthus parameter of the x-integrated McKendrick problem: 2∫B e^{-λa-∫B} da = 1"""
        if rate.content_dependent:
            raise ConfigError(f"division rate '{rate.kind}' depends on content; no age-only reduction")
        upper = math.inf if rate.support_end is None else rate.support_end
        profile = rate.age_profile
        breaks = [p for p in rate.breakpoints if p is not None and p < upper]

        def cumulative(a: float) -> float:
            return quad(lambda s: float(profile(s)), 0.0, a, points=[p for p in breaks if p < a] or None)[0]

        def balance(lam: float) -> float:
            value, _ = quad(lambda a: float(profile(a)) * math.exp(-lam * a - cumulative(a)), 0.0, upper, limit=200)
            return 2.0 * value - 1.0

        if balance(0.0) <= 0:
            raise SubcriticalError("2∫B e^{-∫B} da <= 1: no positive growth exponent")
        hi = 1.0
        while balance(hi) > 0:
            hi *= 2.0
            if hi > 1e8:
                raise NumericError("no upper bracket for the age-only balance")
        return float(brentq(balance, 0.0, hi, xtol=settings.BISECTION_TOLERANCE))


# Service instance
eigen_service = EigenService()
