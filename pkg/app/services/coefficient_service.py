import logging
import math

import numpy as np
from scipy.integrate import trapezoid

from app.core.exceptions import ConfigError, DomainError
from app.models.coefficients import TwoPhaseParams
from app.models.grid import Grid
from app.models.reports import GeometryReport, KernelMomentReport

logger = logging.getLogger(__name__)


class CoefficientService:
    """Evaluation and validation of the model coefficients"""

    def evaluate_gamma(self, field, a: float, x: float) -> float:
        """Γ(a, x) with domain checking"""
        tolerance = 1e-12 * field.x_max
        if a < 0 or not math.isfinite(a):
            raise DomainError(f"age {a} must be nonnegative")
        if x < -tolerance or x > field.x_max + tolerance:
            raise DomainError(f"content {x} outside [0, {field.x_max}]")
        return float(field.rate(a, min(max(x, 0.0), field.x_max)))

    def check_kernel_consistency(self, kernel, rate, grid: Grid) -> KernelMomentReport:
        """Zeroth, first moment and symmetry residuals of b(a, x, y) = B(a, y) ρ(x | y)"""
        x = grid.x
        if abs(grid.x_max - x[-1]) > 1e-12 * grid.x_max:
            raise ConfigError("grid does not end at the content bound")
        if rate.kind == "tabulated" and rate.contents[-1] < grid.x_max * (1 - 1e-12):
            raise ConfigError(
                f"division.contents end at {rate.contents[-1]}, below the content bound {grid.x_max}"
            )
        if rate.kind == "tabulated" and rate.ages[0] > 0:
            raise ConfigError(f"division.ages start at {rate.ages[0]}, expected 0")

        mothers = x[1:]
        births = rate.rate(grid.a[:, None], mothers[None, :])

        if kernel.is_dirac:
            # both daughters at y/2: ∫ b dx = B and 2 (y/2) B = y B exactly
            return KernelMomentReport(zeroth_moment=0.0, first_moment=0.0, symmetry=None, analytic=True)

        zeroth = np.empty(len(mothers))
        first = np.empty(len(mothers))
        symmetry = np.empty(len(mothers))
        for j, y in enumerate(mothers):
            daughters = x[: j + 2]
            density = kernel.density(daughters / y) / y
            mirrored = kernel.density((y - daughters) / y) / y
            zeroth[j] = trapezoid(density, daughters)
            first[j] = 2.0 * trapezoid(daughters * density, daughters)
            symmetry[j] = trapezoid(np.abs(density - mirrored), daughters)
        scale = np.max(births, axis=0)
        report = KernelMomentReport(
            zeroth_moment=float(np.max(scale * np.abs(zeroth - 1.0))),
            first_moment=float(np.max(scale * np.abs(first - mothers))),
            symmetry=float(np.max(scale * symmetry)),
        )
        logger.info(
            f"Kernel moments: zeroth {report.zeroth_moment:.3e}, first {report.first_moment:.3e}"
        )
        return report

    def check_split_geometry(self, field, grid: Grid) -> GeometryReport:
        """Γ > 0 on (0, x_M/2] and a nondecreasing zero curve, sampled on the grid"""
        half = grid.x[(grid.x > 0) & (grid.x <= 0.5 * field.x_max * (1 + 1e-12))]
        speed = field.rate(grid.a[:, None], half[None, :])
        curve = field.zero_curve(grid.a)
        return GeometryReport(
            positive_below_half=bool(np.all(speed > 0)),
            zero_curve_nondecreasing=bool(np.all(np.diff(curve) >= -1e-12 * max(1.0, field.x_max))),
        )

    def recruitment(self, n_val, params: TwoPhaseParams):
        """Hill recruitment G(N) = (α1 θⁿ + α2 Nⁿ) / (θⁿ + Nⁿ)"""
        hill = params.recruitment
        n_val = np.maximum(np.asarray(n_val, dtype=float), 0.0)
        with np.errstate(over="ignore", invalid="ignore"):
            ratio = (n_val / hill.theta) ** hill.n
            value = (hill.alpha1 + hill.alpha2 * ratio) / (1.0 + ratio)
        value = np.where(np.isfinite(ratio), value, hill.alpha2)
        return float(value) if value.ndim == 0 else value


# Service instance
coefficient_service = CoefficientService()
