from typing import Any, Dict
import logging

import pandas as pd

from app.cli.router import CommandContext, CommandResult
from app.core.dependencies import get_grid, get_model
from app.models.config import RunConfig
from app.models.eigen import EigenSolution
from app.services.eigen_service import eigen_service
from app.utils.file_utils import field_frame

logger = logging.getLogger(__name__)

HELP = ("Solve for (λ0, N, φ). Writes N.csv (a,x,N), phi.csv (a,x,phi), "
        "boundary.csv (x,N0,phi0) and summary.txt")


def solution_summary(config: RunConfig, sol: EigenSolution) -> Dict[str, Any]:
    """Scalar results of an eigen solve, shared with the other commands"""
    grid = sol.grid
    summary: Dict[str, Any] = {
        "growth": config.growth.kind,
        "division": config.division.kind,
        "kernel": config.kernel.kind,
        "n_x": grid.n_x,
        "n_a": grid.n_a,
        "a_max": grid.a_max,
        "lambda0": sol.lambda0,
        "lambda1": sol.lambda1,
        "adjoint_relative_gap": None if sol.lambda1 is None else abs(sol.lambda1 - sol.lambda0) / sol.lambda0,
        "epsilon_schedule": sol.epsilon_schedule,
        "lambda_raw": sol.lambda_raw,
        "mu_at_root": [step.mu_at_root for step in sol.steps],
        "continuation_converged": sol.converged,
    }
    residuals = sol.residuals
    if residuals is not None:
        summary.update({
            "r_b": residuals.r_b,
            "r_x": residuals.r_x,
            "r_a": residuals.r_a,
            "r_adjoint": residuals.r_adjoint,
            "duality_normalization": residuals.duality_normalization,
        })
        for eta, value in residuals.eta_moments.items():
            summary[f"eta_moment_{eta:g}"] = value
            summary[f"eta_bound_{eta:g}"] = residuals.eta_bounds_passed[eta]
    return summary


def solve(config: RunConfig, with_adjoint: bool = True) -> EigenSolution:
    model = get_model(config)
    grid = get_grid(config, model)
    return eigen_service.solve(model, grid, config.solver.epsilon_schedule, config.solver.tolerance,
                               with_adjoint=with_adjoint)


def execute(config: RunConfig, context: CommandContext) -> CommandResult:
    """Eigen command"""
    sol = solve(config)
    summary = {"command": "eigen", **solution_summary(config, sol)}
    if not config.division.content_dependent:
        oracle = eigen_service.age_only_eigenvalue(config.division)
        summary["age_only_lambda"] = oracle
        summary["age_only_relative_gap"] = abs(sol.lambda0 - oracle) / oracle

    grid = sol.grid
    boundary = pd.DataFrame({"x": grid.x, "N0": sol.boundary, "phi0": sol.adjoint_boundary})
    return CommandResult(
        summary=summary,
        tables={
            "N.csv": field_frame(grid, sol.density, "N"),
            "phi.csv": field_frame(grid, sol.adjoint, "phi"),
            "boundary.csv": boundary,
        },
    )
