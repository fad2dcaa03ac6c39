import logging

import numpy as np
import pandas as pd

from app.cli.router import CommandContext, CommandResult
from app.core.dependencies import get_grid, get_model
from app.core.exceptions import ToolkitError
from app.models.config import RunConfig
from app.services.characteristics_service import characteristics_service
from app.services.coefficient_service import coefficient_service
from app.services.eigen_service import eigen_service

logger = logging.getLogger(__name__)

HELP = ("Check the model assumptions. Writes birth_continuity.csv (x,C0) and summary.txt "
        "with pass/fail per assumption")


def execute(config: RunConfig, context: CommandContext) -> CommandResult:
    """Validate command"""
    model = get_model(config)
    grid = get_grid(config, model)
    summary = {"command": "validate", "a_max": grid.a_max, "n_x": grid.n_x, "n_a": grid.n_a}
    tables = {}

    moments = coefficient_service.check_kernel_consistency(model.kernel, model.division, grid)
    summary.update({
        "kernel_zeroth_moment": moments.zeroth_moment,
        "kernel_first_moment": moments.first_moment,
        "kernel_symmetry": moments.symmetry,
        "kernel_analytic": moments.analytic,
        "kernel_passed": moments.passed(1e-2),
    })

    if model.kernel.is_dirac:
        geometry = coefficient_service.check_split_geometry(model.growth, grid)
        summary.update({
            "split_positive_below_half": geometry.positive_below_half,
            "split_zero_curve_nondecreasing": geometry.zero_curve_nondecreasing,
            "split_geometry_passed": geometry.passed,
        })

    solver = characteristics_service.get_solver(model.growth, config.output.threads)
    report = characteristics_service.check_weak_assumptions(solver, model.division, grid, model.kernel)
    summary.update({
        "compact_support": report.compact_support,
        "integrability": report.integrability,
        "integrability_tail": report.integrability_tail,
        "integrability_passed": report.integrability_passed,
        "min_total_birth": report.min_total_birth,
        "ln2_margin": report.ln2_margin,
        "ln2_passed": report.ln2_passed,
        "ratio_sup": report.ratio_sup,
        "ratio_passed": report.ratio_passed,
        "positivity_min": report.positivity_min,
        "positivity_passed": report.positivity_passed,
        "positive_growth_expected": report.positive_growth_expected,
    })

    # checks below need the operator; a failure is part of the report
    try:
        op = eigen_service.assemble_operator(model, grid, 0.0, 0.0)
        c0 = 0.5 * op.matrix.sum(axis=1)
        summary.update({"c0_min": float(c0.min()), "c0_max": float(c0.max()), "c0_tail_share": op.tail_share})
        tables["birth_continuity.csv"] = pd.DataFrame({"x": grid.x, "C0": c0})
        eps = min(config.solver.epsilon_schedule)
        summary["mu_at_zero"] = eigen_service.mu_of_lambda(model, grid, 0.0, eps)
    except ToolkitError as e:
        summary["operator_error"] = e.detail

    if not model.division.content_dependent:
        try:
            summary["age_only_lambda"] = eigen_service.age_only_eigenvalue(model.division)
        except ToolkitError as e:
            summary["age_only_lambda"] = None
            summary["age_only_error"] = e.detail

    checks = [v for k, v in summary.items() if k.endswith("_passed") and v is not None]
    summary["all_passed"] = bool(np.all(checks)) if checks else True
    return CommandResult(summary=summary, tables=tables)
