import logging

import numpy as np
import pandas as pd

from app.cli.commands.eigen import solve
from app.cli.router import CommandContext, CommandResult
from app.core.dependencies import get_model, get_two_phase_params
from app.core.exceptions import RegimeError
from app.models.config import RunConfig
from app.services.twophase_service import twophase_service

logger = logging.getLogger(__name__)

HELP = ("Simulate the proliferating/quiescent system. Writes trajectory.csv (t,N,P,Q,G,S2,R) "
        "and summary.txt with fitted exponents, dispersion values and the regime label")

COLUMNS = ["t", "N", "P", "Q", "G", "S2", "R"]


def _slope(times, values, fraction):
    try:
        return twophase_service.growth_exponent(times, values, fraction).slope
    except RegimeError:
        return None


def execute(config: RunConfig, context: CommandContext) -> CommandResult:
    """Two-phase command"""
    section = config.twophase
    params = get_two_phase_params(config)
    model = get_model(config)
    sol = solve(config)
    lambda0 = sol.lambda0

    p0 = section.initial_mass * sol.density
    q0 = np.zeros_like(p0)
    trajectory = twophase_service.simulate_twophase(params, model, sol, p0, q0, section.horizon,
                                                    output_every=section.output_every)
    frame = pd.DataFrame([r.model_dump() for r in trajectory.records], columns=COLUMNS)
    times = frame["t"].to_numpy()

    hill = params.recruitment
    transition = trajectory.transition_mean
    start = twophase_service.lambda_from_lambda0(lambda0, params.d1, params.d2, transition, hill.alpha1)
    limit = twophase_service.lambda_from_lambda0(lambda0, params.d1, params.d2, transition, hill.alpha2)
    criterion = twophase_service.lambda_zero_criterion(lambda0, params.d1, params.d2, transition, hill.alpha2)
    regime = twophase_service.classify_regime(times, frame["N"].to_numpy(), limit.lam, section.fit_fraction)
    supersolution = twophase_service.check_trajectory_supersolution(trajectory, params, lambda0)

    summary = {
        "command": "twophase",
        "lambda0": lambda0,
        "d1": params.d1,
        "d2": params.d2,
        "hill_n": hill.n,
        "expected_slope": 1.0 / hill.n,
        "transition_mean": transition,
        "lambda_at_alpha1": start.lam,
        "lambda_at_alpha2": limit.lam,
        "lambda_lower_bound": limit.lower_bound,
        "dispersion_residual": limit.residual,
        "criterion_residual": criterion.residual,
        "criterion_holds": criterion.holds,
        "regime": regime.value,
        "slope_N": _slope(times, frame["N"].to_numpy(), section.fit_fraction),
        "slope_P": _slope(times, frame["P"].to_numpy(), section.fit_fraction),
        "slope_R": _slope(times, frame["R"].to_numpy(), section.fit_fraction),
        "N_initial": float(frame["N"].iloc[0]),
        "N_final": float(frame["N"].iloc[-1]),
        "R_final": float(frame["R"].iloc[-1]),
        "limit_system_strict": None if trajectory.limit is None else trajectory.limit.strict,
    }
    if supersolution is not None:
        summary.update({
            "s2_bound_holds": supersolution.holds,
            "s2_a": supersolution.a,
            "s2_t0": supersolution.t0,
            "s2_a_min": supersolution.a_min,
            "s2_tightest_a": supersolution.tightest_a,
            "s2_first_crossing": supersolution.first_crossing,
            "s2_c": supersolution.c,
            "s2_c3": supersolution.c3,
        })
    return CommandResult(summary=summary, tables={"trajectory.csv": frame})
