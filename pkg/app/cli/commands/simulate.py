import logging

import pandas as pd

from app.cli.commands.eigen import solve
from app.cli.router import CommandContext, CommandResult
from app.core.dependencies import get_entropy, get_model
from app.models.config import RunConfig
from app.services.transport_service import transport_service
from app.utils.file_utils import field_frame

logger = logging.getLogger(__name__)

HELP = ("Evolve the renewal transport equation. Writes observables.csv "
        "(t,mass,duality,entropy,distance,abs_duality,envelope), snapshot_<t>.csv (a,x,n) and summary.txt")

COLUMNS = ["t", "mass", "duality", "entropy", "distance", "abs_duality", "envelope"]


def execute(config: RunConfig, context: CommandContext) -> CommandResult:
    """Simulate command"""
    section = config.simulate
    model = get_model(config)
    sol = solve(config)
    n0 = transport_service.initial_condition(sol, section.initial, section.scale, section.perturbation)
    trajectory = transport_service.simulate(
        n0, model, sol, section.horizon,
        renormalize=section.renormalize,
        entropy=get_entropy(config),
        snapshot_times=section.snapshot_times,
        output_every=section.output_every,
    )

    observations = pd.DataFrame([o.model_dump() for o in trajectory.observations], columns=COLUMNS)
    first, last = trajectory.observations[0], trajectory.observations[-1]
    summary = {
        "command": "simulate",
        "lambda0": sol.lambda0,
        "scheme_lambda": trajectory.scheme_lambda,
        "scheme_lambda_gap": abs(trajectory.scheme_lambda - sol.lambda0),
        "steady_distance": trajectory.steady_distance,
        "initial": section.initial,
        "renormalize": section.renormalize,
        "entropy": section.entropy.value,
        "horizon": trajectory.final.t,
        "dt": trajectory.final.dt,
        "courant": trajectory.courant,
        "positivity": trajectory.positivity,
        "m0": trajectory.m0,
        "duality_drift": trajectory.duality_drift,
        "abs_duality_drift": trajectory.abs_duality_drift,
        "entropy_initial": first.entropy,
        "entropy_final": last.entropy,
        "entropy_increase_max": trajectory.entropy_increase,
        "distance_initial": first.distance,
        "distance_final": last.distance,
        "distance_halved": bool(last.distance < 0.5 * first.distance),
        "envelope_initial": first.envelope,
        "envelope_final": last.envelope,
    }
    tables = {"observables.csv": observations}
    for t, density in trajectory.snapshots.items():
        tables[f"snapshot_{t:g}.csv"] = field_frame(sol.grid, density, "n")
    return CommandResult(summary=summary, tables=tables)
