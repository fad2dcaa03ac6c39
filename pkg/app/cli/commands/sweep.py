import logging

import pandas as pd

from app.cli.router import CommandContext, CommandResult
from app.core.dependencies import get_run_config
from app.core.exceptions import ConfigError, ToolkitError
from app.models.config import RunConfig

logger = logging.getLogger(__name__)

HELP = ("Repeat a command over values of one config key. Writes sweep.csv "
        "(one row per value: the value, exit_code and the scalar summary fields) and summary.txt")


def execute(config: RunConfig, context: CommandContext) -> CommandResult:
    """Sweep command"""
    from app.cli.router import command_router

    if config.sweep is None:
        raise ConfigError("sweep: section required for this command")
    section, key = config.sweep.key.split(".")
    rows = []
    for value in config.sweep.values:
        row = {config.sweep.key: value, "exit_code": 0}
        try:
            point = get_run_config(context.config_path, out=context.out, threads=context.threads,
                                   overrides={(section, key): value})
            result = command_router.execute(config.sweep.command, point, context)
            row.update({
                name: item for name, item in result.summary.items()
                if name != "command" and (item is None or isinstance(item, (bool, int, float, str)))
            })
        except ToolkitError as e:
            logger.warning(f"Sweep point {config.sweep.key} = {value} failed: {e.detail}")
            row.update({"exit_code": e.exit_code, "error": e.detail})
        rows.append(row)

    frame = pd.DataFrame(rows)
    failures = int((frame["exit_code"] != 0).sum())
    summary = {
        "command": "sweep",
        "key": config.sweep.key,
        "sub_command": config.sweep.command,
        "points": len(rows),
        "failures": failures,
    }
    return CommandResult(summary=summary, tables={"sweep.csv": frame})
