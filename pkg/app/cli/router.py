from typing import Any, Callable, Dict, Optional
import logging

import pandas as pd
from pydantic import BaseModel, Field

from app.core.dependencies import get_run_config
from app.models.config import RunConfig
from app.services.eigen_service import eigen_service
from app.utils.file_utils import format_summary, write_plot_script, write_summary, write_table

logger = logging.getLogger(__name__)


class CommandContext(BaseModel):
    config_path: str
    out: Optional[str] = None
    threads: Optional[int] = None
    emit_plot_script: bool = False


class CommandResult(BaseModel):
    """Summary lines and CSV tables produced by one command"""

    summary: Dict[str, Any] = Field(default_factory=dict)
    tables: Dict[str, pd.DataFrame] = Field(default_factory=dict)

    class Config:
        arbitrary_types_allowed = True


Handler = Callable[[RunConfig, CommandContext], CommandResult]


class CommandRouter:
    """Registry of commands and the shared load / run / write pipeline"""

    def __init__(self):
        self._handlers: Dict[str, Handler] = {}
        self._help: Dict[str, str] = {}

    def include(self, name: str, handler: Handler, help: str = "") -> None:
        self._handlers[name] = handler
        self._help[name] = help

    @property
    def commands(self) -> Dict[str, str]:
        return dict(self._help)

    def execute(self, name: str, config: RunConfig, context: CommandContext) -> CommandResult:
        eigen_service.configure(
            threads=config.output.threads,
            bisection_tolerance=config.solver.bisection_tolerance,
            max_iterations=config.solver.max_iterations,
        )
        return self._handlers[name](config, context)

    def dispatch(self, name: str, context: CommandContext) -> int:
        """Run a command end to end and write its artifacts; returns the exit code"""
        config = get_run_config(context.config_path, out=context.out, threads=context.threads)
        result = self.execute(name, config, context)
        directory = config.output.directory
        files = [write_table(frame, directory, filename) for filename, frame in result.tables.items()]
        files.append(write_summary(directory, result.summary))
        if context.emit_plot_script:
            write_plot_script(directory, name, files)
        print(format_summary(result.summary), end="")
        return 0


def _register(router: CommandRouter) -> CommandRouter:
    from app.cli.commands import eigen, simulate, sweep, twophase, validate

    router.include("eigen", eigen.execute, eigen.HELP)
    router.include("simulate", simulate.execute, simulate.HELP)
    router.include("twophase", twophase.execute, twophase.HELP)
    router.include("validate", validate.execute, validate.HELP)
    router.include("sweep", sweep.execute, sweep.HELP)
    return router


# Router instance
command_router = _register(CommandRouter())
