import argparse
import logging
import sys
from typing import List, Optional

from app.cli.router import CommandContext, command_router
from app.core.config import settings
from app.core.middleware import ErrorMiddleware, LoggingMiddleware


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cell-division",
        description=f"{settings.APP_NAME} {settings.VERSION}. Exit codes: 0 success, 2 config error, "
                    f"3 subcritical model, 4 resolution or CFL failure, 5 numeric failure.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, help_text in command_router.commands.items():
        sub = subparsers.add_parser(name, help=help_text, description=help_text)
        sub.add_argument("--config", required=True, metavar="PATH", help="INI run configuration")
        sub.add_argument("--out", metavar="DIR", help="Output directory (overrides output.directory)")
        sub.add_argument("--threads", type=int, metavar="N", help="Worker threads (overrides output.threads)")
        sub.add_argument("--emit-plot-script", action="store_true", help="Write plot.py next to the CSVs")
        sub.add_argument("--log-level", default=settings.LOG_LEVEL, help="Logging level")
    return parser


def run_command(name: str, context: CommandContext) -> int:
    return command_router.dispatch(name, context)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    # Configure logging
    logging.basicConfig(level=args.log_level.upper(), format=settings.LOG_FORMAT)
    logger = logging.getLogger(__name__)
    logger.info(f"Starting {settings.APP_NAME}...")

    context = CommandContext(
        config_path=args.config,
        out=args.out,
        threads=args.threads,
        emit_plot_script=args.emit_plot_script,
    )
    pipeline = ErrorMiddleware(LoggingMiddleware(run_command))
    return pipeline(args.command, context)


if __name__ == "__main__":
    sys.exit(main())
