import sys
import time
import logging
from typing import Callable

from pydantic import ValidationError

from app.core.exceptions import ToolkitError

logger = logging.getLogger(__name__)


class LoggingMiddleware:
    """Command logging middleware"""

    def __init__(self, call_next: Callable[..., int]):
        self.call_next = call_next

    def __call__(self, name: str, *args, **kwargs) -> int:
        start_time = time.time()

        # Log command
        logger.info(f"Command: {name}")

        exit_code = self.call_next(name, *args, **kwargs)

        # Calculate processing time
        process_time = time.time() - start_time

        # Log result
        logger.info(
            f"Result: exit={exit_code} - "
            f"Time: {process_time:.3f}s - "
            f"Command: {name}"
        )

        return exit_code


class ErrorMiddleware:
    """Maps toolkit errors to process exit codes"""

    def __init__(self, call_next: Callable[..., int]):
        self.call_next = call_next

    def __call__(self, name: str, *args, **kwargs) -> int:
        try:
            return self.call_next(name, *args, **kwargs)
        except ToolkitError as e:
            logger.error(f"{type(e).__name__}: {e.detail}")
            print(f"error: {e.detail}", file=sys.stderr)
            return e.exit_code
        except ValidationError as e:
            logger.error(f"Invalid parameters: {e}")
            print(f"error: {e.errors()[0]['msg']}", file=sys.stderr)
            return 2
        except Exception as e:
            logger.exception(f"Unexpected failure in {name}: {e}")
            print(f"error: {e}", file=sys.stderr)
            return 5
