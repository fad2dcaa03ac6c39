import numpy as np
from typing import Optional, Tuple
import logging

from app.core.config import settings
from app.core.exceptions import NumericError

logger = logging.getLogger(__name__)


def power_iteration(
    matrix: np.ndarray,
    weights: Optional[np.ndarray] = None,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    start: Optional[np.ndarray] = None,
) -> Tuple[float, np.ndarray, int]:
    """Dominant eigenpair of an entrywise nonnegative matrix.

    The iterate is kept positive and normalized to Σ w v = 1; the stopping
    test is the residual ||A v - μ v|| <= tol μ ||v|| in the max norm.
    Returns (μ, v, iterations).
    """
    matrix = np.asarray(matrix, dtype=float)
    n = matrix.shape[0]
    weights = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    tol = settings.POWER_TOLERANCE if tol is None else tol
    max_iter = settings.POWER_MAX_ITERATIONS if max_iter is None else max_iter

    v = np.ones(n) if start is None else np.abs(np.asarray(start, dtype=float))
    if not np.any(v > 0):
        v = np.ones(n)
    v = v / (weights @ v)

    mu = 0.0
    residual = np.inf
    for iteration in range(1, max_iter + 1):
        y = matrix @ v
        mass = weights @ y
        if mass <= 0.0 or not np.any(y > 0):
            return 0.0, v, iteration
        mu = float(mass)
        residual = float(np.max(np.abs(y - mu * v)))
        if residual <= tol * mu * np.max(np.abs(v)):
            return mu, v, iteration
        v = y / mass

    logger.error(f"Power iteration stalled: mu={mu:.12g}, residual={residual:.3e}")
    raise NumericError(
        f"power iteration did not converge in {max_iter} iterations "
        f"(Rayleigh estimate {mu:.12g}, residual gap {residual:.3e})"
    )
