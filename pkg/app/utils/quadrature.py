import numpy as np
from typing import Iterable, Tuple
import logging

logger = logging.getLogger(__name__)


def trapezoid_weights(n: int, length: float) -> np.ndarray:
    """Composite trapezoid weights for n uniform nodes on [0, length]"""
    h = length / (n - 1)
    weights = np.full(n, h)
    weights[0] = weights[-1] = 0.5 * h
    return weights


def age_partition(nodes: np.ndarray, breakpoints: Iterable[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Merge the age nodes with coefficient breakpoints inside [0, A_max].

    Returns the sorted partition and, for every original node, its index in it.
    """
    a_max = nodes[-1]
    extra = [p for p in breakpoints if p is not None and 0.0 < p < a_max]
    points = np.unique(np.concatenate([nodes, np.asarray(extra, dtype=float)]))
    tolerance = 1e-12 * max(a_max, 1.0)
    # merge breakpoints that fall on top of a node
    keep = np.concatenate([[True], np.diff(points) > tolerance])
    points = points[keep]
    node_index = np.searchsorted(points, nodes - tolerance)
    return points, node_index


def exponential_fit_integral(log_start: np.ndarray, log_end: np.ndarray, h: np.ndarray) -> np.ndarray:
    """∫ exp(ℓ) over a cell where ℓ is linear between log_start and log_end"""
    slope = log_start - log_end
    small = np.abs(slope) < 1e-12
    safe = np.where(small, 1.0, slope)
    s0 = np.exp(log_start)
    s1 = np.exp(log_end)
    fitted = h * (s0 - s1) / safe
    return np.where(small, 0.5 * h * (s0 + s1), fitted)


def exponential_fit_ratio(decrement: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Cell integral of exp(ℓ) divided by exp(ℓ_start), with decrement = ℓ_start - ℓ_end"""
    small = np.abs(decrement) < 1e-12
    safe = np.where(small, 1.0, decrement)
    fitted = h * (-np.expm1(-decrement)) / safe
    return np.where(small, 0.5 * h * (1.0 + np.exp(-decrement)), fitted)


def unit_hat_integral(t: np.ndarray) -> np.ndarray:
    """∫_{-1}^{t} (1 - |s|) ds, clipped to [0, 1]"""
    t = np.clip(t, -1.0, 1.0)
    return np.where(t <= 0.0, 0.5 * (1.0 + t) ** 2, 1.0 - 0.5 * (1.0 - t) ** 2)


def truncated_hat_weights(nodes: np.ndarray, upper: float) -> np.ndarray:
    """Weights ∫_0^upper hat_k(s) ds for the uniform hat basis on the nodes"""
    h = nodes[1] - nodes[0]
    upper = min(max(upper, 0.0), nodes[-1])
    return h * (unit_hat_integral((upper - nodes) / h) - unit_hat_integral(-nodes / h))


class HatProjector:
    """Projection of a split at mother content X onto the hat basis of the content nodes.

    P_i(X) = ∫ hat_i(x) ρ(x | X) dx is computed exactly from the second
    antiderivative of the daughter distribution, so Σ P_i = 1 and
    Σ x_i P_i = X / 2 hold to rounding.
    """

    def __init__(self, kernel, nodes: np.ndarray):
        self.kernel = kernel
        self.nodes = np.asarray(nodes, dtype=float)
        self.h = self.nodes[1] - self.nodes[0]
        self.extended = np.concatenate([[-self.h], self.nodes, [self.nodes[-1] + self.h]])

    def _second_antiderivative(self, mother: np.ndarray) -> np.ndarray:
        mother = np.asarray(mother, dtype=float)[None, :]
        x = self.extended[:, None]
        positive = mother > 0
        safe = np.where(positive, mother, 1.0)
        inside = safe * self.kernel.integrated_cdf(np.clip(x / safe, 0.0, 1.0))
        phi = np.where(positive, inside + np.maximum(x - mother, 0.0), np.maximum(x, 0.0))
        return np.where(x <= 0.0, 0.0, phi)

    def project(self, mother: np.ndarray) -> np.ndarray:
        """Matrix P[i, m] for the given mother contents"""
        phi = self._second_antiderivative(np.atleast_1d(mother))
        return (phi[2:] - 2.0 * phi[1:-1] + phi[:-2]) / self.h

    def node_matrix(self) -> np.ndarray:
        return self.project(self.nodes)

    def lattice(self, mother: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Lower lattice index and linear weight of each mother content"""
        scaled = np.clip(np.asarray(mother, dtype=float) / self.h, 0.0, len(self.nodes) - 1)
        lower = np.minimum(np.floor(scaled).astype(int), len(self.nodes) - 2)
        return lower, scaled - lower
