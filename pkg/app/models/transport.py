from pydantic import BaseModel, Field, model_validator
from typing import Dict, List, Optional, Tuple
from enum import Enum
import numpy as np

from app.models.grid import Grid


class EntropyKind(str, Enum):
    QUADRATIC = "quadratic"
    ABSOLUTE = "absolute"
    TABULATED = "tabulated"


class EntropyFunctional(BaseModel):
    """Convex H entering 𝓗 = ∬ Nφ H(ñ/N)"""

    kind: EntropyKind = EntropyKind.QUADRATIC
    u: Tuple[float, ...] = ()
    values: Tuple[float, ...] = ()

    class Config:
        frozen = True

    @model_validator(mode="after")
    def check_table(self):
        if self.kind != EntropyKind.TABULATED:
            return self
        u = np.asarray(self.u, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if len(u) < 3 or len(u) != len(values):
            raise ValueError("tabulated entropy needs at least three (u, value) samples")
        if np.any(np.diff(u) <= 0):
            raise ValueError("entropy samples must have increasing u")
        slopes = np.diff(values) / np.diff(u)
        if np.any(np.diff(slopes) < -1e-12 * max(1.0, np.abs(slopes).max())):
            raise ValueError("tabulated entropy is not convex")
        return self

    def evaluate(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == EntropyKind.QUADRATIC:
            return (u - 1.0) ** 2
        if self.kind == EntropyKind.ABSOLUTE:
            return np.abs(u - 1.0)
        knots = np.asarray(self.u)
        values = np.asarray(self.values)
        left = (values[1] - values[0]) / (knots[1] - knots[0])
        right = (values[-1] - values[-2]) / (knots[-1] - knots[-2])
        inside = np.interp(u, knots, values)
        # continue the end chords linearly so H stays convex outside the samples
        below = values[0] + left * (u - knots[0])
        above = values[-1] + right * (u - knots[-1])
        return np.where(u < knots[0], below, np.where(u > knots[-1], above, inside))


class TimeField(BaseModel):
    """Density n(t, a, x) at one time level"""

    t: float = 0.0
    density: np.ndarray = Field(..., description="n[age, content]")
    dt: float
    grid: Grid
    renormalized: bool = True
    rate: float = Field(0.0, description="growth rate divided out of ñ, the Malthus rate of the scheme")

    class Config:
        arbitrary_types_allowed = True

    @property
    def scaled(self) -> np.ndarray:
        """ñ = n e^{-λ t}; the renormalized equation already carries the factor"""
        if self.renormalized:
            return self.density
        return self.density * np.exp(-self.rate * self.t)


class DiscreteSteadyState(BaseModel):
    """Separable solution e^{λ_h t} r(a, x) of the time-stepping scheme itself"""

    lam: float = Field(..., description="discrete Malthus rate λ_h")
    density: np.ndarray = Field(..., description="r[age, content] with ∬r = 1")
    newborn: np.ndarray
    evaluations: int = 0

    class Config:
        arbitrary_types_allowed = True


class Observation(BaseModel):
    t: float
    mass: float
    duality: float = Field(..., description="D(t) = ∬ñφ")
    entropy: float = Field(..., description="∬ Nφ H(ñ/N)")
    distance: float = Field(..., description="∬|ñ - m⁰N|φ")
    abs_duality: float = Field(..., description="∬|ñ|φ")
    envelope: float = Field(..., description="max |ñ|/N over the support of N")


class Trajectory(BaseModel):
    observations: List[Observation]
    final: TimeField
    snapshots: Dict[float, np.ndarray] = Field(default_factory=dict)
    m0: float
    courant: float
    positivity: float
    scheme_lambda: float = 0.0
    steady_distance: float = Field(0.0, description="∬|r_h - N|φ between the scheme and eigen profiles")

    class Config:
        arbitrary_types_allowed = True

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(o, name) for o in self.observations])

    @property
    def duality_drift(self) -> float:
        """max_t |D(t) - D(0)| / |D(0)|"""
        duality = self.series("duality")
        return float(np.max(np.abs(duality - duality[0])) / max(abs(duality[0]), 1e-300))

    @property
    def entropy_increase(self) -> float:
        """Largest single-step growth of 𝓗, zero for a monotone run"""
        entropy = self.series("entropy")
        if len(entropy) < 2:
            return 0.0
        return float(max(np.max(np.diff(entropy)), 0.0))

    @property
    def abs_duality_drift(self) -> Optional[float]:
        values = self.series("abs_duality")
        return float(np.max(np.abs(values - values[0])) / max(abs(values[0]), 1e-300))
