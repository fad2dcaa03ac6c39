from pydantic import BaseModel, Field
from typing import List, Optional
from enum import Enum
import numpy as np

from app.models.grid import Grid


class Regime(str, Enum):
    EXPONENTIAL_GROWTH = "exponential-growth"
    POLYNOMIAL_GROWTH = "polynomial-growth"
    EXPONENTIAL_DECAY = "exponential-decay"


class DispersionResult(BaseModel):
    """Two-phase eigenvalue λ linked to the one-phase λ0 through
    λ0 = λ + d1 + L(λ + d2)/(λ + G̃ + d2)."""

    lambda0: float
    g_tilde: float
    g_plus: float = Field(..., description="G̃ + d2")
    d_plus: float = Field(..., description="d1 - λ0")
    l_plus: float = Field(..., description="L + d1 - λ0")
    lam: float
    lam_sqrt: float = Field(..., description="Root from the square-root form")
    lam_rationalized: float = Field(..., description="Root from the rationalized form")
    lower_bound: float
    discriminant: float
    residual: float = Field(..., description="|f(λ) - λ0|")


class CriterionResult(BaseModel):
    holds: bool
    residual: float = Field(..., description="G₊ d₊ + L d2")


class LimitEigensystem(BaseModel):
    """Eigenelements of the G̃ → 0 limit: P2, 𝒬2 = L₊P2, φ2, ψ2 = (L₊/L)φ2"""

    p2: np.ndarray
    q2: np.ndarray
    phi2: np.ndarray
    psi2: np.ndarray
    l_plus: float
    transition: float
    c_p: float
    c_phi: float
    strict: bool = Field(..., description="Whether the limit hypotheses hold")
    mass_residual: float
    duality_residual: float

    class Config:
        arbitrary_types_allowed = True


class TwoPhaseState(BaseModel):
    t: float = 0.0
    p: np.ndarray = Field(..., description="Proliferating density p[age, content]")
    q: np.ndarray = Field(..., description="Quiescent density q[age, content]")
    grid: Grid

    class Config:
        arbitrary_types_allowed = True


class TwoPhaseRecord(BaseModel):
    t: float
    N: float
    P: float
    Q: float
    G: float
    S2: float
    R: float


class SupersolutionReport(BaseModel):
    holds: bool
    a: float = Field(..., description="Amplitude of Σ(t) = a (t + t0)^{1/n}")
    t0: float
    a_min: Optional[float] = Field(None, description="Amplitude from the recruitment bound")
    tightest_a: float
    first_crossing: Optional[float] = None
    enlargements: int = 0
    c: Optional[float] = None
    c3: Optional[float] = None


class GrowthFit(BaseModel):
    slope: float
    intercept: float
    residual: float
    window_start: float
    window_end: float
    semilog_slope: float


class TwoPhaseTrajectory(BaseModel):
    records: List[TwoPhaseRecord]
    final: TwoPhaseState
    transition_mean: float
    limit: Optional[LimitEigensystem] = None

    class Config:
        arbitrary_types_allowed = True

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])
