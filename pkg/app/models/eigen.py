from pydantic import BaseModel, Field
from typing import Dict, List, Optional
import numpy as np

from app.models.grid import Grid


class KernelOperator(BaseModel):
    """Discretized regularized birth operator acting on nodal boundary values"""

    matrix: np.ndarray
    weights: np.ndarray = Field(..., description="Content quadrature weights")
    lam: float
    epsilon: float
    adjoint: bool = False
    dirac: bool = False
    tail_share: float = 0.0
    birth_sup: float = Field(0.0, description="Largest cell-averaged division rate, bounds ‖b‖∞ x_M")

    class Config:
        arbitrary_types_allowed = True

    @property
    def mu_bound_numerator(self) -> float:
        """μ(λ) <= (2 ‖b‖∞ x_M + 2ε) / λ"""
        return 2.0 * self.birth_sup + 2.0 * self.epsilon


class ContinuationStep(BaseModel):
    epsilon: float
    lam: float
    mu_at_root: float
    evaluations: int


class ResidualReport(BaseModel):
    r_b: float = Field(..., description="|λ0 - ∬BN|")
    r_x: float = Field(..., description="|λ0 ∬xN - ∬ΓN|")
    r_a: float = Field(..., description="|λ0 ∬aN + ∬aBN - 1|")
    r_adjoint: Optional[float] = Field(None, description="|λ1 - λ0|")
    eta_moments: Dict[float, float] = Field(default_factory=dict)
    eta_bounds_passed: Dict[float, bool] = Field(default_factory=dict)
    duality_normalization: Optional[float] = None


class AdjointSolution(BaseModel):
    lambda1: float
    steps: List[ContinuationStep]
    boundary: np.ndarray
    field: np.ndarray

    class Config:
        arbitrary_types_allowed = True


class EigenSolution(BaseModel):
    """Eigenelements (λ0, N, φ) with provenance and residual diagnostics"""

    lambda0: float
    lambda1: Optional[float] = None
    steps: List[ContinuationStep]
    adjoint_steps: List[ContinuationStep] = Field(default_factory=list)
    converged: bool = True
    epsilon_schedule: List[float]
    grid: Grid
    boundary: np.ndarray = Field(..., description="N⁰ at the content nodes")
    density: np.ndarray = Field(..., description="N[age, content] with ∬N = 1")
    adjoint_boundary: Optional[np.ndarray] = None
    adjoint: Optional[np.ndarray] = Field(None, description="φ[age, content] with ∬Nφ = 1")
    residuals: Optional[ResidualReport] = None
    dirac: bool = False

    class Config:
        arbitrary_types_allowed = True

    @property
    def lambda_raw(self) -> List[float]:
        return [step.lam for step in self.steps]
