from pydantic import BaseModel, BeforeValidator, Field, field_validator, model_validator
from typing import List, Literal, Optional, Union
from typing_extensions import Annotated

from app.core.config import settings
from app.models.coefficients import (
    ConstantTransition,
    DivisionRate,
    GrowthField,
    HillTransition,
    ModelCoefficients,
    RecruitmentHill,
    RepartitionKernel,
    TwoPhaseParams,
    WeightMode,
)
from app.models.transport import EntropyKind


def _split_list(value):
    """Comma-separated INI values become lists"""
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


FloatList = Annotated[List[float], BeforeValidator(_split_list)]
TextList = Annotated[List[str], BeforeValidator(_split_list)]


class GridSection(BaseModel):
    n_x: int = Field(101, ge=16, description="Content nodes")
    n_a: int = Field(401, ge=16, description="Age nodes")
    a_max: Union[float, Literal["auto"]] = Field("auto", description="Age truncation or 'auto'")

    @field_validator("a_max")
    @classmethod
    def check_a_max(cls, v):
        if v != "auto" and v <= 0:
            raise ValueError("a_max must be positive or 'auto'")
        return v


class SolverSection(BaseModel):
    epsilon_schedule: FloatList = Field(default_factory=lambda: list(settings.EPSILON_SCHEDULE))
    tolerance: float = Field(settings.POWER_TOLERANCE, gt=0)
    bisection_tolerance: float = Field(settings.BISECTION_TOLERANCE, gt=0)
    max_iterations: int = Field(settings.POWER_MAX_ITERATIONS, ge=1)

    @field_validator("epsilon_schedule")
    @classmethod
    def check_schedule(cls, v):
        if not v or any(e <= 0 for e in v):
            raise ValueError("epsilon_schedule needs positive values")
        return v


class SimulateSection(BaseModel):
    horizon: float = Field(50.0, gt=0)
    initial: Literal["eigen", "scaled", "perturbed"] = "perturbed"
    scale: float = 1.0
    perturbation: float = Field(0.5, ge=-1, le=1)
    renormalize: bool = True
    entropy: EntropyKind = EntropyKind.QUADRATIC
    entropy_path: Optional[str] = None
    snapshot_times: FloatList = Field(default_factory=list)
    output_every: int = Field(1, ge=1)

    @model_validator(mode="after")
    def check_entropy(self):
        if self.entropy == EntropyKind.TABULATED and not self.entropy_path:
            raise ValueError("tabulated entropy needs entropy_path")
        return self


class TwoPhaseSection(BaseModel):
    d1: float = Field(..., ge=0)
    d2: float = Field(0.0, ge=0)
    transition: Literal["constant", "hill"] = "hill"
    l: Optional[float] = Field(None, ge=0)
    a3: float = Field(4.0, ge=0)
    a2: float = Field(2.0, gt=0)
    gamma2: float = Field(5.0, gt=0)
    a_bar: float = Field(18.0, ge=0)
    alpha1: float = Field(8.0, ge=0)
    alpha2: float = Field(0.0, ge=0)
    theta: float = Field(1.0, gt=0)
    k: Optional[float] = Field(None, gt=0, description="Hill exponent n = 1/k")
    n: Optional[float] = Field(None, gt=0)
    weights: WeightMode = WeightMode.UNIT
    phi_weight: float = Field(1.0, ge=0)
    psi_weight: float = Field(1.0, ge=0)
    horizon: float = Field(200.0, gt=0)
    output_every: int = Field(1, ge=1)
    initial_mass: float = Field(1.0, gt=0)
    fit_fraction: float = Field(0.5, gt=0, le=1)

    @model_validator(mode="after")
    def check_exponent(self):
        if self.k is None and self.n is None:
            raise ValueError("set k or n for the recruitment exponent")
        if self.transition == "constant" and self.l is None:
            raise ValueError("constant transition needs l")
        return self

    @property
    def hill_exponent(self) -> float:
        return self.n if self.n is not None else 1.0 / self.k

    def to_params(self) -> TwoPhaseParams:
        if self.transition == "constant":
            transition = ConstantTransition(l=self.l)
        else:
            transition = HillTransition(a3=self.a3, a2=self.a2, gamma2=self.gamma2, a_bar=self.a_bar)
        return TwoPhaseParams(
            d1=self.d1,
            d2=self.d2,
            transition=transition,
            recruitment=RecruitmentHill(alpha1=self.alpha1, alpha2=self.alpha2, theta=self.theta,
                                        n=self.hill_exponent),
            weights=self.weights,
            phi_weight=self.phi_weight,
            psi_weight=self.psi_weight,
        )


class SweepSection(BaseModel):
    key: str = Field(..., description="section.key to vary")
    values: TextList
    command: Literal["eigen", "simulate", "twophase", "validate"] = "eigen"

    @field_validator("key")
    @classmethod
    def check_key(cls, v):
        if v.count(".") != 1:
            raise ValueError("sweep key must look like section.key")
        return v


class OutputSection(BaseModel):
    directory: str = settings.OUTPUT_DIR
    threads: int = Field(settings.THREADS, ge=1)


class RunConfig(BaseModel):
    """Validated run definition read from the INI file"""

    growth: GrowthField
    division: DivisionRate
    kernel: RepartitionKernel
    grid: GridSection = Field(default_factory=GridSection)
    solver: SolverSection = Field(default_factory=SolverSection)
    simulate: SimulateSection = Field(default_factory=SimulateSection)
    twophase: Optional[TwoPhaseSection] = None
    sweep: Optional[SweepSection] = None
    output: OutputSection = Field(default_factory=OutputSection)

    @property
    def model(self) -> ModelCoefficients:
        return ModelCoefficients(growth=self.growth, division=self.division, kernel=self.kernel)
