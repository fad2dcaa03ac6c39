from pydantic import BaseModel, Field
from typing import Optional
import numpy as np


class FlowTable(BaseModel):
    """Characteristics tabulated at fixed ages for a batch of launch contents.

    Arrays are indexed [age, launch].
    """

    ages: np.ndarray
    launches: np.ndarray
    position: np.ndarray
    cum_divergence: np.ndarray
    cum_birth: np.ndarray

    class Config:
        arbitrary_types_allowed = True
        frozen = True


class CharacteristicWeights(BaseModel):
    """Survival and Jacobian weights along characteristics, indexed [age, launch]"""

    survival: np.ndarray
    divergence: np.ndarray

    class Config:
        arbitrary_types_allowed = True


class WeakAssumptionReport(BaseModel):
    a_max: float
    compact_support: bool
    integrability: Optional[float] = Field(None, description="Truncated ∬ exp(-∫B) over interior launches")
    integrability_tail: Optional[float] = None
    integrability_passed: Optional[bool] = None
    min_total_birth: float = Field(..., description="min over interior y of ∫ B along the characteristic")
    ln2_margin: float
    ln2_passed: bool
    ratio_sup: Optional[float] = None
    ratio_passed: Optional[bool] = None
    positivity_min: Optional[float] = None
    positivity_passed: Optional[bool] = None

    @property
    def positive_growth_expected(self) -> bool:
        if not self.ln2_passed:
            return False
        if self.compact_support:
            return bool(self.ratio_passed) if self.ratio_passed is not None else True
        return bool(self.integrability_passed)
