from pydantic import BaseModel, Field
from typing import Optional


class KernelMomentReport(BaseModel):
    """Worst-case kernel residuals over the grid's mother contents and ages"""

    zeroth_moment: float = Field(..., description="max |∫ b dx - B|")
    first_moment: float = Field(..., description="max |2 ∫ x b dx - y B|")
    symmetry: Optional[float] = Field(None, description="max |b(x) - b(y - x)|, None for the Dirac kernel")
    analytic: bool = False

    def passed(self, tolerance: float) -> bool:
        return self.zeroth_moment <= tolerance and self.first_moment <= tolerance


class GeometryReport(BaseModel):
    """Sign structure of Γ used by the equal-mitosis change of variables"""

    positive_below_half: bool
    zero_curve_nondecreasing: bool

    @property
    def passed(self) -> bool:
        return self.positive_below_half and self.zero_curve_nondecreasing
