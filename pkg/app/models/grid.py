from pydantic import BaseModel, Field
import numpy as np

from app.utils.quadrature import trapezoid_weights


class Grid(BaseModel):
    """Tensor grid on [0, A_max] x [0, x_M] with trapezoid weights on both axes"""

    x_max: float = Field(..., gt=0, description="Content bound x_M")
    a_max: float = Field(..., gt=0, description="Age truncation A_max")
    n_x: int = Field(101, ge=16, description="Number of content nodes")
    n_a: int = Field(401, ge=16, description="Number of age nodes")

    class Config:
        frozen = True

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.x_max, self.n_x)

    @property
    def a(self) -> np.ndarray:
        return np.linspace(0.0, self.a_max, self.n_a)

    @property
    def dx(self) -> float:
        return self.x_max / (self.n_x - 1)

    @property
    def da(self) -> float:
        return self.a_max / (self.n_a - 1)

    @property
    def wx(self) -> np.ndarray:
        return trapezoid_weights(self.n_x, self.x_max)

    @property
    def wa(self) -> np.ndarray:
        return trapezoid_weights(self.n_a, self.a_max)

    def integrate(self, field: np.ndarray) -> float:
        """Trapezoid double integral of a field sampled as [age, content]"""
        return float(self.wa @ np.asarray(field) @ self.wx)

    def refined(self, factor: int = 2) -> "Grid":
        return self.model_copy(update={
            "n_x": factor * (self.n_x - 1) + 1,
            "n_a": factor * (self.n_a - 1) + 1,
        })
