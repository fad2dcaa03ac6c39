from pydantic import BaseModel, Field, PrivateAttr, model_validator
from typing import ClassVar, Optional, Tuple, Union
from typing_extensions import Annotated, Literal
from enum import Enum
import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.interpolate import RegularGridInterpolator


class FrozenModel(BaseModel):
    class Config:
        frozen = True
        extra = "forbid"


def _table_interpolator(ages: np.ndarray, contents: np.ndarray, values: np.ndarray) -> RegularGridInterpolator:
    return RegularGridInterpolator(
        (ages, contents), values, method="linear", bounds_error=False, fill_value=None
    )


def _check_table(ages, contents, values) -> None:
    ages = np.asarray(ages, dtype=float)
    contents = np.asarray(contents, dtype=float)
    values = np.asarray(values, dtype=float)
    if ages.ndim != 1 or contents.ndim != 1 or len(ages) < 2 or len(contents) < 2:
        raise ValueError("tabulated samples need at least two ages and two contents")
    if np.any(np.diff(ages) <= 0) or np.any(np.diff(contents) <= 0):
        raise ValueError("tabulated ages and contents must be strictly increasing")
    if values.shape != (len(ages), len(contents)):
        raise ValueError(f"tabulated values have shape {values.shape}, expected {(len(ages), len(contents))}")
    if not np.all(np.isfinite(values)):
        raise ValueError("tabulated values must be finite")


# ---------------------------------------------------------------------------
# Growth fields Γ(a, x)
# ---------------------------------------------------------------------------

class LogisticGrowth(FrozenModel):
    """Γ = C1 x (x_M - x)"""

    kind: Literal["case1"] = "case1"
    c1: float = Field(..., gt=0, description="Growth rate constant")
    x_max: float = Field(..., gt=0, description="Content bound x_M")

    def rate(self, a, x):
        x = np.asarray(x, dtype=float)
        return self.c1 * x * (self.x_max - x) + 0.0 * np.asarray(a, dtype=float)

    def rate_dx(self, a, x):
        x = np.asarray(x, dtype=float)
        return self.c1 * (self.x_max - 2.0 * x) + 0.0 * np.asarray(a, dtype=float)

    def zero_curve(self, a):
        return np.full_like(np.asarray(a, dtype=float), self.x_max)

    def flow(self, a, x):
        """Closed-form characteristic X(a, x)"""
        growth = np.exp(self.x_max * self.c1 * np.asarray(a, dtype=float))
        x = np.asarray(x, dtype=float)
        return x * self.x_max * growth / (self.x_max + x * (growth - 1.0))


class PowerGrowth(FrozenModel):
    """Γ = C1 x^α (x_M - x)^β"""

    kind: Literal["case2"] = "case2"
    c1: float = Field(..., gt=0)
    alpha: float = Field(..., gt=0, lt=1)
    beta: float = Field(..., gt=0)
    x_max: float = Field(..., gt=0)

    def rate(self, a, x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, self.x_max)
        return self.c1 * x ** self.alpha * (self.x_max - x) ** self.beta + 0.0 * np.asarray(a, dtype=float)

    def rate_dx(self, a, x):
        # Singular at x = 0 (and at x_M when β < 1); the stationary launches there carry no divergence.
        x = np.asarray(x, dtype=float) + 0.0 * np.asarray(a, dtype=float)
        inside = (x > 0) & (x < self.x_max)
        xs = np.where(inside, x, 0.5 * self.x_max)
        left = self.alpha * xs ** (self.alpha - 1.0) * (self.x_max - xs) ** self.beta
        right = self.beta * xs ** self.alpha * (self.x_max - xs) ** (self.beta - 1.0)
        return np.where(inside, self.c1 * (left - right), 0.0)

    def zero_curve(self, a):
        return np.full_like(np.asarray(a, dtype=float), self.x_max)


class CyclinGrowth(FrozenModel):
    """Γ = c1 x/(1+x) (r1 - r2 e^{-c4 a}) - c2 x"""

    kind: Literal["case3"] = "case3"
    c1: float = Field(..., gt=0)
    c2: float = Field(..., gt=0)
    r1: float = Field(..., gt=0)
    r2: float = Field(..., ge=0)
    c4: float = Field(..., gt=0)

    @model_validator(mode="after")
    def check_bounds(self):
        if not self.c2 / self.c1 < self.r1 - self.r2:
            raise ValueError("case3 growth requires c2/c1 < r1 - r2")
        return self

    @property
    def x_max(self) -> float:
        return self.c1 / self.c2 * self.r1 - 1.0

    def _drive(self, a):
        return self.r1 - self.r2 * np.exp(-self.c4 * np.asarray(a, dtype=float))

    def rate(self, a, x):
        x = np.asarray(x, dtype=float)
        return self.c1 * x / (1.0 + x) * self._drive(a) - self.c2 * x

    def rate_dx(self, a, x):
        x = np.asarray(x, dtype=float)
        return self.c1 * self._drive(a) / (1.0 + x) ** 2 - self.c2

    def zero_curve(self, a):
        return np.clip(self.c1 / self.c2 * self._drive(a) - 1.0, 0.0, self.x_max)


class TabulatedGrowth(FrozenModel):
    """Γ sampled on an (a, x) grid, bilinear in between and held constant past the last age"""

    kind: Literal["tabulated"] = "tabulated"
    ages: Tuple[float, ...]
    contents: Tuple[float, ...]
    values: Tuple[Tuple[float, ...], ...]
    path: Optional[str] = None

    _rate = PrivateAttr(default=None)
    _rate_dx = PrivateAttr(default=None)

    @model_validator(mode="after")
    def check_samples(self):
        _check_table(self.ages, self.contents, self.values)
        values = np.asarray(self.values)
        scale = max(1.0, float(np.max(np.abs(values))))
        if self.contents[0] != 0.0:
            raise ValueError("tabulated growth must start at content 0")
        if np.any(np.abs(values[:, 0]) > 1e-12 * scale):
            raise ValueError("tabulated growth must vanish at content 0")
        if np.any(values[:, -1] > 1e-12 * scale):
            raise ValueError("tabulated growth must be nonpositive at the content bound")
        return self

    def model_post_init(self, __context) -> None:
        ages = np.asarray(self.ages)
        contents = np.asarray(self.contents)
        values = np.asarray(self.values)
        self._rate = _table_interpolator(ages, contents, values)
        self._rate_dx = _table_interpolator(ages, contents, np.gradient(values, contents, axis=1))

    @property
    def x_max(self) -> float:
        return float(self.contents[-1])

    def _evaluate(self, table, a, x):
        a, x = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(x, dtype=float))
        a = np.clip(a, self.ages[0], self.ages[-1])
        x = np.clip(x, 0.0, self.x_max)
        points = np.stack([a.ravel(), x.ravel()], axis=-1)
        return table(points).reshape(a.shape)

    def rate(self, a, x):
        return self._evaluate(self._rate, a, x)

    def rate_dx(self, a, x):
        return self._evaluate(self._rate_dx, a, x)

    def zero_curve(self, a):
        a = np.atleast_1d(np.asarray(a, dtype=float))
        contents = np.asarray(self.contents)
        curve = np.empty_like(a)
        for k, age in enumerate(a):
            values = self.rate(age, contents[1:])
            nonpositive = np.nonzero(values <= 0)[0]
            curve[k] = contents[1 + nonpositive[0]] if len(nonpositive) else self.x_max
        return curve


GrowthField = Annotated[
    Union[LogisticGrowth, PowerGrowth, CyclinGrowth, TabulatedGrowth],
    Field(discriminator="kind"),
]


# ---------------------------------------------------------------------------
# Division rates B(a, x)
# ---------------------------------------------------------------------------

def _window(a, start: float, end: Optional[float]):
    a = np.asarray(a, dtype=float)
    inside = a >= start
    if end is not None:
        inside &= a <= end
    return inside


class PowerWindowRate(FrozenModel):
    """B = C2 x^γ on A* <= a <= A1; A1 = None means no upper age limit"""

    kind: Literal["power_window"] = "power_window"
    c2: float = Field(..., gt=0)
    gamma: float = Field(..., ge=1)
    a_star: float = Field(0.0, ge=0)
    a_one: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def check_window(self):
        if self.a_one is not None and self.a_one <= self.a_star:
            raise ValueError("a_one must exceed a_star")
        return self

    @property
    def breakpoints(self) -> Tuple[float, ...]:
        points = (self.a_star,) if self.a_star > 0 else ()
        return points + ((self.a_one,) if self.a_one is not None else ())

    @property
    def support_end(self) -> Optional[float]:
        return self.a_one

    @property
    def window(self) -> Tuple[float, Optional[float]]:
        return self.a_star, self.a_one

    content_dependent: ClassVar[bool] = True

    def rate(self, a, x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, None)
        return np.where(_window(a, self.a_star, self.a_one), self.c2 * x ** self.gamma, 0.0)


class HillAgeRate(FrozenModel):
    """B = k1 x^γ1 / (k2^γ1 + x^γ1) for a >= A*"""

    kind: Literal["hill_age"] = "hill_age"
    k1: float = Field(..., gt=0)
    k2: float = Field(..., gt=0)
    gamma1: float = Field(..., gt=0)
    a_star: float = Field(0.0, ge=0)

    @property
    def breakpoints(self) -> Tuple[float, ...]:
        return (self.a_star,) if self.a_star > 0 else ()

    @property
    def support_end(self) -> Optional[float]:
        return None

    @property
    def window(self) -> Tuple[float, Optional[float]]:
        return self.a_star, None

    content_dependent: ClassVar[bool] = True

    def rate(self, a, x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, None)
        hill = self.k1 * x ** self.gamma1 / (self.k2 ** self.gamma1 + x ** self.gamma1)
        return np.where(_window(a, self.a_star, None), hill, 0.0)


class ConstantWindowRate(FrozenModel):
    """B constant on the compact age window [0, A]"""

    kind: Literal["constant_window"] = "constant_window"
    level: float = Field(..., ge=0, description="Division rate B on the window")
    window_end: float = Field(..., gt=0, description="Age A closing the window")

    @property
    def breakpoints(self) -> Tuple[float, ...]:
        return (self.window_end,)

    @property
    def support_end(self) -> Optional[float]:
        return self.window_end

    @property
    def window(self) -> Tuple[float, Optional[float]]:
        return 0.0, self.window_end

    content_dependent: ClassVar[bool] = False

    def rate(self, a, x):
        inside = _window(a, 0.0, self.window_end)
        return np.where(inside, self.level, 0.0) + 0.0 * np.asarray(x, dtype=float)

    def age_profile(self, a):
        return np.where(_window(a, 0.0, self.window_end), self.level, 0.0)


class TabulatedRate(FrozenModel):
    """B sampled on an (a, x) grid, bilinear in between"""

    kind: Literal["tabulated"] = "tabulated"
    ages: Tuple[float, ...]
    contents: Tuple[float, ...]
    values: Tuple[Tuple[float, ...], ...]
    path: Optional[str] = None

    _rate = PrivateAttr(default=None)

    @model_validator(mode="after")
    def check_samples(self):
        _check_table(self.ages, self.contents, self.values)
        if np.any(np.asarray(self.values) < 0):
            raise ValueError("tabulated division rate must be nonnegative")
        return self

    def model_post_init(self, __context) -> None:
        self._rate = _table_interpolator(
            np.asarray(self.ages), np.asarray(self.contents), np.asarray(self.values)
        )

    @property
    def breakpoints(self) -> Tuple[float, ...]:
        return ()

    @property
    def support_end(self) -> Optional[float]:
        return None

    @property
    def window(self) -> Tuple[float, Optional[float]]:
        return float(self.ages[0]), None

    content_dependent: ClassVar[bool] = True

    def rate(self, a, x):
        a, x = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(x, dtype=float))
        a = np.clip(a, self.ages[0], self.ages[-1])
        x = np.clip(x, self.contents[0], self.contents[-1])
        points = np.stack([a.ravel(), x.ravel()], axis=-1)
        return np.maximum(self._rate(points).reshape(a.shape), 0.0)


DivisionRate = Annotated[
    Union[PowerWindowRate, HillAgeRate, ConstantWindowRate, TabulatedRate],
    Field(discriminator="kind"),
]


# ---------------------------------------------------------------------------
# Repartition kernels b(a, x, y) = B(a, y) ρ(x | y), written in the daughter fraction z = x/y
# ---------------------------------------------------------------------------

class UniformKernel(FrozenModel):
    kind: Literal["uniform"] = "uniform"

    is_dirac: ClassVar[bool] = False

    def density(self, z):
        z = np.asarray(z, dtype=float)
        return np.where((z >= 0) & (z <= 1), 1.0, 0.0)

    def integrated_cdf(self, z):
        z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
        return 0.5 * z ** 2


class TruncatedUniformKernel(FrozenModel):
    """Uniform on [ηy, (1 - η)y]"""

    kind: Literal["truncated_uniform"] = "truncated_uniform"
    eta: float = Field(..., gt=0, lt=0.5)

    is_dirac: ClassVar[bool] = False

    def density(self, z):
        z = np.asarray(z, dtype=float)
        inside = (z >= self.eta) & (z <= 1.0 - self.eta)
        return np.where(inside, 1.0 / (1.0 - 2.0 * self.eta), 0.0)

    def integrated_cdf(self, z):
        z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
        width = 1.0 - 2.0 * self.eta
        middle = (np.clip(z, self.eta, 1.0 - self.eta) - self.eta) ** 2 / (2.0 * width)
        return middle + np.maximum(z - (1.0 - self.eta), 0.0)


class EqualMitosisKernel(FrozenModel):
    """Both daughters receive exactly y/2"""

    kind: Literal["equal_mitosis"] = "equal_mitosis"

    is_dirac: ClassVar[bool] = True

    def density(self, z):
        return None

    def integrated_cdf(self, z):
        z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
        return np.maximum(z - 0.5, 0.0)


class TabulatedKernel(FrozenModel):
    """Daughter-fraction density sampled on [0, 1]; symmetrized and normalized on load"""

    kind: Literal["tabulated"] = "tabulated"
    fractions: Tuple[float, ...]
    values: Tuple[float, ...]
    path: Optional[str] = None

    is_dirac: ClassVar[bool] = False

    _z = PrivateAttr(default=None)
    _density = PrivateAttr(default=None)
    _integrated = PrivateAttr(default=None)

    @model_validator(mode="after")
    def check_samples(self):
        fractions = np.asarray(self.fractions, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if fractions.shape != values.shape or len(fractions) < 2:
            raise ValueError("kernel table needs matching fraction and value columns")
        if fractions[0] != 0.0 or fractions[-1] != 1.0 or np.any(np.diff(fractions) <= 0):
            raise ValueError("kernel fractions must increase from 0 to 1")
        if np.any(values < 0) or not np.any(values > 0):
            raise ValueError("kernel density must be nonnegative and not identically zero")
        return self

    def model_post_init(self, __context) -> None:
        z = np.linspace(0.0, 1.0, 4001)
        raw = np.interp(z, self.fractions, self.values)
        symmetric = 0.5 * (raw + raw[::-1])
        symmetric /= trapezoid(symmetric, z)
        cdf = cumulative_trapezoid(symmetric, z, initial=0.0)
        cdf /= cdf[-1]
        integrated = cumulative_trapezoid(cdf, z, initial=0.0)
        self._z = z
        self._density = symmetric
        self._integrated = integrated

    def density(self, z):
        return np.interp(np.asarray(z, dtype=float), self._z, self._density, left=0.0, right=0.0)

    def integrated_cdf(self, z):
        z = np.asarray(z, dtype=float)
        return np.interp(np.clip(z, 0.0, 1.0), self._z, self._integrated) + np.maximum(z - 1.0, 0.0)


RepartitionKernel = Annotated[
    Union[UniformKernel, TruncatedUniformKernel, EqualMitosisKernel, TabulatedKernel],
    Field(discriminator="kind"),
]


class ModelCoefficients(FrozenModel):
    growth: GrowthField
    division: DivisionRate
    kernel: RepartitionKernel

    @property
    def x_max(self) -> float:
        return self.growth.x_max


# ---------------------------------------------------------------------------
# Two-phase parameters
# ---------------------------------------------------------------------------

class ConstantTransition(FrozenModel):
    kind: Literal["constant"] = "constant"
    l: float = Field(..., ge=0, description="Transition rate L into quiescence")

    def rate(self, a, x):
        a, x = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(x, dtype=float))
        return np.full(a.shape, self.l)


class HillTransition(FrozenModel):
    """L = A3 A2^γ2 / (A2^γ2 + x^γ2) for a >= Ā"""

    kind: Literal["hill"] = "hill"
    a3: float = Field(..., ge=0)
    a2: float = Field(..., gt=0)
    gamma2: float = Field(..., gt=0)
    a_bar: float = Field(0.0, ge=0)

    def rate(self, a, x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, None)
        hill = self.a3 * self.a2 ** self.gamma2 / (self.a2 ** self.gamma2 + x ** self.gamma2)
        return np.where(np.asarray(a, dtype=float) >= self.a_bar, hill, 0.0)


TransitionRate = Annotated[Union[ConstantTransition, HillTransition], Field(discriminator="kind")]


class RecruitmentHill(FrozenModel):
    """G(N) = (α1 θ^n + α2 N^n) / (θ^n + N^n)"""

    alpha1: float = Field(..., ge=0)
    alpha2: float = Field(0.0, ge=0)
    theta: float = Field(..., gt=0)
    n: float = Field(..., gt=0)

    @model_validator(mode="after")
    def check_order(self):
        if self.alpha1 <= self.alpha2:
            raise ValueError("recruitment requires alpha1 > alpha2")
        return self


class WeightMode(str, Enum):
    UNIT = "unit"
    ADJOINT = "adjoint"


class TwoPhaseParams(FrozenModel):
    d1: float = Field(..., ge=0, description="Death rate of proliferating cells")
    d2: float = Field(0.0, ge=0, description="Death rate of quiescent cells")
    transition: TransitionRate
    recruitment: RecruitmentHill
    weights: WeightMode = WeightMode.UNIT
    phi_weight: float = Field(1.0, ge=0)
    psi_weight: float = Field(1.0, ge=0)
