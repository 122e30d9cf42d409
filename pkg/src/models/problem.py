from typing import Annotated, List, Literal, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.core.exceptions import OutOfDomain
from src.models.markov import Generator

HULL_TOL = 1e-12


def _interp_rows(table: List[List[float]], x_min: float, x_max: float,
                 x: np.ndarray, i: int) -> np.ndarray:
    """Линейная интерполяция строки i табличных данных на равномерной сетке"""
    x = np.asarray(x, dtype=float)
    if np.any(x < x_min - HULL_TOL) or np.any(x > x_max + HULL_TOL):
        bad = x[(x < x_min - HULL_TOL) | (x > x_max + HULL_TOL)]
        raise OutOfDomain(float(np.ravel(bad)[0]), x_min, x_max)
    row = np.asarray(table[i], dtype=float)
    nodes = np.linspace(x_min, x_max, row.shape[0])
    return np.interp(x, nodes, row)


def _check_table(values: List[List[float]], name: str) -> List[List[float]]:
    if not values:
        raise ValueError(f"{name} must contain at least one regime")
    lengths = {len(row) for row in values}
    if len(lengths) != 1 or lengths.pop() < 2:
        raise ValueError(f"{name} rows must share one length of at least 2 nodes")
    return values


# --- Коэффициенты диффузии b(x, i), σ(x, i) ---

class GbmLinearCoefficients(BaseModel):
    """b(x,i) = b_i·x, σ(x,i) = σ_i·x (переключающееся геометрическое броуновское движение)"""
    model_config = ConfigDict(frozen=True)

    kind: Literal["gbm_linear"] = "gbm_linear"
    b: List[float]
    sigma: List[float]

    @property
    def m(self) -> int:
        return len(self.b)

    def drift(self, x, i: int) -> np.ndarray:
        return self.b[i] * np.asarray(x, dtype=float)

    def volatility(self, x, i: int) -> np.ndarray:
        return self.sigma[i] * np.asarray(x, dtype=float)


class ConstantCoefficients(BaseModel):
    """b(x,i) = b_i, σ(x,i) = σ_i"""
    model_config = ConfigDict(frozen=True)

    kind: Literal["constant"] = "constant"
    b: List[float]
    sigma: List[float]

    @property
    def m(self) -> int:
        return len(self.b)

    def drift(self, x, i: int) -> np.ndarray:
        return np.full_like(np.asarray(x, dtype=float), self.b[i])

    def volatility(self, x, i: int) -> np.ndarray:
        return np.full_like(np.asarray(x, dtype=float), self.sigma[i])


class TabulatedCoefficients(BaseModel):
    """Значения b и σ в узлах равномерной сетки [x_min, x_max], линейная интерполяция"""
    model_config = ConfigDict(frozen=True)

    kind: Literal["tabulated"] = "tabulated"
    x_min: float
    x_max: float
    b: List[List[float]]
    sigma: List[List[float]]

    @field_validator("b", "sigma")
    @classmethod
    def _rectangular(cls, v, info):
        return _check_table(v, info.field_name)

    @model_validator(mode="after")
    def _same_shape(self):
        if self.x_min >= self.x_max:
            raise ValueError("x_min must be below x_max")
        if len(self.b) != len(self.sigma) or len(self.b[0]) != len(self.sigma[0]):
            raise ValueError("b and sigma tables must have the same shape")
        return self

    @property
    def m(self) -> int:
        return len(self.b)

    @property
    def n_nodes(self) -> int:
        return len(self.b[0])

    def drift(self, x, i: int) -> np.ndarray:
        return _interp_rows(self.b, self.x_min, self.x_max, x, i)

    def volatility(self, x, i: int) -> np.ndarray:
        return _interp_rows(self.sigma, self.x_min, self.x_max, x, i)


CoefficientModel = Annotated[
    Union[GbmLinearCoefficients, ConstantCoefficients, TabulatedCoefficients],
    Field(discriminator="kind")
]


# --- Текущее вознаграждение f(x, i) ---

class ZeroFunction(BaseModel):
    """f ≡ 0"""
    model_config = ConfigDict(frozen=True)

    kind: Literal["zero"] = "zero"

    def __call__(self, x, i: int) -> np.ndarray:
        return np.zeros_like(np.asarray(x, dtype=float))


class LinearFunction(BaseModel):
    """f(x,i) = c_i·x"""
    model_config = ConfigDict(frozen=True)

    kind: Literal["gbm_linear"] = "gbm_linear"
    coef: List[float]

    def __call__(self, x, i: int) -> np.ndarray:
        return self.coef[i] * np.asarray(x, dtype=float)


class ConstantFunction(BaseModel):
    """f(x,i) = c_i"""
    model_config = ConfigDict(frozen=True)

    kind: Literal["constant"] = "constant"
    value: List[float]

    def __call__(self, x, i: int) -> np.ndarray:
        return np.full_like(np.asarray(x, dtype=float), self.value[i])


class TabulatedFunction(BaseModel):
    """Табличная функция на равномерной сетке"""
    model_config = ConfigDict(frozen=True)

    kind: Literal["tabulated"] = "tabulated"
    x_min: float
    x_max: float
    values: List[List[float]]

    @field_validator("values")
    @classmethod
    def _rectangular(cls, v):
        return _check_table(v, "values")

    @property
    def n_nodes(self) -> int:
        return len(self.values[0])

    def __call__(self, x, i: int) -> np.ndarray:
        return _interp_rows(self.values, self.x_min, self.x_max, x, i)


RunningReward = Annotated[
    Union[ZeroFunction, LinearFunction, ConstantFunction, TabulatedFunction],
    Field(discriminator="kind")
]


# --- Препятствие (награда при остановке) g(x, i) ---

class CallObstacle(BaseModel):
    """g(x) = x − K, K - комиссия за продажу"""
    model_config = ConfigDict(frozen=True)

    kind: Literal["call"] = "call"
    strike: float = Field(..., gt=0)

    @property
    def regime_independent(self) -> bool:
        return True

    def __call__(self, x, i: int) -> np.ndarray:
        return np.asarray(x, dtype=float) - self.strike


class ConstantObstacle(BaseModel):
    """g(x,i) = c_i (одно число - g не зависит от режима)"""
    model_config = ConfigDict(frozen=True)

    kind: Literal["constant"] = "constant"
    value: Union[float, List[float]]

    @property
    def regime_independent(self) -> bool:
        return not isinstance(self.value, list) or len(set(self.value)) <= 1

    def __call__(self, x, i: int) -> np.ndarray:
        c = self.value[i] if isinstance(self.value, list) else self.value
        return np.full_like(np.asarray(x, dtype=float), c)


class LinearObstacle(BaseModel):
    """g(x,i) = slope_i·x + intercept_i"""
    model_config = ConfigDict(frozen=True)

    kind: Literal["linear"] = "linear"
    slope: List[float]
    intercept: List[float]

    @property
    def regime_independent(self) -> bool:
        return len(set(self.slope)) <= 1 and len(set(self.intercept)) <= 1

    def __call__(self, x, i: int) -> np.ndarray:
        return self.slope[i] * np.asarray(x, dtype=float) + self.intercept[i]


class TabulatedObstacle(TabulatedFunction):
    """Табличное препятствие"""

    @property
    def regime_independent(self) -> bool:
        first = self.values[0]
        return all(row == first for row in self.values)

    def __call__(self, x, i: int) -> np.ndarray:
        row = 0 if len(self.values) == 1 else i
        return _interp_rows(self.values, self.x_min, self.x_max, x, row)


TerminalReward = Annotated[
    Union[CallObstacle, ConstantObstacle, LinearObstacle, TabulatedObstacle],
    Field(discriminator="kind")
]


class RewardModel(BaseModel):
    """Награды: текущая f и терминальная g"""
    model_config = ConfigDict(frozen=True)

    running: RunningReward = Field(default_factory=ZeroFunction)
    terminal: TerminalReward


class ProblemSpec(BaseModel):
    """Полные данные задачи робастной оптимальной остановки"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    m: int = Field(..., ge=1)
    chain: Generator
    coeffs: CoefficientModel
    rewards: RewardModel
    r: float = Field(..., gt=0)
    theta: float = Field(..., ge=0)
    q_max: float = Field(default=1e3, gt=0)
    domain: Tuple[float, float]

    @model_validator(mode="after")
    def _cross_check(self):
        x_min, x_max = self.domain
        if not x_min < x_max:
            raise ValueError(f"domain must satisfy x_min < x_max, got {self.domain}")
        if self.chain.m != self.m:
            raise ValueError(f"chain has {self.chain.m} states, problem declares m={self.m}")
        if self.coeffs.m != self.m:
            raise ValueError(f"coefficients describe {self.coeffs.m} regimes, expected {self.m}")
        if len(self.coeffs.sigma) != self.m:
            raise ValueError("b and sigma must have one entry per regime")
        for name, per_regime in _per_regime_lengths(self.rewards):
            if per_regime is not None and per_regime != self.m:
                raise ValueError(f"{name} has {per_regime} regimes, expected {self.m}")
        return self

    @property
    def x_min(self) -> float:
        return self.domain[0]

    @property
    def x_max(self) -> float:
        return self.domain[1]

    def with_theta(self, theta: float) -> "ProblemSpec":
        return self.model_copy(update={"theta": float(theta)})


def _per_regime_lengths(rewards: RewardModel):
    running = rewards.running
    if isinstance(running, LinearFunction):
        yield "rewards.running.coef", len(running.coef)
    elif isinstance(running, ConstantFunction):
        yield "rewards.running.value", len(running.value)
    elif isinstance(running, TabulatedFunction):
        yield "rewards.running.values", len(running.values)

    terminal = rewards.terminal
    if isinstance(terminal, ConstantObstacle) and isinstance(terminal.value, list):
        yield "rewards.terminal.value", len(terminal.value)
    elif isinstance(terminal, LinearObstacle):
        yield "rewards.terminal.slope", len(terminal.slope)
        yield "rewards.terminal.intercept", len(terminal.intercept)
    elif isinstance(terminal, TabulatedObstacle):
        # Одна строка - общее для всех режимов препятствие
        if len(terminal.values) != 1:
            yield "rewards.terminal.values", len(terminal.values)
