from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.core.config import settings


@dataclass(frozen=True)
class Grid:
    """Равномерная сетка x_n = x_min + n·h, n = 0..n_nodes−1"""
    x_min: float
    x_max: float
    h: float
    n_nodes: int

    @property
    def nodes(self) -> np.ndarray:
        return self.x_min + self.h * np.arange(self.n_nodes, dtype=float)

    def same_as(self, other: "Grid", tol: float = 1e-9) -> bool:
        return (
            self.n_nodes == other.n_nodes
            and abs(self.x_min - other.x_min) <= tol
            and abs(self.h - other.h) <= tol * max(1.0, abs(self.h))
        )


class SolverOptions(BaseModel):
    """Параметры решателя: внешняя итерация по политике и внутренний PSOR"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    tol_outer: float = Field(default_factory=lambda: settings.tol_outer, gt=0)
    tol_inner: float = Field(default_factory=lambda: settings.tol_inner, gt=0)
    max_outer: int = Field(default_factory=lambda: settings.max_outer, gt=0)
    max_inner: int = Field(default_factory=lambda: settings.max_inner, gt=0)
    omega: float = Field(default_factory=lambda: settings.omega, gt=0, lt=2)


@dataclass(frozen=True)
class SolutionField:
    """
    Дискретная функция цены v[n][i] и служебные данные решения.

    q_field - управления, при которых решалась последняя линейная задача
    с препятствием; diagnostics - предупреждения (BoundaryNotStopping).
    """
    grid: Grid
    values: np.ndarray
    q_field: np.ndarray
    obstacle: np.ndarray
    iterations: int
    max_complementarity_residual: float
    inner_sweeps: int = 0
    diagnostics: Tuple[str, ...] = ()

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def regime_values(self, i: int) -> np.ndarray:
        return self.values[:, i]


@dataclass(frozen=True)
class StoppingRule:
    """
    Области продолжения/остановки по режимам.

    masks[n, i] = True - продолжение (v − g > tol_region);
    thresholds[i] - уровень x_i либо None.
    """
    tol_region: float
    masks: np.ndarray
    thresholds: Tuple[Optional[float], ...]
    grid: Grid

    @property
    def m(self) -> int:
        return self.masks.shape[1]

    def continuation(self, n: int, i: int) -> bool:
        return bool(self.masks[n, i])


@dataclass(frozen=True)
class ResidualReport:
    """Отчёт о невязке дополнительности"""
    discrete_max: float
    discrete_profile: np.ndarray
    pointwise_max: float
    pointwise_profile: np.ndarray
    worst_node: Tuple[int, int] = (0, 0)
    excluded_nodes: List[int] = field(default_factory=list)
