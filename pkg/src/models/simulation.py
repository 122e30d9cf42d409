import math
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.core.config import settings

QPolicy = Literal["worst_case_from_solution", "zero", "constant"]

DISCOUNT_CUTOFF = 1e-8


class SimConfig(BaseModel):
    """Параметры Монте-Карло проверки; i0 - режим в нумерации с 0"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    x0: float
    i0: int = Field(default=0, ge=0)
    dt: float = Field(default_factory=lambda: settings.sim_dt, gt=0)
    horizon: Optional[float] = Field(default=None, gt=0)
    n_paths: int = Field(default_factory=lambda: settings.sim_n_paths, ge=1)
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    q_policy: QPolicy = "worst_case_from_solution"
    q_constant: float = 0.0
    batch_size: int = Field(default_factory=lambda: settings.sim_batch_size, ge=1)

    def resolved_horizon(self, r: float) -> float:
        """T, при котором e^{−rT} = 1e−8, если горизонт не задан явно"""
        if self.horizon is not None:
            return self.horizon
        return math.log(1.0 / DISCOUNT_CUTOFF) / r

    @property
    def policy_label(self) -> str:
        if self.q_policy == "constant":
            return f"constant({self.q_constant:g})"
        return self.q_policy


@dataclass(frozen=True)
class SimulationReport:
    """Оценка J(x0, i0; τ, q) по методу Монте-Карло"""
    x0: float
    i0: int
    policy: str
    estimate: float
    std_error: float
    n_paths: int
    fraction_stopped_before_T: float
    mean_stop_time: float
    domain_escapes: int = 0


@dataclass(frozen=True)
class RegimePath:
    """Кусочно-постоянная траектория цепи: states[k] на [jump_times[k], jump_times[k+1])"""
    jump_times: np.ndarray
    states: np.ndarray
    horizon: float

    def state_at(self, t: float) -> int:
        k = int(np.searchsorted(self.jump_times, t, side="right")) - 1
        return int(self.states[max(k, 0)])

    def occupation(self, state: int) -> float:
        """Доля времени [0, T] в состоянии state"""
        ends = np.append(self.jump_times[1:], self.horizon)
        durations = ends - self.jump_times
        return float(durations[self.states == state].sum() / self.horizon)

    def holding_times(self, state: int) -> np.ndarray:
        """Завершённые времена пребывания в state (последний отрезок не учитывается)"""
        durations = np.diff(self.jump_times)
        return durations[self.states[:-1] == state]
