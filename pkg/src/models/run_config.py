"""
JSON-конфигурация запуска (RunConfig) и её перекрёстная проверка.

Ошибки сообщаются с JSON-путём поля: problem.chain.rates[0], grid.h, ...
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.core.config import settings
from src.core.exceptions import (
    ConfigurationException, GeneratorValidationException, NegativeOffDiagonal, NonCommensurate,
    ReducibleChainException, RobustStopException, RowSumNonzero
)
from src.models.markov import Generator, TwoTimeScaleSpec
from src.models.problem import (
    CoefficientModel, ProblemSpec, RewardModel, TabulatedCoefficients, TabulatedFunction
)
from src.models.simulation import QPolicy, SimConfig
from src.models.solution import Grid, SolverOptions
from src.services.hjb_solver import build_grid
from src.services.markov_chain import assemble_generator, make_two_time_scale_spec, validate_generator

logger = logging.getLogger(__name__)

CHAIN_TOL = 1e-12


class ChainSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rates: List[List[float]]


class ProblemSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    m: Optional[int] = Field(default=None, ge=1)
    chain: Optional[ChainSection] = None
    coeffs: CoefficientModel
    rewards: RewardModel
    r: float = Field(..., gt=0)
    theta: float = Field(..., ge=0)
    q_max: float = Field(default_factory=lambda: settings.default_q_max, gt=0)


class GridSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    x_min: float
    x_max: float
    h: float = Field(..., gt=0)


class TwoTimeScaleSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    fast_blocks: List[List[List[float]]] = Field(..., min_length=1)
    slow: List[List[float]]
    epsilon: List[float] = Field(..., min_length=1)


class SimSection(BaseModel):
    """Параметры моделирования; i0 в нумерации с 1"""
    model_config = ConfigDict(extra="forbid")

    x0: float
    i0: int = Field(default=1, ge=1)
    dt: float = Field(default_factory=lambda: settings.sim_dt, gt=0)
    horizon: Optional[float] = Field(default=None, gt=0)
    n_paths: int = Field(default_factory=lambda: settings.sim_n_paths, ge=1)
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    q_policy: QPolicy = "worst_case_from_solution"
    q_constant: float = 0.0


class RunConfigFile(BaseModel):
    """Корень JSON-документа"""
    model_config = ConfigDict(extra="forbid")

    problem: ProblemSection
    grid: GridSection
    solver: SolverOptions = Field(default_factory=SolverOptions)
    tts: Optional[TwoTimeScaleSection] = None
    sim: Optional[SimSection] = None
    tol_region: float = Field(default_factory=lambda: settings.default_tol_region, gt=0)


@dataclass(frozen=True)
class RunConfig:
    """Проверенная конфигурация с построенными объектами предметной области"""
    spec: ProblemSpec
    grid: Grid
    solver: SolverOptions
    tol_region: float
    tts: Optional[TwoTimeScaleSpec] = None
    epsilons: Tuple[float, ...] = ()
    sim: Optional[SimConfig] = None
    source: Optional[str] = None


def format_location(loc: Tuple[Union[str, int], ...]) -> str:
    """('problem', 'chain', 'rates', 0) -> 'problem.chain.rates[0]'"""
    path = ""
    for part in loc:
        if isinstance(part, int):
            path += f"[{part}]"
        else:
            path += f".{part}" if path else str(part)
    return path


def _first_error(exc: ValidationError) -> ConfigurationException:
    error = exc.errors()[0]
    loc = tuple(p for p in error["loc"] if p not in ("gbm_linear", "constant", "tabulated", "zero", "call", "linear"))
    return ConfigurationException(format_location(loc), error["msg"])


def _generator(rates, path: str) -> Generator:
    for k, row in enumerate(rates):
        if len(row) != len(rates):
            raise ConfigurationException(f"{path}[{k}]", f"row has {len(row)} entries, expected {len(rates)}")
    try:
        return validate_generator(rates)
    except NegativeOffDiagonal as e:
        raise ConfigurationException(f"{path}[{e.i}][{e.j}]", str(e)) from e
    except RowSumNonzero as e:
        raise ConfigurationException(f"{path}[{e.i}]", str(e)) from e
    except GeneratorValidationException as e:
        raise ConfigurationException(path, str(e)) from e


def _check_tabulated(problem: ProblemSection, grid: Grid):
    """Табличные данные должны лежать на сетке решателя"""
    tables = [("problem.coeffs", problem.coeffs), ("problem.rewards.running", problem.rewards.running),
              ("problem.rewards.terminal", problem.rewards.terminal)]
    for path, table in tables:
        if not isinstance(table, (TabulatedCoefficients, TabulatedFunction)):
            continue
        if table.n_nodes != grid.n_nodes or abs(table.x_min - grid.x_min) > 1e-9 \
                or abs(table.x_max - grid.x_max) > 1e-9:
            raise ConfigurationException(
                path, f"tabulated data ({table.n_nodes} nodes on [{table.x_min}, {table.x_max}]) "
                      f"must match the grid ({grid.n_nodes} nodes on [{grid.x_min}, {grid.x_max}])"
            )


def build_run_config(raw: RunConfigFile, source: Optional[str] = None) -> RunConfig:
    """Перекрёстная проверка разделов и сборка объектов"""
    problem = raw.problem

    try:
        grid = build_grid(raw.grid.x_min, raw.grid.x_max, raw.grid.h)
    except NonCommensurate as e:
        raise ConfigurationException("grid.h", str(e)) from e
    except RobustStopException as e:
        raise ConfigurationException("grid", str(e)) from e
    _check_tabulated(problem, grid)

    tts, epsilons = None, ()
    if raw.tts is not None:
        blocks = [_generator(b, f"tts.fast_blocks[{k}]") for k, b in enumerate(raw.tts.fast_blocks)]
        slow = _generator(raw.tts.slow, "tts.slow")
        if any(eps <= 0 for eps in raw.tts.epsilon):
            raise ConfigurationException("tts.epsilon", "all epsilon values must be positive")
        try:
            tts = make_two_time_scale_spec(blocks, slow, raw.tts.epsilon[0])
        except ReducibleChainException as e:
            raise ConfigurationException("tts.fast_blocks", str(e)) from e
        except RobustStopException as e:
            raise ConfigurationException("tts", str(e)) from e
        epsilons = tuple(float(e) for e in raw.tts.epsilon)
        if not problem.rewards.terminal.regime_independent:
            raise ConfigurationException(
                "problem.rewards.terminal", "aggregation requires a regime-independent obstacle g(x)"
            )

    if problem.chain is not None:
        chain = _generator(problem.chain.rates, "problem.chain.rates")
        if tts is not None:
            expected = assemble_generator(tts)
            if chain.m != expected.m or not np.allclose(chain.rates, expected.rates,
                                                       rtol=CHAIN_TOL, atol=CHAIN_TOL):
                raise ConfigurationException(
                    "problem.chain.rates", f"differs from Q^ε assembled at ε={tts.epsilon}"
                )
    elif tts is not None:
        chain = assemble_generator(tts)
    else:
        raise ConfigurationException("problem.chain", "a generator is required without a tts section")

    m = problem.m if problem.m is not None else chain.m
    if chain.m != m:
        raise ConfigurationException("problem.m", f"chain has {chain.m} states, m={m}")

    try:
        spec = ProblemSpec(
            m=m, chain=chain, coeffs=problem.coeffs, rewards=problem.rewards,
            r=problem.r, theta=problem.theta, q_max=problem.q_max,
            domain=(grid.x_min, grid.x_max),
        )
    except ValidationError as e:
        raise ConfigurationException("problem", e.errors()[0]["msg"]) from e

    sim = None
    if raw.sim is not None:
        if raw.sim.i0 > m:
            raise ConfigurationException("sim.i0", f"regime {raw.sim.i0} outside 1..{m}")
        if not grid.x_min <= raw.sim.x0 <= grid.x_max:
            raise ConfigurationException("sim.x0", f"x0={raw.sim.x0} outside [{grid.x_min}, {grid.x_max}]")
        fields = raw.sim.model_dump()
        fields["i0"] = raw.sim.i0 - 1
        sim = SimConfig(**fields)

    return RunConfig(spec=spec, grid=grid, solver=raw.solver, tol_region=raw.tol_region,
                     tts=tts, epsilons=epsilons, sim=sim, source=source)


def parse_run_config(document: dict, source: Optional[str] = None) -> RunConfig:
    try:
        raw = RunConfigFile.model_validate(document)
    except ValidationError as e:
        raise _first_error(e) from e
    return build_run_config(raw, source)


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """
    Прочитать и проверить JSON-конфигурацию

    Raises:
        ConfigurationException: файл не читается или не проходит проверку
    """
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigurationException("", f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationException("", f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from e
    logger.debug(f"Loaded config {path}")
    return parse_run_config(document, str(path))
