"""
Параллельные серии решений по θ или ε.

Решения выполняются в пуле потоков (ядро PSOR отпускает GIL),
результаты возвращаются в порядке входных значений.
"""
import asyncio
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from src.core.config import settings
from src.core.exceptions import InvalidProblemException
from src.models.markov import TwoTimeScaleSpec
from src.models.problem import ProblemSpec
from src.models.solution import Grid, SolutionField, SolverOptions, StoppingRule
from src.services.free_boundary import classify_regions
from src.services.hjb_solver import solve
from src.services.markov_chain import assemble_generator

logger = logging.getLogger(__name__)

SWEEP_PARAMS = ("theta", "epsilon")


@dataclass(frozen=True)
class SweepResult:
    """Решение для одного значения параметра серии"""
    value: float
    spec: ProblemSpec
    solution: SolutionField
    rule: StoppingRule


def spec_for_value(spec: ProblemSpec, param: str, value: float,
                   tts: Optional[TwoTimeScaleSpec] = None) -> ProblemSpec:
    """ProblemSpec с подставленным значением θ или ε"""
    if param == "theta":
        return spec.with_theta(value)
    if param == "epsilon":
        if tts is None:
            raise InvalidProblemException("epsilon sweep requires a two-time-scale section")
        chain = assemble_generator(tts.with_epsilon(float(value)))
        return spec.model_copy(update={"chain": chain})
    raise InvalidProblemException(f"unknown sweep parameter {param!r}, expected one of {SWEEP_PARAMS}")


async def solve_many(jobs: Sequence[Tuple[ProblemSpec, Grid, SolverOptions]],
                     threads: Optional[int] = None) -> List[SolutionField]:
    """Решить независимые задачи параллельно, порядок результатов как у jobs"""
    loop = asyncio.get_running_loop()
    workers = min(threads or settings.threads, max(len(jobs), 1))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        tasks = [loop.run_in_executor(pool, solve, spec, grid, opts) for spec, grid, opts in jobs]
        return list(await asyncio.gather(*tasks))


async def solve_sweep(
        spec: ProblemSpec,
        grid: Grid,
        opts: SolverOptions,
        param: str,
        values: Sequence[float],
        tts: Optional[TwoTimeScaleSpec] = None,
        tol_region: Optional[float] = None,
        threads: Optional[int] = None,
) -> List[SweepResult]:
    """
    Серия решений по параметру param ∈ {theta, epsilon}.

    Первая ошибка любого решения прерывает серию.
    """
    if not values:
        raise InvalidProblemException("sweep requires at least one value")
    specs = [spec_for_value(spec, param, float(v), tts) for v in values]

    logger.info(f"Starting {param} sweep over {len(values)} values")
    start = time.perf_counter()
    solutions = await solve_many([(s, grid, opts) for s in specs], threads)
    logger.info(f"Sweep finished in {time.perf_counter() - start:.2f}s")

    return [
        SweepResult(value=float(v), spec=s, solution=sol, rule=classify_regions(sol, tol_region))
        for v, s, sol in zip(values, specs, solutions)
    ]
