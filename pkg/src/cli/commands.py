"""
Обработчики команд robuststop: solve, sweep, aggregate, simulate, check.

Коды возврата: 0 - успех, 1 - ошибка входных данных или конфигурации,
2 - численная несходимость или проваленная проверка.
"""
import asyncio
import functools
import logging
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from src.core.exceptions import (
    AggregationException, ConfigurationException, GeneratorValidationException, GridException,
    InvalidProblemException, MaxIterations, ReducibleChainException, RobustStopException,
    SimulationException
)
from src.models.problem import CallObstacle, GbmLinearCoefficients, ZeroFunction
from src.models.run_config import RunConfig, load_run_config
from src.services.free_boundary import classify_regions, threshold_report
from src.services.hjb_solver import residual_report, solve
from src.services.problem_model import perpetual_call_value
from src.services.sweep_runner import SWEEP_PARAMS, solve_sweep
from src.services.two_time_scale import aggregation_study
from src.services.verification import simulate_reward_async
from src.storage.csv_results import (
    read_solution_csv, write_error_csv, write_simulation_csv, write_solution_csv,
    write_sweep_summary_csv, write_threshold_csv
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERICAL = 2

OBSTACLE_TOL = 1e-9
ANALYTIC_FACTOR = 5.0

INPUT_ERRORS = (
    ConfigurationException, GeneratorValidationException, ReducibleChainException,
    InvalidProblemException, GridException, AggregationException, SimulationException,
    ValidationError, OSError,
)


def exit_codes(handler: Callable[..., int]) -> Callable[..., int]:
    """Перевести исключения обработчика в коды возврата"""

    @functools.wraps(handler)
    def wrapper(*args, **kwargs) -> int:
        try:
            return handler(*args, **kwargs)
        except MaxIterations as e:
            logger.error(f"{handler.__name__}: {e}")
            return EXIT_NUMERICAL
        except INPUT_ERRORS as e:
            logger.error(f"{handler.__name__}: {e}")
            return EXIT_INPUT
        except RobustStopException as e:
            logger.error(f"{handler.__name__}: {e}")
            return EXIT_INPUT
        except Exception as e:
            logger.exception(f"Unexpected error in {handler.__name__}: {e}")
            return EXIT_INPUT

    return wrapper


def thresholds_path(out_path: Path) -> Path:
    return out_path.with_name(f"{out_path.stem}_thresholds.csv")


def _format_thresholds(levels: Sequence[Optional[float]]) -> str:
    return "(" + ", ".join("none" if t is None else f"{t:.2f}" for t in levels) + ")"


@exit_codes
def cmd_solve(config_path: str, out_path: str) -> int:
    """Решить задачу из конфигурации, записать решение и отчёт о порогах"""
    config = load_run_config(config_path)
    sol = solve(config.spec, config.grid, config.solver)
    rule = classify_regions(sol, config.tol_region)

    out = Path(out_path)
    write_solution_csv(out, sol)
    write_threshold_csv(thresholds_path(out), threshold_report(sol, rule))
    print(f"thresholds {_format_thresholds(rule.thresholds)}; "
          f"residual {sol.max_complementarity_residual:.3e}; {sol.iterations} outer iterations")
    return EXIT_OK


@exit_codes
def cmd_sweep(config_path: str, param: str, values: Sequence[float], out_dir: str) -> int:
    """Серия решений по θ или ε; CSV на каждое значение и сводка"""
    if param not in SWEEP_PARAMS:
        raise ConfigurationException("--param", f"expected one of {SWEEP_PARAMS}, got {param!r}")
    config = load_run_config(config_path)
    if param == "epsilon" and config.tts is None:
        raise ConfigurationException("tts", "epsilon sweep requires a tts section")

    results = asyncio.run(solve_sweep(
        config.spec, config.grid, config.solver, param, values,
        tts=config.tts, tol_region=config.tol_region,
    ))

    out = Path(out_dir)
    for result in results:
        path = out / f"{param}_{result.value:g}.csv"
        write_solution_csv(path, result.solution)
        write_threshold_csv(thresholds_path(path), threshold_report(result.solution, result.rule))
        print(f"{param}={result.value:g}: thresholds {_format_thresholds(result.rule.thresholds)}")

    write_sweep_summary_csv(out / "summary.csv", [r.value for r in results],
                            [r.rule.thresholds for r in results])
    return EXIT_OK


@exit_codes
def cmd_aggregate(config_path: str, out_path: str, write_solutions: bool = False) -> int:
    """Нормы ошибок N_k^ε исходной задачи относительно предельной"""
    config = load_run_config(config_path)
    if config.tts is None:
        raise ConfigurationException("tts", "aggregation requires a tts section")

    report = asyncio.run(aggregation_study(
        config.spec, config.tts, config.epsilons, config.grid, config.solver
    ))

    out = Path(out_path)
    write_error_csv(out, report.rows)
    if write_solutions:
        write_solution_csv(out.with_name(f"{out.stem}_limit.csv"), report.limit_solution)
        for row in report.rows:
            write_solution_csv(out.with_name(f"{out.stem}_eps_{row.epsilon:g}.csv"), row.solution)

    for row in report.rows:
        print(f"epsilon={row.epsilon:g}: " + ", ".join(
            f"N_{k + 1}={n:.4f}" for k, n in enumerate(row.norms.values)))
    return EXIT_OK


@exit_codes
def cmd_simulate(config_path: str, solution_csv: str, out_path: str) -> int:
    """Монте-Карло оценка вознаграждения правила из сохранённого решения"""
    config = load_run_config(config_path)
    if config.sim is None:
        raise ConfigurationException("sim", "simulation requires a sim section")

    sol = read_solution_csv(solution_csv, config.grid)
    rule = classify_regions(sol, config.tol_region)
    report = asyncio.run(simulate_reward_async(config.spec, sol, rule, config.sim))
    write_simulation_csv(out_path, [report])

    pde_value = float(np.interp(config.sim.x0, config.grid.nodes, sol.values[:, config.sim.i0]))
    print(f"estimate {report.estimate:.6f} ± {report.std_error:.6f} "
          f"(PDE value {pde_value:.6f}, {report.n_paths} paths)")
    return EXIT_OK


def _analytic_error(config: RunConfig, values: np.ndarray) -> float:
    """Sup-погрешность относительно бессрочного колл-опциона (m=1, θ=0)"""
    spec = config.spec
    if not (spec.m == 1 and spec.theta == 0.0 and isinstance(spec.coeffs, GbmLinearCoefficients)
            and isinstance(spec.rewards.terminal, CallObstacle)
            and isinstance(spec.rewards.running, ZeroFunction)):
        raise ConfigurationException(
            "--analytic", "closed form requires m=1, theta=0, gbm_linear coefficients, "
                          "zero running reward and a call obstacle"
        )
    exact = perpetual_call_value(spec.coeffs.b[0], spec.coeffs.sigma[0], spec.r,
                                 spec.rewards.terminal.strike, config.grid.nodes)
    return float(np.max(np.abs(values[:, 0] - exact)))


@exit_codes
def cmd_check(config_path: str, solution_csv: str, analytic: bool = False) -> int:
    """
    Проверить сохранённое решение без повторного решения:
    доминирование препятствия, невязка дополнительности, гладкое склеивание.
    """
    config = load_run_config(config_path)
    sol = read_solution_csv(solution_csv, config.grid)
    g = np.column_stack([
        config.spec.rewards.terminal(config.grid.nodes, i) for i in range(config.spec.m)
    ])

    below: List[str] = []
    x = config.grid.nodes
    for n, i in zip(*np.nonzero(sol.values < g - OBSTACLE_TOL)):
        below.append(f"  node {n} (x={x[n]:.6g}), regime {i + 1}: v - g = {sol.values[n, i] - g[n, i]:.3e}")
    if below:
        print(f"v < g at {len(below)} node(s):")
        print("\n".join(below[:20]))
        return EXIT_NUMERICAL

    report = residual_report(config.spec, sol)
    rule = classify_regions(sol, config.tol_region)
    limit = 10.0 * config.solver.tol_outer

    print(f"max discrete complementarity residual {report.discrete_max:.3e} "
          f"(limit {limit:.1e}, worst node {report.worst_node[0]}, regime {report.worst_node[1] + 1})")
    print(f"pointwise sup-form residual {report.pointwise_max:.3e}")
    for row in threshold_report(sol, rule):
        gap = "n/a" if row.smooth_fit_gap is None else f"{row.smooth_fit_gap:.4e}"
        level = "none" if row.threshold is None else f"{row.threshold:.4f}"
        print(f"regime {row.regime}: threshold {level}, smooth-fit gap {gap}")

    status = EXIT_OK if report.discrete_max <= limit else EXIT_NUMERICAL

    if analytic:
        error = _analytic_error(config, sol.values)
        bound = ANALYTIC_FACTOR * config.grid.h
        print(f"closed-form sup error {error:.3e} (bound {bound:.1e})")
        if error > bound:
            status = EXIT_NUMERICAL
    return status
