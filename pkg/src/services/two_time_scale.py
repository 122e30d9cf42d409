import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.core.exceptions import (
    AggregationException, ChainMismatch, GridMismatch, MixedCoefficientKinds,
    ObstacleRegimeDependent
)
from src.models.markov import TwoTimeScaleSpec
from src.models.problem import (
    CallObstacle, ConstantCoefficients, ConstantFunction, ConstantObstacle,
    GbmLinearCoefficients, LinearFunction, LinearObstacle, ProblemSpec, RewardModel,
    TabulatedCoefficients, TabulatedFunction, TabulatedObstacle, ZeroFunction
)
from src.models.solution import Grid, SolutionField, SolverOptions, StoppingRule
from src.services.markov_chain import aggregation_matrices, assemble_generator, limit_generator
from src.services.sweep_runner import solve_many, spec_for_value

logger = logging.getLogger(__name__)

CHAIN_TOL = 1e-12


@dataclass(frozen=True)
class LimitProblem:
    """Агрегированная задача: L режимов, цепь Q̄, усреднённые коэффициенты"""
    spec: ProblemSpec
    block_map: Tuple[int, ...]


@dataclass(frozen=True)
class ErrorNorms:
    """N_k^ε по блокам k = 1..L"""
    values: Tuple[float, ...]

    def __getitem__(self, k: int) -> float:
        return self.values[k]


def _average(weights: np.ndarray, per_state: Sequence[float]) -> List[float]:
    return [float(v) for v in weights @ np.asarray(per_state, dtype=float)]


def _average_rms(weights: np.ndarray, per_state: Sequence[float]) -> List[float]:
    """σ̄ = sqrt(Σ ν σ²): усредняются квадраты, не сами σ"""
    return [float(v) for v in np.sqrt(weights @ np.square(np.asarray(per_state, dtype=float)))]


def _common_obstacle(terminal, n_blocks: int):
    """Препятствие, не зависящее от режима, в форме для L режимов"""
    if not terminal.regime_independent:
        raise ObstacleRegimeDependent(f"terminal kind {terminal.kind!r} varies across regimes")
    if isinstance(terminal, CallObstacle):
        return terminal
    if isinstance(terminal, ConstantObstacle):
        value = terminal.value[0] if isinstance(terminal.value, list) else terminal.value
        return ConstantObstacle(value=value)
    if isinstance(terminal, LinearObstacle):
        return LinearObstacle(slope=[terminal.slope[0]] * n_blocks,
                              intercept=[terminal.intercept[0]] * n_blocks)
    if isinstance(terminal, TabulatedObstacle):
        return TabulatedObstacle(x_min=terminal.x_min, x_max=terminal.x_max,
                                 values=[terminal.values[0]])
    raise ObstacleRegimeDependent(f"unsupported terminal kind {terminal.kind!r}")


def averaged_coefficients(tts: TwoTimeScaleSpec, coeffs, rewards: RewardModel):
    """
    Усреднение по стационарным распределениям быстрых блоков:
    b̄, f̄ - взвешенные средние, σ̄² = Σ ν σ².

    Returns:
        (модель коэффициентов для L режимов, RewardModel для L режимов)

    Raises:
        ObstacleRegimeDependent: g зависит от режима
        MixedCoefficientKinds: табличные данные на разных сетках
    """
    weights, _ = aggregation_matrices(tts)
    terminal = _common_obstacle(rewards.terminal, tts.n_blocks)

    if isinstance(coeffs, (GbmLinearCoefficients, ConstantCoefficients)):
        limit_coeffs = type(coeffs)(b=_average(weights, coeffs.b),
                                    sigma=_average_rms(weights, coeffs.sigma))
    elif isinstance(coeffs, TabulatedCoefficients):
        b = weights @ np.asarray(coeffs.b, dtype=float)
        sigma = np.sqrt(weights @ np.square(np.asarray(coeffs.sigma, dtype=float)))
        limit_coeffs = TabulatedCoefficients(x_min=coeffs.x_min, x_max=coeffs.x_max,
                                             b=b.tolist(), sigma=sigma.tolist())
    else:
        raise MixedCoefficientKinds(f"unsupported coefficient kind {coeffs.kind!r}")

    running = rewards.running
    if isinstance(running, ZeroFunction):
        limit_running = running
    elif isinstance(running, LinearFunction):
        limit_running = LinearFunction(coef=_average(weights, running.coef))
    elif isinstance(running, ConstantFunction):
        limit_running = ConstantFunction(value=_average(weights, running.value))
    elif isinstance(running, TabulatedFunction):
        if isinstance(coeffs, TabulatedCoefficients) and (
                coeffs.x_min != running.x_min or coeffs.x_max != running.x_max
                or coeffs.n_nodes != running.n_nodes):
            raise MixedCoefficientKinds("running reward and coefficients are tabulated on different grids")
        values = weights @ np.asarray(running.values, dtype=float)
        limit_running = TabulatedFunction(x_min=running.x_min, x_max=running.x_max,
                                          values=values.tolist())
    else:
        raise MixedCoefficientKinds(f"unsupported running reward kind {running.kind!r}")

    return limit_coeffs, RewardModel(running=limit_running, terminal=terminal)


def build_limit_problem(spec: ProblemSpec, tts: TwoTimeScaleSpec) -> LimitProblem:
    """
    Предельная задача с цепью Q̄ и усреднёнными коэффициентами.

    Raises:
        ChainMismatch: spec.chain ≠ assemble_generator(tts)
        ObstacleRegimeDependent
    """
    expected = assemble_generator(tts)
    if expected.m != spec.chain.m or not np.allclose(
            spec.chain.rates, expected.rates, rtol=CHAIN_TOL, atol=CHAIN_TOL):
        raise ChainMismatch(
            f"problem chain ({spec.chain.m} states) differs from assembled Q^ε at ε={tts.epsilon}"
        )

    limit_coeffs, limit_rewards = averaged_coefficients(tts, spec.coeffs, spec.rewards)
    limit_spec = ProblemSpec(
        m=tts.n_blocks,
        chain=limit_generator(tts),
        coeffs=limit_coeffs,
        rewards=limit_rewards,
        r=spec.r,
        theta=spec.theta,
        q_max=spec.q_max,
        domain=spec.domain,
    )
    logger.info(f"Limit problem built: {spec.m} regimes -> {tts.n_blocks} superstates")
    return LimitProblem(spec=limit_spec, block_map=tts.block_map)


def _check_same_grid(a: Grid, b: Grid):
    if not a.same_as(b):
        raise GridMismatch(
            f"grids differ: [{a.x_min}, {a.x_max}] h={a.h} ({a.n_nodes} nodes) vs "
            f"[{b.x_min}, {b.x_max}] h={b.h} ({b.n_nodes} nodes)"
        )


def error_norms(sol_eps: SolutionField, sol_limit: SolutionField,
                block_map: Sequence[int]) -> ErrorNorms:
    """N_k^ε = (1/N)·Σ_n Σ_{l∈k} |V^ε(n, s_kl) − V̄(n, k)|"""
    _check_same_grid(sol_eps.grid, sol_limit.grid)
    block_map = np.asarray(block_map, dtype=int)
    if block_map.shape[0] != sol_eps.m:
        raise GridMismatch(f"block map covers {block_map.shape[0]} states, solution has {sol_eps.m}")

    deviation = np.abs(sol_eps.values - sol_limit.values[:, block_map])
    n_nodes = sol_eps.grid.n_nodes
    norms = tuple(
        float(deviation[:, block_map == k].sum() / n_nodes) for k in range(sol_limit.m)
    )
    return ErrorNorms(values=norms)


def lift_limit_solution(sol_limit: SolutionField, block_map: Sequence[int],
                        grid: Optional[Grid] = None) -> SolutionField:
    """V̄(x, s_kl) := V̄(x, k) на исходном пространстве состояний"""
    if grid is not None:
        _check_same_grid(sol_limit.grid, grid)
    columns = np.asarray(block_map, dtype=int)
    return SolutionField(
        grid=sol_limit.grid,
        values=sol_limit.values[:, columns],
        q_field=sol_limit.q_field[:, columns],
        obstacle=sol_limit.obstacle[:, columns],
        iterations=sol_limit.iterations,
        max_complementarity_residual=sol_limit.max_complementarity_residual,
        inner_sweeps=sol_limit.inner_sweeps,
        diagnostics=sol_limit.diagnostics,
    )


def lift_stopping_rule(rule_limit: StoppingRule, block_map: Sequence[int]) -> StoppingRule:
    """Пороги предельной задачи для каждого состояния блока"""
    columns = np.asarray(block_map, dtype=int)
    masks = rule_limit.masks[:, columns]
    masks.setflags(write=False)
    return StoppingRule(
        tol_region=rule_limit.tol_region,
        masks=masks,
        thresholds=tuple(rule_limit.thresholds[k] for k in columns),
        grid=rule_limit.grid,
    )


def within_block_spread(sol_eps: SolutionField, tts: TwoTimeScaleSpec) -> Tuple[float, ...]:
    """max_n max_{l,l'} |V^ε(n, s_kl) − V^ε(n, s_kl')| по блокам"""
    spreads = []
    for offset, size in zip(tts.offsets, tts.block_sizes):
        block = sol_eps.values[:, offset:offset + size]
        spreads.append(float(np.max(block.max(axis=1) - block.min(axis=1))))
    return tuple(spreads)


@dataclass(frozen=True)
class AggregationRow:
    epsilon: float
    norms: ErrorNorms
    spreads: Tuple[float, ...]
    solution: SolutionField


@dataclass(frozen=True)
class AggregationReport:
    """Нормы ошибок по ε (в порядке входа) и решение предельной задачи"""
    limit: LimitProblem
    limit_solution: SolutionField
    rows: Tuple[AggregationRow, ...]


async def aggregation_study(spec: ProblemSpec, tts: TwoTimeScaleSpec, eps_values: Sequence[float],
                            grid: Grid, opts: SolverOptions,
                            threads: Optional[int] = None) -> AggregationReport:
    """
    Решить исходную задачу для каждого ε и предельную задачу один раз,
    вычислить нормы ошибок и разброс внутри блоков.
    """
    if not eps_values:
        raise AggregationException("epsilon list is empty")
    limit = build_limit_problem(spec_for_value(spec, "epsilon", tts.epsilon, tts), tts)

    jobs = [(limit.spec, grid, opts)]
    jobs += [(spec_for_value(spec, "epsilon", float(eps), tts), grid, opts) for eps in eps_values]
    solutions = await solve_many(jobs, threads)
    limit_solution, eps_solutions = solutions[0], solutions[1:]

    rows = []
    for eps, sol in zip(eps_values, eps_solutions):
        norms = error_norms(sol, limit_solution, limit.block_map)
        spreads = within_block_spread(sol, tts)
        logger.info(
            f"ε={eps:g}: norms " + ", ".join(f"{n:.4f}" for n in norms.values)
            + "; spreads " + ", ".join(f"{s:.4f}" for s in spreads)
        )
        rows.append(AggregationRow(epsilon=float(eps), norms=norms, spreads=spreads, solution=sol))

    return AggregationReport(limit=limit, limit_solution=limit_solution, rows=tuple(rows))
