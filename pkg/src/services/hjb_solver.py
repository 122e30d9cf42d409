import logging
import time
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from src.core.exceptions import (
    BoundaryNotStopping, InvalidProblemException, MaxIterations, NonCommensurate
)
from src.models.problem import ProblemSpec
from src.models.solution import Grid, ResidualReport, SolutionField, SolverOptions
from src.services.problem_model import (
    CoefficientTable, ambiguity_penalty, coefficient_table, worst_case_field
)
from src.services.psor_kernel import LEFT_DEGENERATE, LEFT_ONE_SIDED, LEFT_PINNED, projected_sor

logger = logging.getLogger(__name__)

GRID_TOL = 1e-9
DEGENERATE_TOL = 1e-15
SINGULAR_TOL = 1e-12


def build_grid(x_min: float, x_max: float, h: float) -> Grid:
    """
    Равномерная сетка на [x_min, x_max] с шагом h

    Raises:
        NonCommensurate: (x_max − x_min)/h не целое в пределах 1e−9
    """
    if not x_min < x_max:
        raise InvalidProblemException(f"grid requires x_min < x_max, got ({x_min}, {x_max})")
    if not h > 0:
        raise InvalidProblemException(f"grid step must be positive, got {h}")

    span = x_max - x_min
    ratio = span / h
    n_steps = int(round(ratio))
    if n_steps < 1 or abs(ratio - n_steps) > GRID_TOL:
        raise NonCommensurate(span, h)
    return Grid(x_min=float(x_min), x_max=float(x_max), h=float(h), n_nodes=n_steps + 1)


def central_gradient(values: np.ndarray, h: float) -> np.ndarray:
    """v′: центральные разности внутри, односторонние на краях"""
    if values.shape[0] < 2:
        return np.zeros_like(values)
    return np.gradient(values, h, axis=0, edge_order=1)


def second_difference(values: np.ndarray, h: float) -> np.ndarray:
    """Трёхточечная v″ во внутренних узлах, ноль на краях"""
    ddv = np.zeros_like(values)
    ddv[1:-1] = (values[2:] - 2.0 * values[1:-1] + values[:-2]) / (h * h)
    return ddv


@dataclass
class _LinearSystem:
    """Коэффициенты замороженной линейной задачи с препятствием"""
    diag: np.ndarray
    up: np.ndarray
    down: np.ndarray
    rhs: np.ndarray
    left: np.ndarray
    left_mode: np.ndarray


def _degenerate_left(table: CoefficientTable) -> np.ndarray:
    """Режимы, в которых σ(x_min) = b(x_min) = 0 (ГБД в нуле)"""
    return (np.abs(table.sigma[0]) <= DEGENERATE_TOL) & (np.abs(table.b[0]) <= DEGENERATE_TOL)


def _assemble(spec: ProblemSpec, table: CoefficientTable, h: float,
              q_bar: np.ndarray) -> _LinearSystem:
    """
    Схема против потока для оператора
    rv − (b+σq̄)v′ − ½σ²v″ − Qv − f − Θ(q̄) при фиксированном q̄

    Raises:
        InvalidProblemException: строка узла x_min вырождена при данном h
    """
    rates = spec.chain.rates
    self_rate = -np.diag(rates)

    a = 0.5 * np.square(table.sigma)
    mu = table.b + table.sigma * q_bar
    mu_plus = np.maximum(mu, 0.0)
    mu_minus = np.maximum(-mu, 0.0)

    diag = spec.r + self_rate[None, :] + (mu_plus + mu_minus) / h + 2.0 * a / (h * h)
    up = a / (h * h) + mu_plus / h
    down = a / (h * h) + mu_minus / h
    rhs = table.f + ambiguity_penalty(spec.theta, q_bar)

    # x_min: вырожденный режим - соотношение без производных; иначе
    # вперёд разность для дрейфа и (v0 − 2v1 + v2)/h² для v″
    m = spec.m
    n_nodes = table.x.shape[0]
    degenerate = _degenerate_left(table)
    left = np.zeros((m, 2))
    left_mode = np.full(m, LEFT_DEGENERATE, dtype=np.int64)
    for i in range(m):
        if degenerate[i]:
            diag[0, i] = spec.r + self_rate[i]
            continue
        if n_nodes < 3:
            left_mode[i] = LEFT_PINNED
            continue
        alpha = a[0, i] / (h * h)
        drift = mu[0, i] / h
        left_mode[i] = LEFT_ONE_SIDED
        diag[0, i] = spec.r + self_rate[i] + drift - alpha
        left[i, 0] = drift - 2.0 * alpha
        left[i, 1] = alpha
        scale = spec.r + self_rate[i] + abs(drift) + alpha
        reduced = diag[1, i] - down[1, i] * left[i, 0] / diag[0, i] if diag[0, i] != 0.0 else 0.0
        if abs(diag[0, i]) <= SINGULAR_TOL * scale or abs(reduced) <= SINGULAR_TOL * diag[1, i]:
            raise InvalidProblemException(
                f"one-sided relation at x_min={table.x[0]} is singular for regime {i + 1} at h={h}"
            )
    return _LinearSystem(diag, up, down, rhs, left, left_mode)


def _coupling_matrix(spec: ProblemSpec) -> np.ndarray:
    coupling = spec.chain.rates.copy()
    np.fill_diagonal(coupling, 0.0)
    return coupling


def discrete_residual(spec: ProblemSpec, grid: Grid, values: np.ndarray,
                      q: np.ndarray, table: Optional[CoefficientTable] = None) -> np.ndarray:
    """
    min{L_q v, v − g} для разностной схемы решателя при заданном q.

    Узел x_min входит со своим соотношением; строка x_max (условие Дирихле)
    и закреплённый узел сетки из двух узлов равны нулю.
    """
    if table is None:
        table = coefficient_table(spec, grid.nodes)
    system = _assemble(spec, table, grid.h, q)
    coupling = _coupling_matrix(spec)

    v = values
    neighbours = np.zeros_like(v)
    neighbours[1:-1] = system.up[1:-1] * v[2:] + system.down[1:-1] * v[:-2]
    one_sided = system.left_mode == LEFT_ONE_SIDED
    if one_sided.any():
        neighbours[0, one_sided] = (
            system.left[one_sided, 0] * v[1, one_sided] + system.left[one_sided, 1] * v[2, one_sided]
        )

    operator = system.diag * v - system.rhs - neighbours - v @ coupling.T
    residual = np.minimum(operator, v - table.g)
    residual[0, system.left_mode == LEFT_PINNED] = 0.0
    residual[-1] = 0.0
    return residual


def solve(spec: ProblemSpec, grid: Grid, opts: Optional[SolverOptions] = None) -> SolutionField:
    """
    Решить вариационное неравенство HJB на сетке.

    Внешний цикл: итерация по политике q̄ = q*(v′) (центральные разности);
    внутренний: PSOR для линейной задачи с препятствием при фиксированном q̄.

    Raises:
        MaxIterations: внешний или внутренний цикл не сошёлся
    """
    opts = opts or SolverOptions()
    if grid.x_min < spec.x_min - GRID_TOL or grid.x_max > spec.x_max + GRID_TOL:
        raise InvalidProblemException(
            f"grid [{grid.x_min}, {grid.x_max}] exceeds problem domain {spec.domain}"
        )

    start = time.perf_counter()
    h = grid.h
    table = coefficient_table(spec, grid.nodes)
    coupling = _coupling_matrix(spec)
    g = np.ascontiguousarray(table.g)

    values = np.maximum(g, 0.0)
    values[-1] = g[-1]
    q_bar = np.zeros_like(values)

    total_sweeps = 0
    change = np.inf
    iterations = 0
    for iterations in range(1, opts.max_outer + 1):
        q_bar = worst_case_field(spec.theta, table.sigma, central_gradient(values, h), spec.q_max)
        system = _assemble(spec, table, h, q_bar)
        pinned = system.left_mode == LEFT_PINNED
        values[0, pinned] = g[0, pinned]

        previous = values.copy()
        sweeps, inner_change, converged = projected_sor(
            values, g, system.diag, system.up, system.down, system.rhs, coupling,
            system.left, system.left_mode, opts.omega, opts.tol_inner, opts.max_inner
        )
        total_sweeps += int(sweeps)
        if not converged:
            logger.error(
                f"PSOR не сошёлся на внешней итерации {iterations}: "
                f"{sweeps} sweeps, change {inner_change:.3e}"
            )
            raise MaxIterations("inner", int(sweeps), float(inner_change))

        change = float(np.max(np.abs(values - previous)))
        logger.debug(f"Outer iteration {iterations}: {sweeps} sweeps, sup change {change:.3e}")
        if change <= opts.tol_outer:
            break
    else:
        logger.error(f"Итерация по политике не сошлась: {opts.max_outer} итераций, change {change:.3e}")
        raise MaxIterations("outer", opts.max_outer, change)

    residual = discrete_residual(spec, grid, values, q_bar, table)
    max_residual = float(np.max(np.abs(residual[:-1])))

    diagnostics = _boundary_diagnostics(values, g, opts.tol_outer)
    for message in diagnostics:
        logger.warning(message)

    logger.info(
        f"Solved m={spec.m}, θ={spec.theta} on {grid.n_nodes} nodes: "
        f"{iterations} outer / {total_sweeps} sweeps, residual {max_residual:.2e}, "
        f"{time.perf_counter() - start:.2f}s"
    )
    return SolutionField(
        grid=grid,
        values=values,
        q_field=q_bar,
        obstacle=g,
        iterations=iterations,
        max_complementarity_residual=max_residual,
        inner_sweeps=total_sweeps,
        diagnostics=tuple(diagnostics),
    )


def _boundary_diagnostics(values: np.ndarray, g: np.ndarray, tol_outer: float) -> List[str]:
    if values.shape[0] < 2:
        return []
    messages = []
    gap = values[-2] - g[-2]
    for i in np.flatnonzero(gap > 10.0 * tol_outer):
        messages.append(str(BoundaryNotStopping(int(i) + 1, float(gap[i]))))
    return messages


def residual_report(spec: ProblemSpec, sol: SolutionField,
                    exclude_near: Optional[Tuple[Optional[float], ...]] = None) -> ResidualReport:
    """
    Пересчитать невязку дополнительности по готовому решению.

    discrete_profile - невязка разностной схемы при сохранённом q_field
    (замороженный оператор), включая узел x_min;
    pointwise_profile - min{H*v, v − g} в форме супремума с центральными
    разностями во внутренних узлах, погрешность O(h).
    exclude_near - уровни порогов по режимам, узлы ближе 2h исключаются.
    """
    grid = sol.grid
    h = grid.h
    table = coefficient_table(spec, grid.nodes)
    v = sol.values

    dv = central_gradient(v, h)
    discrete = discrete_residual(spec, grid, v, sol.q_field, table)

    ddv = second_difference(v, h)
    s2 = np.square(table.sigma)
    coupling = v @ spec.chain.rates.T
    hamiltonian = (
        spec.r * v - table.b * dv + 0.5 * spec.theta * s2 * dv * dv
        - 0.5 * s2 * ddv - coupling - table.f
    )
    pointwise = np.minimum(hamiltonian, v - table.g)

    kept = np.zeros(v.shape, dtype=bool)
    kept[:-1] = True
    excluded: List[int] = []
    if exclude_near is not None:
        x = grid.nodes
        for i, level in enumerate(exclude_near):
            if level is None:
                continue
            near = np.abs(x - level) <= 2.0 * h + GRID_TOL
            kept[near, i] = False
            excluded.extend(int(n) for n in np.flatnonzero(near))
    interior = kept.copy()
    interior[0] = False

    discrete = np.where(kept, discrete, 0.0)
    pointwise = np.where(interior, pointwise, 0.0)

    flat = int(np.argmax(np.abs(discrete)))
    worst = np.unravel_index(flat, discrete.shape)
    return ResidualReport(
        discrete_max=float(np.max(np.abs(discrete))),
        discrete_profile=discrete,
        pointwise_max=float(np.max(np.abs(pointwise))),
        pointwise_profile=pointwise,
        worst_node=(int(worst[0]), int(worst[1])),
        excluded_nodes=sorted(set(excluded)),
    )
