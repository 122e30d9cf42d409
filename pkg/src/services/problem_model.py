import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from src.core.exceptions import InvalidProblemException
from src.models.problem import ProblemSpec

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class CoefficientTable:
    """Коэффициенты задачи в узлах сетки, массивы формы (n_nodes, m)"""
    x: np.ndarray
    b: np.ndarray
    sigma: np.ndarray
    f: np.ndarray
    g: np.ndarray


def evaluate_coefficients(spec: ProblemSpec, x: float, i: int) -> Tuple[float, float, float, float]:
    """Значения (b, σ, f, g) в точке x для режима i (0-based)"""
    if not 0 <= i < spec.m:
        raise InvalidProblemException(f"regime index {i} outside 0..{spec.m - 1}")
    return (
        float(spec.coeffs.drift(x, i)),
        float(spec.coeffs.volatility(x, i)),
        float(spec.rewards.running(x, i)),
        float(spec.rewards.terminal(x, i)),
    )


def coefficient_table(spec: ProblemSpec, x: np.ndarray) -> CoefficientTable:
    """Вычислить b, σ, f, g во всех узлах x для всех режимов"""
    x = np.asarray(x, dtype=float)
    columns = {name: np.empty((x.shape[0], spec.m)) for name in ("b", "sigma", "f", "g")}
    for i in range(spec.m):
        columns["b"][:, i] = spec.coeffs.drift(x, i)
        columns["sigma"][:, i] = spec.coeffs.volatility(x, i)
        columns["f"][:, i] = spec.rewards.running(x, i)
        columns["g"][:, i] = spec.rewards.terminal(x, i)
    return CoefficientTable(x=x, **columns)


def clamp_control(q: ArrayLike, q_max: float) -> ArrayLike:
    return np.clip(q, -q_max, q_max)


def worst_case_control(spec: ProblemSpec, x: float, i: int, dv: float) -> float:
    """q* = clamp(−θ·σ(x,i)·v′, −q_max, q_max)"""
    sigma = float(spec.coeffs.volatility(x, i))
    return float(clamp_control(-spec.theta * sigma * dv, spec.q_max))


def worst_case_field(theta: float, sigma: np.ndarray, dv: np.ndarray, q_max: float) -> np.ndarray:
    """Векторная версия worst_case_control для массивов σ и v′"""
    return clamp_control(-theta * sigma * dv, q_max)


def ambiguity_penalty(theta: float, q: ArrayLike) -> ArrayLike:
    """Θ(q) = q²/(2θ); при θ = 0 неоднозначности нет и q ≡ 0"""
    if theta == 0.0:
        return np.zeros_like(np.asarray(q, dtype=float)) if np.ndim(q) else 0.0
    return np.square(q) / (2.0 * theta)


def regime_coupling(rates: np.ndarray, v_all: Sequence[float], i: int) -> float:
    """Qv(x,·)(i) = Σ_{j≠i} λ_ij (v_j − v_i)"""
    v_all = np.asarray(v_all, dtype=float)
    row = rates[i]
    total = 0.0
    for j in range(row.shape[0]):
        if j != i:
            total += row[j] * (v_all[j] - v_all[i])
    return total


def hamiltonian_residual(spec: ProblemSpec, i: int, x: float, v_all: Sequence[float],
                         dv: float, ddv: float) -> float:
    """
    H*v(x,i) = rv − bv′ + (θ/2)σ²(v′)² − ½σ²v″ − Qv(x,·)(i) − f

    Форма супремума без ограничения q_max.
    """
    b, sigma, f, _ = evaluate_coefficients(spec, x, i)
    s2 = sigma * sigma
    return (
        spec.r * v_all[i]
        - b * dv
        + 0.5 * spec.theta * s2 * dv * dv
        - 0.5 * s2 * ddv
        - regime_coupling(spec.chain.rates, v_all, i)
        - f
    )


def frozen_hamiltonian(spec: ProblemSpec, i: int, x: float, v_all: Sequence[float],
                       dv: float, ddv: float, q: float) -> float:
    """Линейный оператор при фиксированном q: rv − (b+σq)v′ − ½σ²v″ − Qv − f − Θ(q)"""
    b, sigma, f, _ = evaluate_coefficients(spec, x, i)
    return (
        spec.r * v_all[i]
        - (b + sigma * q) * dv
        - 0.5 * sigma * sigma * ddv
        - regime_coupling(spec.chain.rates, v_all, i)
        - f
        - ambiguity_penalty(spec.theta, q)
    )


def complementarity_residual(spec: ProblemSpec, i: int, x: float, v_all: Sequence[float],
                             dv: float, ddv: float) -> float:
    """min{H*v(x,i), v(x,i) − g(x,i)}"""
    g = float(spec.rewards.terminal(x, i))
    return min(hamiltonian_residual(spec, i, x, v_all, dv, ddv), v_all[i] - g)


def perpetual_call_value(b: float, sigma: float, r: float, strike: float, x: ArrayLike) -> ArrayLike:
    """
    Стоимость бессрочной продажи для одного режима без неоднозначности.

    β - положительный корень ½σ²β(β−1) + bβ − r = 0, x* = Kβ/(β−1),
    v(x) = (x* − K)(x/x*)^β при x ≤ x*, иначе x − K.
    """
    a = 0.5 * sigma * sigma
    if a == 0.0:
        raise InvalidProblemException("closed form requires sigma != 0")
    # aβ² + (b − a)β − r = 0
    beta = (-(b - a) + math.sqrt((b - a) ** 2 + 4.0 * a * r)) / (2.0 * a)
    if beta <= 1.0:
        raise InvalidProblemException(f"no finite selling threshold: beta={beta:.4f} ≤ 1")
    x_star = strike * beta / (beta - 1.0)
    x = np.asarray(x, dtype=float)
    value = np.where(
        x <= x_star,
        (x_star - strike) * np.power(np.clip(x, 0.0, None) / x_star, beta),
        x - strike,
    )
    return value if value.ndim else float(value)


def perpetual_call_threshold(b: float, sigma: float, r: float, strike: float) -> float:
    a = 0.5 * sigma * sigma
    beta = (-(b - a) + math.sqrt((b - a) ** 2 + 4.0 * a * r)) / (2.0 * a)
    return strike * beta / (beta - 1.0)
