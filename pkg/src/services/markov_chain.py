import logging
from typing import Sequence, Union

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from src.core.exceptions import (
    GeneratorValidationException, NotSquare, NegativeOffDiagonal, RowSumNonzero,
    ReducibleChainException, InvalidProblemException
)
from src.models.markov import Generator, ProbVector, TwoTimeScaleSpec

logger = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-12
RESIDUAL_TOL = 1e-10

MatrixLike = Union[np.ndarray, Sequence[Sequence[float]]]


def validate_generator(rates: MatrixLike) -> Generator:
    """
    Проверить матрицу интенсивностей и вернуть Generator

    Raises:
        NotSquare, NegativeOffDiagonal(i, j), RowSumNonzero(i, sum)
    """
    q = np.asarray(rates, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] < 1:
        raise NotSquare(tuple(q.shape))
    if not np.all(np.isfinite(q)):
        raise GeneratorValidationException("Generator entries must be finite")

    m = q.shape[0]
    for i in range(m):
        for j in range(m):
            if i != j and q[i, j] < 0.0:
                raise NegativeOffDiagonal(i, j, float(q[i, j]))
        row_sum = float(q[i].sum())
        if abs(row_sum) > ROW_SUM_TOL:
            raise RowSumNonzero(i, row_sum)

    return Generator(q)


def is_irreducible(g: Generator) -> bool:
    """Сильная связность орграфа положительных внедиагональных интенсивностей"""
    return _count_classes(g) == 1


def _count_classes(g: Generator) -> int:
    if g.m == 1:
        return 1
    adjacency = (g.rates > 0.0).astype(float)
    np.fill_diagonal(adjacency, 0.0)
    n_classes, _ = connected_components(csr_matrix(adjacency), directed=True, connection="strong")
    return int(n_classes)


def stationary_distribution(g: Generator) -> ProbVector:
    """
    Стационарное распределение ν: νQ = 0, Σν = 1

    Решается расширенная система [Qᵀ; 1ᵀ]ν = [0; 1] через плотное LU
    с частичным выбором главного элемента (одно уравнение Qᵀ заменяется
    условием нормировки).
    """
    n_classes = _count_classes(g)
    if n_classes != 1:
        raise ReducibleChainException(n_classes)

    m = g.m
    if m == 1:
        return ProbVector(np.ones(1))

    a = g.rates.T.copy()
    a[-1, :] = 1.0
    rhs = np.zeros(m)
    rhs[-1] = 1.0
    nu = lu_solve(lu_factor(a), rhs)

    # Округление может дать -1e-17 в нулевых компонентах
    nu = np.clip(nu, 0.0, None)
    nu = nu / nu.sum()

    residual = float(np.max(np.abs(nu @ g.rates)))
    if residual > RESIDUAL_TOL:
        logger.warning(f"Stationary distribution residual {residual:.3e} exceeds {RESIDUAL_TOL:.0e}")
    logger.debug(f"Stationary distribution for m={m}: residual {residual:.3e}")
    return ProbVector(nu)


def make_two_time_scale_spec(
        fast_blocks: Sequence[MatrixLike],
        slow: MatrixLike,
        epsilon: float
) -> TwoTimeScaleSpec:
    """Собрать и проверить двухмасштабную спецификацию"""
    if not np.isfinite(epsilon) or epsilon <= 0.0:
        raise InvalidProblemException(f"epsilon must be positive, got {epsilon!r}")
    if len(fast_blocks) < 1:
        raise InvalidProblemException("at least one fast block is required")

    blocks = tuple(
        b if isinstance(b, Generator) else validate_generator(b) for b in fast_blocks
    )
    for k, block in enumerate(blocks):
        n_classes = _count_classes(block)
        if n_classes != 1:
            logger.error(f"Fast block {k + 1} is reducible ({n_classes} classes)")
            raise ReducibleChainException(n_classes)

    slow_gen = slow if isinstance(slow, Generator) else validate_generator(slow)
    total = sum(b.m for b in blocks)
    if slow_gen.m != total:
        raise InvalidProblemException(
            f"slow generator has size {slow_gen.m}, fast blocks total {total}"
        )

    return TwoTimeScaleSpec(fast_blocks=blocks, slow=slow_gen, epsilon=float(epsilon))


def fast_part(tts: TwoTimeScaleSpec) -> np.ndarray:
    """Q̃ = diag{Q̃¹, …, Q̃ᴸ}"""
    q_tilde = np.zeros((tts.m, tts.m))
    for block, offset in zip(tts.fast_blocks, tts.offsets):
        q_tilde[offset:offset + block.m, offset:offset + block.m] = block.rates
    return q_tilde


def assemble_generator(tts: TwoTimeScaleSpec) -> Generator:
    """Q^ε = Q̃/ε + Q̂"""
    q_eps = fast_part(tts) / tts.epsilon + tts.slow.rates
    # Поправка диагонали: сумма строки ровно 0 после деления на ε
    off_diag = q_eps - np.diag(np.diag(q_eps))
    q_eps = off_diag - np.diag(off_diag.sum(axis=1))
    return validate_generator(q_eps)


def aggregation_matrices(tts: TwoTimeScaleSpec):
    """
    Матрицы агрегирования: diag{ν¹,…,νᴸ} (L×m) и diag{1_{m₁},…,1_{m_L}} (m×L)
    """
    weights = np.zeros((tts.n_blocks, tts.m))
    ones = np.zeros((tts.m, tts.n_blocks))
    for k, (block, offset) in enumerate(zip(tts.fast_blocks, tts.offsets)):
        nu = stationary_distribution(block)
        weights[k, offset:offset + block.m] = nu.weights
        ones[offset:offset + block.m, k] = 1.0
    return weights, ones


def limit_generator(tts: TwoTimeScaleSpec) -> Generator:
    """Q̄ = diag{ν¹,…,νᴸ} Q̂ diag{1_{m₁},…,1_{m_L}}"""
    weights, ones = aggregation_matrices(tts)
    q_bar = weights @ tts.slow.rates @ ones

    row_error = float(np.max(np.abs(q_bar.sum(axis=1))))
    if row_error > RESIDUAL_TOL:
        logger.warning(f"Limit generator row sums deviate by {row_error:.3e}")

    # Диагональ восстанавливаем из внедиагональных элементов
    off_diag = q_bar - np.diag(np.diag(q_bar))
    q_bar = off_diag - np.diag(off_diag.sum(axis=1))
    logger.debug(f"Limit generator built: {tts.m} states -> {tts.n_blocks} superstates")
    return validate_generator(q_bar)
