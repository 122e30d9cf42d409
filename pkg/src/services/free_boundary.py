import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from src.core.config import settings
from src.core.exceptions import NoThreshold
from src.models.solution import SolutionField, StoppingRule

logger = logging.getLogger(__name__)


def _threshold_node(mask: np.ndarray) -> Tuple[Optional[int], bool]:
    """
    Индекс первого узла остановки после узла продолжения.

    Returns:
        (индекс узла или None, маска имеет вид [x_min, x_i) продолжения)
    """
    continuation = np.flatnonzero(mask)
    if continuation.size == 0:
        # Остановка везде: порог на левой границе
        return 0, True
    first = int(continuation[0])
    stopping_after = np.flatnonzero(~mask[first:])
    if stopping_after.size == 0:
        return None, False
    node = first + int(stopping_after[0])
    interval = first == 0 and not mask[node:].any()
    return node, interval


def classify_regions(sol: SolutionField, tol_region: Optional[float] = None) -> StoppingRule:
    """
    Области продолжения (v − g > tol_region) и пороги продажи по режимам.

    Порог - первый узел (по возрастанию x), где v − g ≤ tol_region,
    после хотя бы одного узла продолжения; без интерполяции между узлами.
    """
    tol = settings.default_tol_region if tol_region is None else float(tol_region)
    masks = (sol.values - sol.obstacle) > tol
    x = sol.grid.nodes

    thresholds: List[Optional[float]] = []
    for i in range(sol.m):
        node, interval = _threshold_node(masks[:, i])
        if node is None or not interval:
            logger.debug(f"Regime {i + 1}: continuation region is not an interval [x_min, x_i)")
            thresholds.append(None)
        else:
            thresholds.append(float(x[node]))

    masks.setflags(write=False)
    return StoppingRule(tol_region=tol, masks=masks, thresholds=tuple(thresholds), grid=sol.grid)


def smooth_fit_gap(sol: SolutionField, rule: StoppingRule, i: int) -> float:
    """
    |V′₋ − V′₊| в узле порога режима i (0-based).

    Односторонние трёхточечные разности: слева по области продолжения,
    справа по области остановки.

    Raises:
        NoThreshold: у режима нет порога или порог на x_min
    """
    level = rule.thresholds[i]
    if level is None:
        raise NoThreshold(i + 1)
    h = sol.grid.h
    node = int(round((level - sol.grid.x_min) / h))
    if node == 0:
        raise NoThreshold(i + 1)

    v = sol.values[:, i]
    last = v.shape[0] - 1

    if node >= 2:
        left = (3.0 * v[node] - 4.0 * v[node - 1] + v[node - 2]) / (2.0 * h)
    else:
        left = (v[node] - v[node - 1]) / h

    if node + 2 <= last:
        right = (-3.0 * v[node] + 4.0 * v[node + 1] - v[node + 2]) / (2.0 * h)
    elif node + 1 <= last:
        right = (v[node + 1] - v[node]) / h
    else:
        # Порог на x_max: производная справа по препятствию недоступна
        raise NoThreshold(i + 1)

    return float(abs(left - right))


@dataclass(frozen=True)
class ThresholdRow:
    """Строка отчёта о порогах, режим в нумерации с 1"""
    regime: int
    threshold: Optional[float]
    smooth_fit_gap: Optional[float]


def threshold_report(sol: SolutionField, rule: StoppingRule) -> List[ThresholdRow]:
    rows = []
    for i, level in enumerate(rule.thresholds):
        try:
            gap = smooth_fit_gap(sol, rule, i)
        except NoThreshold:
            gap = None
        rows.append(ThresholdRow(regime=i + 1, threshold=level, smooth_fit_gap=gap))
    return rows
