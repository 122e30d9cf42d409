from typing import Optional, Tuple


class RobustStopException(Exception):
    """Базовое исключение для пакета robuststop"""
    pass


class GeneratorValidationException(RobustStopException):
    """Матрица интенсивностей не является генератором"""
    pass


class NotSquare(GeneratorValidationException):
    """Матрица не квадратная"""

    def __init__(self, shape: Tuple[int, ...]):
        self.shape = shape
        super().__init__(f"Generator must be a square m×m matrix with m ≥ 1, got shape {shape}")


class NegativeOffDiagonal(GeneratorValidationException):
    """Отрицательный внедиагональный элемент λ_ij"""

    def __init__(self, i: int, j: int, value: float):
        self.i = i
        self.j = j
        self.value = value
        super().__init__(f"NegativeOffDiagonal({i},{j}): rate {value!r} < 0")


class RowSumNonzero(GeneratorValidationException):
    """Сумма строки генератора отлична от нуля"""

    def __init__(self, i: int, row_sum: float):
        self.i = i
        self.row_sum = row_sum
        super().__init__(f"RowSumNonzero({i}): row sums to {row_sum!r}")


class ReducibleChainException(RobustStopException):
    """Цепь не имеет единственного сообщающегося класса"""

    def __init__(self, n_classes: int):
        self.n_classes = n_classes
        super().__init__(f"ReducibleChain: {n_classes} strongly connected classes, expected 1")


class InvalidProblemException(RobustStopException):
    """Нарушены инварианты постановки задачи"""
    pass


class OutOfDomain(InvalidProblemException):
    """Точка вне сетки табличных коэффициентов"""

    def __init__(self, x: float, x_min: float, x_max: float):
        self.x = x
        super().__init__(f"OutOfDomain({x!r}): tabulated data covers [{x_min}, {x_max}]")


class GridException(RobustStopException):
    """Ошибки сетки"""
    pass


class NonCommensurate(GridException):
    """Длина отрезка не кратна шагу"""

    def __init__(self, span: float, h: float):
        self.span = span
        self.h = h
        super().__init__(f"NonCommensurate: span {span!r} is not a multiple of h={h!r}")


class GridMismatch(GridException):
    """Поля заданы на разных сетках"""
    pass


class SolverException(RobustStopException):
    """Исключение численного решателя"""
    pass


class MaxIterations(SolverException):
    """Не достигнута требуемая точность за отведённое число итераций"""

    def __init__(self, kind: str, iterations: int, change: float):
        self.kind = kind
        self.iterations = iterations
        self.change = change
        super().__init__(
            f"MaxIterations({kind}): {iterations} iterations, last change {change:.3e}"
        )


class BoundaryNotStopping(RobustStopException):
    """
    Диагностика: у правой границы значение выше препятствия.
    Не выбрасывается, сохраняется в SolutionField.diagnostics.
    """

    def __init__(self, regime: int, gap: float):
        self.regime = regime
        self.gap = gap
        super().__init__(
            f"BoundaryNotStopping({regime}): v - g = {gap:.3e} next to x_max, domain too small"
        )


class NoThreshold(RobustStopException):
    """У режима нет порога остановки"""

    def __init__(self, regime: int):
        self.regime = regime
        super().__init__(f"NoThreshold({regime})")


class AggregationException(RobustStopException):
    """Ошибки агрегирования двухмасштабной цепи"""
    pass


class ObstacleRegimeDependent(AggregationException):
    """Препятствие g зависит от режима, агрегирование невозможно"""

    def __init__(self, detail: Optional[str] = None):
        super().__init__(
            "ObstacleRegimeDependent: aggregation requires g(x, i) ≡ g(x)"
            + (f" ({detail})" if detail else "")
        )


class ChainMismatch(AggregationException):
    """Генератор задачи не совпадает с собранным Q^ε"""
    pass


class MixedCoefficientKinds(AggregationException):
    """Коэффициенты разных видов или на разных сетках"""
    pass


class SimulationException(RobustStopException):
    """Исключение Монте-Карло моделирования"""
    pass


class ConfigurationException(RobustStopException):
    """Исключение конфигурации"""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)
