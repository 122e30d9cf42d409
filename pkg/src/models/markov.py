from dataclasses import dataclass, field
from typing import Tuple

import numpy as np


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Generator:
    """
    Генератор (Q-матрица) цепи Маркова: λ_ij ≥ 0 при i ≠ j, строки суммируются в 0.

    Экземпляры создаются через services.markov_chain.validate_generator.
    """
    rates: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rates", _readonly(self.rates))

    @property
    def m(self) -> int:
        return self.rates.shape[0]

    def exit_rate(self, i: int) -> float:
        """Интенсивность выхода из состояния i (−λ_ii)"""
        return float(-self.rates[i, i])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Generator):
            return NotImplemented
        return self.rates.shape == other.rates.shape and bool(np.array_equal(self.rates, other.rates))

    def __hash__(self) -> int:
        return hash(self.rates.tobytes())


@dataclass(frozen=True)
class ProbVector:
    """Вероятностный вектор (стационарное распределение)"""
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", _readonly(self.weights))

    @property
    def n(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class TwoTimeScaleSpec:
    """
    Двухмасштабная структура Q^ε = Q̃/ε + Q̂.

    Порядок блоков задаёт нумерацию состояний s_kr: сначала все состояния
    блока 1, затем блока 2 и т.д. Создаётся через
    services.markov_chain.make_two_time_scale_spec.
    """
    fast_blocks: Tuple[Generator, ...]
    slow: Generator
    epsilon: float
    block_sizes: Tuple[int, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "fast_blocks", tuple(self.fast_blocks))
        object.__setattr__(self, "block_sizes", tuple(b.m for b in self.fast_blocks))

    @property
    def n_blocks(self) -> int:
        return len(self.fast_blocks)

    @property
    def m(self) -> int:
        return sum(self.block_sizes)

    @property
    def offsets(self) -> Tuple[int, ...]:
        """Индекс первого состояния каждого блока"""
        return tuple(int(o) for o in np.concatenate(([0], np.cumsum(self.block_sizes)[:-1])))

    @property
    def block_map(self) -> Tuple[int, ...]:
        """Номер блока k (0-based) для каждого исходного состояния"""
        return tuple(k for k, size in enumerate(self.block_sizes) for _ in range(size))

    def with_epsilon(self, epsilon: float) -> "TwoTimeScaleSpec":
        return TwoTimeScaleSpec(fast_blocks=self.fast_blocks, slow=self.slow, epsilon=epsilon)
