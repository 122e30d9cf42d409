"""Наборы параметров задач, общие для тестов"""
from functools import lru_cache
from pathlib import Path

from src.models.markov import Generator
from src.models.problem import (
    CallObstacle, ConstantCoefficients, ConstantObstacle, GbmLinearCoefficients,
    ProblemSpec, RewardModel, ZeroFunction
)
from src.models.solution import SolverOptions
from src.services.free_boundary import classify_regions
from src.services.hjb_solver import build_grid, solve
from src.services.markov_chain import assemble_generator, make_two_time_scale_spec, validate_generator

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

# Базовые параметры: r=5, b=(2.125, 0.875), σ=(1, 1), K=1, λ₁=λ₂=1
BASIC_B = (2.125, 0.875)
BASIC_SIGMA = (1.0, 1.0)
BASIC_R = 5.0
STRIKE = 1.0

FAST_OPTS = SolverOptions(omega=1.9, max_inner=200_000)


def basic_spec(theta: float = 0.01) -> ProblemSpec:
    return ProblemSpec(
        m=2,
        chain=validate_generator([[-1.0, 1.0], [1.0, -1.0]]),
        coeffs=GbmLinearCoefficients(b=list(BASIC_B), sigma=list(BASIC_SIGMA)),
        rewards=RewardModel(running=ZeroFunction(), terminal=CallObstacle(strike=STRIKE)),
        r=BASIC_R,
        theta=theta,
        domain=(0.0, 6.0),
    )


def single_regime_spec(b: float = 2.125, sigma: float = 1.0, x_max: float = 6.0) -> ProblemSpec:
    return ProblemSpec(
        m=1,
        chain=Generator([[0.0]]),
        coeffs=GbmLinearCoefficients(b=[b], sigma=[sigma]),
        rewards=RewardModel(terminal=CallObstacle(strike=STRIKE)),
        r=BASIC_R,
        theta=0.0,
        domain=(0.0, x_max),
    )


def constant_obstacle_spec(level: float = 2.0) -> ProblemSpec:
    return ProblemSpec(
        m=2,
        chain=validate_generator([[-3.0, 3.0], [0.5, -0.5]]),
        coeffs=ConstantCoefficients(b=[0.3, -0.2], sigma=[0.4, 0.7]),
        rewards=RewardModel(terminal=ConstantObstacle(value=level)),
        r=0.5,
        theta=0.2,
        domain=(0.0, 1.0),
    )


def four_state_tts(epsilon: float = 1.0):
    block = [[-2.0, 2.0], [2.0, -2.0]]
    slow = [
        [-1.0, 0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0, 1.0],
        [1.0, 0.0, -1.0, 0.0],
        [0.0, 1.0, 0.0, -1.0],
    ]
    return make_two_time_scale_spec([block, block], slow, epsilon)


def four_state_spec(theta: float = 0.01, epsilon: float = 1.0) -> ProblemSpec:
    return ProblemSpec(
        m=4,
        chain=assemble_generator(four_state_tts(epsilon)),
        coeffs=GbmLinearCoefficients(b=[2.5, 1.75, 1.25, 0.5], sigma=[1.0] * 4),
        rewards=RewardModel(terminal=CallObstacle(strike=STRIKE)),
        r=BASIC_R,
        theta=theta,
        domain=(0.0, 6.0),
    )


@lru_cache(maxsize=None)
def solved_basic(theta: float, h: float = 0.01):
    """Решение базовой задачи, кэшируется на сессию"""
    grid = build_grid(0.0, 6.0, h)
    sol = solve(basic_spec(theta), grid, FAST_OPTS)
    return sol, classify_regions(sol)


