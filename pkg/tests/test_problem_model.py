import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.core.exceptions import InvalidProblemException, OutOfDomain
from src.models.markov import Generator
from src.models.problem import (
    ConstantCoefficients, ConstantFunction, ConstantObstacle, LinearObstacle, ProblemSpec,
    RewardModel, TabulatedCoefficients, TabulatedObstacle
)
from src.services.problem_model import (
    ambiguity_penalty, complementarity_residual, evaluate_coefficients, frozen_hamiltonian,
    hamiltonian_residual, perpetual_call_threshold, perpetual_call_value, worst_case_control
)
from tests.problems import basic_spec


def constant_spec(b=0.0, sigma=0.0, theta=1.0, q_max=10.0, obstacle=1.0) -> ProblemSpec:
    return ProblemSpec(
        m=2,
        chain=Generator([[-1.0, 1.0], [2.0, -2.0]]),
        coeffs=ConstantCoefficients(b=[b, b], sigma=[sigma, sigma]),
        rewards=RewardModel(terminal=ConstantObstacle(value=obstacle)),
        r=0.5,
        theta=theta,
        q_max=q_max,
        domain=(0.0, 4.0),
    )


def random_spec(rng: np.random.Generator, m: int, theta: float, shift: float = 0.0) -> ProblemSpec:
    """Случайные постоянные коэффициенты и генератор, f ≡ shift"""
    rates = rng.uniform(0.0, 3.0, (m, m))
    np.fill_diagonal(rates, 0.0)
    np.fill_diagonal(rates, -rates.sum(axis=1))
    return ProblemSpec(
        m=m,
        chain=Generator(rates.tolist()),
        coeffs=ConstantCoefficients(b=rng.uniform(-2.0, 2.0, m).tolist(),
                                    sigma=rng.uniform(0.1, 2.0, m).tolist()),
        rewards=RewardModel(running=ConstantFunction(value=[shift] * m),
                            terminal=ConstantObstacle(value=0.0)),
        r=rng.uniform(0.1, 2.0),
        theta=theta,
        domain=(0.0, 4.0),
    )


class TestEvaluateCoefficients:

    def test_gbm_linear_regime_one(self):
        b, sigma, f, g = evaluate_coefficients(basic_spec(), 2.0, 0)
        assert (b, sigma, f, g) == (4.25, 2.0, 0.0, 1.0)

    def test_call_obstacle_vanishes_at_strike(self):
        assert evaluate_coefficients(basic_spec(), 1.0, 1)[3] == 0.0

    def test_degenerate_constant_diffusion(self):
        b, sigma, _, _ = evaluate_coefficients(constant_spec(), 3.7, 1)
        assert (b, sigma) == (0.0, 0.0)

    def test_regime_index_checked(self):
        with pytest.raises(InvalidProblemException):
            evaluate_coefficients(basic_spec(), 1.0, 2)

    def test_tabulated_interpolation_and_hull(self):
        coeffs = TabulatedCoefficients(x_min=0.0, x_max=2.0, b=[[0.0, 1.0, 4.0]], sigma=[[1.0, 1.0, 1.0]])
        assert coeffs.drift(1.5, 0) == pytest.approx(2.5)
        with pytest.raises(OutOfDomain):
            coeffs.drift(2.5, 0)

    def test_single_row_tabulated_obstacle_is_shared(self):
        obstacle = TabulatedObstacle(x_min=0.0, x_max=1.0, values=[[0.0, 2.0]])
        assert obstacle.regime_independent
        assert obstacle(0.5, 3) == pytest.approx(1.0)


class TestWorstCaseControl:

    def test_zero_slope(self):
        assert worst_case_control(basic_spec(1.0), 1.0, 0, 0.0) == 0.0

    def test_direct_formula(self):
        assert worst_case_control(basic_spec(0.01), 1.0, 0, 1.0) == pytest.approx(-0.01)

    def test_clamp(self):
        spec = constant_spec(sigma=1.0, theta=1.0, q_max=10.0)
        assert worst_case_control(spec, 1.0, 0, 100.0) == -10.0

    def test_penalty_is_zero_without_ambiguity(self):
        assert ambiguity_penalty(0.0, 3.0) == 0.0
        assert ambiguity_penalty(0.5, 2.0) == pytest.approx(4.0)

    def test_random_controls_are_odd_and_bounded(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            theta = rng.uniform(0.0, 2.0)
            q_max = rng.uniform(0.1, 5.0)
            spec = constant_spec(sigma=rng.uniform(0.1, 2.0), theta=theta, q_max=q_max)
            dv = rng.uniform(-10.0, 10.0)
            q = worst_case_control(spec, 1.0, 0, dv)
            assert worst_case_control(spec, 1.0, 0, -dv) == -q
            assert -q_max <= q <= q_max


class TestHamiltonian:

    def test_constant_value_gives_discounted_level(self):
        spec = constant_spec(b=0.3, sigma=0.5)
        assert hamiltonian_residual(spec, 0, 1.0, [2.5, 2.5], 0.0, 0.0) == pytest.approx(0.5 * 2.5)

    def test_worked_example(self):
        spec = ProblemSpec(
            m=2,
            chain=Generator([[-1.0, 1.0], [1.0, -1.0]]),
            coeffs=ConstantCoefficients(b=[1.0, 1.0], sigma=[math.sqrt(2.0), math.sqrt(2.0)]),
            rewards=RewardModel(terminal=ConstantObstacle(value=0.0)),
            r=1.0,
            theta=1.0,
            domain=(0.0, 1.0),
        )
        # 1 − 1·1 + (1/2)·2·1 − (1/2)·2·0 − (0 − 1) − 0 = 2
        assert hamiltonian_residual(spec, 0, 0.5, [1.0, 0.0], 1.0, 0.0) == pytest.approx(2.0)

    def test_quadratic_value_at_origin(self):
        spec = ProblemSpec(
            m=1,
            chain=Generator([[0.0]]),
            coeffs=ConstantCoefficients(b=[0.0], sigma=[math.sqrt(2.0)]),
            rewards=RewardModel(terminal=ConstantObstacle(value=0.0)),
            r=1.0,
            theta=0.0,
            domain=(-1.0, 1.0),
        )
        # v = x², v(0) = 0, v′(0) = 0, v″ = 2
        assert hamiltonian_residual(spec, 0, 0.0, [0.0], 0.0, 2.0) == pytest.approx(-2.0)

    def test_running_reward_shifts_residual(self):
        rng = np.random.default_rng(11)
        for seed in range(50):
            m, theta = 3, rng.uniform(0.0, 1.0)
            shift = rng.uniform(-3.0, 3.0)
            base = random_spec(np.random.default_rng(seed), m, theta)
            shifted = random_spec(np.random.default_rng(seed), m, theta, shift=shift)
            i = int(rng.integers(m))
            x, v_all = rng.uniform(0.0, 4.0), rng.uniform(-2.0, 2.0, m)
            dv, ddv = rng.uniform(-2.0, 2.0, 2)
            assert hamiltonian_residual(shifted, i, x, v_all, dv, ddv) == pytest.approx(
                hamiltonian_residual(base, i, x, v_all, dv, ddv) - shift, abs=1e-12)

    def test_without_ambiguity_residual_is_linear_operator(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            m = int(rng.integers(1, 5))
            spec = random_spec(rng, m, 0.0)
            i = int(rng.integers(m))
            x, v_all = rng.uniform(0.0, 4.0), rng.uniform(-2.0, 2.0, m)
            dv, ddv = rng.uniform(-2.0, 2.0, 2)
            b, sigma = spec.coeffs.b[i], spec.coeffs.sigma[i]
            # Строка генератора с диагональю: Σ_j λ_ij v_j = Σ_{j≠i} λ_ij (v_j − v_i)
            expected = (spec.r * v_all[i] - b * dv - 0.5 * sigma * sigma * ddv
                        - float(spec.chain.rates[i] @ v_all))
            assert abs(hamiltonian_residual(spec, i, x, v_all, dv, ddv) - expected) <= 1e-12

    def test_sup_form_equals_frozen_form_at_worst_case(self):
        spec = basic_spec(0.3)
        x, v_all, dv, ddv = 1.3, [0.7, 0.4], 0.9, -0.2
        q = worst_case_control(spec, x, 0, dv)
        assert frozen_hamiltonian(spec, 0, x, v_all, dv, ddv, q) == pytest.approx(
            hamiltonian_residual(spec, 0, x, v_all, dv, ddv), rel=1e-12)

    def test_sup_form_dominates_frozen_form(self):
        # Форма супремума - максимум замороженной по q
        spec = basic_spec(0.3)
        x, v_all, dv, ddv = 1.3, [0.7, 0.4], 0.9, -0.2
        sup_form = hamiltonian_residual(spec, 0, x, v_all, dv, ddv)
        for q in np.linspace(-2.0, 2.0, 21):
            assert frozen_hamiltonian(spec, 0, x, v_all, dv, ddv, q) <= sup_form + 1e-12

    def test_complementarity_at_obstacle(self):
        spec = constant_spec(obstacle=2.0)
        assert complementarity_residual(spec, 0, 1.0, [2.0, 2.0], 0.0, 0.0) == 0.0


class TestProblemSpec:

    def test_chain_size_must_match(self):
        with pytest.raises(ValidationError):
            ProblemSpec(
                m=3, chain=Generator([[-1.0, 1.0], [1.0, -1.0]]),
                coeffs=ConstantCoefficients(b=[0.0, 0.0], sigma=[1.0, 1.0]),
                rewards=RewardModel(terminal=ConstantObstacle(value=1.0)),
                r=1.0, theta=0.0, domain=(0.0, 1.0),
            )

    def test_discount_must_be_positive(self):
        with pytest.raises(ValidationError):
            ProblemSpec(
                m=2, chain=Generator([[-1.0, 1.0], [2.0, -2.0]]),
                coeffs=ConstantCoefficients(b=[0.0, 0.0], sigma=[1.0, 1.0]),
                rewards=RewardModel(terminal=ConstantObstacle(value=1.0)),
                r=0.0, theta=0.0, domain=(0.0, 1.0),
            )

    def test_regime_dependent_obstacle_flag(self):
        assert not LinearObstacle(slope=[1.0, 2.0], intercept=[0.0, 0.0]).regime_independent
        assert ConstantObstacle(value=[1.0, 1.0]).regime_independent

    def test_with_theta_keeps_other_fields(self):
        spec = basic_spec(0.01).with_theta(1.0)
        assert spec.theta == 1.0
        assert spec.r == 5.0


class TestPerpetualCall:

    def test_threshold_for_basic_regime(self):
        # β - положительный корень ½β(β−1) + 2.125β − 5 = 0
        beta = (-1.625 + math.sqrt(1.625 ** 2 + 10.0)) / 1.0
        assert perpetual_call_threshold(2.125, 1.0, 5.0, 1.0) == pytest.approx(beta / (beta - 1.0))
        assert perpetual_call_threshold(2.125, 1.0, 5.0, 1.0) == pytest.approx(2.0748, abs=1e-3)

    def test_value_pastes_into_obstacle(self):
        x_star = perpetual_call_threshold(2.125, 1.0, 5.0, 1.0)
        assert perpetual_call_value(2.125, 1.0, 5.0, 1.0, x_star) == pytest.approx(x_star - 1.0)
        assert perpetual_call_value(2.125, 1.0, 5.0, 1.0, 4.0) == pytest.approx(3.0)
        assert perpetual_call_value(2.125, 1.0, 5.0, 1.0, 0.0) == 0.0
