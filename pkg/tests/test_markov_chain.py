import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.linalg import expm

from src.core.exceptions import (
    InvalidProblemException, NegativeOffDiagonal, NotSquare, ReducibleChainException, RowSumNonzero
)
from src.models.markov import Generator
from src.services.markov_chain import (
    aggregation_matrices, assemble_generator, is_irreducible, limit_generator,
    make_two_time_scale_spec, stationary_distribution, validate_generator
)
from tests.problems import four_state_tts


def random_generator(rng: np.random.Generator, m: int, density: float = 1.0) -> np.ndarray:
    rates = rng.uniform(0.1, 3.0, size=(m, m)) * (rng.random((m, m)) < density)
    np.fill_diagonal(rates, 0.0)
    np.fill_diagonal(rates, -rates.sum(axis=1))
    return rates


class TestValidateGenerator:

    def test_two_state_generator_is_accepted(self):
        g = validate_generator([[-1.0, 1.0], [1.0, -1.0]])
        assert g.m == 2
        assert g.exit_rate(0) == 1.0

    def test_single_absorbing_state_is_accepted(self):
        assert validate_generator([[0.0]]).m == 1

    def test_negative_off_diagonal_reports_entry(self):
        with pytest.raises(NegativeOffDiagonal) as exc:
            validate_generator([[-1.0, -1.0], [2.0, -2.0]])
        assert (exc.value.i, exc.value.j) == (0, 1)

    def test_row_sum_reports_row(self):
        with pytest.raises(RowSumNonzero) as exc:
            validate_generator([[-1.0, 1.0], [1.0, -0.5]])
        assert exc.value.i == 1
        assert exc.value.row_sum == pytest.approx(0.5)

    def test_non_square_matrix(self):
        with pytest.raises(NotSquare):
            validate_generator([[0.0, 0.0]])

    def test_rates_are_read_only(self):
        g = validate_generator([[-1.0, 1.0], [1.0, -1.0]])
        with pytest.raises(ValueError):
            g.rates[0, 0] = 5.0

    def test_random_matrices_accepted_iff_valid(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            m = int(rng.integers(1, 6))
            q = rng.normal(size=(m, m))
            if rng.random() < 0.5:
                q = np.abs(q)
                np.fill_diagonal(q, 0.0)
                np.fill_diagonal(q, -q.sum(axis=1))
            off = q - np.diag(np.diag(q))
            valid = bool(np.all(off >= 0) and np.all(np.abs(q.sum(axis=1)) <= 1e-12))
            try:
                validate_generator(q)
                accepted = True
            except (NegativeOffDiagonal, RowSumNonzero):
                accepted = False
            assert accepted == valid


class TestStationaryDistribution:

    def test_symmetric_two_state(self):
        nu = stationary_distribution(validate_generator([[-2.0, 2.0], [2.0, -2.0]]))
        assert_allclose(nu.weights, [0.5, 0.5], atol=1e-14)

    def test_single_state(self):
        assert_allclose(stationary_distribution(Generator([[0.0]])).weights, [1.0])

    def test_matches_matrix_exponential(self):
        rng = np.random.default_rng(11)
        rates = random_generator(rng, 3)
        nu = stationary_distribution(validate_generator(rates))
        horizon = 1e4 / np.abs(rates).max()
        assert_allclose(nu.weights, expm(rates * horizon)[0], atol=1e-8)

    def test_residual_and_simplex(self):
        rng = np.random.default_rng(3)
        for m in (2, 4, 7, 12):
            g = validate_generator(random_generator(rng, m))
            nu = stationary_distribution(g).weights
            assert np.max(np.abs(nu @ g.rates)) <= 1e-10
            assert np.all(nu >= 0.0)
            assert nu.sum() == pytest.approx(1.0, abs=1e-12)

    def test_reducible_chain(self):
        g = validate_generator([[-1.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        assert not is_irreducible(g)
        with pytest.raises(ReducibleChainException):
            stationary_distribution(g)


class TestTwoTimeScale:

    def test_assembled_four_state_generator(self):
        q = assemble_generator(four_state_tts(1.0)).rates
        expected = np.array([
            [-3.0, 2.0, 1.0, 0.0],
            [2.0, -3.0, 0.0, 1.0],
            [1.0, 0.0, -3.0, 2.0],
            [0.0, 1.0, 2.0, -3.0],
        ])
        assert_allclose(q, expected, atol=1e-15)

    def test_zero_slow_part_gives_block_diagonal(self):
        block = [[-2.0, 2.0], [1.0, -1.0]]
        tts = make_two_time_scale_spec([block, block], np.zeros((4, 4)), 1.0)
        q = assemble_generator(tts).rates
        assert_allclose(q[:2, :2], block)
        assert_allclose(q[2:, 2:], block)
        assert_allclose(q[:2, 2:], 0.0)

    def test_epsilon_scales_only_fast_entries(self):
        q1 = assemble_generator(four_state_tts(0.1)).rates
        q2 = assemble_generator(four_state_tts(0.05)).rates
        fast = np.zeros((4, 4), dtype=bool)
        fast[:2, :2] = fast[2:, 2:] = True
        np.fill_diagonal(fast, False)
        assert_allclose(q2[fast], 2.0 * q1[fast], rtol=1e-14)
        assert_allclose(q2[~fast & ~np.eye(4, dtype=bool)], q1[~fast & ~np.eye(4, dtype=bool)])
        assert_allclose(q1[fast], 20.0)

    def test_limit_generator_for_four_state_example(self):
        assert_allclose(limit_generator(four_state_tts()).rates, [[-1.0, 1.0], [1.0, -1.0]], atol=1e-12)

    def test_limit_generator_with_zero_slow_part(self):
        block = [[-1.0, 1.0], [1.0, -1.0]]
        tts = make_two_time_scale_spec([block, block], np.zeros((4, 4)), 1.0)
        assert_allclose(limit_generator(tts).rates, np.zeros((2, 2)))

    def test_limit_generator_matches_direct_product(self):
        rng = np.random.default_rng(5)
        blocks = [random_generator(rng, size) for size in (2, 3, 1)]
        slow = random_generator(rng, 6)
        tts = make_two_time_scale_spec(blocks, slow, 0.3)

        weights = np.zeros((3, 6))
        ones = np.zeros((6, 3))
        offset = 0
        for k, block in enumerate(blocks):
            size = block.shape[0]
            nu = expm(block * 1e4)[0] if size > 1 else np.ones(1)
            weights[k, offset:offset + size] = nu
            ones[offset:offset + size, k] = 1.0
            offset += size

        q_bar = limit_generator(tts).rates
        assert_allclose(q_bar, weights @ slow @ ones, atol=1e-8)
        assert np.max(np.abs(q_bar.sum(axis=1))) <= 1e-10

    def test_aggregation_matrices_shapes(self):
        weights, ones = aggregation_matrices(four_state_tts())
        assert weights.shape == (2, 4)
        assert ones.shape == (4, 2)
        assert_allclose(weights.sum(axis=1), 1.0)

    def test_block_map(self):
        assert four_state_tts().block_map == (0, 0, 1, 1)

    def test_reducible_fast_block_is_rejected(self):
        reducible = [[-1.0, 1.0], [0.0, 0.0]]
        with pytest.raises(ReducibleChainException):
            make_two_time_scale_spec([reducible], np.zeros((2, 2)), 1.0)

    def test_size_mismatch_is_rejected(self):
        with pytest.raises(InvalidProblemException):
            make_two_time_scale_spec([[[-1.0, 1.0], [1.0, -1.0]]], np.zeros((3, 3)), 1.0)

    def test_non_positive_epsilon_is_rejected(self):
        with pytest.raises(InvalidProblemException):
            make_two_time_scale_spec([[[0.0]]], [[0.0]], 0.0)
