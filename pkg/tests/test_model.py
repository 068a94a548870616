"""Environment-level contracts: lookups, tie-breaking, partitions, sampling."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ts_observer.model import (
    ActionTrace,
    BetaBernoulliModel,
    ParameterGrid,
    draw_parameter_index,
    mean_reward,
    optimal_action,
    optimal_partition,
    realized_optimal_action,
    sample_reward,
    sample_reward_for,
    true_mean_row,
    validate_grid,
    validate_trace,
)


def grid_2x2():
    return ParameterGrid(means=[[0.9, 0.1], [0.1, 0.9]], prior=[0.5, 0.5])


class TestMeanReward:
    def test_lookup(self):
        g = ParameterGrid(means=[[0.9, 0.1]], prior=[1.0])
        assert mean_reward(g, 0, 0) == 0.9
        assert mean_reward(g, 0, 1) == 0.1

    def test_purity(self):
        g = grid_2x2()
        assert all(mean_reward(g, 1, 1) == 0.9 for _ in range(5))

    def test_out_of_range(self):
        g = grid_2x2()
        with pytest.raises(IndexError):
            mean_reward(g, 2, 0)
        with pytest.raises(IndexError):
            mean_reward(g, 0, 5)


class TestOptimalAction:
    def test_tie_breaks_to_smallest_index(self):
        g = ParameterGrid(means=[[0.5, 0.5]], prior=[1.0])
        assert optimal_action(g, 0) == 0

    def test_unique_argmax(self):
        g = ParameterGrid(means=[[0.1, 0.9]], prior=[1.0])
        assert optimal_action(g, 0) == 1

    def test_partial_tie(self):
        g = ParameterGrid(means=[[0.3, 0.7, 0.7]], prior=[1.0])
        assert optimal_action(g, 0) == 1

    def test_never_beaten_by_smaller_index(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            means = np.round(rng.random((4, 5)), 1)  # rounding forces ties
            g = ParameterGrid(means=means, prior=np.full(4, 0.25))
            for m in range(4):
                a = optimal_action(g, m)
                assert means[m, a] == means[m].max()
                assert not np.any(means[m, :a] >= means[m, a])


class TestOptimalPartition:
    def test_distinct_rows(self):
        assert optimal_partition(grid_2x2()) == {0: (0,), 1: (1,)}

    def test_all_ties_collapse_to_first_action(self):
        g = ParameterGrid(means=[[0.5, 0.5], [0.5, 0.5]], prior=[0.5, 0.5])
        assert optimal_partition(g) == {0: (0, 1), 1: ()}

    def test_three_rows_from_per_row_argmax(self):
        # oracle: apply the action rule row by row
        g = ParameterGrid(
            means=[[0.9, 0.1], [0.1, 0.9], [0.5, 0.5]],
            prior=[1 / 3, 1 / 3, 1 / 3],
        )
        assert optimal_partition(g) == {0: (0, 2), 1: (1,)}

    @given(
        m=st.integers(1, 6),
        k=st.integers(1, 5),
        data=st.data(),
    )
    @settings(max_examples=60, deadline=None)
    def test_is_a_partition(self, m, k, data):
        seed = data.draw(st.integers(0, 2**32 - 1))
        rng = np.random.default_rng(seed)
        means = np.round(rng.random((m, k)), 1)
        g = ParameterGrid(means=means, prior=np.full(m, 1.0 / m))
        part = optimal_partition(g)
        assert set(part.keys()) == set(range(k))
        seen: list[int] = []
        for members in part.values():
            seen.extend(members)
        assert sorted(seen) == list(range(m))  # disjoint + covering

    def test_optimal_gap_nonnegative(self):
        rng = np.random.default_rng(3)
        means = rng.random((5, 4))
        g = ParameterGrid(means=means, prior=np.full(5, 0.2))
        for m in range(5):
            best = optimal_action(g, m)
            for a in range(4):
                assert mean_reward(g, m, best) - mean_reward(g, m, a) >= 0


class TestSampleReward:
    def test_degenerate_one(self):
        g = ParameterGrid(means=[[1.0]], prior=[1.0])
        rng = np.random.default_rng(0)
        assert all(sample_reward(g, 0, 0, rng) == 1.0 for _ in range(200))

    def test_degenerate_zero(self):
        g = ParameterGrid(means=[[0.0]], prior=[1.0])
        rng = np.random.default_rng(0)
        assert all(sample_reward(g, 0, 0, rng) == 0.0 for _ in range(200))

    def test_bernoulli_mean_converges(self):
        # law of large numbers at n = 1e5: SE ~ 0.0014, tolerance 0.01
        g = ParameterGrid(means=[[0.7]], prior=[1.0])
        rng = np.random.default_rng(12345)
        draws = [sample_reward(g, 0, 0, rng) for _ in range(100_000)]
        assert abs(np.mean(draws) - 0.7) < 0.01

    def test_gaussian_mean_and_spread(self):
        g = ParameterGrid(
            means=[[2.0]], prior=[1.0], reward_family="gaussian", noise_sigma=0.5
        )
        rng = np.random.default_rng(9)
        draws = np.array([sample_reward(g, 0, 0, rng) for _ in range(50_000)])
        assert abs(draws.mean() - 2.0) < 0.01
        assert abs(draws.std() - 0.5) < 0.01

    def test_reproducible_stream(self):
        g = grid_2x2()
        a = [sample_reward(g, 0, 0, np.random.default_rng(7)) for _ in range(1)]
        b = [sample_reward(g, 0, 0, np.random.default_rng(7)) for _ in range(1)]
        rng1, rng2 = np.random.default_rng(11), np.random.default_rng(11)
        seq1 = [sample_reward(g, 0, 1, rng1) for _ in range(100)]
        seq2 = [sample_reward(g, 0, 1, rng2) for _ in range(100)]
        assert a == b and seq1 == seq2


class TestValidateGrid:
    def test_valid(self):
        assert validate_grid(grid_2x2()) == []

    def test_unnormalized_prior(self):
        g = ParameterGrid(means=[[0.5], [0.5]], prior=[0.6, 0.6])
        assert any("prior" in v for v in validate_grid(g))

    def test_bernoulli_mean_out_of_support(self):
        g = ParameterGrid(means=[[1.3]], prior=[1.0])
        assert any("[0, 1]" in v for v in validate_grid(g))

    def test_non_finite_mean(self):
        g = ParameterGrid(
            means=[[np.inf]], prior=[1.0], reward_family="gaussian", noise_sigma=1.0
        )
        assert any("finite" in v for v in validate_grid(g))

    def test_gaussian_needs_sigma(self):
        g = ParameterGrid(means=[[0.5]], prior=[1.0], reward_family="gaussian")
        assert any("noise_sigma" in v for v in validate_grid(g))


class TestBetaBernoulliModel:
    def test_prior_draw_in_unit_cube(self):
        m = BetaBernoulliModel(4)
        draws = m.draw_true_means(np.random.default_rng(0))
        assert draws.shape == (4,) and np.all((draws >= 0) & (draws <= 1))

    def test_dispatch_helpers(self):
        m = BetaBernoulliModel(3)
        truth = np.array([0.2, 0.8, 0.5])
        assert realized_optimal_action(m, truth) == 1
        assert np.array_equal(true_mean_row(m, truth), truth)
        rng = np.random.default_rng(1)
        rewards = [sample_reward_for(m, truth, 1, rng) for _ in range(2000)]
        assert abs(np.mean(rewards) - 0.8) < 0.03

    def test_rejects_bad_prior(self):
        with pytest.raises(ValueError):
            BetaBernoulliModel(2, prior_alpha=0.0)


class TestActionTrace:
    def test_times_are_one_based(self):
        tr = ActionTrace(actions=[0, 1, 0], rewards=[1.0, 0.0, 1.0])
        assert list(tr.times) == [1, 2, 3]
        assert len(tr) == 3

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ActionTrace(actions=[0, 1], rewards=[1.0])

    def test_validate_against_model(self):
        tr = ActionTrace(actions=[0, 5], rewards=[1.0, 0.5])
        problems = validate_trace(tr, grid_2x2())
        assert any("actions" in p for p in problems)
        assert any("rewards" in p for p in problems)
        ok = ActionTrace(actions=[0, 1], rewards=[1.0, 0.0])
        assert validate_trace(ok, grid_2x2()) == []


def test_draw_parameter_index_matches_prior():
    g = ParameterGrid(means=[[0.5], [0.5], [0.5]], prior=[0.2, 0.3, 0.5])
    rng = np.random.default_rng(42)
    draws = np.array([draw_parameter_index(g, rng) for _ in range(30_000)])
    freqs = np.bincount(draws, minlength=3) / draws.size
    assert np.allclose(freqs, [0.2, 0.3, 0.5], atol=0.02)


def test_point_mass_prior_always_drawn():
    g = ParameterGrid(means=[[0.5], [0.5]], prior=[1.0, 0.0])
    rng = np.random.default_rng(0)
    assert all(draw_parameter_index(g, rng) == 0 for _ in range(500))
