"""Enumeration oracle, tower residuals, regret and counterexample reports."""

import math

import numpy as np
import pytest

from ts_observer.diagnostics import (
    UnsupportedInstanceError,
    bayes_regret_estimate,
    counterexample_report,
    default_verification_grid,
    enumerate_exact,
    history_distribution,
    iter_nodes,
    log_count_ratio,
    log_count_study,
    martingale_check,
    posterior_convergence_report,
)
from ts_observer.harness import derive_seed
from ts_observer.model import BetaBernoulliModel, ParameterGrid, draw_parameter_index
from ts_observer.policies import (
    ThompsonDiscretePolicy,
    UniformRandomPolicy,
    build_policy,
    run_episode,
)


class TestEnumerateExact:
    def test_root_probability_vector_symmetric(self):
        root = enumerate_exact(default_verification_grid(), 1)
        assert root.probability == 1.0
        np.testing.assert_array_equal(root.p_vector, [0.5, 0.5])

    def test_hand_computed_child(self):
        root = enumerate_exact(default_verification_grid(), 1)
        child = next(c for c in root.children if c.history == ((0, 1.0),))
        np.testing.assert_allclose(child.belief.weights, [0.9, 0.1], atol=1e-15)
        np.testing.assert_allclose(child.p_vector, [0.9, 0.1], atol=1e-15)
        # P(a=0) * P(r=1 | a=0) = 0.5 * (0.5*0.9 + 0.5*0.1) = 0.25
        assert abs(child.probability - 0.25) < 1e-15

    def test_reward_predictive_by_hand(self):
        root = enumerate_exact(default_verification_grid(), 1)
        p_r1_given_a0 = sum(
            c.probability for c in root.children if c.history == ((0, 1.0),)
        ) / sum(c.probability for c in root.children if c.history[0][0] == 0)
        assert abs(p_r1_given_a0 - 0.5) < 1e-15

    def test_sibling_probabilities_sum_to_parent(self):
        root = enumerate_exact(default_verification_grid(), 3)
        for node in iter_nodes(root):
            if node.children:
                total = sum(c.probability for c in node.children)
                assert abs(total - node.probability) < 1e-12

    def test_depth_probabilities_sum_to_one(self):
        root = enumerate_exact(default_verification_grid(), 4)
        by_depth: dict[int, float] = {}
        for node in iter_nodes(root):
            by_depth[node.depth] = by_depth.get(node.depth, 0.0) + node.probability
        for depth, mass in by_depth.items():
            assert abs(mass - 1.0) < 1e-10, f"depth {depth} mass {mass}"

    def test_non_bernoulli_rejected(self):
        g = ParameterGrid(
            means=[[0.0, 1.0]], prior=[1.0], reward_family="gaussian", noise_sigma=1.0
        )
        with pytest.raises(UnsupportedInstanceError):
            enumerate_exact(g, 2)

    def test_invalid_grid_rejected(self):
        g = ParameterGrid(means=[[0.5], [0.5]], prior=[0.6, 0.6])
        with pytest.raises(UnsupportedInstanceError):
            enumerate_exact(g, 2)

    def test_oversized_instance_rejected(self):
        with pytest.raises(UnsupportedInstanceError):
            enumerate_exact(default_verification_grid(), 12)

    def test_zero_probability_branches_pruned(self):
        g = ParameterGrid(means=[[1.0, 0.0]], prior=[1.0])
        root = enumerate_exact(g, 2)
        # point mass, action 0 always succeeds: a single path survives
        for node in iter_nodes(root):
            assert node.probability == 1.0
            assert all(a == 0 and r == 1.0 for a, r in node.history)


class TestMartingaleCheck:
    def test_root_tower_identity_by_hand(self):
        # After playing a0: r=1 -> posterior (.9,.1); r=0 -> (.1,.9); each
        # with predictive probability .5, so E[p_0] = .5*.9 + .5*.1 = .5,
        # exactly the root's p_0.
        root = enumerate_exact(default_verification_grid(), 1)
        a0_children = [c for c in root.children if c.history[0][0] == 0]
        mixed_p0 = sum(
            (c.probability / 0.5) * c.p_vector[0] for c in a0_children
        )
        assert abs(mixed_p0 - 0.5) < 1e-15
        report = martingale_check(root)
        assert report.max_residual < 1e-12

    def test_point_mass_prior_residuals_at_float_noise(self):
        # p-vectors are constant one-hot along every path; the only residual
        # left is the ulp-level noise of the probability bookkeeping
        g = ParameterGrid(means=[[0.3, 0.7], [0.9, 0.1]], prior=[1.0, 0.0])
        report = martingale_check(enumerate_exact(g, 4))
        assert report.max_residual < 1e-15

    def test_default_instance_deep(self):
        report = martingale_check(enumerate_exact(default_verification_grid(), 6))
        assert report.max_residual < 1e-10
        assert report.subsets_checked == 3  # {0}, {1}, {0,1}

    def test_three_action_subset_count(self):
        g = ParameterGrid(
            means=[[0.9, 0.1, 0.5], [0.1, 0.9, 0.5], [0.2, 0.2, 0.9]],
            prior=[1 / 3, 1 / 3, 1 / 3],
        )
        report = martingale_check(enumerate_exact(g, 3))
        assert report.subsets_checked == 7  # all nonempty subsets of 3 actions
        assert report.max_residual < 1e-10


class TestSimulationAgreesWithEnumeration:
    def test_depth2_histories_within_4_se(self):
        grid = default_verification_grid()
        root = enumerate_exact(grid, 2)
        exact = history_distribution(root, 2, drop_last_reward=True)
        assert abs(sum(exact.values()) - 1.0) < 1e-12

        n = 20_000
        counts: dict[tuple, int] = {}
        policy = ThompsonDiscretePolicy.from_prior(grid)
        for i in range(n):
            ss = np.random.SeedSequence(derive_seed(55, i))
            theta_ss, episode_ss = ss.spawn(2)
            theta = draw_parameter_index(grid, np.random.default_rng(theta_ss))
            res = run_episode(grid, theta, policy, 2, episode_ss, snapshot_p=False)
            tr = res.trace
            key = (
                (int(tr.actions[0]), float(tr.rewards[0])),
                int(tr.actions[1]),
            )
            counts[key] = counts.get(key, 0) + 1

        assert set(counts) <= set(exact)
        for key, p in exact.items():
            emp = counts.get(key, 0) / n
            se = math.sqrt(p * (1 - p) / n)
            assert abs(emp - p) <= 4 * se + 1e-12, (key, emp, p)


class TestBayesRegret:
    def test_point_mass_prior_zero_regret(self):
        g = ParameterGrid(means=[[0.2, 0.9]], prior=[1.0])
        policy = ThompsonDiscretePolicy.from_prior(g)
        report = bayes_regret_estimate(g, policy, 50, 10, 0)
        np.testing.assert_array_equal(report.per_step_mean, np.zeros(50))

    def test_uniform_baseline_half_gap(self):
        # closed form: under either parameter the gap is 0.8 when the wrong
        # arm is played, and uniform plays it with probability 1/2
        g = default_verification_grid()
        report = bayes_regret_estimate(g, UniformRandomPolicy(2), 200, 200, 3)
        overall = float(report.per_step_mean.mean())
        assert abs(overall - 0.4) < 0.01
        # linear regret: time-averaged cumulative regret stays flat
        rows = report.at_checkpoints([10, 100, 200])
        assert all(abs(r["regret_over_t"] - 0.4) < 0.05 for r in rows)

    def test_thompson_regret_declines(self):
        g = default_verification_grid()
        policy = ThompsonDiscretePolicy.from_prior(g)
        report = bayes_regret_estimate(g, policy, 1000, 100, 17)
        rows = report.at_checkpoints([10, 100, 1000])
        averages = [r["regret_over_t"] for r in rows]
        assert averages[0] > averages[1] > averages[2]

    def test_checkpoint_validation(self):
        g = default_verification_grid()
        report = bayes_regret_estimate(g, UniformRandomPolicy(2), 10, 2, 0)
        with pytest.raises(ValueError):
            report.at_checkpoints([11])


class TestPosteriorConvergence:
    def test_point_mass_prior_gap_zero_at_t1(self):
        g = ParameterGrid(means=[[0.2, 0.9]], prior=[1.0])
        report = posterior_convergence_report(g, 1, 5, 0)
        assert report.median_gap == 0.0

    def test_all_tie_grid_gap_zero(self):
        g = ParameterGrid(means=[[0.5, 0.5], [0.5, 0.5]], prior=[0.5, 0.5])
        report = posterior_convergence_report(g, 10, 10, 0)
        assert report.median_gap == 0.0
        assert all(r.optimal_action == 0 for r in report.rows)

    def test_separated_instance_concentrates(self):
        report = posterior_convergence_report(default_verification_grid(), 300, 20, 1)
        assert report.median_gap < 0.05
        for row in report.rows:
            assert row.terminal_probs[row.optimal_action] == max(row.terminal_probs)


class TestLogCount:
    def test_never_played_arm_ratio_zero(self):
        m = BetaBernoulliModel(3)
        truth = np.array([0.9, 0.5, 0.1])
        ratios = log_count_ratio([0] * 100, m, truth, [10, 100])
        assert ratios[1] == ((10, 0.0), (100, 0.0))
        assert ratios[2] == ((10, 0.0), (100, 0.0))

    def test_optimal_arm_excluded(self):
        m = BetaBernoulliModel(2)
        ratios = log_count_ratio([0, 1] * 50, m, np.array([0.9, 0.1]), [10, 100])
        assert 0 not in ratios and 1 in ratios

    def test_uniform_ratio_grows_linearly(self):
        # N_a(t) ~ t/K so N/log t blows up: ratio between checkpoints is
        # ~ (t2/t1) * (log t1 / log t2) >> 3 for a decade jump
        m = BetaBernoulliModel(2)
        truth = np.array([0.9, 0.1])
        report = log_count_study(
            m, UniformRandomPolicy(2), 10_000, 10, 0, [100, 10_000], truth
        )
        lo, hi = report.median_ratios[1]
        assert hi / lo > 3

    def test_checkpoint_validation(self):
        m = BetaBernoulliModel(2)
        with pytest.raises(ValueError):
            log_count_ratio([0, 1], m, np.array([0.9, 0.1]), [2])
        with pytest.raises(ValueError):
            log_count_ratio([0, 1] * 5, m, np.array([0.9, 0.1]), [1, 5])


class TestCounterexample:
    def test_forced_plays_at_t100(self):
        g = default_verification_grid()
        report = counterexample_report(g, 1, 100, 3, 0, checkpoints=[10, 100])
        assert report.forced_plays == 10

    def test_fixed_count_grows_while_average_regret_falls(self):
        g = default_verification_grid()
        report = counterexample_report(
            g, 1, 10_000, 5, 7, checkpoints=[100, 1000, 10_000]
        )
        counts = [r.mean_fixed_count for r in report.checkpoint_rows]
        regime_freqs = [r.suboptimal_regime_frequency for r in report.checkpoint_rows]
        regret = [r.mean_regret_over_t for r in report.checkpoint_rows]
        assert counts[0] < counts[1] < counts[2]
        # where the fixed arm is realized-suboptimal its frequency decays
        assert not math.isnan(regime_freqs[0])
        assert regime_freqs[2] < regime_freqs[1] < regime_freqs[0]
        assert regret[0] > regret[1] > regret[2]

    def test_requires_suboptimal_fixed_action(self):
        g = ParameterGrid(means=[[0.9, 0.1], [0.9, 0.5]], prior=[0.5, 0.5])
        with pytest.raises(ValueError):
            counterexample_report(g, 0, 100, 1, 0)  # arm 0 optimal everywhere


def test_composite_policy_regret_beats_uniform():
    # the composite inherits near-Thompson regret; uniform stays linear
    g = default_verification_grid()
    composite = build_policy(g, "square_composite", fixed_action=1)
    rep_c = bayes_regret_estimate(g, composite, 400, 60, 5)
    rep_u = bayes_regret_estimate(g, UniformRandomPolicy(2), 400, 60, 5)
    assert rep_c.cumulative[-1] < rep_u.cumulative[-1] / 2
