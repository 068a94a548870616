"""Empirical verification tools: exact enumeration, tower-property residuals,
regret estimation, posterior convergence, and the square-step counterexample.

The centerpiece is :func:`enumerate_exact`, a brute-force oracle that expands
every possible history of a discrete Thompson sampling run on a Bernoulli
grid, with exact probabilities. On that tree, :func:`martingale_check`
verifies that the optimal-action probability vector is a martingale: at every
internal node the expectation of the children's vectors equals the node's own
vector, for every subset of actions. The identity holds in exact arithmetic,
so residuals are pure floating-point noise; anything above ~1e-12 indicates a
Bayes-update bug.

The Monte Carlo reports (regret, posterior convergence, log-count ratios,
counterexample) are finite-horizon statistical surrogates for almost-sure
limit statements; they estimate trajectories, not limits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from itertools import combinations
from typing import Sequence

import numpy as np

from . import belief as bel
from .harness import derive_seed, replication_map
from .model import (
    BERNOULLI,
    Model,
    ParameterGrid,
    TrueParameter,
    draw_true_parameter,
    optimal_action,
    realized_optimal_action,
    true_mean_row,
    validate_grid,
)
from .policies import (
    Policy,
    SquareStepCompositePolicy,
    ThompsonDiscretePolicy,
    run_episode,
)


class UnsupportedInstanceError(ValueError):
    """The instance is outside what an exact/enumerable routine can handle."""


def default_verification_grid() -> ParameterGrid:
    """Smallest non-degenerate check instance: 2 parameters, 2 arms.

    Mean rows (0.9, 0.1) and (0.1, 0.9) under a uniform prior, so each
    parameter has a distinct optimal action and the partition is nontrivial.
    """
    return ParameterGrid(means=[[0.9, 0.1], [0.1, 0.9]], prior=[0.5, 0.5])


# --- exact history enumeration ----------------------------------------------

@dataclass
class EnumerationNode:
    """One history prefix with its exact probability and posterior."""

    history: tuple[tuple[int, float], ...]
    probability: float
    belief: bel.DiscreteBelief
    p_vector: np.ndarray
    children: list["EnumerationNode"] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.history)


def enumerate_exact(
    grid: ParameterGrid, horizon: int, *, max_nodes: int = 200_000
) -> EnumerationNode:
    """Expand the full tree of discrete-Thompson histories up to ``horizon``.

    Branching at a node: every action with positive selection probability
    (the exact optimal-action probability of the node's belief), then every
    reward in {0, 1} with positive predictive probability. Zero-probability
    branches are pruned; they contribute nothing to any expectation.

    Only Bernoulli grids are enumerable (finite reward alphabet). Raises
    :class:`UnsupportedInstanceError` for other families, invalid grids, or
    instances whose tree would exceed ``max_nodes``.
    """
    if grid.reward_family != BERNOULLI:
        raise UnsupportedInstanceError("exact enumeration requires Bernoulli rewards")
    problems = validate_grid(grid)
    if problems:
        raise UnsupportedInstanceError(f"invalid grid: {'; '.join(problems)}")
    if horizon < 1:
        raise UnsupportedInstanceError("horizon must be >= 1")
    branching = 2 * grid.n_actions
    if branching**horizon > max_nodes:
        raise UnsupportedInstanceError(
            f"tree of up to {branching}**{horizon} leaves exceeds max_nodes={max_nodes}"
        )

    def make_node(
        history: tuple[tuple[int, float], ...],
        probability: float,
        node_belief: bel.DiscreteBelief,
    ) -> EnumerationNode:
        p_vec = bel.optimal_action_probability(node_belief, grid).probs
        node = EnumerationNode(history, probability, node_belief, p_vec)
        if len(history) < horizon:
            for a in range(grid.n_actions):
                p_sel = float(p_vec[a])
                if p_sel == 0.0:
                    continue
                q1 = bel.predictive_reward_probability(node_belief, grid, a)
                for r, q in ((1.0, q1), (0.0, 1.0 - q1)):
                    if q == 0.0:
                        continue
                    child_belief = bel.update_discrete(node_belief, grid, a, r)
                    node.children.append(
                        make_node(
                            history + ((a, r),), probability * p_sel * q, child_belief
                        )
                    )
        return node

    return make_node((), 1.0, bel.DiscreteBelief.from_prior(grid))


def iter_nodes(root: EnumerationNode):
    """Depth-first traversal of an enumeration tree."""
    stack = [root]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children))


def history_distribution(
    root: EnumerationNode, depth: int, *, drop_last_reward: bool = False
) -> dict[tuple, float]:
    """Exact probability of every length-``depth`` history prefix.

    With ``drop_last_reward`` the final reward is marginalized out, giving
    the law of (a_1, r_1, ..., a_depth) — the quantity a simulated episode of
    ``depth`` steps exposes just after its last action.
    """
    dist: dict[tuple, float] = {}
    for node in iter_nodes(root):
        if node.depth != depth:
            continue
        key: tuple = node.history
        if drop_last_reward:
            key = node.history[:-1] + (node.history[-1][0],)
        dist[key] = dist.get(key, 0.0) + node.probability
    return dist


# --- martingale (tower property) check --------------------------------------

@dataclass(frozen=True)
class MartingaleResidualReport:
    """Tower-property residuals over an enumeration tree.

    For internal node n and action subset B the residual is
    ``| sum_children P(child | n) * p_B(child) - p_B(n) |``. All 2^K subsets
    are checked when K <= 4, singletons otherwise (the vector residual bounds
    the rest in that case up to a factor of K). ``node_residuals`` maps each
    internal node's history to its worst residual over the checked subsets.
    """

    max_residual: float
    internal_nodes: int
    subsets_checked: int
    per_depth_max: tuple[tuple[int, float], ...]
    node_residuals: dict[tuple[tuple[int, float], ...], float]

    def to_jsonable(self) -> dict:
        return {
            "max_residual": self.max_residual,
            "internal_nodes": self.internal_nodes,
            "subsets_checked": self.subsets_checked,
            "per_depth_max": [[d, r] for d, r in self.per_depth_max],
        }


def martingale_check(root: EnumerationNode) -> MartingaleResidualReport:
    k = root.p_vector.shape[0]
    if k <= 4:
        subsets = [
            np.array(c, dtype=np.intp)
            for size in range(1, k + 1)
            for c in combinations(range(k), size)
        ]
    else:
        subsets = [np.array([a], dtype=np.intp) for a in range(k)]

    max_residual = 0.0
    internal = 0
    depth_max: dict[int, float] = {}
    node_residuals: dict[tuple[tuple[int, float], ...], float] = {}
    for node in iter_nodes(root):
        if not node.children:
            continue
        internal += 1
        expected = np.zeros(k)
        for child in node.children:
            expected += (child.probability / node.probability) * child.p_vector
        delta = expected - node.p_vector
        residual = max(abs(float(delta[s].sum())) for s in subsets)
        node_residuals[node.history] = residual
        max_residual = max(max_residual, residual)
        depth_max[node.depth] = max(depth_max.get(node.depth, 0.0), residual)

    return MartingaleResidualReport(
        max_residual=max_residual,
        internal_nodes=internal,
        subsets_checked=len(subsets),
        per_depth_max=tuple(sorted(depth_max.items())),
        node_residuals=node_residuals,
    )


# --- Bayesian regret ---------------------------------------------------------

@dataclass(frozen=True)
class RegretReport:
    """Estimated per-step mean-reward gaps and their running sums.

    The per-step gap at t is the mean over replications of
    f(truth, best action) - f(truth, action played at t): the expected reward
    shortfall, averaged over the prior when the truth is redrawn each
    replication. Using mean-reward gaps instead of realized reward
    differences has the same expectation and much lower variance.
    """

    per_step_mean: np.ndarray
    per_step_se: np.ndarray
    n_replications: int

    @property
    def horizon(self) -> int:
        return self.per_step_mean.shape[0]

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.per_step_mean)

    def at_checkpoints(self, checkpoints: Sequence[int]) -> list[dict[str, float]]:
        cum = self.cumulative
        rows = []
        for t in checkpoints:
            if not 1 <= t <= self.horizon:
                raise ValueError(f"checkpoint {t} outside [1, {self.horizon}]")
            rows.append(
                {
                    "t": int(t),
                    "mean_cumulative_regret": float(cum[t - 1]),
                    "regret_over_t": float(cum[t - 1] / t),
                    "regret_over_sqrt_t": float(cum[t - 1] / math.sqrt(t)),
                }
            )
        return rows


def _gap_vector(
    model: Model,
    policy: Policy,
    horizon: int,
    master_seed: int,
    true_parameter: TrueParameter | None,
    index: int,
) -> np.ndarray:
    ss = np.random.SeedSequence(derive_seed(master_seed, index))
    theta_ss, episode_ss = ss.spawn(2)
    truth = (
        draw_true_parameter(model, np.random.default_rng(theta_ss))
        if true_parameter is None
        else true_parameter
    )
    result = run_episode(model, truth, policy, horizon, episode_ss, snapshot_p=False)
    f_row = true_mean_row(model, truth)
    return f_row[realized_optimal_action(model, truth)] - f_row[result.trace.actions]


def bayes_regret_estimate(
    model: Model,
    policy: Policy,
    horizon: int,
    n_replications: int,
    seed: int,
    *,
    true_parameter: TrueParameter | None = None,
    jobs: int | None = None,
) -> RegretReport:
    """Monte Carlo estimate of the per-step regret curve.

    The truth is redrawn from the model prior each replication unless
    ``true_parameter`` pins it.
    """
    if n_replications < 1:
        raise ValueError("n_replications must be >= 1")
    worker = partial(_gap_vector, model, policy, horizon, seed, true_parameter)
    gaps = np.array(replication_map(worker, n_replications, jobs))
    mean = gaps.mean(axis=0)
    se = (
        gaps.std(axis=0, ddof=1) / math.sqrt(n_replications)
        if n_replications > 1
        else np.zeros(horizon)
    )
    return RegretReport(mean, se, n_replications)


# --- posterior-to-indicator convergence --------------------------------------

@dataclass(frozen=True)
class PosteriorConvergenceRow:
    index: int
    true_parameter: int
    optimal_action: int
    terminal_probs: tuple[float, ...]
    gap: float  # max_a | p_T(a) - 1{a is optimal} |


@dataclass(frozen=True)
class PosteriorConvergenceReport:
    horizon: int
    rows: tuple[PosteriorConvergenceRow, ...]

    @property
    def median_gap(self) -> float:
        return float(np.median([r.gap for r in self.rows]))


def _posterior_row(
    grid: ParameterGrid, horizon: int, master_seed: int, index: int
) -> PosteriorConvergenceRow:
    ss = np.random.SeedSequence(derive_seed(master_seed, index))
    theta_ss, episode_ss = ss.spawn(2)
    truth = int(draw_true_parameter(grid, np.random.default_rng(theta_ss)))
    policy = ThompsonDiscretePolicy.from_prior(grid)
    result = run_episode(grid, truth, policy, horizon, episode_ss, snapshot_p=False)
    final: ThompsonDiscretePolicy = result.final_policy
    probs = bel.optimal_action_probability(final.belief, grid).probs
    a_star = optimal_action(grid, truth)
    indicator = np.zeros(grid.n_actions)
    indicator[a_star] = 1.0
    return PosteriorConvergenceRow(
        index=index,
        true_parameter=truth,
        optimal_action=a_star,
        terminal_probs=tuple(float(x) for x in probs),
        gap=float(np.max(np.abs(probs - indicator))),
    )


def posterior_convergence_report(
    grid: ParameterGrid,
    horizon: int,
    n_replications: int,
    seed: int,
    *,
    jobs: int | None = None,
) -> PosteriorConvergenceReport:
    """Terminal optimal-action probabilities vs. the realized optimal action.

    Each replication draws the truth from the grid prior, runs discrete
    Thompson sampling, and reports how far the terminal probability vector is
    from the indicator of the realized optimal action.
    """
    worker = partial(_posterior_row, grid, horizon, seed)
    return PosteriorConvergenceReport(
        horizon=horizon, rows=tuple(replication_map(worker, n_replications, jobs))
    )


# --- log-count diagnostic ----------------------------------------------------

def log_count_ratio(
    actions: Sequence[int],
    model: Model,
    true_parameter: TrueParameter,
    checkpoints: Sequence[int],
) -> dict[int, tuple[tuple[int, float], ...]]:
    """Visit count of each suboptimal arm divided by log t, per checkpoint.

    A bounded trajectory of these ratios is the signature of logarithmic
    suboptimal-arm growth; under a linear-visit policy the ratio blows up
    like t / log t.
    """
    ck = [int(t) for t in checkpoints]
    if len(ck) < 2:
        raise ValueError("need at least two checkpoints")
    if any(t < 2 for t in ck):
        raise ValueError("checkpoints must be >= 2 so that log t > 0")
    a = np.asarray(actions, dtype=np.int64)
    if ck[-1] > a.shape[0]:
        raise ValueError(f"checkpoint {ck[-1]} beyond trace length {a.shape[0]}")
    f_row = true_mean_row(model, true_parameter)
    a_star = realized_optimal_action(model, true_parameter)
    out: dict[int, tuple[tuple[int, float], ...]] = {}
    for arm in range(model.n_actions):
        if arm == a_star or f_row[arm] == f_row[a_star]:
            continue  # only arms that are strictly worse than the best
        hits = np.cumsum(a == arm)
        out[arm] = tuple((t, float(hits[t - 1] / math.log(t))) for t in ck)
    return out


@dataclass(frozen=True)
class LogCountReport:
    checkpoints: tuple[int, ...]
    # arm -> per-checkpoint median of N_{arm,t} / log t across replications
    median_ratios: dict[int, tuple[float, ...]]

    def max_consecutive_factor(self) -> float:
        """Largest jump factor of the medians between consecutive checkpoints."""
        worst = 1.0
        for ratios in self.median_ratios.values():
            for lo, hi in zip(ratios, ratios[1:]):
                a, b = sorted((lo, hi))
                if a == 0.0:
                    worst = max(worst, math.inf if b > 0 else 1.0)
                else:
                    worst = max(worst, b / a)
        return worst


def _log_count_worker(
    model: Model,
    policy: Policy,
    horizon: int,
    master_seed: int,
    true_parameter: TrueParameter,
    checkpoints: tuple[int, ...],
    index: int,
) -> dict[int, tuple[tuple[int, float], ...]]:
    ss = np.random.SeedSequence(derive_seed(master_seed, index))
    _, episode_ss = ss.spawn(2)
    result = run_episode(model, true_parameter, policy, horizon, episode_ss, snapshot_p=False)
    return log_count_ratio(result.trace.actions, model, true_parameter, checkpoints)


def log_count_study(
    model: Model,
    policy: Policy,
    horizon: int,
    n_replications: int,
    seed: int,
    checkpoints: Sequence[int],
    true_parameter: TrueParameter,
    *,
    jobs: int | None = None,
) -> LogCountReport:
    """Median suboptimal-arm N / log t across replications at each checkpoint."""
    ck = tuple(int(t) for t in checkpoints)
    worker = partial(_log_count_worker, model, policy, horizon, seed, true_parameter, ck)
    per_rep = replication_map(worker, n_replications, jobs)
    arms = sorted(per_rep[0].keys())
    medians = {
        arm: tuple(
            float(np.median([rep[arm][i][1] for rep in per_rep]))
            for i in range(len(ck))
        )
        for arm in arms
    }
    return LogCountReport(checkpoints=ck, median_ratios=medians)


# --- square-step counterexample ----------------------------------------------

@dataclass(frozen=True)
class CounterexampleCheckpointRow:
    t: int
    mean_regret_over_t: float
    mean_fixed_count: float
    mean_fixed_frequency: float
    # frequency among replications whose realized truth makes the fixed
    # action suboptimal (the regime the construction is about); NaN when no
    # replication landed there
    suboptimal_regime_frequency: float


@dataclass(frozen=True)
class CounterexampleReport:
    """Sublinear regret without vanishing visits, made visible.

    ``forced_plays`` counts plays at perfect-square steps (always the fixed
    action, exactly isqrt(horizon) of them), while the checkpoint rows show
    time-average regret falling as the fixed arm's cumulative visit count
    keeps growing.
    """

    horizon: int
    fixed_action: int
    n_replications: int
    forced_plays: int
    checkpoint_rows: tuple[CounterexampleCheckpointRow, ...]

    def to_jsonable(self) -> dict:
        return {
            "horizon": self.horizon,
            "fixed_action": self.fixed_action,
            "n_replications": self.n_replications,
            "forced_plays": self.forced_plays,
            "checkpoints": [
                {
                    "t": row.t,
                    "mean_regret_over_t": row.mean_regret_over_t,
                    "mean_fixed_count": row.mean_fixed_count,
                    "mean_fixed_frequency": row.mean_fixed_frequency,
                    "suboptimal_regime_frequency": (
                        None
                        if math.isnan(row.suboptimal_regime_frequency)
                        else row.suboptimal_regime_frequency
                    ),
                }
                for row in self.checkpoint_rows
            ],
        }


def _counterexample_worker(
    grid: ParameterGrid,
    fixed_action: int,
    horizon: int,
    master_seed: int,
    checkpoints: tuple[int, ...],
    index: int,
) -> tuple[int, np.ndarray, np.ndarray, bool]:
    ss = np.random.SeedSequence(derive_seed(master_seed, index))
    theta_ss, episode_ss = ss.spawn(2)
    truth = int(draw_true_parameter(grid, np.random.default_rng(theta_ss)))
    policy = SquareStepCompositePolicy(
        fixed_action, ThompsonDiscretePolicy.from_prior(grid)
    )
    result = run_episode(grid, truth, policy, horizon, episode_ss, snapshot_p=False)
    actions = result.trace.actions

    squares = np.array([i * i for i in range(1, math.isqrt(horizon) + 1)])
    if not np.all(actions[squares - 1] == fixed_action):
        raise AssertionError("composite policy deviated from the fixed action on a square step")

    ck = np.asarray(checkpoints)
    fixed_counts = np.cumsum(actions == fixed_action)[ck - 1]
    f_row = grid.means[truth]
    gaps = f_row[optimal_action(grid, truth)] - f_row[actions]
    cum_regret = np.cumsum(gaps)[ck - 1]
    fixed_suboptimal = bool(f_row[fixed_action] < f_row.max())
    return squares.shape[0], fixed_counts, cum_regret, fixed_suboptimal


def counterexample_report(
    grid: ParameterGrid,
    fixed_action: int,
    horizon: int,
    n_replications: int,
    seed: int,
    checkpoints: Sequence[int] | None = None,
    *,
    jobs: int | None = None,
) -> CounterexampleReport:
    """Run the square-step composite (discrete Thompson inner) and summarize.

    ``fixed_action`` must be suboptimal under at least one parameter with
    positive prior weight, otherwise the construction demonstrates nothing.
    """
    suboptimal_somewhere = any(
        grid.prior[m] > 0 and grid.means[m, fixed_action] < grid.means[m].max()
        for m in range(grid.n_parameters)
    )
    if not suboptimal_somewhere:
        raise ValueError(
            "fixed_action must be suboptimal under some positive-prior parameter"
        )
    if checkpoints is None:
        ck = tuple(t for t in (10**k for k in range(1, 19)) if t <= horizon)
        ck = ck if ck and ck[-1] == horizon else ck + (horizon,)
    else:
        ck = tuple(int(t) for t in checkpoints)
    worker = partial(_counterexample_worker, grid, fixed_action, horizon, seed, ck)
    results = replication_map(worker, n_replications, jobs)

    forced = {r[0] for r in results}
    assert forced == {math.isqrt(horizon)}
    fixed_counts = np.array([r[1] for r in results], dtype=np.float64)
    cum_regret = np.array([r[2] for r in results])
    regime = np.array([r[3] for r in results])
    ck_arr = np.asarray(ck)
    rows = tuple(
        CounterexampleCheckpointRow(
            t=int(t),
            mean_regret_over_t=float(cum_regret[:, i].mean() / t),
            mean_fixed_count=float(fixed_counts[:, i].mean()),
            mean_fixed_frequency=float((fixed_counts[:, i] / t).mean()),
            suboptimal_regime_frequency=(
                float((fixed_counts[regime, i] / t).mean())
                if regime.any()
                else math.nan
            ),
        )
        for i, t in enumerate(ck_arr)
    )
    return CounterexampleReport(
        horizon=horizon,
        fixed_action=fixed_action,
        n_replications=n_replications,
        forced_plays=math.isqrt(horizon),
        checkpoint_rows=rows,
    )
