"""Action-selection policies and the episode loop.

Policies are immutable values: ``select`` consumes randomness but never
mutates state, and ``observe`` returns a new policy carrying the updated
belief. That makes per-step snapshots and the composite policy's isolation
guarantee ("the stowaway constant policy and the learner never see each
other's data") directly testable.

Policy kinds:

* :class:`ThompsonDiscretePolicy` — samples a grid parameter from the exact
  discrete posterior and plays its optimal action; its action-selection
  distribution therefore equals the posterior probability of each action
  being optimal.
* :class:`ThompsonBetaPolicy` — per-arm Beta posterior sampling for
  independent Bernoulli arms.
* :class:`UniformRandomPolicy` — linear-regret negative control.
* :class:`SquareStepCompositePolicy` — plays a fixed action on the perfect
  square steps t = 1, 4, 9, ... and delegates every other step to an inner
  policy; square-step observations are discarded entirely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Union

import numpy as np

from . import belief as bel
from .model import (
    ActionTrace,
    Model,
    ParameterGrid,
    TrueParameter,
    sample_reward_for,
)


def is_square(t: int) -> bool:
    r = math.isqrt(t)
    return r * r == t


@dataclass(frozen=True)
class UniformRandomPolicy:
    """Picks every action with equal probability, ignoring all observations."""

    n_actions: int

    def select(self, t: int, rng: np.random.Generator) -> int:
        return int(rng.integers(self.n_actions))

    def observe(self, t: int, action: int, reward: float) -> "UniformRandomPolicy":
        return self

    def selection_probabilities(self, t: int) -> np.ndarray:
        return np.full(self.n_actions, 1.0 / self.n_actions)


@dataclass(frozen=True)
class ThompsonDiscretePolicy:
    """Posterior sampling over a finite parameter grid."""

    grid: ParameterGrid
    belief: bel.DiscreteBelief

    @classmethod
    def from_prior(cls, grid: ParameterGrid) -> "ThompsonDiscretePolicy":
        return cls(grid, bel.DiscreteBelief.from_prior(grid))

    def select(self, t: int, rng: np.random.Generator) -> int:
        return int(self.select_many(1, rng)[0])

    def select_many(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` independent selections from the current belief."""
        params = bel.sample_parameters(self.belief, n, rng)
        best = np.argmax(self.grid.means, axis=1)
        return best[params]

    def observe(self, t: int, action: int, reward: float) -> "ThompsonDiscretePolicy":
        return replace(
            self, belief=bel.update_discrete(self.belief, self.grid, action, reward)
        )

    def selection_probabilities(self, t: int) -> np.ndarray:
        return bel.optimal_action_probability(self.belief, self.grid).probs


@dataclass(frozen=True)
class ThompsonBetaPolicy:
    """Posterior sampling with independent per-arm Beta posteriors."""

    belief: bel.BetaBelief

    @classmethod
    def from_prior(
        cls, n_arms: int, alpha0: float = 1.0, beta0: float = 1.0
    ) -> "ThompsonBetaPolicy":
        return cls(bel.BetaBelief.uniform(n_arms, alpha0, beta0))

    def select(self, t: int, rng: np.random.Generator) -> int:
        return int(self.select_many(1, rng)[0])

    def select_many(self, n: int, rng: np.random.Generator) -> np.ndarray:
        draws = bel.sample_parameters(self.belief, n, rng)
        return np.argmax(draws, axis=1)

    def observe(self, t: int, action: int, reward: float) -> "ThompsonBetaPolicy":
        return replace(self, belief=bel.update_beta(self.belief, action, reward))


@dataclass(frozen=True)
class SquareStepCompositePolicy:
    """Fixed action on square steps, an inner policy everywhere else.

    The two constituents ignore each other completely: the inner policy is
    neither consulted nor updated on square steps, so its belief evolves
    exactly as if it had run standalone on the non-square subsequence.
    """

    fixed_action: int
    inner: "Policy"

    def __post_init__(self) -> None:
        if isinstance(self.inner, SquareStepCompositePolicy):
            raise ValueError("composite policies must not be nested")
        if self.fixed_action < 0:
            raise ValueError("fixed_action must be a valid action index")

    def select(self, t: int, rng: np.random.Generator) -> int:
        if is_square(t):
            return self.fixed_action
        return self.inner.select(t, rng)

    def observe(self, t: int, action: int, reward: float) -> "SquareStepCompositePolicy":
        if is_square(t):
            return self
        return replace(self, inner=self.inner.observe(t, action, reward))

    def selection_probabilities(self, t: int) -> np.ndarray:
        inner_probs = getattr(self.inner, "selection_probabilities", None)
        if inner_probs is None:
            raise TypeError("inner policy has no exact selection probabilities")
        if is_square(t):
            probs = np.zeros_like(inner_probs(t))
            probs[self.fixed_action] = 1.0
            return probs
        return inner_probs(t)


Policy = Union[
    UniformRandomPolicy,
    ThompsonDiscretePolicy,
    ThompsonBetaPolicy,
    SquareStepCompositePolicy,
]


class EpisodeResult(NamedTuple):
    trace: ActionTrace
    final_policy: Policy


def supports_exact_probabilities(policy: Policy) -> bool:
    if isinstance(policy, SquareStepCompositePolicy):
        return supports_exact_probabilities(policy.inner)
    return hasattr(policy, "selection_probabilities")


def run_episode(
    model: Model,
    true_parameter: TrueParameter,
    policy: Policy,
    horizon: int,
    seed: int | np.random.SeedSequence,
    *,
    snapshot_p: bool | None = None,
) -> EpisodeResult:
    """Simulate one agent/environment interaction of ``horizon`` steps.

    Two independent random streams are derived from ``seed``: one consumed
    only by the policy, one only by the environment. The split keeps the
    policy's draw sequence identical whether or not reward noise changes,
    which is what makes the composite policy's isolation property exactly
    reproducible.

    ``snapshot_p=None`` records per-step selection probabilities whenever the
    policy supports exact ones.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    policy_ss, env_ss = ss.spawn(2)
    policy_rng = np.random.default_rng(policy_ss)
    env_rng = np.random.default_rng(env_ss)

    if snapshot_p is None:
        snapshot_p = supports_exact_probabilities(policy)
    elif snapshot_p and not supports_exact_probabilities(policy):
        raise ValueError("policy does not support exact selection probabilities")

    actions = np.empty(horizon, dtype=np.int64)
    rewards = np.empty(horizon, dtype=np.float64)
    p_rows = np.empty((horizon, model.n_actions)) if snapshot_p else None

    state = policy
    for i in range(horizon):
        t = i + 1
        if p_rows is not None:
            p_rows[i] = state.selection_probabilities(t)
        a = state.select(t, policy_rng)
        r = sample_reward_for(model, true_parameter, a, env_rng)
        actions[i] = a
        rewards[i] = r
        state = state.observe(t, a, r)

    trace = ActionTrace(actions, rewards, p_vectors=p_rows)
    return EpisodeResult(trace, state)


def build_policy(
    model: Model,
    kind: str,
    *,
    fixed_action: int | None = None,
    inner_kind: str | None = None,
) -> Policy:
    """Construct a policy for a model from its config-level description.

    ``kind`` is one of ``"thompson"``, ``"uniform"``, ``"square_composite"``.
    Thompson resolves to the discrete or Beta variant depending on the model.
    """
    if kind == "thompson":
        if isinstance(model, ParameterGrid):
            return ThompsonDiscretePolicy.from_prior(model)
        return ThompsonBetaPolicy.from_prior(
            model.n_arms, model.prior_alpha, model.prior_beta
        )
    if kind == "uniform":
        return UniformRandomPolicy(model.n_actions)
    if kind == "square_composite":
        if fixed_action is None:
            raise ValueError("square_composite requires fixed_action")
        if not 0 <= fixed_action < model.n_actions:
            raise ValueError(
                f"fixed_action {fixed_action} out of range [0, {model.n_actions})"
            )
        inner = build_policy(model, inner_kind or "thompson")
        return SquareStepCompositePolicy(fixed_action, inner)
    raise ValueError(f"unknown policy kind {kind!r}")
