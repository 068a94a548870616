"""Posteriors over bandit parameters and the optimal-action distribution.

Two belief representations are supported. :class:`DiscreteBelief` is a weight
vector over the rows of a :class:`~ts_observer.model.ParameterGrid`; its
updates are exact Bayes rule and the probability that each action is optimal
is computed exactly by summing weights over the grid's optimal-action
partition. :class:`BetaBelief` is the conjugate posterior for independent
Bernoulli arms; there the optimal-action probabilities are estimated by
Monte Carlo.

Beliefs are immutable values: updates return fresh objects, so any point of
a trajectory can be snapshotted for free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import BERNOULLI, ParameterGrid, _readonly


class DegenerateEvidenceError(ValueError):
    """Raised when an observation has zero likelihood under every parameter."""


@dataclass(frozen=True)
class DiscreteBelief:
    """Probability vector over the parameter rows of a grid."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        w = _readonly(self.weights)
        if w.ndim != 1 or w.shape[0] < 1:
            raise ValueError("weights must be a nonempty 1-D vector")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1 (got {float(w.sum())!r})")
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_prior(cls, grid: ParameterGrid) -> "DiscreteBelief":
        return cls(grid.prior)


@dataclass(frozen=True)
class BetaBelief:
    """Per-arm Beta(alpha, beta) posterior for independent Bernoulli arms."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self) -> None:
        a = _readonly(self.alpha)
        b = _readonly(self.beta)
        if a.ndim != 1 or a.shape != b.shape or a.shape[0] < 1:
            raise ValueError("alpha and beta must be equal-length 1-D vectors")
        if np.any(a <= 0) or np.any(b <= 0):
            raise ValueError("Beta parameters must be strictly positive")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @classmethod
    def uniform(cls, n_arms: int, alpha0: float = 1.0, beta0: float = 1.0) -> "BetaBelief":
        return cls(np.full(n_arms, alpha0), np.full(n_arms, beta0))

    @property
    def n_arms(self) -> int:
        return self.alpha.shape[0]


@dataclass(frozen=True)
class OptimalActionDistribution:
    """Probability that each action is the optimal one, given a belief.

    ``estimation`` records how the vector was obtained: ``"exact"`` (partition
    sum over a discrete belief) or ``"monte_carlo"`` (empirical frequencies
    over ``n_draws`` posterior samples).
    """

    probs: np.ndarray
    estimation: str
    n_draws: int | None = None

    def __post_init__(self) -> None:
        p = _readonly(self.probs)
        if p.ndim != 1:
            raise ValueError("probs must be a 1-D vector")
        if np.any(p < 0):
            raise ValueError("probs must be nonnegative")
        tol = 1e-12 if self.estimation == "exact" else 1e-9
        if abs(float(p.sum()) - 1.0) > tol:
            raise ValueError(f"probs must sum to 1 within {tol} (got {float(p.sum())!r})")
        object.__setattr__(self, "probs", p)


def likelihoods(grid: ParameterGrid, action: int, reward: float) -> np.ndarray:
    """Likelihood of ``reward`` for ``action`` under every grid parameter.

    For the Gaussian family the unnormalized density kernel is used; the
    missing constant factor is shared by all parameters and cancels in the
    posterior normalization.
    """
    mu = grid.means[:, action]
    if grid.reward_family == BERNOULLI:
        if reward == 1.0:
            return mu.copy()
        if reward == 0.0:
            return 1.0 - mu
        raise ValueError(f"Bernoulli reward must be 0 or 1, got {reward!r}")
    sigma = grid.noise_sigma if grid.noise_sigma is not None else 1.0
    z = (reward - mu) / sigma
    return np.exp(-0.5 * z * z)


def update_discrete(
    belief: DiscreteBelief, grid: ParameterGrid, action: int, reward: float
) -> DiscreteBelief:
    """Bayes-update a discrete belief with one (action, reward) observation."""
    if belief.weights.shape[0] != grid.n_parameters:
        raise ValueError("belief is not aligned with the grid")
    unnorm = belief.weights * likelihoods(grid, action, reward)
    total = float(unnorm.sum())
    if total <= 0.0:
        raise DegenerateEvidenceError(
            f"observation (action={action}, reward={reward!r}) has zero "
            "likelihood under every parameter with positive weight"
        )
    return DiscreteBelief(unnorm / total)


def update_beta(belief: BetaBelief, action: int, reward: float) -> BetaBelief:
    """Conjugate update: success bumps alpha, failure bumps beta."""
    if reward not in (0.0, 1.0):
        raise ValueError(f"Bernoulli reward must be 0 or 1, got {reward!r}")
    if not 0 <= action < belief.n_arms:
        raise IndexError(f"action index {action} out of range [0, {belief.n_arms})")
    alpha = belief.alpha.copy()
    beta = belief.beta.copy()
    alpha[action] += reward
    beta[action] += 1.0 - reward
    return BetaBelief(alpha, beta)


def predictive_reward_probability(
    belief: DiscreteBelief, grid: ParameterGrid, action: int
) -> float:
    """P(reward = 1 | belief, action) for a Bernoulli grid (prior predictive)."""
    if grid.reward_family != BERNOULLI:
        raise ValueError("predictive reward probabilities require the Bernoulli family")
    return float(np.dot(belief.weights, grid.means[:, action]))


def sample_parameter(
    belief: DiscreteBelief | BetaBelief, rng: np.random.Generator
) -> int | np.ndarray:
    """Draw one parameter from the posterior.

    Discrete beliefs yield a parameter index; Beta beliefs yield a vector of
    independent per-arm mean draws.
    """
    if isinstance(belief, DiscreteBelief):
        return int(sample_parameters(belief, 1, rng)[0])
    return sample_parameters(belief, 1, rng)[0]


def sample_parameters(
    belief: DiscreteBelief | BetaBelief, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Vectorized posterior sampling: ``n`` indices or an (n, K) mean matrix."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if isinstance(belief, DiscreteBelief):
        c = np.cumsum(belief.weights)
        u = rng.random(n) * c[-1]
        idx = np.searchsorted(c, u, side="right")
        return np.minimum(idx, belief.weights.shape[0] - 1)
    return rng.beta(belief.alpha, belief.beta, size=(n, belief.n_arms))


def optimal_action_probability(
    belief: DiscreteBelief, grid: ParameterGrid
) -> OptimalActionDistribution:
    """Exact P(optimal action = a) for each a: weight sums over the partition."""
    if belief.weights.shape[0] != grid.n_parameters:
        raise ValueError("belief is not aligned with the grid")
    best = np.argmax(grid.means, axis=1)
    probs = np.bincount(best, weights=belief.weights, minlength=grid.n_actions)
    return OptimalActionDistribution(probs, estimation="exact")


def optimal_action_probability_mc(
    belief: BetaBelief, n_draws: int = 10_000, *, rng: np.random.Generator
) -> OptimalActionDistribution:
    """Monte Carlo P(optimal action = a) from posterior mean draws.

    Each sampled mean vector votes for its min-index argmax. The standard
    error of every entry is at most 1 / (2 sqrt(n_draws)).
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    draws = sample_parameters(belief, n_draws, rng)
    best = np.argmax(draws, axis=1)
    counts = np.bincount(best, minlength=belief.n_arms)
    return OptimalActionDistribution(
        counts / n_draws, estimation="monte_carlo", n_draws=n_draws
    )
