"""Bandit environments: finite parameter grids and Beta-Bernoulli arm models.

A :class:`ParameterGrid` is the fully discrete environment: a finite set of
candidate parameters, a prior over them, and a table of mean rewards per
(parameter, action) pair. A :class:`BetaBernoulliModel` is the classic
independent-arms Bernoulli bandit whose parameter is the vector of arm means
itself. Both expose the same small surface needed by the episode loop:
draw a true parameter, look up mean rewards, find the optimal action, and
sample a reward.

Actions and parameters are 0-based contiguous integer indices. Ties in the
optimal action are always broken toward the smallest action index, using
exact equality of the stored means.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

BERNOULLI = "bernoulli"
GAUSSIAN = "gaussian"

_FAMILIES = (BERNOULLI, GAUSSIAN)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ParameterGrid:
    """Finite bandit model: M candidate parameters, K actions.

    ``means[m, k]`` is the mean reward of action ``k`` under parameter ``m``;
    ``prior[m]`` is the prior probability that ``m`` is the true parameter.
    The constructor only enforces shapes so that :func:`validate_grid` can
    report semantic violations (bad prior normalization, out-of-support
    means) as data instead of exceptions.
    """

    means: np.ndarray
    prior: np.ndarray
    reward_family: str = BERNOULLI
    noise_sigma: float | None = None

    def __post_init__(self) -> None:
        means = _readonly(self.means)
        prior = _readonly(self.prior)
        if means.ndim != 2:
            raise ValueError(f"means must be a 2-D table, got ndim={means.ndim}")
        if prior.ndim != 1 or prior.shape[0] != means.shape[0]:
            raise ValueError(
                f"prior must be 1-D with one entry per parameter row "
                f"(got {prior.shape} for {means.shape[0]} rows)"
            )
        if means.shape[0] < 1 or means.shape[1] < 1:
            raise ValueError("grid needs at least one parameter and one action")
        if self.reward_family not in _FAMILIES:
            raise ValueError(f"unknown reward family {self.reward_family!r}")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "prior", prior)

    @property
    def n_parameters(self) -> int:
        return self.means.shape[0]

    @property
    def n_actions(self) -> int:
        return self.means.shape[1]


@dataclass(frozen=True)
class BetaBernoulliModel:
    """Independent-arms Bernoulli bandit with a per-arm Beta prior.

    The true parameter of a run is the length-``n_arms`` vector of arm means,
    either fixed by the caller or drawn componentwise from
    Beta(``prior_alpha``, ``prior_beta``).
    """

    n_arms: int
    prior_alpha: float = 1.0
    prior_beta: float = 1.0

    def __post_init__(self) -> None:
        if self.n_arms < 1:
            raise ValueError("n_arms must be >= 1")
        if self.prior_alpha <= 0 or self.prior_beta <= 0:
            raise ValueError("Beta prior parameters must be strictly positive")

    @property
    def n_actions(self) -> int:
        return self.n_arms

    def draw_true_means(self, rng: np.random.Generator) -> np.ndarray:
        return rng.beta(self.prior_alpha, self.prior_beta, size=self.n_arms)


Model = Union[ParameterGrid, BetaBernoulliModel]

# A grid's true parameter is a row index; a Beta-Bernoulli model's true
# parameter is the arm-mean vector itself.
TrueParameter = Union[int, np.ndarray]


@dataclass(frozen=True)
class ActionTrace:
    """The observable history of one episode: actions and rewards for t = 1..T.

    Time is implicit: record ``i`` (0-based) happened at step ``t = i + 1``.
    ``p_vectors``, when present, holds the exact action-selection distribution
    in force at each step, i.e. row ``i`` is the probability over actions with
    which step ``i + 1`` was chosen given the history before it.
    """

    actions: np.ndarray
    rewards: np.ndarray
    p_vectors: np.ndarray | None = None

    def __post_init__(self) -> None:
        actions = np.array(self.actions, dtype=np.int64)
        rewards = _readonly(self.rewards)
        actions.setflags(write=False)
        if actions.ndim != 1 or rewards.shape != actions.shape:
            raise ValueError("actions and rewards must be 1-D and equal length")
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "rewards", rewards)
        if self.p_vectors is not None:
            p = _readonly(self.p_vectors)
            if p.ndim != 2 or p.shape[0] != actions.shape[0]:
                raise ValueError("p_vectors must have one row per step")
            object.__setattr__(self, "p_vectors", p)

    def __len__(self) -> int:
        return self.actions.shape[0]

    @property
    def times(self) -> np.ndarray:
        """Step numbers 1..T."""
        return np.arange(1, len(self) + 1)


def mean_reward(grid: ParameterGrid, parameter: int, action: int) -> float:
    """Mean reward of ``action`` under ``parameter``: a pure table lookup."""
    _check_index(parameter, grid.n_parameters, "parameter")
    _check_index(action, grid.n_actions, "action")
    return float(grid.means[parameter, action])


def optimal_action(grid: ParameterGrid, parameter: int) -> int:
    """Smallest action index attaining the row maximum of the mean table.

    Tie detection uses exact equality of the stored means; ``np.argmax``
    returns the first maximal index, which is exactly the min-index rule.
    """
    _check_index(parameter, grid.n_parameters, "parameter")
    return int(np.argmax(grid.means[parameter]))


def optimal_partition(grid: ParameterGrid) -> dict[int, tuple[int, ...]]:
    """Group parameter indices by their optimal action.

    Every action appears as a key, possibly with an empty tuple; the tuples
    are pairwise disjoint and jointly cover all parameter indices.
    """
    best = np.argmax(grid.means, axis=1)
    part: dict[int, tuple[int, ...]] = {a: () for a in range(grid.n_actions)}
    for a in range(grid.n_actions):
        part[a] = tuple(int(m) for m in np.flatnonzero(best == a))
    return part


def sample_reward(
    grid: ParameterGrid, parameter: int, action: int, rng: np.random.Generator
) -> float:
    """Draw one reward for ``action`` under ``parameter``."""
    mu = mean_reward(grid, parameter, action)
    if grid.reward_family == BERNOULLI:
        return 1.0 if rng.random() < mu else 0.0
    sigma = grid.noise_sigma if grid.noise_sigma is not None else 1.0
    return float(mu + sigma * rng.standard_normal())


def validate_grid(grid: ParameterGrid) -> list[str]:
    """Return human-readable invariant violations (empty list = valid grid)."""
    problems: list[str] = []
    if not np.all(np.isfinite(grid.means)):
        problems.append("means: all entries must be finite")
    prior = grid.prior
    if np.any(prior < 0):
        problems.append("prior: entries must be nonnegative")
    if not np.all(np.isfinite(prior)):
        problems.append("prior: entries must be finite")
    elif abs(float(prior.sum()) - 1.0) > 1e-12:
        problems.append(f"prior: must sum to 1 (got {float(prior.sum())!r})")
    if grid.reward_family == BERNOULLI:
        if np.any(grid.means < 0) or np.any(grid.means > 1):
            problems.append("means: Bernoulli means must lie in [0, 1]")
        if grid.noise_sigma is not None:
            problems.append("noise_sigma: not meaningful for the Bernoulli family")
    elif grid.reward_family == GAUSSIAN:
        if grid.noise_sigma is None or not (grid.noise_sigma > 0):
            problems.append("noise_sigma: Gaussian family requires sigma > 0")
    return problems


def validate_trace(trace: ActionTrace, model: Model) -> list[str]:
    """Check a trace against a model: action range and reward support."""
    problems: list[str] = []
    k = model.n_actions
    if len(trace) and (trace.actions.min() < 0 or trace.actions.max() >= k):
        problems.append(f"actions: indices must lie in [0, {k})")
    bernoulli = isinstance(model, BetaBernoulliModel) or model.reward_family == BERNOULLI
    if bernoulli and not np.all(np.isin(trace.rewards, (0.0, 1.0))):
        problems.append("rewards: Bernoulli rewards must be 0 or 1")
    if not np.all(np.isfinite(trace.rewards)):
        problems.append("rewards: must be finite")
    return problems


def draw_parameter_index(grid: ParameterGrid, rng: np.random.Generator) -> int:
    """Draw a parameter index from the grid prior."""
    c = np.cumsum(grid.prior)
    u = rng.random() * c[-1]
    return min(int(np.searchsorted(c, u, side="right")), grid.n_parameters - 1)


def draw_true_parameter(model: Model, rng: np.random.Generator) -> TrueParameter:
    """Draw a true parameter from the model prior (index or mean vector)."""
    if isinstance(model, ParameterGrid):
        return draw_parameter_index(model, rng)
    return model.draw_true_means(rng)


def true_mean_row(model: Model, true_parameter: TrueParameter) -> np.ndarray:
    """Mean reward of every action under the realized true parameter."""
    if isinstance(model, ParameterGrid):
        return model.means[int(true_parameter)]
    row = np.asarray(true_parameter, dtype=np.float64)
    if row.shape != (model.n_arms,):
        raise ValueError(f"expected a mean vector of length {model.n_arms}")
    return row


def realized_optimal_action(model: Model, true_parameter: TrueParameter) -> int:
    """Min-index optimal action under the realized true parameter."""
    if isinstance(model, ParameterGrid):
        return optimal_action(model, int(true_parameter))
    return int(np.argmax(true_mean_row(model, true_parameter)))


def sample_reward_for(
    model: Model,
    true_parameter: TrueParameter,
    action: int,
    rng: np.random.Generator,
) -> float:
    """Draw one reward from the environment for the chosen action."""
    if isinstance(model, ParameterGrid):
        return sample_reward(model, int(true_parameter), action, rng)
    _check_index(action, model.n_arms, "action")
    mu = float(true_mean_row(model, true_parameter)[action])
    return 1.0 if rng.random() < mu else 0.0


def _check_index(i: int, n: int, what: str) -> None:
    if not 0 <= int(i) < n:
        raise IndexError(f"{what} index {i} out of range [0, {n})")
