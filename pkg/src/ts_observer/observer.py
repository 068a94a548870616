"""The external observer: optimal-action estimation from the action stream.

Everything in this module sees action indices and nothing else — no rewards,
no beliefs, no model parameters. An observer watching only which arms an
agent pulls keeps per-action visit counts; the visit frequency of a set of
actions is its estimate of whether the optimal action lies in that set, and
the most-visited action (min-index on ties) is its single-action readout.

Counts are stored as exact integers so the estimate never accumulates
floating-point drift over long horizons.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np


@dataclass(frozen=True)
class FrequencyEstimator:
    """Per-action visit counts over a prefix of an action stream."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        c = np.array(self.counts, dtype=np.int64)
        c.setflags(write=False)
        if c.ndim != 1 or c.shape[0] < 1:
            raise ValueError("counts must be a nonempty 1-D integer vector")
        if np.any(c < 0):
            raise ValueError("counts must be nonnegative")
        object.__setattr__(self, "counts", c)

    @classmethod
    def empty(cls, n_actions: int) -> "FrequencyEstimator":
        return cls(np.zeros(n_actions, dtype=np.int64))

    @classmethod
    def from_actions(cls, actions: Sequence[int], n_actions: int) -> "FrequencyEstimator":
        a = np.asarray(actions, dtype=np.int64)
        if a.size and (a.min() < 0 or a.max() >= n_actions):
            raise IndexError(f"action indices must lie in [0, {n_actions})")
        return cls(np.bincount(a, minlength=n_actions))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def n_actions(self) -> int:
        return self.counts.shape[0]

    def record(self, action: int) -> "FrequencyEstimator":
        """Return a new estimator with one more visit to ``action``."""
        if not 0 <= action < self.n_actions:
            raise IndexError(f"action index {action} out of range [0, {self.n_actions})")
        counts = self.counts.copy()
        counts[action] += 1
        return FrequencyEstimator(counts)

    def frequency(self, subset: Iterable[int]) -> float:
        """Fraction of visits that landed in ``subset`` of the action set."""
        if self.total == 0:
            raise ValueError("frequency is undefined before any observation")
        idx = sorted(set(int(a) for a in subset))
        if idx and (idx[0] < 0 or idx[-1] >= self.n_actions):
            raise IndexError(f"subset indices must lie in [0, {self.n_actions})")
        return float(self.counts[idx].sum()) / self.total

    def point_estimate(self) -> int:
        """Most-visited action, smallest index on ties."""
        if self.total == 0:
            raise ValueError("point estimate is undefined before any observation")
        return int(np.argmax(self.counts))

    def merge(self, other: "FrequencyEstimator") -> "FrequencyEstimator":
        """Combine two disjoint observation streams (count addition)."""
        if other.n_actions != self.n_actions:
            raise ValueError("cannot merge estimators over different action sets")
        return FrequencyEstimator(self.counts + other.counts)


@dataclass(frozen=True)
class ConvergenceCurve:
    """Visit frequency of a fixed action subset along a growing prefix."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        t = np.array(self.times, dtype=np.int64)
        v = np.array(self.values, dtype=np.float64)
        t.setflags(write=False)
        v.setflags(write=False)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("times and values must be 1-D and equal length")
        if t.size and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(v < 0) or np.any(v > 1):
            raise ValueError("frequencies must lie in [0, 1]")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def rows(self) -> Iterator[tuple[int, float]]:
        """(t, value) pairs, ready for CSV export."""
        for t, v in zip(self.times, self.values):
            yield int(t), float(v)


def convergence_curve(
    actions: Sequence[int], subset: Iterable[int], checkpoints: Sequence[int]
) -> ConvergenceCurve:
    """Frequency of ``subset`` within the first t actions, at each checkpoint.

    Takes the raw action sequence (not a full trace) so this stays a pure
    function of what an external observer can see.
    """
    a = np.asarray(actions, dtype=np.int64)
    ck = np.asarray(checkpoints, dtype=np.int64)
    if ck.size == 0:
        raise ValueError("need at least one checkpoint")
    if ck.min() < 1 or ck.max() > a.shape[0]:
        raise ValueError(f"checkpoints must lie in [1, {a.shape[0]}]")
    member = np.isin(a, np.asarray(sorted(set(int(s) for s in subset)), dtype=np.int64))
    hits = np.cumsum(member)
    return ConvergenceCurve(ck, hits[ck - 1] / ck)
