"""Experiment configs, seeded replication orchestration, and persistence.

The config format is a flat, line-oriented ``key = value`` text (grammar in
the README); a JSON object with the same keys is accepted as an alternative
encoding. Every replication derives its own 64-bit seed from the master seed
via :func:`derive_seed`, so results are bit-reproducible and independent of
execution order or worker count.

Output files are plain CSV/JSON with stable formatting: rerunning the same
config with the same master seed produces byte-identical traces and
summaries.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence, TypeVar

import numpy as np

from .model import (
    ActionTrace,
    BERNOULLI,
    BetaBernoulliModel,
    Model,
    ParameterGrid,
    TrueParameter,
    draw_parameter_index,
    realized_optimal_action,
    true_mean_row,
    validate_grid,
)
from .observer import FrequencyEstimator
from .policies import build_policy, run_episode, supports_exact_probabilities

JOBS_ENV_VAR = "TS_OBSERVER_JOBS"

_T = TypeVar("_T")


class ConfigError(ValueError):
    """Config text failed to parse or validate; ``errors`` lists the reasons."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# --- seed derivation -------------------------------------------------------

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(master_seed: int, replication_index: int) -> int:
    """Per-replication 64-bit seed; part of the reproducibility contract.

    Defined as ``splitmix64(splitmix64(master) XOR (index + 1) * GOLDEN)``
    with GOLDEN = 0x9E3779B97F4A7C15, all arithmetic mod 2**64. The XOR input
    is distinct for every index, and splitmix64 is a bijection, so distinct
    replication indices always map to distinct seeds.
    """
    mixed = _splitmix64(master_seed & _MASK64)
    return _splitmix64(mixed ^ (((replication_index + 1) * _GOLDEN) & _MASK64))


def resolve_jobs(jobs: int | None) -> int:
    """Explicit value, else the TS_OBSERVER_JOBS env var, else 1."""
    if jobs is not None:
        return max(1, int(jobs))
    env = os.environ.get(JOBS_ENV_VAR)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError([f"{JOBS_ENV_VAR} must be an integer, got {env!r}"])
    return 1


def replication_map(
    worker: Callable[[int], _T], n: int, jobs: int | None = None
) -> list[_T]:
    """Apply ``worker`` to replication indices 0..n-1, optionally in parallel.

    Results come back ordered by index, so aggregation downstream is
    independent of scheduling.
    """
    jobs = resolve_jobs(jobs)
    if jobs <= 1 or n <= 1:
        return [worker(i) for i in range(n)]
    chunk = max(1, n // (jobs * 4))
    with ProcessPoolExecutor(max_workers=min(jobs, n)) as pool:
        return list(pool.map(worker, range(n), chunksize=chunk))


# --- experiment configuration ----------------------------------------------

_POLICY_KINDS = ("thompson", "uniform", "square_composite")
_FORMATS = ("csv", "json")


@dataclass(frozen=True)
class ExperimentConfig:
    model: Model
    horizon: int
    replications: int
    seed: int
    checkpoints: tuple[int, ...]
    policy: str = "thompson"
    fixed_action: int | None = None
    inner_policy: str | None = None
    fixed_parameter: int | None = None  # grid models: fixed true-parameter index
    true_means: tuple[float, ...] | None = None  # Beta-Bernoulli: fixed arm means
    out_dir: str | None = None
    report_format: str = "csv"
    save_traces: bool = False
    snapshot_p: bool = False

    def describe(self) -> dict[str, Any]:
        """Config echo for the summary file (plain JSON-serializable types)."""
        if isinstance(self.model, ParameterGrid):
            model_desc: dict[str, Any] = {
                "kind": "grid",
                "means": [[float(x) for x in row] for row in self.model.means],
                "prior": [float(x) for x in self.model.prior],
                "reward_family": self.model.reward_family,
            }
            if self.model.noise_sigma is not None:
                model_desc["noise_sigma"] = float(self.model.noise_sigma)
        else:
            model_desc = {
                "kind": "beta_bernoulli",
                "arms": self.model.n_arms,
                "prior_alpha": float(self.model.prior_alpha),
                "prior_beta": float(self.model.prior_beta),
            }
        return {
            "model": model_desc,
            "policy": self.policy,
            "fixed_action": self.fixed_action,
            "inner_policy": self.inner_policy,
            "fixed_parameter": self.fixed_parameter,
            "true_means": list(self.true_means) if self.true_means is not None else None,
            "horizon": self.horizon,
            "replications": self.replications,
            "seed": self.seed,
            "checkpoints": list(self.checkpoints),
            "report_format": self.report_format,
            "save_traces": self.save_traces,
            "snapshot_p": self.snapshot_p,
        }


def default_checkpoints(horizon: int) -> tuple[int, ...]:
    """Powers of ten up to the horizon, plus the horizon itself."""
    cks = [10**k for k in range(0, 19) if 10**k <= horizon]
    if horizon not in cks:
        cks.append(horizon)
    return tuple(sorted(cks))


def _parse_floats(value: str) -> list[float]:
    return [float(tok) for tok in value.split()]


def _parse_bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("true", "yes", "1"):
        return True
    if v in ("false", "no", "0"):
        return False
    raise ValueError(f"expected a boolean, got {value!r}")


_KNOWN_KEYS = {
    "model", "means", "prior", "reward_family", "noise_sigma",
    "arms", "prior_alpha", "prior_beta", "true_means", "true_parameter",
    "policy", "fixed_action", "inner_policy",
    "horizon", "replications", "seed", "checkpoints",
    "out", "format", "save_traces", "snapshot_p",
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate config text (line-oriented ``key = value`` or JSON).

    Raises :class:`ConfigError` listing every problem found, with line
    numbers for syntax-level errors.
    """
    errors: list[str] = []
    if text.lstrip().startswith("{"):
        try:
            raw_obj = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError([f"invalid JSON: {e}"])
        if not isinstance(raw_obj, dict):
            raise ConfigError(["JSON config must be an object"])
        entries = {str(k): (_json_value_to_text(v), 0) for k, v in raw_obj.items()}
    else:
        entries = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                errors.append(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
                continue
            key, value = (part.strip() for part in stripped.split("=", 1))
            if key not in _KNOWN_KEYS:
                errors.append(f"line {lineno}: unknown key {key!r}")
                continue
            if key in entries:
                errors.append(f"line {lineno}: duplicate key {key!r}")
                continue
            entries[key] = (value, lineno)
    if errors:
        raise ConfigError(errors)
    return _build_config(entries)


def _json_value_to_text(value: Any) -> str:
    """Flatten a JSON value to the text grammar's value syntax."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        if value and isinstance(value[0], list):
            return " ; ".join(" ".join(str(x) for x in row) for row in value)
        return " ".join(str(x) for x in value)
    return str(value)


def _build_config(entries: dict[str, tuple[str, int]]) -> ExperimentConfig:
    errors: list[str] = []

    def where(key: str) -> str:
        lineno = entries[key][1]
        return f"line {lineno}: " if lineno else ""

    def take(key: str) -> str | None:
        return entries[key][0] if key in entries else None

    model_kind = take("model")
    model: Model | None = None
    if model_kind is None:
        errors.append("missing required key 'model' (grid | beta_bernoulli)")
    elif model_kind == "grid":
        means_text = take("means")
        if means_text is None:
            errors.append("grid model requires 'means'")
        else:
            try:
                rows = [_parse_floats(row) for row in means_text.split(";")]
                if len({len(r) for r in rows}) != 1:
                    raise ValueError("rows have unequal lengths")
                means = np.array(rows)
                prior_text = take("prior")
                prior = (
                    np.array(_parse_floats(prior_text))
                    if prior_text is not None
                    else np.full(means.shape[0], 1.0 / means.shape[0])
                )
                family = take("reward_family") or BERNOULLI
                sigma_text = take("noise_sigma")
                sigma = float(sigma_text) if sigma_text is not None else None
                model = ParameterGrid(means, prior, family, sigma)
                errors.extend(f"model: {v}" for v in validate_grid(model))
            except ValueError as e:
                errors.append(f"{where('means')}bad grid definition: {e}")
    elif model_kind == "beta_bernoulli":
        arms_text = take("arms")
        if arms_text is None:
            errors.append("beta_bernoulli model requires 'arms'")
        else:
            try:
                model = BetaBernoulliModel(
                    int(arms_text),
                    float(take("prior_alpha") or 1.0),
                    float(take("prior_beta") or 1.0),
                )
            except ValueError as e:
                errors.append(f"{where('arms')}bad beta_bernoulli definition: {e}")
    else:
        errors.append(f"{where('model')}model must be 'grid' or 'beta_bernoulli'")

    def int_field(key: str, default: int, minimum: int) -> int:
        text = take(key)
        if text is None:
            return default
        try:
            value = int(text)
        except ValueError:
            errors.append(f"{where(key)}{key} must be an integer, got {text!r}")
            return default
        if value < minimum:
            errors.append(f"{where(key)}{key} must be >= {minimum}, got {value}")
        return value

    horizon = int_field("horizon", 1000, 1)
    replications = int_field("replications", 1, 1)
    seed = int_field("seed", 0, 0)

    checkpoints_text = take("checkpoints")
    if checkpoints_text is None:
        checkpoints = default_checkpoints(horizon)
    else:
        try:
            checkpoints = tuple(int(tok) for tok in checkpoints_text.split())
        except ValueError:
            errors.append(f"{where('checkpoints')}checkpoints must be integers")
            checkpoints = default_checkpoints(horizon)
        else:
            if not checkpoints:
                errors.append("checkpoints: need at least one entry")
            elif any(np.diff(checkpoints) <= 0):
                errors.append("checkpoints: must be strictly increasing")
            elif checkpoints[0] < 1 or checkpoints[-1] > horizon:
                errors.append(f"checkpoints: must lie in [1, horizon={horizon}]")

    policy = take("policy") or "thompson"
    if policy not in _POLICY_KINDS:
        errors.append(f"{where('policy')}policy must be one of {_POLICY_KINDS}")
    inner_policy = take("inner_policy")
    if inner_policy is not None and inner_policy not in ("thompson", "uniform"):
        errors.append(f"{where('inner_policy')}inner_policy must be thompson or uniform")

    fixed_action: int | None = None
    fixed_action_text = take("fixed_action")
    if fixed_action_text is not None:
        try:
            fixed_action = int(fixed_action_text)
        except ValueError:
            errors.append(f"{where('fixed_action')}fixed_action must be an integer")
    if policy == "square_composite":
        if fixed_action is None:
            errors.append("square_composite policy requires 'fixed_action'")
        elif model is not None and not 0 <= fixed_action < model.n_actions:
            errors.append(
                f"fixed_action: must lie in [0, {model.n_actions}), got {fixed_action}"
            )

    fixed_parameter: int | None = None
    true_means: tuple[float, ...] | None = None
    tp_text = take("true_parameter")
    tm_text = take("true_means")
    if tm_text is not None:
        if isinstance(model, ParameterGrid):
            errors.append("true_means: only meaningful for beta_bernoulli models")
        else:
            try:
                tm = _parse_floats(tm_text)
                if model is not None and len(tm) != model.n_actions:
                    raise ValueError(f"expected {model.n_actions} entries")
                if any(not 0.0 <= x <= 1.0 for x in tm):
                    raise ValueError("entries must lie in [0, 1]")
                true_means = tuple(tm)
            except ValueError as e:
                errors.append(f"{where('true_means')}true_means: {e}")
    if tp_text is not None:
        tokens = tp_text.split()
        if tokens[0] == "prior" and len(tokens) == 1:
            if true_means is not None:
                errors.append("true_parameter: 'prior' conflicts with fixed true_means")
        elif tokens[0] == "fixed":
            if isinstance(model, BetaBernoulliModel):
                if true_means is None:
                    errors.append("true_parameter: fixed beta_bernoulli needs true_means")
            elif len(tokens) != 2:
                errors.append(f"{where('true_parameter')}expected 'fixed <index>'")
            else:
                try:
                    fixed_parameter = int(tokens[1])
                except ValueError:
                    errors.append(f"{where('true_parameter')}bad index {tokens[1]!r}")
                else:
                    if model is not None and not 0 <= fixed_parameter < model.n_parameters:
                        errors.append(
                            f"true_parameter: index {fixed_parameter} out of range "
                            f"[0, {model.n_parameters})"
                        )
        else:
            errors.append(f"{where('true_parameter')}expected 'prior' or 'fixed <index>'")

    report_format = take("format") or "csv"
    if report_format not in _FORMATS:
        errors.append(f"{where('format')}format must be one of {_FORMATS}")

    save_traces = False
    snapshot_p = False
    for key in ("save_traces", "snapshot_p"):
        text = take(key)
        if text is not None:
            try:
                value = _parse_bool(text)
            except ValueError as e:
                errors.append(f"{where(key)}{key}: {e}")
            else:
                if key == "save_traces":
                    save_traces = value
                else:
                    snapshot_p = value

    if errors or model is None:
        raise ConfigError(errors or ["no model defined"])

    return ExperimentConfig(
        model=model,
        horizon=horizon,
        replications=replications,
        seed=seed,
        checkpoints=tuple(int(c) for c in checkpoints),
        policy=policy,
        fixed_action=fixed_action,
        inner_policy=inner_policy,
        fixed_parameter=fixed_parameter,
        true_means=true_means,
        out_dir=take("out"),
        report_format=report_format,
        save_traces=save_traces,
        snapshot_p=snapshot_p,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


# --- trace persistence ------------------------------------------------------

def write_trace_csv(trace: ActionTrace, path: str | Path) -> None:
    """Write a trace as ``t,action,reward[,p_0..p_{K-1}]`` rows."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["t", "action", "reward"]
        if trace.p_vectors is not None:
            header += [f"p_{k}" for k in range(trace.p_vectors.shape[1])]
        writer.writerow(header)
        for i in range(len(trace)):
            row = [i + 1, int(trace.actions[i]), repr(float(trace.rewards[i]))]
            if trace.p_vectors is not None:
                row += [repr(float(x)) for x in trace.p_vectors[i]]
            writer.writerow(row)


def read_trace_csv(path: str | Path) -> ActionTrace:
    """Read a trace written by :func:`write_trace_csv`, checking t = 1..T."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:3] != ["t", "action", "reward"]:
            raise ValueError(f"{path}: not a trace file (bad header {header!r})")
        p_cols = len(header) - 3
        times, actions, rewards, p_rows = [], [], [], []
        for row in reader:
            times.append(int(row[0]))
            actions.append(int(row[1]))
            rewards.append(float(row[2]))
            if p_cols:
                p_rows.append([float(x) for x in row[3:]])
    if times != list(range(1, len(times) + 1)):
        raise ValueError(f"{path}: step numbers must be exactly 1..T with no gaps")
    return ActionTrace(
        np.array(actions, dtype=np.int64),
        np.array(rewards),
        p_vectors=np.array(p_rows) if p_cols else None,
    )


# --- experiment execution ---------------------------------------------------

@dataclass(frozen=True)
class ReplicationResult:
    index: int
    realized_optimal: int
    point_estimate: int
    final_frequencies: tuple[float, ...]
    checkpoint_frequencies: tuple[tuple[float, ...], ...]  # one row per checkpoint
    cumulative_regret: tuple[float, ...]  # realized f-gap sums at checkpoints
    trace: ActionTrace | None = None


@dataclass(frozen=True)
class RunSummary:
    config: ExperimentConfig
    rows: tuple[ReplicationResult, ...]
    accuracy: float

    @property
    def checkpoints(self) -> tuple[int, ...]:
        return self.config.checkpoints


def _draw_truth(config: ExperimentConfig, rng: np.random.Generator) -> TrueParameter:
    model = config.model
    if isinstance(model, ParameterGrid):
        if config.fixed_parameter is not None:
            return config.fixed_parameter
        return draw_parameter_index(model, rng)
    if config.true_means is not None:
        return np.array(config.true_means)
    return model.draw_true_means(rng)


def run_replication(config: ExperimentConfig, index: int) -> ReplicationResult:
    """Run one replication end to end; fully determined by (config, index)."""
    model = config.model
    ss = np.random.SeedSequence(derive_seed(config.seed, index))
    theta_ss, episode_ss = ss.spawn(2)
    truth = _draw_truth(config, np.random.default_rng(theta_ss))

    policy = build_policy(
        model,
        config.policy,
        fixed_action=config.fixed_action,
        inner_kind=config.inner_policy,
    )
    snapshot = config.snapshot_p and supports_exact_probabilities(policy)
    result = run_episode(
        model, truth, policy, config.horizon, episode_ss, snapshot_p=snapshot
    )
    trace = result.trace

    actions = trace.actions
    est = FrequencyEstimator.from_actions(actions, model.n_actions)
    ck = np.asarray(config.checkpoints)
    freq_rows = np.empty((ck.shape[0], model.n_actions))
    for a in range(model.n_actions):
        hits = np.cumsum(actions == a)
        freq_rows[:, a] = hits[ck - 1] / ck

    f_row = true_mean_row(model, truth)
    a_star = realized_optimal_action(model, truth)
    gaps = f_row[a_star] - f_row[actions]
    cum = np.cumsum(gaps)

    return ReplicationResult(
        index=index,
        realized_optimal=a_star,
        point_estimate=est.point_estimate(),
        final_frequencies=tuple(float(c) / est.total for c in est.counts),
        checkpoint_frequencies=tuple(tuple(map(float, row)) for row in freq_rows),
        cumulative_regret=tuple(float(cum[t - 1]) for t in ck),
        trace=trace if config.save_traces else None,
    )


def run_experiment(
    config: ExperimentConfig,
    *,
    jobs: int | None = None,
    out_dir: str | Path | None = None,
    plots: bool = True,
) -> RunSummary:
    """Run all replications, aggregate, and persist artifacts if requested.

    Output bytes depend only on (config, master seed): replication results
    are keyed by index, so worker count and scheduling cannot change them.
    Partially written outputs are removed if persistence fails.
    """
    rows = replication_map(partial(run_replication, config), config.replications, jobs)
    rows.sort(key=lambda r: r.index)
    accuracy = float(
        np.mean([1.0 if r.point_estimate == r.realized_optimal else 0.0 for r in rows])
    )
    summary = RunSummary(config=config, rows=tuple(rows), accuracy=accuracy)

    target = out_dir if out_dir is not None else config.out_dir
    if target is not None:
        write_artifacts(summary, Path(target), plots=plots)
    return summary


def write_artifacts(summary: RunSummary, out_dir: Path, *, plots: bool = True) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    try:
        path = out_dir / "summary.json"
        path.write_text(_summary_json(summary))
        written.append(path)

        if summary.config.report_format == "json":
            path = out_dir / "curves.json"
            path.write_text(_curves_json(summary))
            written.append(path)
            path = out_dir / "regret.json"
            path.write_text(_regret_json(summary))
            written.append(path)
        else:
            path = out_dir / "curves.csv"
            _write_curves_csv(summary, path)
            written.append(path)
            path = out_dir / "regret.csv"
            _write_regret_csv(summary, path)
            written.append(path)

        if summary.config.save_traces:
            trace_dir = out_dir / "traces"
            trace_dir.mkdir(exist_ok=True)
            for row in summary.rows:
                assert row.trace is not None
                path = trace_dir / f"trace_{row.index:05d}.csv"
                write_trace_csv(row.trace, path)
                written.append(path)

        if plots:
            from . import plots as _plots

            fig_dir = out_dir / "figures"
            fig_dir.mkdir(exist_ok=True)
            written.extend(_plots.render_run_figures(summary, fig_dir))
    except Exception:
        for path in written:
            try:
                path.unlink()
            except OSError:
                pass
        raise


def _pyfloat(x: Any) -> float:
    return float(x)


def _summary_json(summary: RunSummary) -> str:
    obj = {
        "config": summary.config.describe(),
        "accuracy": _pyfloat(summary.accuracy),
        "checkpoints": list(summary.checkpoints),
        "replications": [
            {
                "index": r.index,
                "realized_optimal_action": r.realized_optimal,
                "point_estimate": r.point_estimate,
                "correct": r.point_estimate == r.realized_optimal,
                "final_frequencies": [_pyfloat(x) for x in r.final_frequencies],
                "cumulative_regret": [
                    [int(t), _pyfloat(v)]
                    for t, v in zip(summary.checkpoints, r.cumulative_regret)
                ],
            }
            for r in summary.rows
        ],
    }
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _curve_rows(summary: RunSummary) -> Iterable[list[Any]]:
    for r in summary.rows:
        for t, freqs in zip(summary.checkpoints, r.checkpoint_frequencies):
            yield [r.index, int(t)] + [repr(_pyfloat(x)) for x in freqs]


def _write_curves_csv(summary: RunSummary, path: Path) -> None:
    k = summary.config.model.n_actions
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["replication", "t"] + [f"freq_{a}" for a in range(k)])
        writer.writerows(_curve_rows(summary))


def _curves_json(summary: RunSummary) -> str:
    obj = [
        {
            "replication": r.index,
            "t": int(t),
            "frequencies": [_pyfloat(x) for x in freqs],
        }
        for r in summary.rows
        for t, freqs in zip(summary.checkpoints, r.checkpoint_frequencies)
    ]
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _regret_table(summary: RunSummary) -> list[dict[str, float]]:
    ck = summary.checkpoints
    cum = np.array([r.cumulative_regret for r in summary.rows])  # (n, C)
    mean = cum.mean(axis=0)
    se = (
        cum.std(axis=0, ddof=1) / np.sqrt(cum.shape[0])
        if cum.shape[0] > 1
        else np.zeros(len(ck))
    )
    return [
        {
            "t": int(t),
            "mean_cumulative_regret": _pyfloat(mean[i]),
            "se_cumulative_regret": _pyfloat(se[i]),
            "regret_over_t": _pyfloat(mean[i] / t),
            "regret_over_sqrt_t": _pyfloat(mean[i] / np.sqrt(t)),
        }
        for i, t in enumerate(ck)
    ]


def _write_regret_csv(summary: RunSummary, path: Path) -> None:
    table = _regret_table(summary)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        header = list(table[0].keys())
        writer.writerow(header)
        for row in table:
            writer.writerow(
                [row["t"]] + [repr(row[k]) for k in header[1:]]
            )


def _regret_json(summary: RunSummary) -> str:
    return json.dumps(_regret_table(summary), indent=2, sort_keys=True) + "\n"
