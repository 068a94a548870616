"""Command-line interface.

Commands:

* ``simulate``         — run a configured experiment and persist artifacts
* ``enumerate``        — exact history tree of a small discrete instance
* ``martingale-check`` — tower-property residuals over that tree
* ``regret``           — Monte Carlo regret study
* ``counterexample``   — square-step composite policy demonstration
* ``validate-config``  — parse and validate a config file

Exit codes: 0 success, 1 runtime failure, 2 config error, 3 unsupported
instance. Report-emitting commands write plot-ready CSV and, unless
``--no-plots`` is given, matplotlib figures alongside.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .diagnostics import (
    MartingaleResidualReport,
    UnsupportedInstanceError,
    bayes_regret_estimate,
    counterexample_report,
    default_verification_grid,
    enumerate_exact,
    iter_nodes,
    martingale_check,
)
from .harness import (
    ConfigError,
    ExperimentConfig,
    default_checkpoints,
    load_config,
    run_experiment,
)
from .model import ParameterGrid
from .policies import build_policy


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ts-observer",
        description="Thompson sampling bandit lab: simulation, exact checks, reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, *, config_required: bool = False) -> None:
        p.add_argument("--config", type=Path, required=config_required,
                       help="experiment config file (key = value text, or JSON)")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--replications", type=int, default=None,
                       help="replication count override")
        p.add_argument("--horizon", type=int, default=None, help="horizon override")
        p.add_argument("--format", choices=("csv", "json"), default=None,
                       help="report format override")
        p.add_argument("--jobs", type=int, default=None,
                       help="worker processes (default: TS_OBSERVER_JOBS or 1)")
        p.add_argument("--no-plots", action="store_true",
                       help="skip figure rendering")

    p = sub.add_parser("simulate", help="run an experiment from a config")
    common(p, config_required=True)

    p = sub.add_parser("enumerate", help="exact history tree of a discrete instance")
    common(p)

    p = sub.add_parser("martingale-check", help="tower-property residuals")
    common(p)
    p.add_argument("--tol", type=float, default=1e-10,
                   help="maximum acceptable residual (default 1e-10)")

    p = sub.add_parser("regret", help="Monte Carlo regret study")
    common(p, config_required=True)
    p.add_argument("--checkpoints", type=int, nargs="+", default=None)

    p = sub.add_parser("counterexample", help="square-step composite demonstration")
    common(p)
    p.add_argument("--fixed-action", type=int, default=None)
    p.add_argument("--checkpoints", type=int, nargs="+", default=None)

    p = sub.add_parser("validate-config", help="parse and validate a config file")
    p.add_argument("--config", type=Path, required=True)

    return parser


def _apply_overrides(config: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    updates: dict = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.replications is not None:
        updates["replications"] = args.replications
    if args.horizon is not None:
        updates["horizon"] = args.horizon
        if config.checkpoints[-1] > args.horizon:
            updates["checkpoints"] = default_checkpoints(args.horizon)
    if args.format is not None:
        updates["report_format"] = args.format
    if getattr(args, "out", None) is not None:
        updates["out_dir"] = str(args.out)
    return dataclasses.replace(config, **updates) if updates else config


def _enumeration_instance(args: argparse.Namespace) -> tuple[ParameterGrid, int]:
    """Grid and horizon for the exact commands; defaults without a config."""
    horizon = args.horizon if args.horizon is not None else 4
    if args.config is None:
        return default_verification_grid(), horizon
    config = load_config(args.config)
    if not isinstance(config.model, ParameterGrid):
        raise UnsupportedInstanceError("exact enumeration requires a grid model")
    if config.policy != "thompson":
        raise UnsupportedInstanceError("exact enumeration requires the thompson policy")
    if args.horizon is None:
        horizon = config.horizon
    return config.model, horizon


def _cmd_simulate(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_config(args.config), args)
    summary = run_experiment(config, jobs=args.jobs, plots=not args.no_plots)
    n = len(summary.rows)
    print(f"replications: {n}")
    print(f"point-estimate accuracy: {summary.accuracy:.4f}")
    mean_best = float(
        np.mean([r.final_frequencies[r.realized_optimal] for r in summary.rows])
    )
    print(f"mean frequency of realized optimal action: {mean_best:.4f}")
    if config.out_dir:
        print(f"artifacts written to {config.out_dir}")
    return 0


def _cmd_enumerate(args: argparse.Namespace) -> int:
    grid, horizon = _enumeration_instance(args)
    root = enumerate_exact(grid, horizon)
    nodes = list(iter_nodes(root))
    depth_counts: dict[int, int] = {}
    for node in nodes:
        depth_counts[node.depth] = depth_counts.get(node.depth, 0) + 1
    print(f"nodes: {len(nodes)}  (horizon {horizon}, actions {grid.n_actions})")
    for depth in sorted(depth_counts):
        mass = sum(n.probability for n in nodes if n.depth == depth)
        print(f"  depth {depth}: {depth_counts[depth]} nodes, total probability {mass:.12f}")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        fmt = args.format or "csv"
        path = args.out / f"nodes.{fmt}"
        _write_nodes(nodes, grid.n_actions, path, fmt)
        print(f"node table written to {path}")
    return 0


def _write_nodes(nodes, k: int, path: Path, fmt: str) -> None:
    def history_str(node) -> str:
        return "|".join(f"{a}:{int(r)}" for a, r in node.history)

    if fmt == "json":
        obj = [
            {
                "depth": n.depth,
                "history": history_str(n),
                "probability": n.probability,
                "optimal_action_probs": [float(x) for x in n.p_vector],
            }
            for n in nodes
        ]
        path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
        return
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["depth", "history", "probability"] + [f"p_{a}" for a in range(k)])
        for n in nodes:
            writer.writerow(
                [n.depth, history_str(n), repr(n.probability)]
                + [repr(float(x)) for x in n.p_vector]
            )


def _cmd_martingale_check(args: argparse.Namespace) -> int:
    grid, horizon = _enumeration_instance(args)
    root = enumerate_exact(grid, horizon)
    report: MartingaleResidualReport = martingale_check(root)
    if args.format == "json":
        print(json.dumps(report.to_jsonable(), indent=2, sort_keys=True))
    else:
        print(
            f"max tower residual: {report.max_residual:.3e} "
            f"({report.internal_nodes} internal nodes, "
            f"{report.subsets_checked} action subsets)"
        )
        for depth, residual in report.per_depth_max:
            print(f"  depth {depth}: max residual {residual:.3e}")
    if report.max_residual > args.tol:
        print(f"FAIL: residual exceeds tolerance {args.tol:g}", file=sys.stderr)
        return 1
    return 0


def _cmd_regret(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_config(args.config), args)
    policy = build_policy(
        config.model,
        config.policy,
        fixed_action=config.fixed_action,
        inner_kind=config.inner_policy,
    )
    truth = None
    if config.fixed_parameter is not None:
        truth = config.fixed_parameter
    elif config.true_means is not None:
        truth = np.array(config.true_means)
    report = bayes_regret_estimate(
        config.model,
        policy,
        config.horizon,
        config.replications,
        config.seed,
        true_parameter=truth,
        jobs=args.jobs,
    )
    checkpoints = tuple(args.checkpoints) if args.checkpoints else config.checkpoints
    rows = report.at_checkpoints(checkpoints)
    if config.report_format == "json":
        print(json.dumps(rows, indent=2, sort_keys=True))
    else:
        print(f"{'t':>10} {'cum_regret':>14} {'regret/t':>12} {'regret/sqrt(t)':>16}")
        for row in rows:
            print(
                f"{row['t']:>10} {row['mean_cumulative_regret']:>14.4f} "
                f"{row['regret_over_t']:>12.6f} {row['regret_over_sqrt_t']:>16.6f}"
            )
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        path = args.out / "regret_curve.csv"
        _write_regret_curve(report, path)
        print(f"per-step series written to {path}")
        if not args.no_plots:
            from .plots import render_regret_figure

            fig = render_regret_figure(report, args.out / "regret.png")
            print(f"figure written to {fig}")
    return 0


def _write_regret_curve(report, path: Path) -> None:
    cum = report.cumulative
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["t", "mean_step_gap", "se_step_gap", "cumulative",
             "cumulative_over_t", "cumulative_over_sqrt_t"]
        )
        for i in range(report.horizon):
            t = i + 1
            writer.writerow(
                [
                    t,
                    repr(float(report.per_step_mean[i])),
                    repr(float(report.per_step_se[i])),
                    repr(float(cum[i])),
                    repr(float(cum[i] / t)),
                    repr(float(cum[i] / np.sqrt(t))),
                ]
            )


def _cmd_counterexample(args: argparse.Namespace) -> int:
    fmt = args.format or "csv"
    if args.config is not None:
        config = _apply_overrides(load_config(args.config), args)
        if not isinstance(config.model, ParameterGrid):
            raise UnsupportedInstanceError("the counterexample runs on a grid model")
        grid = config.model
        fixed_action = (
            args.fixed_action if args.fixed_action is not None else config.fixed_action
        )
        horizon, replications, seed = config.horizon, config.replications, config.seed
        fmt = config.report_format if args.format is None else args.format
    else:
        grid = default_verification_grid()
        fixed_action = args.fixed_action if args.fixed_action is not None else 1
        horizon = args.horizon if args.horizon is not None else 10_000
        replications = args.replications if args.replications is not None else 8
        seed = args.seed if args.seed is not None else 0
    if fixed_action is None:
        raise ConfigError(["counterexample requires fixed_action"])

    report = counterexample_report(
        grid,
        fixed_action,
        horizon,
        replications,
        seed,
        checkpoints=args.checkpoints,
        jobs=args.jobs,
    )
    if fmt == "json":
        print(json.dumps(report.to_jsonable(), indent=2, sort_keys=True))
    else:
        print(f"forced plays of action {fixed_action}: {report.forced_plays}")
        print(
            f"{'t':>10} {'regret/t':>12} {'fixed_count':>12} {'fixed_freq':>12} "
            f"{'freq_when_subopt':>17}"
        )
        for row in report.checkpoint_rows:
            print(
                f"{row.t:>10} {row.mean_regret_over_t:>12.6f} "
                f"{row.mean_fixed_count:>12.1f} {row.mean_fixed_frequency:>12.6f} "
                f"{row.suboptimal_regime_frequency:>17.6f}"
            )
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        path = args.out / "counterexample.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "mean_regret_over_t", "mean_fixed_count",
                             "mean_fixed_frequency", "suboptimal_regime_frequency"])
            for row in report.checkpoint_rows:
                writer.writerow(
                    [row.t, repr(row.mean_regret_over_t),
                     repr(row.mean_fixed_count), repr(row.mean_fixed_frequency),
                     repr(row.suboptimal_regime_frequency)]
                )
        print(f"checkpoint table written to {path}")
        if not args.no_plots:
            from .plots import render_counterexample_figure

            fig = render_counterexample_figure(report, args.out / "counterexample.png")
            print(f"figure written to {fig}")
    return 0


def _cmd_validate_config(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    model = "grid" if isinstance(config.model, ParameterGrid) else "beta_bernoulli"
    print(
        f"OK: {model} model, {config.model.n_actions} actions, "
        f"policy={config.policy}, horizon={config.horizon}, "
        f"replications={config.replications}"
    )
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "enumerate": _cmd_enumerate,
    "martingale-check": _cmd_martingale_check,
    "regret": _cmd_regret,
    "counterexample": _cmd_counterexample,
    "validate-config": _cmd_validate_config,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as e:
        for line in e.errors:
            print(f"config error: {line}", file=sys.stderr)
        return 2
    except UnsupportedInstanceError as e:
        print(f"unsupported instance: {e}", file=sys.stderr)
        return 3
    except FileNotFoundError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # pragma: no cover - defensive
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
