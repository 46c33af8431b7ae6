"""Command-line entry point.

Exit status is 0 on success, 1 for usage and configuration errors and 2 for
failures while running. Errors are reported on stderr as a single line
``error: <code>: <message>``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import plotting
from .config import ExperimentConfig, load_config, write_config
from .core import (
    BudgetExhaustedError,
    ConfigError,
    InvalidInputError,
    NumericalError,
    PreconditionError,
    RngStream,
)
from .experiments import (
    DRIFT_OVERRIDES,
    drift_experiment,
    reward_ablation,
    write_rows,
)
from .files import read_curves, read_episode_log, write_dataset
from .harness import run_baseline_episode, run_episode, synthetic_spec
from .policy import REWARD_MODES
from .selection import STRATEGIES
from .synthetic import generate_synthetic

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(p: argparse.ArgumentParser, out_default: str) -> None:
    p.add_argument("--config", help="experiment config file (key = value sections)")
    p.add_argument("--seed", type=int, help="overrides al.seed")
    p.add_argument("--out", default=out_default, help="output directory")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted config override, e.g. al.budget=20 (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rlmba", description="Multimodal active learning with a learned selection policy.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log round progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run one episode of the method")
    _add_common(p, "rlmba_out")
    p.add_argument("--reward", choices=REWARD_MODES, help="overrides reward.mode")
    p.add_argument("--curve", action="append", default=[], metavar="CSV",
                   help="baseline curve file for the relative reward (repeatable)")

    p = sub.add_parser("baseline", help="run a classical strategy and write its curve")
    _add_common(p, "rlmba_out")
    p.add_argument("--strategy", required=True, choices=STRATEGIES)

    p = sub.add_parser("gen-data", help="write a synthetic dataset file")
    _add_common(p, "rlmba_data")
    p.add_argument("--name", default="dataset.csv", help="file name inside --out")

    p = sub.add_parser("analyze", help="weight, gap and Shapley trajectories of an episode log")
    p.add_argument("log", help="episode log (JSON lines)")
    p.add_argument("--out", help="directory for trajectories.csv (stdout when omitted)")

    p = sub.add_parser("plot-data", help="tables and figures from one or more episode logs")
    p.add_argument("logs", nargs="+", help="episode logs (JSON lines)")
    p.add_argument("--out", default="rlmba_plots", help="output directory")
    p.add_argument("--no-figures", action="store_true", help="write the CSV tables only")

    p = sub.add_parser("experiment", help="seed-swept studies: modality drift or reward-mode ablation")
    p.add_argument("name", choices=("drift", "ablation"))
    _add_common(p, "rlmba_experiment")
    p.add_argument("--seeds", type=int, default=10, help="number of seeds, starting at --seed (default 0)")
    return parser


def _config(args, preset=()) -> ExperimentConfig:
    overrides = list(preset) + list(args.set)
    if getattr(args, "seed", None) is not None:
        overrides.append(f"al.seed={args.seed}")
    if getattr(args, "reward", None):
        overrides.append(f"reward.mode={args.reward}")
    if args.config is not None and not Path(args.config).is_file():
        raise UsageError(f"config file not found: {args.config}")
    return load_config(args.config, overrides)


def _print_json(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def cmd_run(args) -> int:
    config = _config(args)
    curves = read_curves(args.curve) if args.curve else None
    episode = run_episode(config, curves=curves, out_dir=args.out)
    write_config(Path(args.out) / "config.cfg", config)
    summary = {k: v for k, v in episode.summary.items() if k != "config"}
    _print_json(summary)
    return EXIT_OK


def cmd_baseline(args) -> int:
    config = _config(args)
    episode, _ = run_baseline_episode(config, args.strategy, out_dir=args.out)
    _print_json({k: v for k, v in episode.summary.items() if k != "config"})
    return EXIT_OK


def cmd_gen_data(args) -> int:
    config = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = generate_synthetic(synthetic_spec(config), RngStream(config.al.seed, "data"))
    path = out / args.name
    write_dataset(path, data)
    _print_json({"path": str(path), "n_samples": len(data), "dims": list(data.dims),
                 "n_classes": data.n_classes})
    return EXIT_OK


def cmd_analyze(args) -> int:
    records = read_episode_log(args.log)
    rows = plotting.trajectory_rows(records)
    fields = []
    for row in rows:
        fields.extend(k for k in row if k not in fields)
    if args.out is None:
        print(",".join(fields))
        for row in rows:
            print(",".join("" if row.get(k) is None else repr(row[k]) for k in fields))
    else:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if rows:
            write_rows(out / "trajectories.csv", [{k: row.get(k) for k in fields} for row in rows])
        _print_json({"path": str(out / "trajectories.csv") if rows else None, "rounds": len(rows)})
    return EXIT_OK


def cmd_plot_data(args) -> int:
    logs = [read_episode_log(p) for p in args.logs]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tables = {
        "accuracy": (plotting.accuracy_rows(logs), plotting.plot_accuracy),
        "phi": (plotting.phi_rows(logs), plotting.plot_phi),
        "weights": (plotting.weight_rows(logs), None),
        "rewards": (plotting.reward_rows(logs), plotting.plot_rewards),
    }
    written = []
    for name, (rows, render) in tables.items():
        if not rows:
            continue
        write_rows(out / f"{name}.csv", rows)
        written.append(f"{name}.csv")
        if render is not None and not args.no_figures:
            render(rows, out / f"{name}.png")
            written.append(f"{name}.png")
    _print_json({"out": str(out), "files": written})
    return EXIT_OK


def cmd_experiment(args) -> int:
    preset = [f"{k}={v}" for k, v in DRIFT_OVERRIDES.items()] if args.name == "drift" else []
    base = _config(args, preset)
    seeds = range(base.al.seed, base.al.seed + args.seeds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.name == "drift":
        report = drift_experiment(base, seeds, out_dir=out)
        write_rows(out / "drift.csv", report.as_rows())
        _print_json({
            "mean_random": report.mean_random, "mean_method": report.mean_method,
            "wins": report.wins, "losses": report.losses, "sign_test_p": report.sign_test_p,
            "weight_increases": report.weight_increases, "seeds": len(report.results),
        })
    else:
        result = reward_ablation(base, seeds)
        write_rows(out / "ablation.csv", result.table())
        mean = [{"mode": mode, "round": t, "top1": v}
                for mode, curve in result.mean_curves().items() for t, v in curve.items()]
        write_rows(out / "ablation_mean.csv", mean)
        final = {mode: curve[max(curve)] for mode, curve in result.mean_curves().items()}
        _print_json({"final_top1": final, "seeds": len(seeds)})
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "baseline": cmd_baseline,
    "gen-data": cmd_gen_data,
    "analyze": cmd_analyze,
    "plot-data": cmd_plot_data,
    "experiment": cmd_experiment,
}

_ERROR_CODES = (
    (UsageError, "usage", EXIT_USAGE),
    (ConfigError, "config", EXIT_USAGE),
    (BudgetExhaustedError, "budget", EXIT_RUNTIME),
    (NumericalError, "numerical", EXIT_RUNTIME),
    (PreconditionError, "precondition", EXIT_RUNTIME),
    (InvalidInputError, "invalid-input", EXIT_RUNTIME),
    (OSError, "io", EXIT_RUNTIME),
    (ValueError, "invalid-input", EXIT_RUNTIME),
)


def _fail(code: str, message: str, status: int) -> int:
    one_line = " ".join(str(message).split())
    print(f"error: {code}: {one_line}", file=sys.stderr)
    return status


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:  # mapped to a status below
        for kind, code, status in _ERROR_CODES:
            if isinstance(exc, kind):
                return _fail(code, exc, status)
        return _fail("internal", f"{type(exc).__name__}: {exc}", EXIT_RUNTIME)


if __name__ == "__main__":
    sys.exit(main())
