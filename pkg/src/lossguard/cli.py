"""Command-line front end: ``run``, ``grid`` and ``validate``.

Exit status is 0 on success and 1 on any failure; an invalid config
never leaves a partial output file behind. ``grid`` keeps going when an
individual cell fails, writes whatever succeeded, and then exits
nonzero.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .aggregators import ConfigError
from .config import config_hash, parse_config, parse_grid_config
from .results import (
    atomic_write_text,
    render_grid_summary,
    write_results,
    write_summary,
)
from .simulation import GridRow, post_attack_mean_accuracy, run_experiment


def _apply_seed(config, seed):
    if seed is None:
        return config
    return dataclasses.replace(config, seed=seed)


def cmd_validate(args) -> int:
    try:
        config = parse_config(args.config)
    except (ConfigError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    print(f"ok: {args.config} (config_hash={config_hash(config)})")
    return 0


def cmd_run(args) -> int:
    try:
        config = _apply_seed(parse_config(args.config), args.seed)
    except (ConfigError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    out = args.out or config.output or "results.csv"
    try:
        result = run_experiment(config)
        write_results(out, result)
        write_summary(Path(out).with_suffix(".summary.json"), result)
    except Exception as err:  # noqa: BLE001 - single exit point with diagnostic
        print(f"error: {err}", file=sys.stderr)
        return 1
    if result.reports:
        final = result.reports[-1].centralized_accuracy
        print(f"wrote {out} ({len(result.reports)} rounds, final accuracy {final:.4f})")
    else:
        print(f"wrote {out} (0 rounds)")
    return 0


def cmd_grid(args) -> int:
    try:
        grid = parse_grid_config(args.config)
    except (ConfigError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    repeats = args.repeats if args.repeats is not None else grid.repeats
    if repeats < 1:
        print("error: repeats must be >= 1", file=sys.stderr)
        return 1
    out_dir = Path(args.out or "grid_results")
    rows: list[GridRow] = []
    failed = False
    for config in grid.cells():
        config = _apply_seed(config, args.seed)
        label = f"{config.aggregator.kind}__{config.attack.kind}"
        accs = []
        error = None
        for r in range(repeats):
            cell = dataclasses.replace(config, seed=config.seed + r)
            try:
                result = run_experiment(cell)
            except Exception as err:  # noqa: BLE001 - cell isolation
                error = str(err)
                break
            write_results(out_dir / f"{label}__seed{cell.seed}.csv", result)
            accs.append(post_attack_mean_accuracy(result))
        if error is not None:
            failed = True
            rows.append(
                GridRow(
                    aggregator=config.aggregator.kind,
                    attack=config.attack.kind,
                    dataset=config.dataset.name,
                    repeats=repeats,
                    mean_accuracy=None,
                    std_accuracy=None,
                    error=error,
                )
            )
            print(f"cell {label}: FAILED ({error})", file=sys.stderr)
            continue
        mean = sum(accs) / len(accs)
        if len(accs) > 1:
            var = sum((a - mean) ** 2 for a in accs) / (len(accs) - 1)
            std = var**0.5
        else:
            std = 0.0
        rows.append(
            GridRow(
                aggregator=config.aggregator.kind,
                attack=config.attack.kind,
                dataset=config.dataset.name,
                repeats=repeats,
                mean_accuracy=mean,
                std_accuracy=std,
            )
        )
        print(f"cell {label}: mean post-attack accuracy {mean:.4f} +/- {std:.4f}")
    atomic_write_text(out_dir / "summary.csv", render_grid_summary(rows))
    print(f"wrote {out_dir / 'summary.csv'} ({len(rows)} cells)")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lossguard",
        description="Byzantine-robust federated learning simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", help="results csv path (default: config output or results.csv)")
    p_run.add_argument("--seed", type=int, help="override the master seed")
    p_run.set_defaults(func=cmd_run)

    p_grid = sub.add_parser("grid", help="run an attacks x defenses grid")
    p_grid.add_argument("--config", required=True)
    p_grid.add_argument("--out", help="output directory (default: grid_results)")
    p_grid.add_argument("--seed", type=int, help="override the master seed")
    p_grid.add_argument("--repeats", type=int, help="override the grid's repeat count")
    p_grid.set_defaults(func=cmd_grid)

    p_val = sub.add_parser("validate", help="parse and validate a config, then exit")
    p_val.add_argument("--config", required=True)
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


def entrypoint() -> None:  # console_scripts hook
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
