"""Deterministic results serialization.

A results file starts with one ``#`` header line (tool version, config
hash, master seed), then a column-name row, then one comma-delimited row
per round. Floats use 17 significant digits so parsing them back is
exact; per-client losses that a rule does not compute stay empty, never
zero. Selected ids within a row are joined with ``;``. All files are
written atomically (temp file in the target directory, then rename).
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

from . import __version__
from .config import ExperimentConfig, config_hash, config_to_dict
from .simulation import ExperimentResult, RoundReport, post_attack_mean_accuracy


def format_float(x: float) -> str:
    return f"{x:.17g}"


def column_names(num_clients: int) -> list[str]:
    return [
        "round",
        "accuracy",
        "server_eval_loss",
        "k_t",
        "selected_ids",
        "attack_active",
    ] + [f"v_{i}" for i in range(num_clients)]


def report_row(report: RoundReport, num_clients: int) -> list[str]:
    row = [
        str(report.round),
        format_float(report.centralized_accuracy),
        format_float(report.server_eval_loss),
        str(report.selection.k_t),
        ";".join(str(i) for i in report.selection.selected_ids),
        "1" if report.attack_active else "0",
    ]
    losses = report.per_client_loss or {}
    for i in range(num_clients):
        row.append(format_float(losses[i]) if i in losses else "")
    return row


def render_results(config: ExperimentConfig, reports: list[RoundReport]) -> str:
    lines = [
        f"# lossguard {__version__} config_hash={config_hash(config)} master_seed={config.seed}",
        ",".join(column_names(config.num_clients)),
    ]
    for report in reports:
        lines.append(",".join(report_row(report, config.num_clients)))
    return "\n".join(lines) + "\n"


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_results(path, result: ExperimentResult) -> None:
    atomic_write_text(path, render_results(result.config, result.reports))


def run_summary(result: ExperimentResult) -> dict:
    """Everything here is recomputable from the per-round rows."""
    reports = result.reports
    return {
        "version": __version__,
        "config_hash": config_hash(result.config),
        "master_seed": result.config.seed,
        "rounds": len(reports),
        "final_accuracy": reports[-1].centralized_accuracy if reports else None,
        "post_attack_mean_accuracy": (
            post_attack_mean_accuracy(result)
            if any(r.round >= result.config.attack.start_round for r in reports)
            else None
        ),
        "defense_failed_rounds": [r.round for r in reports if r.defense_failed],
        "config": config_to_dict(result.config),
    }


def write_summary(path, result: ExperimentResult) -> None:
    atomic_write_text(path, json.dumps(run_summary(result), indent=2, sort_keys=True) + "\n")


def render_grid_summary(rows) -> str:
    lines = ["aggregator,attack,dataset,repeats,mean_accuracy,std_accuracy,error"]
    for r in rows:
        lines.append(
            ",".join(
                [
                    r.aggregator,
                    r.attack,
                    r.dataset,
                    str(r.repeats),
                    format_float(r.mean_accuracy) if r.mean_accuracy is not None else "",
                    format_float(r.std_accuracy) if r.std_accuracy is not None else "",
                    (r.error or "").replace(",", ";").replace("\n", " "),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def parse_results(path) -> tuple[dict, list[dict]]:
    """Read a results file back into (header info, row dicts)."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError(f"{path}: missing results header")
    header = {}
    for token in lines[0].lstrip("# ").split():
        if "=" in token:
            key, val = token.split("=", 1)
            header[key] = val
    names = lines[1].split(",")
    rows = []
    for line in lines[2:]:
        if not line:
            continue
        parts = line.split(",")
        row = dict(zip(names, parts))
        rows.append(row)
    return header, rows
