"""CSV and JSON artifacts of a pricing run.

CSV floats use ``%.17g`` so they parse back to the same doubles.  JSON
floats use Python's shortest round-trip repr, which is equally exact.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .iterate import IterationReport, back_transform
from .model import Payoff


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % float(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, data: dict) -> None:
    text = json.dumps(_jsonable(data), indent=2, ensure_ascii=False, allow_nan=False)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text + "\n")


@dataclass(frozen=True)
class ReportPaths:
    iterations: Path
    surface: Path
    summary: Path

    @classmethod
    def in_dir(cls, out_dir, prefix: str = "") -> "ReportPaths":
        d = Path(out_dir)
        return cls(d / f"{prefix}iterations.csv", d / f"{prefix}surface.csv", d / f"{prefix}summary.json")


def iteration_rows(report: IterationReport):
    for rec in report.records:
        yield (rec.iteration, rec.direction, rec.gap, rec.ratio, rec.sandwich_ok)


def surface_rows(report: IterationReport):
    s = report.surface
    S, t = s.S, s.t
    for j, tau in enumerate(s.tau):
        row = s.values[j]
        for i, x in enumerate(s.x):
            yield (x, S[i], tau, t[j], row[i])


def summarize(
    report: IterationReport,
    payoff: Payoff,
    config_echo: Optional[dict] = None,
    probes: Sequence[tuple[float, float]] = (),
) -> dict:
    """JSON-ready summary; keys appear in a fixed order."""
    se_surface = None
    if report.stderr is not None:
        se_surface = back_transform(report.stderr, payoff, report.surface.T)

    def point(S, t):
        out = {"S": S, "t": t, "price": report.price(S, t)}
        if se_surface is not None:
            out["stderr"] = se_surface.price(S, t)
        return out

    directions = [d for d in ("decreasing", "increasing") if report.gaps(d)]
    sup = report.supersolution
    return {
        "config": config_echo,
        "backend": report.config.backend,
        "direction": report.config.direction,
        "converged": report.converged,
        "iterations": report.iterations,
        "headline": point(payoff.strike, 0.0),
        "probes": [point(S, t) for S, t in probes],
        "gaps": {d: report.gaps(d) for d in directions},
        "ratios": {d: report.ratios(d) for d in directions},
        "max_ratio": report.max_ratio,
        "two_sided_gap": report.two_sided_gap,
        "omega": report.omega,
        "sandwich_violations": report.sandwich_violations,
        "supersolution": {
            "K": sup.k_const,
            "lambda": sup.lambda_rate,
            "C0_prime": sup.c0_prime,
            "C_h": sup.c_h,
        },
    }


def emit_report(
    report: IterationReport,
    paths: ReportPaths,
    payoff: Payoff,
    config_echo: Optional[dict] = None,
    probes: Sequence[tuple[float, float]] = (),
) -> dict:
    """Write the two CSV files and the JSON summary; returns the summary.

    Raises ``OSError`` if a path cannot be written.
    """
    summary = summarize(report, payoff, config_echo, probes)
    write_csv(paths.iterations, ("iter", "direction", "gap_weighted_sup", "ratio", "sandwich_ok"), iteration_rows(report))
    write_csv(paths.surface, ("x", "S", "tau", "t", "v"), surface_rows(report))
    write_json(paths.summary, summary)
    return summary


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]
