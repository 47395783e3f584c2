"""Command line entry point: ``xvapde price|compare <config.json>``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .compare import Comparison, run_comparison
from .config import ConfigError, RunConfig, check_probe, load_config
from .iterate import BACKENDS, MonotonicityError, run_monotone
from .report import ReportPaths, emit_report, write_csv, write_json

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3
EXIT_IO = 4

logger = logging.getLogger("xvapde")


def parse_probe(text: str, index: int = 0) -> tuple[float, float]:
    """Parse ``S=<value>[,t=<value>]``."""
    path = f"--probe[{index}]"
    fields = {}
    for part in text.split(","):
        key, sep, value = part.partition("=")
        key = key.strip()
        if not sep or key not in ("S", "t") or key in fields:
            raise ConfigError(path, f"expected S=<value>[,t=<value>], got {text!r}")
        try:
            fields[key] = float(value)
        except ValueError:
            raise ConfigError(f"{path}.{key}", f"not a number: {value!r}") from None
    if "S" not in fields:
        raise ConfigError(path, "S is required")
    return fields["S"], fields.get("t", 0.0)


def _load(args) -> tuple[RunConfig, list[tuple[float, float]]]:
    cfg = load_config(args.config)
    probes = list(cfg.probes)
    for i, text in enumerate(args.probe or []):
        S, t = parse_probe(text, i)
        check_probe(S, t, cfg.grid, cfg.payoff.strike, cfg.horizon, f"--probe[{i}]")
        probes.append((S, t))
    return cfg, probes


def _echo(cfg: RunConfig, probes) -> dict:
    echo = cfg.echo()
    echo["probes"] = [{"S": S, "t": t} for S, t in probes]
    return echo


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_price(args) -> int:
    cfg, probes = _load(args)
    report = run_monotone(cfg.reaction(), cfg.coefficients(), cfg.grid, cfg.payoff, cfg.horizon, cfg.iteration())
    paths = ReportPaths.in_dir(_out_dir(args))
    summary = emit_report(report, paths, cfg.payoff, _echo(cfg, probes), probes)
    head = summary["headline"]
    if not args.quiet:
        line = f"price S={head['S']:g} t={head['t']:g}: {head['price']:.6f}"
        if "stderr" in head:
            line += f" (se {head['stderr']:.2g})"
        print(line)
        for pr in summary["probes"]:
            print(f"probe S={pr['S']:g} t={pr['t']:g}: {pr['price']:.6f}")
    if not report.converged:
        logger.error("no convergence after %d iterations; report written to %s", report.iterations, paths.summary.parent)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def write_comparison(cmp: Comparison, out: Path, echo: dict) -> dict:
    """Write the node and gap CSVs plus the JSON summary; timings get their own file."""
    x = cmp.x
    K = cmp.cfg.payoff.strike
    prices = {b: cmp.prices(b) for b in BACKENDS}
    se = cmp.mc_stderr()
    write_csv(
        out / "compare_nodes.csv",
        ("x", "S", "kernel", "fd", "mc", "mc_stderr"),
        zip(x, K * np.exp(x), prices["kernel"], prices["fd"], prices["mc"], se),
    )
    gaps = cmp.gaps()
    write_csv(
        out / "compare_gaps.csv",
        ("pair", "max_abs_gap", "mean_abs_gap", "max_rel_interior_gap"),
        ((g.pair, g.max_abs, g.mean_abs, g.max_rel_interior) for g in gaps),
    )
    summary = {
        "config": echo,
        "backends": {
            b: {
                "converged": r.converged,
                "iterations": r.iterations,
                "headline": r.price(K, 0.0),
                "max_ratio": r.max_ratio,
            }
            for b, r in cmp.reports.items()
        },
        "gaps": {
            g.pair: {"max_abs": g.max_abs, "mean_abs": g.mean_abs, "max_rel_interior": g.max_rel_interior}
            for g in gaps
        },
        "mc_headline_stderr": float(np.interp(0.0, x, se)),
        "mc_z_score": cmp.mc_z_score(),
        "timings_file": "compare_timings.json",
    }
    write_json(out / "compare_summary.json", summary)
    # wall-clock times differ between runs, so they stay out of the summary
    write_json(out / "compare_timings.json", {"runtime_seconds": cmp.runtimes})
    return summary


def cmd_compare(args) -> int:
    cfg, probes = _load(args)
    cmp = run_comparison(cfg)
    summary = write_comparison(cmp, _out_dir(args), _echo(cfg, probes))
    if not args.quiet:
        for b, info in summary["backends"].items():
            print(f"{b:>6}: {info['headline']:.6f}  ({cmp.runtimes[b]:.2f} s)")
        for pair, g in summary["gaps"].items():
            print(f"{pair}: max rel interior gap {g['max_rel_interior']:.3g}")
        print(f"mc vs kernel: {summary['mc_z_score']:.2f} pooled SE")
    if not all(r.converged for r in cmp.reports.values()):
        logger.error("at least one backend did not converge")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xvapde", description="xVA-adjusted Black-Scholes pricing by monotone iteration")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, help_text in (
        ("price", cmd_price, "price one contract and write its report files"),
        ("compare", cmd_compare, "run every backend on the same problem and compare them"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="JSON run configuration")
        p.add_argument("--out-dir", default=".", help="directory for CSV/JSON artifacts (default: .)")
        p.add_argument("--probe", action="append", metavar="S=<v>,t=<v>", help="extra price point; repeatable")
        p.add_argument("--quiet", action="store_true", help="print nothing on success")
        p.set_defaults(func=func)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="xvapde: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MonotonicityError as exc:
        print(f"iteration failed: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
