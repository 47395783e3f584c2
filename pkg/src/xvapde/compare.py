"""Run every backend on one problem and measure how far apart they are."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .iterate import BACKENDS, IterationReport, back_transform, run_monotone

# values below this fraction of the strike are compared in absolute terms
REL_FLOOR = 1e-2


@dataclass(frozen=True)
class PairGap:
    pair: str
    max_abs: float
    mean_abs: float
    max_rel_interior: float


def interior_mask(x: np.ndarray) -> np.ndarray:
    """Nodes in the middle half of the grid, away from the boundary closure."""
    return (x >= 0.5 * x[0]) & (x <= 0.5 * x[-1])


def pair_gap(name: str, a: np.ndarray, b: np.ndarray, x: np.ndarray, scale: float) -> PairGap:
    """Gaps between price vectors ``a`` and reference ``b``.

    The relative gap is ``|a - b| / max(|b|, REL_FLOOR * scale)`` taken over
    interior nodes; ``scale`` is the strike.
    """
    d = np.abs(a - b)
    mask = interior_mask(x)
    rel = d[mask] / np.maximum(np.abs(b[mask]), REL_FLOOR * scale)
    return PairGap(name, float(d.max()), float(d.mean()), float(rel.max()))


@dataclass
class Comparison:
    cfg: RunConfig
    reports: dict[str, IterationReport]
    runtimes: dict[str, float]

    @property
    def x(self) -> np.ndarray:
        return self.cfg.grid.x

    def prices(self, backend: str) -> np.ndarray:
        """Prices at t = 0 on the grid nodes."""
        return self.reports[backend].surface.values[-1]

    def mc_stderr(self) -> np.ndarray:
        rep = self.reports["mc"]
        return back_transform(rep.stderr, self.cfg.payoff, self.cfg.horizon).values[-1]

    def gaps(self) -> list[PairGap]:
        K = self.cfg.payoff.strike
        p = {b: self.prices(b) for b in BACKENDS}
        return [
            pair_gap("fd-kernel", p["fd"], p["kernel"], self.x, K),
            pair_gap("mc-kernel", p["mc"], p["kernel"], self.x, K),
            pair_gap("mc-fd", p["mc"], p["fd"], self.x, K),
        ]

    def mc_z_score(self) -> float:
        """|mc - kernel| at the headline point in units of the pooled SE."""
        K = self.cfg.payoff.strike
        mc = self.reports["mc"].price(K, 0.0)
        ker = self.reports["kernel"].price(K, 0.0)
        se = back_transform(self.reports["mc"].stderr, self.cfg.payoff, self.cfg.horizon).price(K, 0.0)
        return abs(mc - ker) / se


def run_comparison(cfg: RunConfig) -> Comparison:
    spec, ci = cfg.reaction(), cfg.coefficients()
    reports, runtimes = {}, {}
    for backend in BACKENDS:
        t0 = time.perf_counter()
        reports[backend] = run_monotone(spec, ci, cfg.grid, cfg.payoff, cfg.horizon, cfg.iteration(backend))
        runtimes[backend] = time.perf_counter() - t0
    return Comparison(cfg, reports, runtimes)
