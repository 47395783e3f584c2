"""Monotone iterations between a super- and a subsolution.

Starting from the supersolution ``u0 = 2K exp(lambda t) cosh x`` each
iterate solves the linear problem with source ``G(previous iterate)``.
Because G is non-decreasing and every backend is a positive linear
operator, the iterates decrease from ``u0`` (and increase from ``-u0``)
nodewise; both chains converge to the same discrete solution, so their
distance is an a-posteriori error bound.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .evolution import CoefficientIntegrals, SampledSource, duhamel_solve, time_levels
from .fd import FdConfig, fd_solve
from .grid import Continuation, Field, SpatialGrid, continuation_for, sample_payoff, weighted_sup_values
from .mc import McConfig, mc_solve
from .model import Payoff, ReactionSpec, eval_G

logger = logging.getLogger(__name__)

BACKENDS = ("kernel", "fd", "mc")
DIRECTIONS = ("decreasing", "increasing", "both")
MONOTONE_SLACK = 1e-9


class MonotonicityError(RuntimeError):
    """An iterate left the monotone order by more than the numerical slack."""


@dataclass(frozen=True)
class SupersolutionParams:
    kappa: float
    k_const: float
    lambda_rate: float
    c0_prime: float
    c_h: float

    def __call__(self, x, t):
        return 2.0 * self.k_const * np.exp(self.lambda_rate * np.asarray(t)) * np.cosh(self.kappa * np.asarray(x))

    def samples(self, grid: SpatialGrid, times) -> np.ndarray:
        """Values on ``grid`` at each of ``times``, shape (levels, n)."""
        return self(grid.x[None, :], np.asarray(times, dtype=float)[:, None])


def build_supersolution(
    spec: ReactionSpec, ci: CoefficientIntegrals, grid: SpatialGrid, payoff: Payoff, T: float
) -> tuple[SupersolutionParams, Callable]:
    """Growth constant and exponential rate of the cosh supersolution."""
    kappa = 1.0
    if not kappa < grid.mu / 2:
        raise ValueError("the weight exponent mu must exceed 2")
    v0, c_h = sample_payoff(payoff, grid, moneyness=True)
    if not math.isfinite(c_h):
        raise ValueError("payoff violates the exponential growth bound")
    k_const = max(1.0, c_h)
    c0p = spec.c0_prime(k_const)
    sig = ci.sigma_sup(T)
    lam = 0.5 * kappa**2 * sig**2 + kappa * (ci.carry_sup(T) + 0.5 * sig**2) + c0p
    params = SupersolutionParams(kappa, k_const, lam, c0p, c_h)
    if np.any(params(grid.x, 0.0) < np.abs(v0.values)):
        raise ValueError("supersolution does not dominate |v0| on the grid")
    return params, params


@dataclass
class LinearSolver:
    """One backend bound to the coefficients and the time grid."""

    backend: str
    ci: CoefficientIntegrals
    r_g: float
    T: float
    t_steps: int
    continuation: Continuation = field(default_factory=Continuation)
    fd: FdConfig = field(default_factory=FdConfig)
    mc: McConfig = field(default_factory=McConfig)

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}")

    @property
    def times(self) -> np.ndarray:
        return time_levels(self.T, self.t_steps)

    def solve(self, v0: Field, source=None) -> tuple[list[Field], Optional[list[Field]]]:
        args = (self.ci, self.r_g, v0, source, self.t_steps, self.T)
        if self.backend == "kernel":
            return duhamel_solve(*args, continuation=self.continuation), None
        if self.backend == "fd":
            return fd_solve(*args, cfg=self.fd, continuation=self.continuation), None
        return mc_solve(*args, cfg=self.mc, continuation=self.continuation)


def _stack(fields: list[Field]) -> np.ndarray:
    return np.stack([f.values for f in fields])


def _fields(grid: SpatialGrid, times, values: np.ndarray) -> list[Field]:
    return [Field(grid, row, t) for t, row in zip(times, values)]


def _next(u_prev: np.ndarray, spec: ReactionSpec, v0: Field, solver: LinearSolver):
    times = solver.times
    if spec.is_zero:
        source = None
    else:
        x = v0.grid.x
        g = np.stack([eval_G(row, spec, x, t) for row, t in zip(u_prev, times)])
        source = SampledSource(times, g)
    return solver.solve(v0, source)


def iterate_once(u_prev: list[Field], spec: ReactionSpec, v0: Field, solver: LinearSolver) -> list[Field]:
    """Solve the linear problem whose source is G of the previous iterate."""
    return _next(_stack(u_prev), spec, v0, solver)[0]


def check_supersolution(
    params: SupersolutionParams, spec: ReactionSpec, v0: Field, solver: LinearSolver
) -> float:
    """Largest excess of one discrete step applied to u0 over u0 itself.

    Each step starts from the exact ``u0(t_k)`` with source ``G(u0)``; a
    non-positive result means u0 is a supersolution of the discrete scheme.
    """
    grid = v0.grid
    times = solver.times
    u0 = params.samples(grid, times)
    worst = -math.inf
    for k in range(len(times) - 1):
        step = LinearSolver(
            solver.backend, _ShiftedCoefficients(solver.ci, times[k]), solver.r_g,
            times[k + 1] - times[k], 1, solver.continuation, solver.fd, solver.mc,
        )
        g = np.stack([eval_G(u0[k], spec, grid.x, times[k]), eval_G(u0[k + 1], spec, grid.x, times[k + 1])])
        src = None if spec.is_zero else SampledSource([0.0, step.T], g)
        out, _ = step.solve(Field(grid, u0[k], 0.0), src)
        worst = max(worst, float(np.max(out[-1].values - u0[k + 1])))
    return worst


class _ShiftedCoefficients(CoefficientIntegrals):
    """Coefficient integrals seen from a later starting time."""

    def __init__(self, base: CoefficientIntegrals, offset: float):
        self._base = base
        self._offset = offset
        self.sigma, self.q, self.gamma = base.sigma, base.q, base.gamma

    def S(self, t):
        return self._base.S(t + self._offset) - self._base.S(self._offset)

    def R(self, t):
        return self._base.R(t + self._offset) - self._base.R(self._offset)

    def sigma_at(self, t):
        return self._base.sigma_at(t + self._offset)

    def drift_at(self, t):
        return self._base.drift_at(t + self._offset)


@dataclass(frozen=True)
class IterationConfig:
    tol: float = 1e-6
    max_iter: int = 50
    direction: str = "both"
    backend: str = "kernel"
    omega: Optional[float] = None
    t_steps: int = 200
    fd: FdConfig = field(default_factory=FdConfig)
    mc: McConfig = field(default_factory=McConfig)

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError("max_iter must be an integer >= 1")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")
        if int(self.t_steps) != self.t_steps or self.t_steps < 1:
            raise ValueError("t_steps must be an integer >= 1")
        if self.omega is not None and not math.isfinite(self.omega):
            raise ValueError("omega must be finite")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    direction: str
    gap: float
    ratio: Optional[float]
    sandwich_violations: int

    @property
    def sandwich_ok(self) -> bool:
        return self.sandwich_violations == 0


@dataclass(frozen=True)
class PriceSurface:
    """Prices on the (S, t) image of the (x, tau) grid."""

    strike: float
    x: np.ndarray
    tau: np.ndarray
    values: np.ndarray  # (levels, n), indexed by tau then x
    T: float

    @property
    def S(self) -> np.ndarray:
        return self.strike * np.exp(self.x)

    @property
    def t(self) -> np.ndarray:
        return self.T - self.tau

    def price(self, S: float, t: float = 0.0) -> float:
        """Bilinear interpolation in (log S, time to maturity)."""
        x = math.log(S / self.strike)
        tau = self.T - t
        if not (self.x[0] <= x <= self.x[-1]):
            raise ValueError(f"S={S} lies outside the grid")
        if not (-1e-12 <= tau <= self.T + 1e-12):
            raise ValueError(f"t={t} lies outside [0, T]")
        tau = min(max(tau, 0.0), self.T)
        j = int(np.clip(np.searchsorted(self.tau, tau, side="right") - 1, 0, len(self.tau) - 2))
        a = (tau - self.tau[j]) / (self.tau[j + 1] - self.tau[j])
        lo = np.interp(x, self.x, self.values[j])
        hi = np.interp(x, self.x, self.values[j + 1])
        return float((1 - a) * lo + a * hi)


def back_transform(fields: list[Field], payoff: Payoff, T: float) -> PriceSurface:
    """Map moneyness-grid values v(x, tau) to prices V(S = K e^x, t = T - tau)."""
    grid = fields[0].grid
    tau = np.array([f.time for f in fields])
    return PriceSurface(payoff.strike, grid.x, tau, payoff.strike * _stack(fields), T)


@dataclass
class IterationReport:
    records: list[IterationRecord]
    converged: bool
    iterations: int
    two_sided_gap: Optional[float]
    fields: list[Field]
    upper: Optional[list[Field]]
    lower: Optional[list[Field]]
    stderr: Optional[list[Field]]
    supersolution: SupersolutionParams
    omega: float
    config: IterationConfig
    surface: PriceSurface

    def gaps(self, direction: str) -> list[float]:
        return [r.gap for r in self.records if r.direction == direction]

    def ratios(self, direction: Optional[str] = None) -> list[float]:
        return [r.ratio for r in self.records if r.ratio is not None and direction in (None, r.direction)]

    @property
    def max_ratio(self) -> Optional[float]:
        ratios = self.ratios()
        return max(ratios) if ratios else None

    @property
    def sandwich_violations(self) -> int:
        return sum(r.sandwich_violations for r in self.records)

    def price(self, S: float, t: float = 0.0) -> float:
        return self.surface.price(S, t)


@dataclass
class _Chain:
    direction: str
    values: np.ndarray
    stderr: Optional[np.ndarray] = None
    last_gap: Optional[float] = None
    done: bool = False


def run_monotone(
    spec: ReactionSpec,
    ci: CoefficientIntegrals,
    grid: SpatialGrid,
    payoff: Payoff,
    T: float,
    cfg: IterationConfig = IterationConfig(),
) -> IterationReport:
    """Iterate from u0 and/or -u0 until successive iterates agree to ``tol``.

    Raises :class:`MonotonicityError` if an iterate breaks the monotone
    order by more than ``1e-9 * max|u0|``; running out of iterations is
    reported through ``converged=False`` instead.
    """
    solver = LinearSolver(
        cfg.backend, ci, spec.r_g, T, cfg.t_steps, continuation_for(payoff), cfg.fd, cfg.mc
    )
    params, _ = build_supersolution(spec, ci, grid, payoff, T)
    v0, _ = sample_payoff(payoff, grid, moneyness=True)
    times = solver.times
    u0 = params.samples(grid, times)
    eps = MONOTONE_SLACK * float(np.max(np.abs(u0)))
    omega = spec.r_g + spec.l_g if cfg.omega is None else cfg.omega

    chains = []
    if cfg.direction in ("decreasing", "both"):
        chains.append(_Chain("decreasing", u0))
    if cfg.direction in ("increasing", "both"):
        chains.append(_Chain("increasing", -u0))

    records: list[IterationRecord] = []
    two_sided = None
    m = 0
    while m < cfg.max_iter:
        m += 1
        for ch in chains:
            if ch.done:
                continue
            fields, se = _next(ch.values, spec, v0, solver)
            new = _stack(fields)
            step = new - ch.values
            if ch.direction == "decreasing":
                breach = float(np.max(step))
            else:
                breach = float(np.max(-step))
            if breach > eps:
                raise MonotonicityError(
                    f"{ch.direction} chain moved the wrong way by {breach:.3e} at iteration {m} "
                    f"(slack {eps:.3e})"
                )
            gap = weighted_sup_values(grid, times, step, omega)
            ratio = gap / ch.last_gap if ch.last_gap else None
            violations = int(np.count_nonzero(new > u0 + eps) + np.count_nonzero(new < -u0 - eps))
            records.append(IterationRecord(m, ch.direction, gap, ratio, violations))
            logger.debug("iteration %d %s gap=%.3e ratio=%s", m, ch.direction, gap, ratio)
            ch.values, ch.stderr, ch.last_gap = new, None if se is None else _stack(se), gap
            ch.done = gap <= cfg.tol
        if len(chains) == 2:
            upper, lower = chains[0].values, chains[1].values
            crossed = int(np.count_nonzero(lower > upper + eps))
            if crossed:
                last = records[-1]
                records[-1] = IterationRecord(
                    last.iteration, last.direction, last.gap, last.ratio, last.sandwich_violations + crossed
                )
            two_sided = weighted_sup_values(grid, times, upper - lower, omega)
        if all(ch.done for ch in chains):
            if two_sided is None or two_sided <= 2 * cfg.tol:
                break
            for ch in chains:
                ch.done = False

    converged = all(ch.done for ch in chains) and (two_sided is None or two_sided <= 2 * cfg.tol)
    if len(chains) == 2:
        price = 0.5 * (chains[0].values + chains[1].values)
        upper_f = _fields(grid, times, chains[0].values)
        lower_f = _fields(grid, times, chains[1].values)
        errs = [ch.stderr for ch in chains]
        stderr = None if errs[0] is None else 0.5 * (errs[0] + errs[1])
    else:
        price = chains[0].values
        upper_f = lower_f = None
        stderr = chains[0].stderr
    if not converged:
        logger.warning("monotone iteration stopped after %d iterations without converging", m)
    price_fields = _fields(grid, times, price)
    return IterationReport(
        records=records,
        converged=converged,
        iterations=m,
        two_sided_gap=two_sided,
        fields=price_fields,
        upper=upper_f,
        lower=lower_f,
        stderr=None if stderr is None else _fields(grid, times, stderr),
        supersolution=params,
        omega=omega,
        config=cfg,
        surface=back_transform(price_fields, payoff, T),
    )
