"""Theta-scheme finite differences for the inhomogeneous linear problem.

Central differences in x, coefficients frozen at the step midpoint, Thomas
algorithm for the tridiagonal solves.  The two end nodes follow the ODE
obtained by assuming the field has the continuation shape ``exp(a x)``
there, which is the same asymptotic rule the convolution backend uses for
its ghost values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .evolution import CoefficientIntegrals, Source, eval_source, time_levels
from .grid import Continuation, Field, SpatialGrid


class TridiagonalBreakdown(ArithmeticError):
    """Zero or non-finite pivot in the Thomas algorithm."""


@dataclass(frozen=True)
class Tridiagonal:
    """Rows ``lower[i] u[i-1] + diag[i] u[i] + upper[i] u[i+1]``.

    ``lower[0]`` and ``upper[-1]`` are ignored.
    """

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    def matvec(self, u: np.ndarray) -> np.ndarray:
        out = self.diag * u
        out[1:] += self.lower[1:] * u[:-1]
        out[:-1] += self.upper[:-1] * u[1:]
        return out

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return thomas(self.lower, self.diag, self.upper, rhs)


def thomas(lower, diag, upper, rhs) -> np.ndarray:
    n = len(diag)
    c = np.empty(n)
    d = np.empty(n)
    piv = diag[0]
    if piv == 0 or not np.isfinite(piv):
        raise TridiagonalBreakdown("zero pivot in row 0")
    c[0] = upper[0] / piv
    d[0] = rhs[0] / piv
    for i in range(1, n):
        piv = diag[i] - lower[i] * c[i - 1]
        if piv == 0 or not np.isfinite(piv):
            raise TridiagonalBreakdown(f"zero pivot in row {i}")
        c[i] = upper[i] / piv
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / piv
    x = np.empty(n)
    x[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    if not np.all(np.isfinite(x)):
        raise TridiagonalBreakdown("non-finite solution")
    return x


@dataclass(frozen=True)
class FdConfig:
    theta: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")


@dataclass(frozen=True)
class StepOperators:
    implicit: Tridiagonal
    explicit: Tridiagonal
    diffusion: float
    drift: float


def generator(
    ci: CoefficientIntegrals, r_g: float, grid: SpatialGrid, t: float, continuation: Continuation
) -> tuple[Tridiagonal, float, float]:
    """Discrete ``A(t) - r_G`` with boundary rows from the continuation."""
    sigma = ci.sigma_at(t)
    if not sigma > 0:
        raise ValueError(f"volatility must be > 0, got {sigma} at t={t}")
    diff = 0.5 * sigma * sigma
    drift = ci.drift_at(t)
    h, n = grid.h, grid.n
    lower = np.full(n, diff / h**2 - drift / (2 * h))
    diag = np.full(n, -2 * diff / h**2 - r_g)
    upper = np.full(n, diff / h**2 + drift / (2 * h))
    # growth rate of exp(a x) under the generator
    a, b = continuation.left_rate, continuation.right_rate
    lower[0] = upper[0] = 0.0
    diag[0] = diff * a * a - drift * a - r_g
    lower[-1] = upper[-1] = 0.0
    diag[-1] = diff * b * b + drift * b - r_g
    return Tridiagonal(lower, diag, upper), diff, drift


def assemble_step(
    ci: CoefficientIntegrals,
    r_g: float,
    grid: SpatialGrid,
    t_mid: float,
    dt: float,
    theta: float = 0.5,
    continuation: Continuation = Continuation(),
) -> StepOperators:
    """Operators ``I - theta dt L`` and ``I + (1 - theta) dt L``."""
    L, diff, drift = generator(ci, r_g, grid, t_mid, continuation)
    implicit = Tridiagonal(-theta * dt * L.lower, 1.0 - theta * dt * L.diag, -theta * dt * L.upper)
    explicit = Tridiagonal(
        (1 - theta) * dt * L.lower, 1.0 + (1 - theta) * dt * L.diag, (1 - theta) * dt * L.upper
    )
    return StepOperators(implicit, explicit, diff, drift)


def fd_solve(
    ci: CoefficientIntegrals,
    r_g: float,
    v0: Field,
    source: Optional[Source],
    t_steps: int,
    T: float,
    cfg: FdConfig = FdConfig(),
    continuation: Continuation = Continuation(),
) -> list[Field]:
    times = time_levels(T, t_steps)
    grid = v0.grid
    theta = cfg.theta
    out = [v0.with_values(v0.values, 0.0)]
    v = np.array(v0.values)
    f_prev = eval_source(source, times[0])
    for k in range(t_steps):
        t0, t1 = times[k], times[k + 1]
        dt = t1 - t0
        ops = assemble_step(ci, r_g, grid, 0.5 * (t0 + t1), dt, theta, continuation)
        rhs = ops.explicit.matvec(v)
        f_next = eval_source(source, t1)
        if f_prev is not None:
            rhs += dt * (1 - theta) * f_prev
        if f_next is not None:
            rhs += dt * theta * f_next
        v = ops.implicit.solve(rhs)
        f_prev = f_next
        out.append(Field(grid, v, t1))
    return out
