"""Sampled fields on a uniform log-price grid, with weighted norms."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .model import Payoff


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid on ``[x_min, x_max]`` with weight ``exp(-mu |x|)``."""

    x_min: float
    x_max: float
    n: int
    mu: float

    def __post_init__(self):
        if not (math.isfinite(self.x_min) and math.isfinite(self.x_max)):
            raise ValueError("grid bounds must be finite")
        if self.x_min >= 0:
            raise ValueError("x_min must be < 0")
        if self.x_max <= 0:
            raise ValueError("x_max must be > 0")
        if int(self.n) != self.n or self.n < 3:
            raise ValueError("n must be an integer >= 3")
        if self.n % 2 == 0:
            raise ValueError("n must be odd")
        if not self.mu > 2:
            raise ValueError("mu must be > 2")

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.h * np.arange(self.n)

    @property
    def weight(self) -> np.ndarray:
        return np.exp(-self.mu * np.abs(self.x))

    def interior(self, margin: float) -> np.ndarray:
        """Mask of nodes at least ``margin`` away from both ends."""
        x = self.x
        return (x - self.x_min >= margin - 1e-12) & (self.x_max - x >= margin - 1e-12)


def make_grid(x_min: float = -6.0, x_max: float = 6.0, n: int = 801, mu: float = 4.0) -> SpatialGrid:
    return SpatialGrid(float(x_min), float(x_max), int(n), float(mu))


@dataclass(frozen=True)
class Field:
    """Values on a grid at one time level (time to maturity)."""

    grid: SpatialGrid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def with_values(self, values, time: float | None = None) -> "Field":
        return Field(self.grid, values, self.time if time is None else time)


@dataclass(frozen=True)
class Continuation:
    """Extension of a field beyond the grid.

    Beyond the right end the field is continued as ``v[-1] * exp(right_rate * d)``
    and beyond the left end as ``v[0] * exp(left_rate * d)``, where ``d`` is the
    distance from the end node.  The rule is linear with positive weights, so
    it preserves nodewise ordering of fields.
    """

    left_rate: float = 0.0
    right_rate: float = 0.0

    def extend(self, values: np.ndarray, h: float, m_left: int, m_right: int) -> np.ndarray:
        left = values[0] * np.exp(self.left_rate * h * np.arange(m_left, 0, -1))
        right = values[-1] * np.exp(self.right_rate * h * np.arange(1, m_right + 1))
        return np.concatenate([left, values, right])

    def squared(self) -> "Continuation":
        return Continuation(2 * self.left_rate, 2 * self.right_rate)


def continuation_for(payoff: Payoff) -> Continuation:
    """Asymptotic shape of the value far from the strike.

    Calls grow like ``e^x`` to the right and vanish to the left; puts tend to
    a constant on the left and vanish to the right.  Table payoffs are held
    constant.
    """
    if payoff.kind == "call":
        return Continuation(left_rate=-1.0, right_rate=1.0)
    if payoff.kind == "put":
        return Continuation(left_rate=0.0, right_rate=-1.0)
    return Continuation()


def sample_payoff(payoff: Payoff, grid: SpatialGrid, moneyness: bool = False) -> tuple[Field, float]:
    """Initial field ``h(e^x)`` and its growth constant ``max |v0| e^{-|x|}``.

    With ``moneyness=True`` the grid coordinate is ``log(S / strike)`` and the
    values are expressed in units of the strike.
    """
    x = grid.x
    if moneyness:
        values = payoff(payoff.strike * np.exp(x)) / payoff.strike
    else:
        values = payoff(np.exp(x))
    c_h = float(np.max(np.abs(values) * np.exp(-np.abs(x))))
    return Field(grid, values, 0.0), c_h


def _values(f) -> tuple[SpatialGrid, np.ndarray]:
    return f.grid, np.asarray(f.values)


def weighted_l2(f: Field) -> float:
    """Trapezoid approximation of the weighted L2 norm over the grid."""
    grid, v = _values(f)
    integrand = v * v * grid.weight
    return float(math.sqrt(max(trapezoid(integrand, dx=grid.h), 0.0)))


def weighted_l2_values(grid: SpatialGrid, values: np.ndarray) -> np.ndarray:
    """Weighted L2 norms of the rows of a (levels, n) array."""
    integrand = np.atleast_2d(values) ** 2 * grid.weight
    return np.sqrt(trapezoid(integrand, dx=grid.h, axis=-1))


def weighted_sup(series: Sequence[Field] | Iterable[tuple[float, Field]], omega: float) -> float:
    """``max_t exp(-omega t) ||f(., t)||`` over the supplied time levels.

    Accepts either fields (using their own time labels) or ``(t, field)`` pairs.
    """
    best = None
    for item in series:
        if isinstance(item, Field):
            t, f = item.time, item
        else:
            t, f = item
        val = math.exp(-omega * t) * weighted_l2(f)
        best = val if best is None else max(best, val)
    if best is None:
        raise ValueError("weighted_sup needs at least one time level")
    return best


def weighted_sup_values(grid: SpatialGrid, times: np.ndarray, values: np.ndarray, omega: float) -> float:
    """Array form of :func:`weighted_sup` for stacked levels."""
    if len(times) == 0:
        raise ValueError("weighted_sup needs at least one time level")
    norms = weighted_l2_values(grid, values)
    return float(np.max(np.exp(-omega * np.asarray(times)) * norms))
