"""Model inputs and the reaction term built from them.

The risky value solves a Black-Scholes equation with a piecewise-linear
("jumping") nonlinearity coming from bilateral default and funding.  After
the change to time to maturity and log-price the nonlinearity is shifted by
a Lipschitz constant so that the remaining reaction term is non-decreasing,
which is what the monotone iteration needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


def _pos(v):
    return np.maximum(v, 0.0)


def _neg(v):
    return np.maximum(-v, 0.0)


@dataclass(frozen=True)
class RiskParams:
    """Risk-free rate plus the default and funding parameters."""

    r: float
    lambda_b: float = 0.0
    lambda_c: float = 0.0
    recovery_b: float = 0.0
    recovery_c: float = 0.0
    s_f: float = 0.0

    def __post_init__(self):
        for name in ("r", "lambda_b", "lambda_c", "recovery_b", "recovery_c", "s_f"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.lambda_b < 0:
            raise ValueError("lambda_b must be >= 0")
        if self.lambda_c < 0:
            raise ValueError("lambda_c must be >= 0")
        if self.s_f < 0:
            raise ValueError("s_f must be >= 0")
        if not 0.0 <= self.recovery_b <= 1.0:
            raise ValueError("recovery_b must lie in [0, 1]")
        if not 0.0 <= self.recovery_c <= 1.0:
            raise ValueError("recovery_c must lie in [0, 1]")


@dataclass(frozen=True)
class TimeCurve:
    """Piecewise-linear function of time to maturity.

    Knots are ``(t, value)`` pairs with strictly increasing ``t``; the curve
    is held constant outside the first and last knot.
    """

    knots: tuple[tuple[float, float], ...]

    def __post_init__(self):
        knots = tuple((float(t), float(v)) for t, v in self.knots)
        if not knots:
            raise ValueError("a curve needs at least one knot")
        for t, v in knots:
            if not (math.isfinite(t) and math.isfinite(v)):
                raise ValueError("curve knots must be finite")
        times = [t for t, _ in knots]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("knot times must be strictly increasing")
        object.__setattr__(self, "knots", knots)

    @classmethod
    def constant(cls, value: float) -> "TimeCurve":
        return cls(((0.0, value),))

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.knots])

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.knots])

    def __call__(self, t):
        return np.interp(t, self.times, self.values)

    def breakpoints(self, t0: float, t1: float) -> np.ndarray:
        """Knot times strictly inside ``(t0, t1)``."""
        times = self.times
        return times[(times > t0) & (times < t1)]


@dataclass(frozen=True)
class Payoff:
    """Terminal payoff h(S).

    ``strike`` is also the price scale used to normalise values on the
    moneyness grid, so table payoffs carry one as well.
    """

    kind: str
    strike: float
    table: Optional[tuple[tuple[float, float], ...]] = None

    def __post_init__(self):
        if self.kind not in ("call", "put", "table"):
            raise ValueError(f"unknown payoff kind {self.kind!r}")
        if not (math.isfinite(self.strike) and self.strike > 0):
            raise ValueError("strike must be > 0")
        if self.kind == "table":
            if not self.table or len(self.table) < 2:
                raise ValueError("table payoff needs at least two (S, h) rows")
            rows = tuple((float(s), float(h)) for s, h in self.table)
            spots = [s for s, _ in rows]
            if spots[0] <= 0 or any(b <= a for a, b in zip(spots, spots[1:])):
                raise ValueError("table spots must be positive and strictly increasing")
            if not all(math.isfinite(h) for _, h in rows):
                raise ValueError("table values must be finite")
            object.__setattr__(self, "table", rows)

    def __call__(self, spot):
        spot = np.asarray(spot, dtype=float)
        if self.kind == "call":
            return np.maximum(spot - self.strike, 0.0)
        if self.kind == "put":
            return np.maximum(self.strike - spot, 0.0)
        s = np.array([r[0] for r in self.table])
        h = np.array([r[1] for r in self.table])
        lo, hi = s[0] * (1 - 1e-12), s[-1] * (1 + 1e-12)
        if np.any(spot < lo) or np.any(spot > hi):
            raise ValueError(
                f"table payoff covers S in [{s[0]:g}, {s[-1]:g}] only; "
                f"requested [{spot.min():g}, {spot.max():g}]"
            )
        return np.interp(spot, s, h)


def eval_F(m, risk: RiskParams):
    """Default/funding nonlinearity of the risky-value equation."""
    m = np.asarray(m, dtype=float)
    out = (
        (risk.recovery_b * risk.lambda_b + risk.lambda_c) * _neg(m)
        - (risk.lambda_b + risk.recovery_c * risk.lambda_c) * _pos(m)
        + risk.s_f * _pos(m)
    )
    return out if out.ndim else float(out)


def eval_F_tilde(v, risk: RiskParams):
    """Nonlinearity after moving the default intensities to the left side."""
    v = np.asarray(v, dtype=float)
    out = (
        (1 - risk.recovery_b) * risk.lambda_b * _neg(v)
        - (1 - risk.recovery_c) * risk.lambda_c * _pos(v)
        - risk.s_f * _pos(v)
    )
    return out if out.ndim else float(out)


GFunc = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class ReactionSpec:
    """Monotone reaction term G together with its constants.

    ``func`` is ``None`` for the built-in xVA nonlinearity; otherwise it is a
    user-supplied ``G(v, x, t)`` (see :func:`custom_reaction`).
    """

    risk: Optional[RiskParams]
    l_shift: float
    r_g: float
    l_g: float
    c0: float = 0.0
    func: Optional[GFunc] = field(default=None, compare=False, repr=False)

    @property
    def neg_slope(self) -> float:
        """Slope of G on v < 0 (built-in nonlinearity)."""
        return self.l_shift - _neg_rate(self.risk)

    @property
    def pos_slope(self) -> float:
        """Slope of G on v > 0 (built-in nonlinearity)."""
        return self.l_shift - _pos_rate(self.risk)

    @property
    def is_zero(self) -> bool:
        """True when G vanishes identically, so sources can be skipped."""
        return self.func is None and self.neg_slope == 0.0 and self.pos_slope == 0.0

    def c0_prime(self, k_const: float) -> float:
        return self.c0 / k_const + self.l_g


def _neg_rate(risk: RiskParams) -> float:
    return (1 - risk.recovery_b) * risk.lambda_b


def _pos_rate(risk: RiskParams) -> float:
    return (1 - risk.recovery_c) * risk.lambda_c + risk.s_f


def build_reaction(risk: RiskParams) -> ReactionSpec:
    """Build G from the risk parameters, with its discount rate and Lipschitz constant."""
    if not isinstance(risk, RiskParams):
        raise TypeError("risk must be a RiskParams")
    # the same expressions as the slopes, so the flat side of G is exactly 0
    a, b = _neg_rate(risk), _pos_rate(risk)
    l_shift = max(a, b)
    l_g = max(l_shift - a, l_shift - b)
    return ReactionSpec(risk=risk, l_shift=l_shift, r_g=risk.r + l_shift, l_g=l_g, c0=0.0)


def eval_G(v, spec: ReactionSpec, x=None, t: float = 0.0):
    v = np.asarray(v, dtype=float)
    if spec.func is not None:
        xs = np.zeros_like(v) if x is None else np.asarray(x, dtype=float)
        out = np.asarray(spec.func(v, xs, t), dtype=float)
    else:
        out = -spec.neg_slope * _neg(v) + spec.pos_slope * _pos(v)
    return out if out.ndim else float(out)


def custom_reaction(
    func: GFunc,
    r_g: float,
    l_g: float,
    c0: float,
    sample_v: Optional[Sequence[float]] = None,
    sample_x: Optional[Sequence[float]] = None,
    sample_t: Sequence[float] = (0.0,),
    rtol: float = 1e-10,
) -> ReactionSpec:
    """Wrap a user nonlinearity ``G(v, x, t)``.

    The declared bounds (Lipschitz ``l_g`` and growth
    ``|G(0, x, t)| <= c0 * exp(|x|)``) are spot-checked on the sample points
    only, as is monotonicity; none of them can be proven here.
    """
    if l_g < 0 or c0 < 0:
        raise ValueError("l_g and c0 must be >= 0")
    vs = np.sort(np.asarray(sample_v if sample_v is not None else np.linspace(-50, 50, 201), float))
    xs = np.asarray(sample_x if sample_x is not None else np.linspace(-6, 6, 25), float)
    for t in sample_t:
        for x in xs:
            g = np.asarray(func(vs, np.full_like(vs, x), t), dtype=float)
            dg = np.diff(g)
            scale = rtol * (1 + np.abs(g[1:]))
            if np.any(dg < -scale):
                raise ValueError(f"G is not non-decreasing in v at x={x:g}, t={t:g}")
            if np.any(np.abs(dg) > l_g * np.diff(vs) + scale):
                raise ValueError(f"G violates the declared Lipschitz constant at x={x:g}, t={t:g}")
        g0 = np.asarray(func(np.zeros_like(xs), xs, t), dtype=float)
        if np.any(np.abs(g0) > c0 * np.exp(np.abs(xs)) * (1 + rtol) + rtol):
            raise ValueError(f"|G(0, x, t)| exceeds c0*exp(|x|) at t={t:g}")
    return ReactionSpec(risk=None, l_shift=0.0, r_g=float(r_g), l_g=float(l_g), c0=float(c0), func=func)
