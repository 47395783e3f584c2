"""Closed-form evolution operators and the variation-of-constants marcher.

With coefficients depending on time only, the homogeneous problem

    dv/dt - A(t) v + r_G v = 0

is solved exactly by convolution with a discounted, shifted Gaussian whose
variance and shift are the time integrals ``S`` and ``R`` below.  The
inhomogeneous problem is then marched step by step, with the source term
integrated by the midpoint rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.stats import norm

from .grid import Continuation, Field
from .model import TimeCurve

# Gaussian stencils are cut at this many standard deviations.
TRUNCATION_SDS = 8.0


class CoefficientIntegrals:
    """Exact integrals of the piecewise-linear coefficient curves."""

    def __init__(self, sigma: TimeCurve, q: TimeCurve, gamma: TimeCurve):
        if np.any(sigma.values <= 0):
            raise ValueError("volatility must be positive at every knot")
        self.sigma = sigma
        self.q = q
        self.gamma = gamma
        bps = np.concatenate([[0.0], sigma.times, q.times, gamma.times])
        self._bp = np.unique(bps[bps >= 0.0])
        # cumulative tables at the merged breakpoints
        sq = self._sigma_sq_segments(self._bp)
        dr = self._drift_segments(self._bp)
        self._cum_s = np.concatenate([[0.0], np.cumsum(0.5 * sq)])
        self._cum_r = np.concatenate([[0.0], np.cumsum(dr - 0.5 * sq)])

    @classmethod
    def constant(cls, sigma: float, q: float = 0.0, gamma: float = 0.0) -> "CoefficientIntegrals":
        return cls(TimeCurve.constant(sigma), TimeCurve.constant(q), TimeCurve.constant(gamma))

    def _sigma_sq_segments(self, pts: np.ndarray) -> np.ndarray:
        a, b = self.sigma(pts[:-1]), self.sigma(pts[1:])
        return np.diff(pts) * (a * a + a * b + b * b) / 3.0

    def _drift_segments(self, pts: np.ndarray) -> np.ndarray:
        d = self.q(pts) - self.gamma(pts)
        return np.diff(pts) * 0.5 * (d[:-1] + d[1:])

    def _cumulative(self, t: float) -> tuple[float, float]:
        if t < 0:
            raise ValueError("time must be >= 0")
        i = int(np.searchsorted(self._bp, t, side="right")) - 1
        pts = np.array([self._bp[i], t])
        sq = float(self._sigma_sq_segments(pts)[0])
        dr = float(self._drift_segments(pts)[0])
        return self._cum_s[i] + 0.5 * sq, self._cum_r[i] + dr - 0.5 * sq

    def S(self, t: float) -> float:
        return self._cumulative(t)[0]

    def R(self, t: float) -> float:
        return self._cumulative(t)[1]

    def sigma_at(self, t: float) -> float:
        return float(self.sigma(t))

    def drift_at(self, t: float) -> float:
        """Coefficient of the first derivative, q - gamma - sigma^2/2."""
        s = float(self.sigma(t))
        return float(self.q(t) - self.gamma(t)) - 0.5 * s * s

    def _points(self, horizon: float) -> np.ndarray:
        inner = self._bp[(self._bp > 0) & (self._bp < horizon)]
        return np.concatenate([[0.0], inner, [horizon]])

    def sigma_sup(self, horizon: float) -> float:
        """Sup of sigma over [0, horizon] (attained at a breakpoint)."""
        return float(np.max(np.abs(self.sigma(self._points(horizon)))))

    def carry_sup(self, horizon: float) -> float:
        """Sup of |q - gamma| over [0, horizon]."""
        pts = self._points(horizon)
        return float(np.max(np.abs(self.q(pts) - self.gamma(pts))))


def script_S(ci: CoefficientIntegrals, s: float, t: float) -> float:
    """Half the integrated variance over [s, t]."""
    if s > t:
        raise ValueError(f"need s <= t, got s={s}, t={t}")
    if s == t:
        return 0.0
    return ci.S(t) - ci.S(s)


def script_R(ci: CoefficientIntegrals, s: float, t: float) -> float:
    """Integrated drift of log-price over [s, t]."""
    if s > t:
        raise ValueError(f"need s <= t, got s={s}, t={t}")
    if s == t:
        return 0.0
    return ci.R(t) - ci.R(s)


def heat_kernel(x, t: float):
    """Fundamental solution of ``u_t = u_xx``."""
    if not t > 0:
        raise ValueError("heat kernel needs t > 0")
    x = np.asarray(x, dtype=float)
    out = np.exp(-x * x / (4.0 * t)) / math.sqrt(4.0 * math.pi * t)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class EvolutionKernel:
    s_delta: float
    r_delta: float
    discount: float

    def __post_init__(self):
        if not self.s_delta > 0:
            raise ValueError("variance scale must be > 0")
        if not 0 < self.discount <= 1:
            raise ValueError("discount must lie in (0, 1]")

    @property
    def sd(self) -> float:
        """Standard deviation of the Gaussian transition, sqrt(2 S)."""
        return math.sqrt(2.0 * self.s_delta)

    def __call__(self, dx):
        return self.discount * heat_kernel(np.asarray(dx, dtype=float) + self.r_delta, self.s_delta)


def make_kernel(ci: CoefficientIntegrals, r_g: float, s: float, t: float) -> EvolutionKernel:
    if not s < t:
        raise ValueError(f"need s < t, got s={s}, t={t}")
    return EvolutionKernel(script_S(ci, s, t), script_R(ci, s, t), math.exp(-r_g * (t - s)))


def evolution_kernel(ci: CoefficientIntegrals, r_g: float, s: float, t: float, dx):
    """Kernel value K(x - y; t, s) for ``dx = x - y``."""
    return make_kernel(ci, r_g, s, t)(dx)


def _hat_weights(mean: float, var: float, h: float, m: int) -> np.ndarray:
    """Exact integrals of the hat functions at offsets -m..m against N(mean, var)."""
    sd = math.sqrt(var)
    k = np.arange(-m - 1, m + 2) * h
    z = (mean - k) / sd
    # E[(Y - a)^+] = sd * (z Phi(z) + phi(z)), z = (mean - a) / sd
    ramp = sd * (z * norm.cdf(z) + norm.pdf(z))
    w = (ramp[:-2] - 2.0 * ramp[1:-1] + ramp[2:]) / h
    return np.maximum(w, 0.0)


def stencil(kernel: EvolutionKernel, h: float, exact_interpolant: bool = False) -> tuple[int, np.ndarray]:
    """Discrete weights ``w[k + m]`` for offsets ``k = -m..m`` in units of h.

    A Gaussian at least one node spacing wide (variance ``>= h^2``) uses
    nodal trapezoid weights, renormalised to the exact mass.  A narrower one,
    or any kernel applied to a kinked field (``exact_interpolant``), is
    integrated exactly against the piecewise-linear interpolant instead.
    """
    mean, var = kernel.r_delta, 2.0 * kernel.s_delta
    m = int(math.ceil((TRUNCATION_SDS * math.sqrt(var) + abs(mean)) / h)) + 1
    if exact_interpolant or var < h * h:
        w = _hat_weights(mean, var, h, m)
    else:
        k = np.arange(-m, m + 1) * h
        w = np.exp(-((k - mean) ** 2) / (2.0 * var))
    return m, kernel.discount * w / w.sum()


def apply_stencil(values: np.ndarray, m: int, w: np.ndarray, h: float, continuation: Continuation) -> np.ndarray:
    ext = continuation.extend(values, h, m, m)
    return np.correlate(ext, w, mode="valid")


def propagate(
    ci: CoefficientIntegrals,
    r_g: float,
    v_s: Field,
    s: float,
    t: float,
    continuation: Continuation = Continuation(),
) -> Field:
    """Apply the evolution operator from time ``s`` to ``t`` to a field."""
    if s > t:
        raise ValueError(f"need s <= t, got s={s}, t={t}")
    if s == t:
        return v_s
    kernel = make_kernel(ci, r_g, s, t)
    m, w = stencil(kernel, v_s.grid.h)
    return Field(v_s.grid, apply_stencil(v_s.values, m, w, v_s.grid.h, continuation), t)


Source = Callable[[float], Union[np.ndarray, Field]]


class SampledSource:
    """Source known at the marching levels, linear in time between them."""

    def __init__(self, times, values):
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.values.shape[0] != self.times.size:
            raise ValueError("one row of source values per time level")

    def __call__(self, t: float) -> np.ndarray:
        i = int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, self.times.size - 2))
        t0, t1 = self.times[i], self.times[i + 1]
        a = (t - t0) / (t1 - t0)
        return (1 - a) * self.values[i] + a * self.values[i + 1]


def eval_source(source: Optional[Source], t: float) -> Optional[np.ndarray]:
    """Source values at ``t``, or ``None`` if there is none or it vanishes."""
    if source is None:
        return None
    f = source(t)
    f = np.asarray(f.values if isinstance(f, Field) else f, dtype=float)
    return f if np.any(f) else None


def time_levels(T: float, t_steps: int) -> np.ndarray:
    if t_steps < 1:
        raise ValueError("t_steps must be >= 1")
    if not T > 0:
        raise ValueError("horizon must be > 0")
    return T * np.arange(t_steps + 1) / t_steps


def anchor_levels(ci: CoefficientIntegrals, times: np.ndarray, h: float) -> list[int]:
    """Level each marching level is propagated from.

    Level ``k + 1`` starts from the latest level ``j <= k`` whose kernel
    variance ``2 (S(t_{k+1}) - S(t_j))`` is at least ``h^2``, or from level
    0.  Narrow kernels applied step after step would each add interpolation
    error of order ``h^2``; anchoring keeps every homogeneous propagation
    resolved on the grid, and the semigroup property makes it equivalent.
    """
    S = np.array([ci.S(t) for t in times])
    out = [0]
    j = 0
    for k in range(1, len(times)):
        # advance the anchor while the next candidate is still wide enough
        while j + 1 < k and 2.0 * (S[k] - S[j + 1]) >= h * h:
            j += 1
        out.append(j if 2.0 * (S[k] - S[j]) >= h * h else 0)
    return out


def duhamel_solve(
    ci: CoefficientIntegrals,
    r_g: float,
    v0: Field,
    source: Optional[Source],
    t_steps: int,
    T: float,
    continuation: Continuation = Continuation(),
) -> list[Field]:
    """March the mild solution of ``dv/dt - A v + r_G v = f`` from ``v0``.

    Level ``k + 1`` is ``T(t_{k+1}, t_j) v_j`` plus the midpoint-rule source
    terms ``dt T(t_{k+1}, t_mid) f(t_mid)`` of the steps in between, where
    ``j`` comes from :func:`anchor_levels`.  With ``j = k`` this is the
    usual one-step rule.  Propagation out of level 0 convolves the
    interpolated initial value exactly, since v0 is typically kinked.
    """
    times = time_levels(T, t_steps)
    grid = v0.grid
    h = grid.h
    anchors = anchor_levels(ci, times, h)
    out = [v0.with_values(v0.values, 0.0)]
    values = [np.asarray(v0.values)]
    mids = 0.5 * (times[:-1] + times[1:])
    f_mid = [eval_source(source, tm) for tm in mids]
    for k in range(t_steps):
        t1 = times[k + 1]
        j = anchors[k + 1]
        m, w = stencil(make_kernel(ci, r_g, times[j], t1), h, exact_interpolant=j == 0)
        nxt = apply_stencil(values[j], m, w, h, continuation)
        for i in range(j, k + 1):
            if f_mid[i] is not None:
                m2, w2 = stencil(make_kernel(ci, r_g, mids[i], t1), h)
                nxt = nxt + (times[i + 1] - times[i]) * apply_stencil(f_mid[i], m2, w2, h, continuation)
        values.append(nxt)
        out.append(Field(grid, nxt, t1))
    return out
