"""Monte Carlo evaluation of the evolution operator.

The transition from ``s`` to ``t`` is an explicit Gaussian, so each node's
value is estimated as a discounted sample mean of the linearly interpolated
field at ``Y = x + R + sqrt(2 S) Z``.  One set of draws ``Z`` is shared by
all nodes of a step.  Because the grid is uniform, the estimate at every
node is then the same empirical stencil applied to the field, which is how
it is computed here (exactly, not as an approximation of the sample mean).

Linear interpolation between nodes adds ``h^2/6`` of variance to each
transition on average.  For transitions at least one node spacing wide the
draws use variance ``2 S - h^2 / 6`` by default, so the effective transition
matches the kernel backend's nodal stencil; narrower transitions and the
first propagation of the kinked initial value keep the full variance, like
the kernel backend's exact-interpolant weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .evolution import CoefficientIntegrals, Source, anchor_levels, eval_source, make_kernel, time_levels
from .grid import Continuation, Field

# stream roles inside one marching step
_ROLE_PROPAGATE = 0
_ROLE_SOURCE = 1


@dataclass(frozen=True)
class McConfig:
    samples: int = 200_000
    seed: int = 20240601
    compensate_interpolation: bool = True

    def __post_init__(self):
        if int(self.samples) != self.samples or self.samples < 1:
            raise ValueError("samples must be an integer >= 1")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an integer in [0, 2**64)")


def stream_generator(seed: int, stream: tuple[int, ...]) -> np.random.Generator:
    """Independent generator for ``stream`` under root ``seed``.

    Uses numpy's SeedSequence hashing of ``(seed, *stream)``, so the draws
    depend only on these integers and never on evaluation order.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=stream)))


@lru_cache(maxsize=4096)
def _empirical_stencil(seed: int, stream: tuple[int, ...], samples: int, mean_h: float, sd_h: float):
    z = stream_generator(seed, stream).standard_normal(samples)
    d = mean_h + sd_h * z
    p = np.floor(d)
    f = d - p
    p = p.astype(np.int64)
    m = int(max(-p.min(), p.max() + 1))
    idx = p + m
    size = 2 * m + 2
    g = 1.0 - f
    c = np.bincount(idx, g, size) + np.bincount(idx + 1, f, size)
    a = np.bincount(idx, g * g, size) + np.bincount(idx + 1, f * f, size)
    b = np.bincount(idx, f * g, size)
    c, a, b = (arr[: 2 * m + 1] / samples for arr in (c, a, b))
    for arr in (c, a, b):
        arr.setflags(write=False)
    return m, c, a, b


def _step_stencil(ci, r_g, h, s, t, cfg: McConfig, stream, exact_interpolant=False):
    kernel = make_kernel(ci, r_g, s, t)
    var = 2.0 * kernel.s_delta
    # mirrors the kernel stencils: wide kernels see nodal values, narrow ones
    # (and kinked fields) the exact interpolant
    if cfg.compensate_interpolation and not exact_interpolant and var >= h * h:
        var -= h * h / 6.0
    key = tuple(int(i) for i in stream)
    return kernel, _empirical_stencil(int(cfg.seed), key, int(cfg.samples), kernel.r_delta / h, math.sqrt(var) / h)


def mc_propagate(
    ci: CoefficientIntegrals,
    r_g: float,
    v_s: Field,
    s: float,
    t: float,
    cfg: McConfig = McConfig(),
    continuation: Continuation = Continuation(),
    stream: tuple[int, ...] = (0,),
    exact_interpolant: bool = False,
) -> tuple[Field, Field]:
    """Estimate ``T(t, s) v_s`` and its per-node standard error.

    With ``exact_interpolant`` the draws keep the full variance, so the
    estimate targets the exact convolution of the interpolated field.
    """
    if not s < t:
        raise ValueError(f"need s < t, got s={s}, t={t}")
    h = v_s.grid.h
    kernel, (m, c, a, b) = _step_stencil(ci, r_g, h, s, t, cfg, stream, exact_interpolant)
    ext = continuation.extend(np.asarray(v_s.values), h, m, m)
    mean = np.correlate(ext, c, mode="valid")
    second = np.correlate(ext * ext, a, mode="valid") + 2.0 * np.correlate(ext[:-1] * ext[1:], b[:-1], mode="valid")
    sample_var = second - mean * mean
    # differences at rounding level of the second moment are cancellation, not noise
    sample_var[sample_var <= 64 * np.finfo(float).eps * np.abs(second)] = 0.0
    se = kernel.discount * np.sqrt(sample_var / max(cfg.samples - 1, 1))
    return Field(v_s.grid, kernel.discount * mean, t), Field(v_s.grid, se, t)


def _propagate_variance(var: np.ndarray, ci, r_g, grid, s, t, cfg, continuation, stream, exact_interpolant) -> np.ndarray:
    # (sum w d)^2 <= (sum w) sum w d^2 for positive weights, so the
    # propagated error variance is bounded by the stencil applied to var.
    h = grid.h
    kernel, (m, c, _, _) = _step_stencil(ci, r_g, h, s, t, cfg, stream, exact_interpolant)
    ext = continuation.squared().extend(var, h, m, m)
    return kernel.discount**2 * np.correlate(ext, c, mode="valid")


def mc_solve(
    ci: CoefficientIntegrals,
    r_g: float,
    v0: Field,
    source: Optional[Source],
    t_steps: int,
    T: float,
    cfg: McConfig = McConfig(),
    continuation: Continuation = Continuation(),
) -> tuple[list[Field], list[Field]]:
    """March like :func:`~xvapde.evolution.duhamel_solve` with MC operators.

    Uses the same anchor levels and source terms.  Returns the fields and
    pooled standard errors.  The pooled variance at a level is the fresh
    sampling variance plus the anchor level's pooled variance carried through
    the (positive, sub-unit-mass) stencil, which bounds the propagated error
    variance from above.
    """
    times = time_levels(T, t_steps)
    grid = v0.grid
    anchors = anchor_levels(ci, times, grid.h)
    mids = 0.5 * (times[:-1] + times[1:])
    f_mid = [eval_source(source, tm) for tm in mids]
    out = [v0.with_values(v0.values, 0.0)]
    errs = [Field(grid, np.zeros(grid.n), 0.0)]
    variances = [np.zeros(grid.n)]
    for k in range(t_steps):
        t1 = times[k + 1]
        j = anchors[k + 1]
        key = (k, _ROLE_PROPAGATE)
        first = j == 0
        nxt, se = mc_propagate(ci, r_g, out[j], times[j], t1, cfg, continuation, key, first)
        var = _propagate_variance(variances[j], ci, r_g, grid, times[j], t1, cfg, continuation, key, first)
        var = var + se.values**2
        values = np.array(nxt.values)
        for i in range(j, k + 1):
            if f_mid[i] is None:
                continue
            dt = times[i + 1] - times[i]
            f = Field(grid, f_mid[i], mids[i])
            fs, fse = mc_propagate(ci, r_g, f, mids[i], t1, cfg, continuation, (k, _ROLE_SOURCE, i))
            values += dt * fs.values
            var = var + (dt * fse.values) ** 2
        variances.append(var)
        out.append(Field(grid, values, t1))
        errs.append(Field(grid, np.sqrt(var), t1))
    return out, errs
