import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import trapezoid

from xvapde.evolution import (
    CoefficientIntegrals,
    SampledSource,
    anchor_levels,
    duhamel_solve,
    evolution_kernel,
    heat_kernel,
    make_kernel,
    propagate,
    script_R,
    script_S,
    stencil,
    time_levels,
)
from xvapde.grid import Continuation, Field, continuation_for, make_grid, sample_payoff
from xvapde.model import TimeCurve

from conftest import bs_call


def test_script_S_examples(ci):
    assert script_S(ci, 0.0, 1.0) == pytest.approx(0.02, abs=1e-15)
    assert script_S(ci, 0.4, 0.4) == 0.0
    eps = 1e-9
    step = CoefficientIntegrals(TimeCurve(((0.5 - eps, 0.2), (0.5 + eps, 0.3))), TimeCurve.constant(0.0), TimeCurve.constant(0.0))
    assert script_S(step, 0.0, 1.0) == pytest.approx(0.0325, abs=1e-9)


def test_script_S_piecewise_linear_is_exact():
    # sigma ramps 0.1 -> 0.3 on [0, 1]; 1/2 * integral of sigma^2 = 1/2 * 13/300
    ramp = CoefficientIntegrals(TimeCurve(((0.0, 0.1), (1.0, 0.3))), TimeCurve.constant(0.0), TimeCurve.constant(0.0))
    assert script_S(ramp, 0.0, 1.0) == pytest.approx(13.0 / 600.0, rel=1e-13)


def test_script_R_examples(ci):
    assert script_R(ci, 0.0, 1.0) == pytest.approx(0.0, abs=1e-15)
    other = CoefficientIntegrals.constant(0.2, 0.05, 0.01)
    assert script_R(other, 0.0, 1.0) == pytest.approx(0.02, abs=1e-15)
    assert script_R(other, 0.3, 0.3) == 0.0


def test_script_rejects_reversed_interval(ci):
    with pytest.raises(ValueError):
        script_S(ci, 0.5, 0.4)
    with pytest.raises(ValueError):
        script_R(ci, 0.5, 0.4)


def test_rejects_nonpositive_volatility():
    with pytest.raises(ValueError):
        CoefficientIntegrals.constant(0.0)


def test_heat_kernel_examples():
    assert heat_kernel(0.0, 1.0 / (4.0 * math.pi)) == pytest.approx(1.0, rel=1e-15)
    assert heat_kernel(0.0, 0.02) == pytest.approx(1.0 / math.sqrt(0.08 * math.pi), rel=1e-14)
    assert heat_kernel(0.0, 0.02) == pytest.approx(1.99471, abs=1e-5)
    x = np.linspace(-6, 6, 12001)
    assert trapezoid(heat_kernel(x, 0.02), x) == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(ValueError):
        heat_kernel(0.0, 0.0)


def test_evolution_kernel_examples(ci):
    assert evolution_kernel(ci, 0.06, 0.0, 1.0, 0.0) == pytest.approx(math.exp(-0.06) / math.sqrt(0.08 * math.pi), rel=1e-14)
    assert evolution_kernel(ci, 0.06, 0.0, 1.0, 0.0) == pytest.approx(1.87855, abs=1e-5)
    assert evolution_kernel(ci, 0.0, 0.0, 1.0, 0.0) == pytest.approx(1.99471, abs=1e-5)
    y = np.linspace(-8, 8, 16001)
    mass = trapezoid(evolution_kernel(ci, 0.06, 0.0, 1.0, 0.3 - y), y)
    assert mass == pytest.approx(math.exp(-0.06), abs=1e-10)
    with pytest.raises(ValueError):
        evolution_kernel(ci, 0.06, 1.0, 1.0, 0.0)


def interior(grid, margin=2.0):
    return np.abs(grid.x) <= grid.x_max - margin


def test_propagate_constant_field(ci, grid):
    one = Field(grid, np.ones(grid.n), 0.0)
    out = propagate(ci, 0.06, one, 0.0, 1.0)
    np.testing.assert_allclose(out.values[interior(grid)], math.exp(-0.06), atol=1e-8)
    out0 = propagate(ci, 0.0, one, 0.0, 0.37)
    np.testing.assert_allclose(out0.values[interior(grid)], 1.0, atol=1e-8)


def test_propagate_linear_field(ci, grid):
    lin = Field(grid, grid.x.copy(), 0.0)
    out = propagate(ci, 0.0, lin, 0.0, 1.0)
    np.testing.assert_allclose(out.values[interior(grid)], grid.x[interior(grid)], atol=1e-6)


def test_propagate_same_time_is_identity(ci, grid):
    f = Field(grid, np.cos(grid.x), 0.2)
    assert propagate(ci, 0.06, f, 0.2, 0.2) is f
    with pytest.raises(ValueError):
        propagate(ci, 0.06, f, 0.3, 0.2)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_composition(ci, seed):
    g = make_grid(-6, 6, 1601, 4)
    rng = np.random.default_rng(seed)
    s, u, t = np.sort(rng.uniform(0, 1, 3))
    u = min(max(u, s + 0.05), 0.9)
    t = max(t, u + 0.05)
    f = Field(g, np.exp(-g.x**2) * np.cos(3 * g.x), s)
    two = propagate(ci, 0.06, propagate(ci, 0.06, f, s, u), u, t)
    one = propagate(ci, 0.06, f, s, t)
    assert np.max(np.abs(two.values - one.values)) <= 1e-6


positive_fields = arrays(np.float64, 201, elements=st.floats(0, 1e3, allow_nan=False))
small = make_grid(-3, 3, 201, 4)
CI = CoefficientIntegrals.constant(0.2, 0.02, 0.0)


@settings(max_examples=50, deadline=None)
@given(positive_fields, st.floats(1e-4, 1.0))
def test_positivity(v, dt):
    out = propagate(CI, 0.06, Field(small, v, 0.0), 0.0, dt, Continuation(-1.0, 1.0))
    assert np.all(out.values >= 0.0)


@settings(max_examples=50, deadline=None)
@given(positive_fields, positive_fields, st.floats(1e-4, 1.0))
def test_comparison(a, b, dt):
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    out_lo = propagate(CI, 0.06, Field(small, lo, 0.0), 0.0, dt)
    out_hi = propagate(CI, 0.06, Field(small, hi, 0.0), 0.0, dt)
    assert np.all(out_lo.values <= out_hi.values + 1e-12 * np.abs(out_hi.values))


def test_small_dt_consistency(grid):
    ci = CoefficientIntegrals.constant(0.2, 0.05, 0.0)
    f = Field(grid, np.exp(-grid.x**2), 0.0)
    errs = []
    for dt in (1e-1, 1e-2, 1e-3, 1e-4):
        out = propagate(ci, 0.06, f, 0.0, dt)
        shifted = math.exp(-0.06 * dt) * np.exp(-((grid.x + script_R(ci, 0, dt)) ** 2))
        errs.append(np.max(np.abs(out.values - shifted)))
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-3


def test_stencil_mass_is_exact(ci, grid):
    for dt in (1e-4, 1e-3, 1.0 / 200, 0.1, 1.0):
        m, w = stencil(make_kernel(ci, 0.06, 0.0, dt), grid.h)
        assert w.sum() == pytest.approx(math.exp(-0.06 * dt), abs=1e-14)
        assert np.all(w >= 0)


def test_anchor_levels(ci, grid):
    times = time_levels(1.0, 200)
    anchors = anchor_levels(ci, times, grid.h)
    assert anchors[1] == 0
    for k in range(1, len(times)):
        j = anchors[k]
        assert j < k
        assert j == 0 or 2 * (ci.S(times[k]) - ci.S(times[j])) >= grid.h**2
    # coarse steps propagate from the previous level
    assert anchor_levels(ci, time_levels(1.0, 20), grid.h)[5] == 4


def test_duhamel_homogeneous(ci, grid):
    out = duhamel_solve(ci, 0.06, Field(grid, np.ones(grid.n), 0.0), None, 200, 1.0)
    assert len(out) == 201 and out[0].time == 0.0 and out[-1].time == 1.0
    np.testing.assert_allclose(out[-1].values[interior(grid)], math.exp(-0.06), atol=1e-8)


def test_duhamel_ode_oracle(ci, grid):
    src = lambda t: np.ones(grid.n)
    out = duhamel_solve(ci, 0.06, Field(grid, np.zeros(grid.n), 0.0), src, 200, 1.0)
    exact = (1 - math.exp(-0.06)) / 0.06
    np.testing.assert_allclose(out[-1].values[interior(grid)], exact, atol=1e-5)


def test_duhamel_black_scholes_oracle(ci, grid, call):
    v0, _ = sample_payoff(call, grid, moneyness=True)
    out = duhamel_solve(ci, 0.02, v0, None, 200, 1.0, continuation_for(call))
    price = 100.0 * out[-1].values[grid.n // 2]
    oracle = float(bs_call(100.0, 100.0, 1.0, 0.02, 0.2))
    assert oracle == pytest.approx(8.9160, abs=1e-4)
    assert abs(price / oracle - 1) <= 1e-3


@pytest.mark.parametrize("steps", [50, 400, 1000])
def test_duhamel_step_count_independence(ci, grid, call, steps):
    """Fine time steps must not over-diffuse (sub-h kernels are anchored)."""
    v0, _ = sample_payoff(call, grid, moneyness=True)
    out = duhamel_solve(ci, 0.02, v0, None, steps, 1.0, continuation_for(call))
    price = 100.0 * out[-1].values[grid.n // 2]
    assert abs(price / float(bs_call(100.0, 100.0, 1.0, 0.02, 0.2)) - 1) <= 1e-3


def test_sampled_source_is_linear_in_time(grid):
    src = SampledSource([0.0, 1.0], np.stack([np.zeros(grid.n), np.ones(grid.n)]))
    np.testing.assert_allclose(src(0.25), 0.25)
    with pytest.raises(ValueError):
        SampledSource([0.0, 1.0], np.zeros((3, grid.n)))


def test_time_dependent_coefficients_match_constant_average(grid, call):
    """A piecewise-linear sigma enters only through S(t); compare with the
    constant sigma that has the same total variance."""
    ramp = CoefficientIntegrals(TimeCurve(((0.0, 0.1), (1.0, 0.3))), TimeCurve.constant(0.02), TimeCurve.constant(0.0))
    v0, _ = sample_payoff(call, grid, moneyness=True)
    got = 100.0 * duhamel_solve(ramp, 0.02, v0, None, 200, 1.0, continuation_for(call))[-1].values[grid.n // 2]
    sig_eff = math.sqrt(2 * ramp.S(1.0))
    # drift q - sigma^2/2 integrates to r - sig_eff^2/2 as well
    assert abs(got / float(bs_call(100.0, 100.0, 1.0, 0.02, sig_eff)) - 1) <= 1e-3
