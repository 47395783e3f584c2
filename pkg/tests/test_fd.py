import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import solve_banded

from xvapde.compare import REL_FLOOR, interior_mask
from xvapde.evolution import CoefficientIntegrals, duhamel_solve
from xvapde.fd import FdConfig, Tridiagonal, TridiagonalBreakdown, assemble_step, fd_solve, generator, thomas
from xvapde.grid import Continuation, Field, continuation_for, make_grid, sample_payoff
from xvapde.model import TimeCurve

from conftest import bs_call


def test_assemble_step_coefficients(ci):
    g = make_grid(-6, 6, 1201, 4)
    ops = assemble_step(ci, 0.06, g, 0.5, 0.01)
    assert ops.diffusion == pytest.approx(0.02, abs=1e-15)
    assert ops.drift == pytest.approx(0.0, abs=1e-15)


def test_zero_volatility_is_rejected(grid):
    zero = CoefficientIntegrals.__new__(CoefficientIntegrals)
    zero.sigma_at = lambda t: 0.0
    zero.drift_at = lambda t: 0.0
    with pytest.raises(ValueError):
        generator(zero, 0.06, grid, 0.0, Continuation())


def test_implicit_euler_constant_field(ci, grid):
    out = fd_solve(ci, 0.06, Field(grid, np.ones(grid.n), 0.0), None, 1, 0.1, FdConfig(theta=1.0))
    np.testing.assert_allclose(out[-1].values, 1.0 / (1.0 + 0.06 * 0.1), rtol=1e-13)


def test_constant_field_decays_like_the_ode(ci, grid):
    out = fd_solve(ci, 0.06, Field(grid, np.ones(grid.n), 0.0), None, 200, 1.0)
    np.testing.assert_allclose(out[-1].values, math.exp(-0.06), atol=1e-6)


def test_black_scholes_oracle(ci, grid, call):
    v0, _ = sample_payoff(call, grid, moneyness=True)
    out = fd_solve(ci, 0.02, v0, None, 200, 1.0, continuation=continuation_for(call))
    price = 100.0 * out[-1].values[grid.n // 2]
    assert abs(price / float(bs_call(100.0, 100.0, 1.0, 0.02, 0.2)) - 1) <= 1e-3


def test_agreement_with_kernel(ci, grid, call):
    """Max relative interior gap between fd and the kernel marcher."""
    v0, _ = sample_payoff(call, grid, moneyness=True)
    cont = continuation_for(call)
    fd = 100.0 * fd_solve(ci, 0.02, v0, None, 200, 1.0, continuation=cont)[-1].values
    ker = 100.0 * duhamel_solve(ci, 0.02, v0, None, 200, 1.0, cont)[-1].values
    mask = interior_mask(grid.x)
    gap = np.max(np.abs(fd - ker)[mask] / np.maximum(np.abs(ker[mask]), REL_FLOOR * 100.0))
    print(f"fd vs kernel max relative interior gap: {gap:.3e}")
    assert gap <= 1e-3


def test_second_order_convergence(ci, call):
    oracle = float(bs_call(100.0, 100.0, 1.0, 0.02, 0.2))
    errs = []
    for n, steps in ((801, 200), (1601, 400)):
        g = make_grid(-6, 6, n, 4)
        v0, _ = sample_payoff(call, g, moneyness=True)
        out = fd_solve(ci, 0.02, v0, None, steps, 1.0, continuation=continuation_for(call))
        errs.append(abs(100.0 * out[-1].values[n // 2] - oracle))
    assert 3.0 <= errs[0] / errs[1] <= 5.0


small = make_grid(-3, 3, 121, 4)
CI = CoefficientIntegrals.constant(0.2, 0.02, 0.0)
sources = arrays(np.float64, small.n, elements=st.floats(-10, 10, allow_nan=False))


@settings(max_examples=30, deadline=None)
@given(sources, sources)
def test_discrete_comparison(a, b):
    f, g = np.minimum(a, b), np.maximum(a, b)
    v0 = Field(small, np.zeros(small.n), 0.0)
    lo = fd_solve(CI, 0.06, v0, lambda t: f, 20, 0.2, FdConfig(theta=1.0))[-1].values
    hi = fd_solve(CI, 0.06, v0, lambda t: g, 20, 0.2, FdConfig(theta=1.0))[-1].values
    assert np.all(lo <= hi + 1e-12)


def test_implicit_scheme_damps_constant_mode(ci, grid):
    out = fd_solve(ci, 0.06, Field(grid, np.ones(grid.n), 0.0), None, 5, 50.0, FdConfig(theta=1.0))
    levels = [f.values[grid.n // 2] for f in out]
    assert all(0 < b < a for a, b in zip(levels, levels[1:]))


def test_time_dependent_coefficients_are_frozen_at_midpoints(grid, call):
    ramp = CoefficientIntegrals(TimeCurve(((0.0, 0.1), (1.0, 0.3))), TimeCurve.constant(0.02), TimeCurve.constant(0.0))
    v0, _ = sample_payoff(call, grid, moneyness=True)
    got = 100.0 * fd_solve(ramp, 0.02, v0, None, 200, 1.0, continuation=continuation_for(call))[-1].values[grid.n // 2]
    sig_eff = math.sqrt(2 * ramp.S(1.0))
    assert abs(got / float(bs_call(100.0, 100.0, 1.0, 0.02, sig_eff)) - 1) <= 2e-3


def test_thomas_matches_banded_solver():
    rng = np.random.default_rng(0)
    n = 50
    lower, upper = rng.uniform(-1, 0, n), rng.uniform(-1, 0, n)
    diag = 3.0 + rng.uniform(0, 1, n)
    rhs = rng.normal(size=n)
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    np.testing.assert_allclose(thomas(lower, diag, upper, rhs), solve_banded((1, 1), ab, rhs), rtol=1e-12)
    tri = Tridiagonal(lower, diag, upper)
    np.testing.assert_allclose(tri.matvec(tri.solve(rhs)), rhs, atol=1e-12)


def test_thomas_breakdown():
    with pytest.raises(TridiagonalBreakdown):
        thomas(np.zeros(3), np.array([0.0, 1.0, 1.0]), np.zeros(3), np.ones(3))
    with pytest.raises(TridiagonalBreakdown):
        thomas(np.array([0.0, 1.0]), np.array([1.0, 1.0]), np.array([1.0, 0.0]), np.ones(2))


def test_theta_validation():
    with pytest.raises(ValueError):
        FdConfig(theta=1.5)
