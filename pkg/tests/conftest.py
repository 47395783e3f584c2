import math

import numpy as np
import pytest
from scipy.stats import norm

from xvapde.evolution import CoefficientIntegrals
from xvapde.grid import make_grid
from xvapde.model import Payoff, RiskParams, build_reaction

# lines printed by the acceptance module, replayed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def bs_call(S, K, T, r, sigma, q=0.0):
    """Closed-form Black-Scholes call with continuous dividend yield q."""
    S = np.asarray(S, dtype=float)
    d1 = (np.log(S / K) + (r - q + 0.5 * sigma**2) * T) / (sigma * math.sqrt(T))
    d2 = d1 - sigma * math.sqrt(T)
    return S * math.exp(-q * T) * norm.cdf(d1) - K * math.exp(-r * T) * norm.cdf(d2)


@pytest.fixture
def risk():
    return RiskParams(r=0.02, lambda_b=0.03, lambda_c=0.05, recovery_b=0.4, recovery_c=0.4, s_f=0.01)


@pytest.fixture
def linear_risk():
    return RiskParams(r=0.02, recovery_b=0.4, recovery_c=0.4)


@pytest.fixture
def spec(risk):
    return build_reaction(risk)


@pytest.fixture
def ci():
    return CoefficientIntegrals.constant(0.2, 0.02, 0.0)


@pytest.fixture
def grid():
    return make_grid(-6.0, 6.0, 801, 4.0)


@pytest.fixture
def call():
    return Payoff("call", 100.0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
