"""JSON run configuration with field-path validation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from .evolution import CoefficientIntegrals
from .fd import FdConfig
from .grid import SpatialGrid
from .iterate import BACKENDS, DIRECTIONS, IterationConfig
from .mc import McConfig
from .model import Payoff, ReactionSpec, RiskParams, TimeCurve, build_reaction


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


DEFAULTS: dict[str, dict[str, Any]] = {
    "market": {"q": 0.0, "gamma": 0.0},
    "credit": {"lambda_b": 0.0, "lambda_c": 0.0, "recovery_b": 0.0, "recovery_c": 0.0, "s_f": 0.0},
    "payoff": {"table": None},
    "grid": {"x_min": -6.0, "x_max": 6.0, "n": 801, "mu": 4.0},
    "time": {"steps": 200},
    "solver": {"backend": "kernel", "theta": 0.5, "mc_samples": 200_000, "seed": 20240601},
    "iteration": {"tol": 1e-6, "max_iter": 50, "direction": "both", "omega": None},
}
REQUIRED = {
    "market": ("r", "sigma"),
    "credit": (),
    "payoff": ("kind", "strike"),
    "grid": (),
    "time": ("horizon",),
    "solver": (),
    "iteration": (),
}


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(path, "must be finite")
    return float(value)


def _integer(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise ConfigError(path, f"expected an integer, got {value!r}")
    return value


def _curve(value, path: str) -> TimeCurve:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return TimeCurve.constant(_number(value, path))
    if not isinstance(value, list) or not value:
        raise ConfigError(path, "expected a number or a non-empty list of [t, value] knots")
    knots = []
    for i, knot in enumerate(value):
        if not isinstance(knot, list) or len(knot) != 2:
            raise ConfigError(f"{path}[{i}]", "expected [t, value]")
        knots.append((_number(knot[0], f"{path}[{i}][0]"), _number(knot[1], f"{path}[{i}][1]")))
    try:
        return TimeCurve(tuple(knots))
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def _section(raw: dict, name: str) -> dict:
    data = raw.get(name, {})
    if not isinstance(data, dict):
        raise ConfigError(name, "expected an object")
    allowed = set(DEFAULTS[name]) | set(REQUIRED[name])
    for key in data:
        if key not in allowed:
            raise ConfigError(f"{name}.{key}", "unknown field")
    for key in REQUIRED[name]:
        if key not in data:
            raise ConfigError(f"{name}.{key}", "required field is missing")
    # schema order, so echoed configs read the same whatever the input order
    merged = {key: data[key] for key in REQUIRED[name]}
    merged.update((key, data.get(key, default)) for key, default in DEFAULTS[name].items())
    return merged


@dataclass(frozen=True)
class RunConfig:
    raw: dict
    risk: RiskParams
    sigma: TimeCurve
    q: TimeCurve
    gamma: TimeCurve
    payoff: Payoff
    grid: SpatialGrid
    horizon: float
    steps: int
    backend: str
    theta: float
    mc_samples: int
    seed: int
    tol: float
    max_iter: int
    direction: str
    omega: Optional[float]
    probes: tuple[tuple[float, float], ...]

    def reaction(self) -> ReactionSpec:
        return build_reaction(self.risk)

    def coefficients(self) -> CoefficientIntegrals:
        return CoefficientIntegrals(self.sigma, self.q, self.gamma)

    def iteration(self, backend: Optional[str] = None) -> IterationConfig:
        return IterationConfig(
            tol=self.tol,
            max_iter=self.max_iter,
            direction=self.direction,
            backend=backend or self.backend,
            omega=self.omega,
            t_steps=self.steps,
            fd=FdConfig(self.theta),
            mc=McConfig(self.mc_samples, self.seed),
        )

    def echo(self) -> dict:
        """Normalised configuration with all defaults filled in."""
        return json.loads(json.dumps(self.raw))


def check_probe(S: float, t: float, grid: SpatialGrid, strike: float, horizon: float, path: str) -> None:
    if not S > 0:
        raise ConfigError(f"{path}.S", "must be > 0")
    x = math.log(S / strike)
    if not grid.x_min <= x <= grid.x_max:
        lo, hi = strike * math.exp(grid.x_min), strike * math.exp(grid.x_max)
        raise ConfigError(f"{path}.S", f"must lie in the grid range [{lo:.6g}, {hi:.6g}]")
    if not 0 <= t <= horizon:
        raise ConfigError(f"{path}.t", f"must lie in [0, {horizon:g}]")


def parse_config(raw: Any) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a JSON object")
    for key in raw:
        if key not in DEFAULTS and key != "probes":
            raise ConfigError(key, "unknown section")
    sec = {name: _section(raw, name) for name in DEFAULTS}

    m = sec["market"]
    r = _number(m["r"], "market.r")
    sigma = _curve(m["sigma"], "market.sigma")
    if any(v <= 0 for v in sigma.values):
        raise ConfigError("market.sigma", "volatility must be > 0")
    q = _curve(m["q"], "market.q")
    gamma = _curve(m["gamma"], "market.gamma")

    c = sec["credit"]
    credit = {k: _number(c[k], f"credit.{k}") for k in DEFAULTS["credit"]}
    for k in ("lambda_b", "lambda_c", "s_f"):
        if credit[k] < 0:
            raise ConfigError(f"credit.{k}", "must be >= 0")
    for k in ("recovery_b", "recovery_c"):
        if not 0 <= credit[k] <= 1:
            raise ConfigError(f"credit.{k}", "must lie in [0, 1]")
    risk = RiskParams(r=r, **credit)

    p = sec["payoff"]
    kind = p["kind"]
    if kind not in ("call", "put", "table"):
        raise ConfigError("payoff.kind", "must be one of call, put, table")
    strike = _number(p["strike"], "payoff.strike")
    if strike <= 0:
        raise ConfigError("payoff.strike", "must be > 0")
    table = None
    if kind == "table":
        rows = p["table"]
        if not isinstance(rows, list) or len(rows) < 2:
            raise ConfigError("payoff.table", "expected at least two [S, h] rows")
        table = []
        for i, row in enumerate(rows):
            if not isinstance(row, list) or len(row) != 2:
                raise ConfigError(f"payoff.table[{i}]", "expected [S, h]")
            table.append((_number(row[0], f"payoff.table[{i}][0]"), _number(row[1], f"payoff.table[{i}][1]")))
    try:
        payoff = Payoff(kind, strike, tuple(table) if table else None)
    except ValueError as exc:
        raise ConfigError("payoff.table", str(exc)) from None

    g = sec["grid"]
    x_min = _number(g["x_min"], "grid.x_min")
    x_max = _number(g["x_max"], "grid.x_max")
    n = _integer(g["n"], "grid.n")
    mu = _number(g["mu"], "grid.mu")
    if x_min >= 0:
        raise ConfigError("grid.x_min", "must be < 0")
    if x_max <= 0:
        raise ConfigError("grid.x_max", "must be > 0")
    if n < 3 or n % 2 == 0:
        raise ConfigError("grid.n", "must be an odd integer >= 3")
    if not mu > 2:
        raise ConfigError("grid.mu", f"must be > 2, got {mu:g}")
    grid = SpatialGrid(x_min, x_max, n, mu)
    if kind == "table":
        try:
            from .grid import sample_payoff

            sample_payoff(payoff, grid, moneyness=True)
        except ValueError as exc:
            raise ConfigError("payoff.table", str(exc)) from None

    t = sec["time"]
    horizon = _number(t["horizon"], "time.horizon")
    if horizon <= 0:
        raise ConfigError("time.horizon", "must be > 0")
    steps = _integer(t["steps"], "time.steps")
    if steps < 1:
        raise ConfigError("time.steps", "must be >= 1")

    s = sec["solver"]
    backend = s["backend"]
    if backend not in BACKENDS:
        raise ConfigError("solver.backend", f"must be one of {', '.join(BACKENDS)}")
    theta = _number(s["theta"], "solver.theta")
    if not 0 <= theta <= 1:
        raise ConfigError("solver.theta", "must lie in [0, 1]")
    mc_samples = _integer(s["mc_samples"], "solver.mc_samples")
    if mc_samples < 1:
        raise ConfigError("solver.mc_samples", "must be >= 1")
    seed = _integer(s["seed"], "solver.seed")
    if not 0 <= seed < 2**64:
        raise ConfigError("solver.seed", "must lie in [0, 2**64)")

    it = sec["iteration"]
    tol = _number(it["tol"], "iteration.tol")
    if tol <= 0:
        raise ConfigError("iteration.tol", "must be > 0")
    max_iter = _integer(it["max_iter"], "iteration.max_iter")
    if max_iter < 1:
        raise ConfigError("iteration.max_iter", "must be >= 1")
    direction = it["direction"]
    if direction not in DIRECTIONS:
        raise ConfigError("iteration.direction", f"must be one of {', '.join(DIRECTIONS)}")
    omega = None if it["omega"] is None else _number(it["omega"], "iteration.omega")

    probes = []
    raw_probes = raw.get("probes", [])
    if not isinstance(raw_probes, list):
        raise ConfigError("probes", "expected a list of {S, t} objects")
    for i, pr in enumerate(raw_probes):
        if not isinstance(pr, dict) or set(pr) - {"S", "t"} or "S" not in pr:
            raise ConfigError(f"probes[{i}]", "expected an object with S and optional t")
        S = _number(pr["S"], f"probes[{i}].S")
        tt = _number(pr.get("t", 0.0), f"probes[{i}].t")
        check_probe(S, tt, grid, strike, horizon, f"probes[{i}]")
        probes.append((S, tt))

    normalised = {name: sec[name] for name in DEFAULTS}
    normalised["probes"] = [{"S": S, "t": tt} for S, tt in probes]
    return RunConfig(
        raw=normalised,
        risk=risk,
        sigma=sigma,
        q=q,
        gamma=gamma,
        payoff=payoff,
        grid=grid,
        horizon=horizon,
        steps=steps,
        backend=backend,
        theta=theta,
        mc_samples=mc_samples,
        seed=seed,
        tol=tol,
        max_iter=max_iter,
        direction=direction,
        omega=omega,
        probes=tuple(probes),
    )


def load_config(path) -> RunConfig:
    """Read and validate a JSON config; an unreadable file raises ``OSError``."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from None
    return parse_config(raw)
