"""Problem configuration files.

INI-style sections; every key the tool reads is listed here.

    [regimes]   count
    [dynamics]  b.<i>, sigma.<i>   (one value: constant; two: intercept slope)
                lipschitz_k        (optional declared bound)
    [profit]    form = arctan | exp_scaled ; offset ; eta
    [cost]      form = inverse_quadratic | exp_mu ; mu
    [kernel]    p.<i> (row of switch probabilities), m_lo, m_hi, jump_std,
                gaussian (bool, default true)
    [discount]  beta
    [grid]      x_lo, x_hi, n, dt
    [solve]     tol, max_iter, epsilon, n_gh, n_gh_jump
    [mc]        n_paths, horizon, seed, n_max_impulses
    [simulate]  strategy = no_impulse | cadence | optimal ;
                cadence_t0, cadence_m (cadence only)
    [verify]    n_states, n_paths, cadence_t0, cadence_m, series_terms
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import TechSwitchError
from .model import (HALF_PI, CostSpec, DynamicsSpec, KernelFamily,
                    ProblemSpec, ProfitSpec)
from .qvi import Grid, SolverSettings


class ConfigError(TechSwitchError):
    """Malformed or incomplete configuration file."""


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 10000
    horizon: float = 40.0
    seed: int = 0
    n_max_impulses: int = 64


@dataclass(frozen=True)
class SimulateConfig:
    strategy: str = "no_impulse"
    cadence_t0: float = 1.0
    cadence_m: float = 0.0


@dataclass(frozen=True)
class VerifyConfig:
    n_states: int = 8
    n_paths: int = 2000
    cadence_t0: float = 1.0
    cadence_m: float = 0.0
    series_terms: int = 15


@dataclass(frozen=True)
class RunConfig:
    spec: ProblemSpec
    grid: Grid
    settings: SolverSettings
    mc: McConfig
    simulate: SimulateConfig
    verify: VerifyConfig


def _floats(raw: str) -> list[float]:
    return [float(tok) for tok in raw.replace(",", " ").split()]


def _coeffs(raw: str, what: str) -> tuple[float, float]:
    vals = _floats(raw)
    if len(vals) == 1:
        return (vals[0], 0.0)
    if len(vals) == 2:
        return (vals[0], vals[1])
    raise ConfigError(f"{what} takes one (constant) or two (affine) values")


def load_config(path: str | Path) -> RunConfig:
    """Parse a problem configuration file into typed run settings."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    try:
        n = cp.getint("regimes", "count")
        drift = tuple(_coeffs(cp.get("dynamics", f"b.{i}"), f"b.{i}")
                      for i in range(n))
        vol = tuple(_coeffs(cp.get("dynamics", f"sigma.{i}"), f"sigma.{i}")
                    for i in range(n))
        lip = cp.getfloat("dynamics", "lipschitz_k", fallback=None)
        dynamics = DynamicsSpec(drift, vol, lip)

        pform = cp.get("profit", "form").strip().lower()
        profit = ProfitSpec(
            form=pform,
            offset=cp.getfloat("profit", "offset", fallback=HALF_PI),
            eta=cp.getfloat("profit", "eta", fallback=1.0),
        )
        cform = cp.get("cost", "form").strip().lower()
        cost = CostSpec(form=cform, mu=cp.getfloat("cost", "mu", fallback=0.5))

        rows = tuple(tuple(_floats(cp.get("kernel", f"p.{i}")))
                     for i in range(n))
        kernel = KernelFamily(
            switch_matrix=rows,
            m_lo=cp.getfloat("kernel", "m_lo"),
            m_hi=cp.getfloat("kernel", "m_hi"),
            jump_std=cp.getfloat("kernel", "jump_std", fallback=1.0),
            has_gaussian=cp.getboolean("kernel", "gaussian", fallback=True),
        )
        spec = ProblemSpec(
            n_regimes=n, dynamics=dynamics, profit=profit, cost=cost,
            beta=cp.getfloat("discount", "beta"), kernel=kernel,
        )
        grid = Grid(
            x_lo=cp.getfloat("grid", "x_lo"),
            x_hi=cp.getfloat("grid", "x_hi"),
            n_points=cp.getint("grid", "n"),
            dt=cp.getfloat("grid", "dt"),
        )
        settings = SolverSettings(
            tol=cp.getfloat("solve", "tol", fallback=1e-7),
            max_iter=cp.getint("solve", "max_iter", fallback=20000),
            epsilon=cp.getfloat("solve", "epsilon", fallback=None),
            n_gh=cp.getint("solve", "n_gh", fallback=21),
            n_gh_jump=cp.getint("solve", "n_gh_jump", fallback=21),
        )
        mc = McConfig(
            n_paths=cp.getint("mc", "n_paths", fallback=10000),
            horizon=cp.getfloat("mc", "horizon", fallback=40.0),
            seed=cp.getint("mc", "seed", fallback=0),
            n_max_impulses=cp.getint("mc", "n_max_impulses", fallback=64),
        )
        simulate = SimulateConfig(
            strategy=cp.get("simulate", "strategy",
                            fallback="no_impulse").strip().lower(),
            cadence_t0=cp.getfloat("simulate", "cadence_t0", fallback=1.0),
            cadence_m=cp.getfloat("simulate", "cadence_m", fallback=0.0),
        )
        verify = VerifyConfig(
            n_states=cp.getint("verify", "n_states", fallback=8),
            n_paths=cp.getint("verify", "n_paths", fallback=2000),
            cadence_t0=cp.getfloat("verify", "cadence_t0", fallback=1.0),
            cadence_m=cp.getfloat("verify", "cadence_m", fallback=0.0),
            series_terms=cp.getint("verify", "series_terms", fallback=15),
        )
    except (configparser.Error, ValueError) as exc:
        raise ConfigError(f"bad configuration {path}: {exc}") from exc

    return RunConfig(spec, grid, settings, mc, simulate, verify)


def apply_overrides(cfg: RunConfig, **kw) -> RunConfig:
    """Return a copy with non-None command-line overrides applied."""
    grid = cfg.grid
    grid_kw = {k: v for k, v in kw.items()
               if k in ("x_lo", "x_hi", "n_points", "dt") and v is not None}
    if grid_kw:
        grid = replace(grid, **grid_kw)
    settings = cfg.settings
    for name in ("tol", "max_iter", "epsilon"):
        if kw.get(name) is not None:
            settings = replace(settings, **{name: kw[name]})
    mc = cfg.mc
    for src, dst in (("n_paths", "n_paths"), ("horizon", "horizon"),
                     ("seed", "seed"), ("n_max_impulses", "n_max_impulses")):
        if kw.get(src) is not None:
            mc = replace(mc, **{dst: kw[src]})
    simulate = cfg.simulate
    for name in ("strategy", "cadence_t0", "cadence_m"):
        if kw.get(name) is not None:
            simulate = replace(simulate, **{name: kw[name]})
    return RunConfig(cfg.spec, grid, settings, mc, simulate, cfg.verify)
