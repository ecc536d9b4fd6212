"""Gain estimation, the cadence recurrence series, and optimality audits.

``estimate_gain`` fans independent episodes over counter-based substreams
(one per path id), so estimates are reproducible and independent of worker
count.  ``f_series`` evaluates the per-cycle recurrence decomposition of a
deterministic-cadence strategy's mean gain by quadrature, giving an oracle
that shares nothing with the path simulator.  ``audit_optimality`` checks
the solved fields against the two optimality identities: no admissible
kernel beats the recorded intervention optimum, and no stopping rule beats
the value of waiting, with equality for the recorded maximizer and for the
first-hitting rule.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .diffusion import RngStream, _step_times, discount_weight
from .errors import (InsufficientPaths, UnboundedTailBound,
                     UnsupportedDynamics)
from .model import ProblemSpec, RegimeId
from .qvi import (Region, ValueFields, extract_regions, gauss_hermite,
                  kernel_integral)
from .strategy import (HORIZON_REACHED, IMPULSE_CAP_HIT, FixedCadence,
                       Impulse, NoImpulse, Strategy, StrategyTrace,
                       run_episode)

_TIME_EPS = 1e-9


def worker_count() -> int:
    """Worker cap from the IMPULSE_THREADS environment variable (default 1)."""
    raw = os.environ.get("IMPULSE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass
class GainEstimate:
    mean: float
    stderr: float
    n_paths: int
    horizon: float
    dt: float
    tail_bound: float
    impulse_count_histogram: dict[int, int]
    stopped_reasons: dict[str, int]
    gains: np.ndarray = field(repr=False)


def horizon_tail_bound(spec: ProblemSpec, start: tuple[RegimeId, float],
                       horizon: float) -> float:
    """Bound on the discounted profit neglected beyond the horizon.

    Bounded profit: ``sup_f * exp(-beta T) / beta``.  Exponential profit:
    closed form of the integrand grown at the worst regime rate from the
    start state (exact for the no-impulse strategy; reported alongside
    every estimate rather than silently absorbed).
    """
    beta = spec.beta
    if spec.profit.bounded:
        return spec.profit.sup_value * math.exp(-beta * horizon) / beta
    i0, x0 = start
    rate = max(float(np.asarray(spec.growth_rate(i, x0)))
               for i in spec.regimes)
    margin = beta - rate
    if margin <= 0.0:
        return math.inf
    return spec.profit.eta * math.exp(x0) * math.exp(-margin * horizon) / margin


def _deterministic_targets(spec: ProblemSpec) -> list[int] | None:
    """Per-regime switch target when every row is degenerate, else None."""
    targets = []
    for i in spec.regimes:
        reach = spec.kernel.reachable(i)
        if len(reach) != 1 or spec.kernel.matrix[i, reach[0]] != 1.0:
            return None
        targets.append(reach[0])
    return targets


def _lockstep_eligible(strategy: Strategy, spec: ProblemSpec) -> bool:
    if not spec.dynamics.is_constant():
        return False
    if isinstance(strategy, NoImpulse):
        return True
    if isinstance(strategy, FixedCadence):
        return strategy.dirac or _deterministic_targets(spec) is not None
    return False


def _lockstep_episodes(strategy, start, pids, horizon, dt, seed, spec,
                       keep_traces: bool) -> list:
    """Vectorized cadence/no-impulse episodes, one substream per path.

    Segment boundaries are deterministic for these strategies, so whole
    blocks of paths advance in lockstep; every path consumes exactly the
    draws ``run_episode`` would, in the same order, so results agree with
    the per-episode runner.
    """
    i0, x0 = int(start[0]), float(start[1])
    s_jump = spec.kernel.jump_std
    dirac = isinstance(strategy, FixedCadence) and strategy.dirac
    if isinstance(strategy, NoImpulse):
        imp_times: list[float] = []
        cap_binds = False
    else:
        if not dirac:
            spec.kernel.check_mean(strategy.m)
        cad = []
        k = 1
        while k * strategy.t0 < horizon - _TIME_EPS:
            cad.append(k * strategy.t0)
            k += 1
        cap_binds = len(cad) > strategy.max_impulses
        imp_times = cad[: strategy.max_impulses]
    bounds = [0.0] + imp_times
    if cap_binds:
        bounds.append(imp_times[-1] + strategy.t0)
    bounds.append(horizon)
    n_imp = len(imp_times)
    reason = IMPULSE_CAP_HIT if cap_binds else HORIZON_REACHED
    targets = _deterministic_targets(spec) if n_imp and not dirac else None

    segs = []
    for ta, tb in zip(bounds[:-1], bounds[1:]):
        if tb - ta <= _TIME_EPS:
            continue
        times = _step_times(tb - ta, dt)
        dts = np.diff(times)
        segs.append({
            "ta": ta, "tb": tb, "times": times, "dts": dts,
            "sqdt": np.sqrt(dts),
            "disc": np.exp(-spec.beta * (ta + times)),
        })
    for k, seg in enumerate(segs):
        seg["impulse"] = k < n_imp
    draws_per_path = sum(len(s["dts"]) for s in segs) \
        + (0 if dirac else n_imp)

    out = []
    block = max(32, min(len(pids), int(4e6 / max(draws_per_path, 1))))
    for lo in range(0, len(pids), block):
        chunk = pids[lo: lo + block]
        B = len(chunk)
        Z = np.empty((B, draws_per_path))
        for r, pid in enumerate(chunk):
            Z[r] = RngStream(seed, pid).generator().standard_normal(
                draws_per_path)
        cursor = 0
        regime = i0
        x = np.full(B, x0)
        profit = np.zeros(B)
        cost = np.zeros(B)
        imp_rows = []   # (tau, from_regime, from_x, to_regime, to_x, cost)
        for seg in segs:
            n = len(seg["dts"])
            z = Z[:, cursor: cursor + n]
            cursor += n
            b = spec.dynamics.drift[regime][0]
            sv = spec.dynamics.volatility[regime][0]
            incr = b * seg["dts"] + sv * seg["sqdt"] * z
            vals = np.concatenate(
                [x[:, None], x[:, None] + np.cumsum(incr, axis=1)], axis=1)
            fv = spec.profit(regime, vals)
            profit += np.trapezoid(seg["disc"] * fv, seg["times"], axis=1)
            x = vals[:, -1]
            if seg["impulse"]:
                tau = seg["tb"]
                if dirac:
                    if keep_traces:
                        imp_rows.append((tau, regime, x.copy(), regime,
                                         x.copy(), np.zeros(B)))
                    continue
                zj = Z[:, cursor]
                cursor += 1
                j = targets[regime]
                y = x + strategy.m + s_jump * zj
                disc_cost = math.exp(-spec.beta * tau) \
                    * np.asarray(spec.cost(regime, x, j, y))
                cost += disc_cost
                if keep_traces:
                    imp_rows.append((tau, regime, x.copy(), j, y.copy(),
                                     disc_cost))
                regime = j
                x = y
        gain = profit - cost
        for r in range(B):
            if keep_traces:
                impulses = [
                    Impulse(tau, (fi, float(fx[r])), (ti, float(tx[r])),
                            float(c[r]))
                    for tau, fi, fx, ti, tx, c in imp_rows
                ]
                out.append(StrategyTrace(
                    impulses=impulses, total_profit=float(profit[r]),
                    total_cost=float(cost[r]), gain=float(gain[r]),
                    stopped_reason=reason, final_state=(regime, float(x[r]))))
            else:
                out.append(_LeanTrace(float(gain[r]), n_imp, reason))
    return out


class _LeanTrace:
    """Gain-only record for lockstep runs without trace retention."""

    __slots__ = ("gain", "n_impulses", "stopped_reason")

    def __init__(self, gain, n_impulses, stopped_reason):
        self.gain = gain
        self.n_impulses = n_impulses
        self.stopped_reason = stopped_reason


def estimate_gain(strategy: Strategy, start: tuple[RegimeId, float],
                  n_paths: int, horizon: float, dt: float, seed: int,
                  spec: ProblemSpec, keep_traces: bool = False,
                  ) -> GainEstimate | tuple[GainEstimate, list[StrategyTrace]]:
    """Mean discounted gain over ``n_paths`` independent episodes.

    Path ``p`` draws from the substream ``(seed, p)``; the reduction runs
    in path order, so neither scheduling nor the worker count can change
    any number.  Cadence and no-impulse strategies with constant
    coefficients run through the lockstep block executor, which reproduces
    the per-episode draws exactly.
    """
    if n_paths < 2:
        raise InsufficientPaths("need n_paths >= 2 for a standard error")

    if _lockstep_eligible(strategy, spec):
        traces = _lockstep_episodes(strategy, start, range(n_paths), horizon,
                                    dt, seed, spec, keep_traces)
    else:
        def run_one(pid: int) -> StrategyTrace:
            return run_episode(strategy, start, horizon, dt,
                               RngStream(seed, pid), spec)

        workers = worker_count()
        if workers == 1:
            traces = [run_one(pid) for pid in range(n_paths)]
        else:
            chunks = np.array_split(np.arange(n_paths), workers)
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = pool.map(
                    lambda ids: [run_one(int(p)) for p in ids], chunks)
            traces = [tr for part in parts for tr in part]

    gains = np.asarray([tr.gain for tr in traces])
    counts: dict[int, int] = {}
    reasons: dict[str, int] = {}
    for tr in traces:
        counts[tr.n_impulses] = counts.get(tr.n_impulses, 0) + 1
        reasons[tr.stopped_reason] = reasons.get(tr.stopped_reason, 0) + 1
    est = GainEstimate(
        mean=float(gains.mean()),
        stderr=float(gains.std(ddof=1) / math.sqrt(n_paths)),
        n_paths=n_paths,
        horizon=horizon,
        dt=dt,
        tail_bound=horizon_tail_bound(spec, start, horizon),
        impulse_count_histogram=dict(sorted(counts.items())),
        stopped_reasons=reasons,
        gains=gains,
    )
    if keep_traces:
        return est, traces
    return est


# ---------------------------------------------------------------------------
# cadence recurrence series
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SeriesConfig:
    n_time: int = 48        # Gauss-Legendre nodes on one cadence interval
    n_gh: int = 64          # normal-expectation nodes
    grid_h: float = 0.05    # resolution of the working grid
    spread_sigmas: float = 8.0


@dataclass
class CadenceSeries:
    """Per-cycle decomposition of a deterministic-cadence mean gain.

    ``profit_terms[l]`` is the expected discounted profit earned on cycle
    ``l`` (between impulses ``l`` and ``l+1``), ``cost_terms[l-1]`` the
    expected discounted cost of impulse ``l``; both start from the given
    state.  ``partial_sum`` truncates at order ``L``; ``tail_bound`` covers
    the rest, geometrically for bounded instances and from the exponential
    growth factor otherwise.  ``cycle_discount`` is ``exp(-beta t0)``.
    """

    order: int
    start: tuple[RegimeId, float]
    t0: float
    m: float
    profit_terms: np.ndarray   # length order + 1, cycles 0..L
    cost_terms: np.ndarray     # length order, impulses 1..L
    partial_sum: float
    tail_bound: float
    tail_kind: str             # "geometric" | "growth"
    cycle_discount: float


class _ShiftTable:
    """Gather weights for ``E[g(x + shift + std Z)]`` on a fixed grid."""

    def __init__(self, xs: np.ndarray, shift: float, std: float, n_gh: int):
        pts, w = gauss_hermite(n_gh)
        h = xs[1] - xs[0]
        y = xs[:, None] + shift + std * pts[None, :]
        pos = (y - xs[0]) / h
        self.idx = np.clip(np.floor(pos).astype(np.int64), 0, len(xs) - 2)
        self.frac = np.clip(pos - self.idx, 0.0, 1.0)
        self.w = w

    def apply(self, g: np.ndarray) -> np.ndarray:
        vals = g[self.idx] * (1.0 - self.frac) + g[self.idx + 1] * self.frac
        return vals @ self.w


def _series_grid(spec: ProblemSpec, start_x: float, t0: float, m: float,
                 order: int, cfg: SeriesConfig) -> np.ndarray:
    bmax = max(abs(spec.dynamics.drift[i][0]) for i in spec.regimes)
    smax = max(abs(spec.dynamics.volatility[i][0]) for i in spec.regimes)
    s_jump = spec.kernel.jump_std
    cycles = order + 1
    drift_span = cycles * (bmax * t0 + abs(m))
    spread = cfg.spread_sigmas * math.sqrt(
        cycles * (smax * smax * t0 + s_jump * s_jump)) + 2.0
    half = drift_span + spread
    n = int(math.ceil(2.0 * half / cfg.grid_h)) + 1
    return start_x + np.linspace(-half, half, n)


def f_series(spec: ProblemSpec, t0: float, m: float, L: int,
             start: tuple[RegimeId, float] = (0, 0.0),
             cfg: SeriesConfig | None = None) -> CadenceSeries:
    """Recurrence evaluation of the deterministic-cadence mean gain.

    Needs constant drift and volatility (the between-impulse law is then an
    explicit Gaussian).  Cycle-0 profit integrates profit against the
    discounted Gaussian flow by tensored Gauss-Legendre x Gauss-Hermite
    quadrature; deeper cycles compose two grid convolutions, one moving the
    state to the next impulse time and one applying the jump kernel.  The
    first-impulse-later-than-now indicator is identically 1 because the
    cadence is deterministic and positive.
    """
    if not spec.dynamics.is_constant():
        raise UnsupportedDynamics("cadence series needs constant coefficients")
    if t0 <= 0.0:
        raise ValueError("cadence t0 must be > 0")
    spec.kernel.check_mean(m)
    cfg = cfg or SeriesConfig()
    i0, x0 = start
    beta = spec.beta
    q = math.exp(-beta * t0)
    xs = _series_grid(spec, x0, t0, m, L, cfg)
    n_reg = spec.n_regimes
    p = spec.kernel.matrix
    s_jump = spec.kernel.jump_std

    # cycle-0 profit: time x normal tensor quadrature
    tq, tw = np.polynomial.legendre.leggauss(cfg.n_time)
    tq = 0.5 * t0 * (tq + 1.0)
    tw = 0.5 * t0 * tw
    zpts, zw = gauss_hermite(cfg.n_gh)
    profit0 = np.zeros((n_reg, len(xs)))
    for i in spec.regimes:
        b = spec.dynamics.drift[i][0]
        s = spec.dynamics.volatility[i][0]
        for t, wt in zip(tq, tw):
            y = xs[:, None] + b * t + s * math.sqrt(t) * zpts[None, :]
            profit0[i] += wt * math.exp(-beta * t) * (spec.profit(i, y) @ zw)

    # expected discounted cost of one impulse from (i, x): sum_j p E[c]
    cost0 = np.zeros((n_reg, len(xs)))
    for i in spec.regimes:
        for j in spec.kernel.reachable(i):
            y = xs[:, None] + m + s_jump * zpts[None, :]
            cost0[i] += float(p[i, j]) * (spec.cost(i, xs[:, None], j, y) @ zw)

    flow = [_ShiftTable(xs, spec.dynamics.drift[i][0] * t0,
                        spec.dynamics.volatility[i][0] * math.sqrt(t0),
                        cfg.n_gh) for i in spec.regimes]
    jump = _ShiftTable(xs, m, s_jump, cfg.n_gh)

    def mix(g: np.ndarray) -> np.ndarray:
        """Jump-kernel application: sum_j p[i][j] E[g_j(x + m + s Z)]."""
        smoothed = np.stack([jump.apply(g[j]) for j in range(n_reg)])
        return p @ smoothed

    profit_terms = np.zeros(L + 1)
    cost_terms = np.zeros(L)
    f1 = profit0
    profit_terms[0] = float(np.interp(x0, xs, f1[i0]))
    f4 = cost0
    for level in range(1, L + 1):
        f2 = mix(f1)
        f1 = q * np.stack([flow[i].apply(f2[i]) for i in range(n_reg)])
        profit_terms[level] = float(np.interp(x0, xs, f1[i0]))
        f3 = q * np.stack([flow[i].apply(f4[i]) for i in range(n_reg)])
        cost_terms[level - 1] = float(np.interp(x0, xs, f3[i0]))
        f4 = mix(f3)

    partial = float(profit_terms.sum() - cost_terms.sum())
    tail_kind, tail = _series_tail(spec, t0, m, L, x0, q)
    return CadenceSeries(order=L, start=(i0, x0), t0=t0, m=m,
                         profit_terms=profit_terms, cost_terms=cost_terms,
                         partial_sum=partial, tail_bound=tail,
                         tail_kind=tail_kind, cycle_discount=q)


def _series_tail(spec: ProblemSpec, t0: float, m: float, L: int,
                 x0: float, q: float) -> tuple[str, float]:
    if spec.profit.bounded and spec.cost.bounded:
        scale = spec.profit.sup_value + spec.cost.sup_value
        return "geometric", scale * q ** (L + 1) / (1.0 - q)
    # exponential instance: per-cycle growth factor must stay below 1
    beta = spec.beta
    s = spec.kernel.jump_std
    gbar = max(float(np.asarray(spec.growth_rate(i, x0)))
               for i in spec.regimes)
    flow_factor = math.exp((gbar - beta) * t0)
    jump_factor = math.exp(m + 0.5 * s * s)
    g = flow_factor * jump_factor
    if g >= 1.0:
        raise UnboundedTailBound(
            f"per-cycle growth factor {g:.6g} >= 1; the admissibility "
            f"condition needs m + s^2/2 < t0 (beta - max growth rate)")
    eta = spec.profit.eta if spec.profit.form == "exp_scaled" else \
        spec.profit.sup_value
    a_profit = eta * math.exp(x0) * _growth_integral(gbar - beta, t0)
    mu = spec.cost.mu if spec.cost.form == "exp_mu" else 0.0
    kappa_c = math.exp(mu * m + 0.5 * mu * mu * s * s) if mu else \
        spec.cost.sup_value
    a_cost = math.exp(x0) * kappa_c * g / jump_factor
    tail = (a_profit + a_cost) * g ** (L + 1) / (1.0 - g)
    return "growth", tail


def _growth_integral(rate: float, t0: float) -> float:
    if abs(rate) < 1e-14:
        return t0
    return (math.exp(rate * t0) - 1.0) / rate


# ---------------------------------------------------------------------------
# optimality audit
# ---------------------------------------------------------------------------

@dataclass
class AuditRow:
    regime: int
    x: float
    kernel_violation: float    # max over sampled kernels of (integral - stored optimum)
    maximizer_gap: float       # |integral at recorded maximizer - stored optimum|
    rule_violation: float      # max over stopping rules of (estimate - rho_plus)
    rule_stderr: float
    hitting_gap: float         # |estimate under first-hitting rule - rho_plus|
    hitting_stderr: float


@dataclass
class AuditReport:
    rows: list[AuditRow]
    tol_c: float
    kernels_checked: bool

    @property
    def max_kernel_violation(self) -> float:
        return max((r.kernel_violation for r in self.rows), default=0.0)

    @property
    def max_maximizer_gap(self) -> float:
        return max((r.maximizer_gap for r in self.rows), default=0.0)

    @property
    def max_rule_excess(self) -> float:
        """Worst rule violation beyond its own stderr allowance."""
        return max((r.rule_violation - 3.0 * r.rule_stderr for r in self.rows),
                   default=0.0)

    @property
    def max_hitting_excess(self) -> float:
        return max((r.hitting_gap - 3.0 * r.hitting_stderr for r in self.rows),
                   default=0.0)

    def passed(self) -> bool:
        if self.kernels_checked and (
                self.max_kernel_violation > self.tol_c
                or self.max_maximizer_gap > self.tol_c):
            return False
        return (self.max_rule_excess <= self.tol_c
                and self.max_hitting_excess <= self.tol_c)


def _stopped_functional(fields: ValueFields, spec: ProblemSpec,
                        table, i: RegimeId, k0: int, in_region: np.ndarray,
                        rules: list[dict], n_paths: int, n_steps: int,
                        rng: np.random.Generator) -> list[tuple[float, float]]:
    """Estimate E[sum_{k<tau} disc profit + disc terminal value] per rule.

    Paths follow the solver's own discrete transition law: a quadrature
    node is drawn with its weight, then the landing point randomizes to
    the bracketing grid nodes with the interpolation weights.  The stored
    fixed point is exact along this chain, so rule estimates differ from
    the stored values only by Monte Carlo noise and the iteration residual.
    All rules share one chain (common draws).  Terminal value is the
    stored ``rho`` surface at stops; paths that never stop are closed at
    the cap with the stored value of waiting.
    """
    grid = fields.grid
    gamma = math.exp(-spec.beta * grid.dt)
    w = discount_weight(spec.beta, grid.dt)
    xs_grid = grid.points
    fw = spec.profit(i, xs_grid) * w
    node_cdf = np.cumsum(table.weights)
    node_cdf[-1] = 1.0
    idx_tbl = table.idx[i]
    frac_tbl = table.frac[i]

    state = np.full(n_paths, int(k0), dtype=np.int64)
    vals = [np.zeros(n_paths) for _ in rules]
    active = [np.ones(n_paths, dtype=bool) for _ in rules]
    gamma_pow = 1.0
    for k in range(1, n_steps + 1):
        fstep = fw[state]
        for v, act in zip(vals, active):
            v[act] += gamma_pow * fstep[act]
        node = np.searchsorted(node_cdf, rng.random(n_paths), side="right")
        lo = idx_tbl[state, node]
        state = lo + (rng.random(n_paths) < frac_tbl[state, node])
        gamma_pow *= gamma
        xs = xs_grid[state]
        for rule, v, act in zip(rules, vals, active):
            if not act.any():
                continue
            if rule["kind"] == "hitting":
                stop = in_region[state] & act
            elif rule["kind"] == "fixed":
                stop = act if k == rule["step"] else np.zeros_like(act)
            else:  # threshold
                stop = ((xs >= rule["hi"]) | (xs <= rule["lo"])) & act
            if stop.any():
                v[stop] += gamma_pow * fields.rho[i, state[stop]]
                act &= ~stop
        if not any(a.any() for a in active):
            break
    for v, act in zip(vals, active):
        if act.any():
            v[act] += gamma_pow * fields.rho_plus[i, state[act]]
    out = []
    for v in vals:
        out.append((float(v.mean()),
                    float(v.std(ddof=1) / math.sqrt(n_paths))))
    return out


def audit_optimality(fields: ValueFields, spec: ProblemSpec, n_states: int,
                     seed: int, region: Region | None = None,
                     n_kernels: int = 5, n_paths: int = 2000,
                     horizon: float | None = None) -> AuditReport:
    """Check the solved fields against the two optimality identities.

    At each sampled grid state: (a) the kernel integral of
    ``-cost + rho_plus`` under random family members (the Dirac plus
    uniform jump means) never beats the stored ``max(rho_plus, m_star)``,
    and matches it at the recorded maximizer; (b) Monte Carlo estimates of
    the stopped functional under random stopping rules never beat
    ``rho_plus``, and match it under the first-hitting rule.  Both audit
    the solver's own discretization (its quadrature, step and transition
    law), so the stated tolerances are achievable; fidelity of that
    discretization to the continuous dynamics is checked separately by
    simulator-consistency runs.
    """
    from .qvi import TransitionTable

    grid = fields.grid
    settings = fields.settings
    tol_c = 10.0 * settings.tol
    region = region or extract_regions(fields)
    table = TransitionTable(spec, grid, settings.n_gh)
    in_region = np.stack([region.contains_many(i, grid.points)
                          for i in spec.regimes])
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xAD17]))
    kf = spec.kernel
    kernels_checked = kf.has_gaussian

    n = grid.n_points
    inner = np.arange(int(0.1 * n), int(0.9 * n) + 1)
    rows: list[AuditRow] = []
    if horizon is None:
        horizon = max(8.0 / spec.beta, 20.0 * grid.dt)
    n_steps = int(round(horizon / grid.dt))

    for _ in range(n_states):
        i = int(rng.integers(0, spec.n_regimes))
        k = int(rng.choice(inner))
        x = float(grid.points[k])
        stored_m = float(np.maximum(fields.rho_plus, fields.m_star)[i, k])

        kernel_violation = 0.0
        maximizer_gap = 0.0
        if kernels_checked:
            candidates = [None]  # the Dirac member
            candidates += list(rng.uniform(kf.m_lo, kf.m_hi,
                                           size=max(n_kernels - 1, 0)))
            worst = -math.inf
            for mv in candidates:
                if mv is None:
                    val = float(fields.rho_plus[i, k])
                else:
                    val = kernel_integral(fields.rho_plus, spec, grid, i, x,
                                          float(mv), settings.n_gh_jump)
                worst = max(worst, val - stored_m)
            kernel_violation = worst
            if fields.m_star[i, k] >= fields.rho_plus[i, k]:
                best = kernel_integral(fields.rho_plus, spec, grid, i, x,
                                       float(fields.argmax_m[i, k]),
                                       settings.n_gh_jump)
            else:
                best = float(fields.rho_plus[i, k])
            maximizer_gap = abs(best - stored_m)

        steps_a = int(rng.integers(1, max(2, n_steps // 2)))
        steps_b = int(rng.integers(1, max(2, n_steps)))
        span = 0.5 * (grid.x_hi - grid.x_lo)
        rules = [
            {"kind": "hitting"},
            {"kind": "fixed", "step": steps_a},
            {"kind": "fixed", "step": steps_b},
            {"kind": "threshold",
             "hi": x + float(rng.uniform(0.1, 0.5)) * span,
             "lo": x - float(rng.uniform(0.1, 0.5)) * span},
        ]
        chain_rng = np.random.default_rng(
            np.random.SeedSequence([seed, 0xC4A1, len(rows), i, k]))
        results = _stopped_functional(fields, spec, table, i, k,
                                      in_region[i], rules, n_paths, n_steps,
                                      chain_rng)
        target = float(fields.rho_plus[i, k])
        hit_mean, hit_err = results[0]
        rule_violation = -math.inf
        rule_err = 0.0
        for mean, err in results[1:]:
            excess = mean - target
            if excess > rule_violation:
                rule_violation = excess
                rule_err = err
        rows.append(AuditRow(
            regime=i, x=x,
            kernel_violation=kernel_violation,
            maximizer_gap=maximizer_gap,
            rule_violation=rule_violation,
            rule_stderr=rule_err,
            hitting_gap=abs(hit_mean - target),
            hitting_stderr=hit_err,
        ))
    return AuditReport(rows, tol_c, kernels_checked)
