"""Grid solver for the switching quasi-variational inequality.

The value of waiting (first impulse strictly later than now), written
``rho_plus`` throughout, solves a dynamic-programming fixed point: continue
for one step ``dt`` earning profit, then behave optimally, with the option
to intervene valued through the best one-impulse operator.  On a regular
spatial grid per regime the iteration is

    rho_plus <- f * w(dt) + exp(-beta dt) * E[ max(rho_plus, m_star)(Y_dt) ]

where ``w(dt)`` integrates the discount over one step, the expectation over
the Euler increment is a Gauss-Hermite quadrature with linear interpolation
on the grid (constant extrapolation beyond it), and ``m_star`` is the best
intervention value

    m_star(i, x) = max_m  sum_j p[i][j] E_{N(x+m, s^2)}[ -c(i,x,j,y)
                                                         + rho_plus(j, y) ]

over the jump-mean box.  The operator is a monotone sup-norm contraction
with factor ``exp(-beta dt)``, so sweeps started from the no-impulse value
increase pointwise and converge for bounded profit; the exponential profit
form is supported with the same iteration but without the guarantee.

The stored solution keeps ``rho = max(rho_plus, m_star)`` pointwise, the
argmax jump mean and target regime, and the impulse region ``I`` (where
``rho - m_star <= epsilon``) with its complement ``C``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .diffusion import discount_weight
from .errors import NoConvergence
from .model import ProblemSpec, RegimeId, require_valid

NEG_INF = -math.inf
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@lru_cache(maxsize=32)
def gauss_hermite(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for E[g(Z)], Z standard normal.

    Returns ``(points, weights)`` with ``E[g(Z)] ~= sum w_k g(points_k)``;
    weights are normalized to sum to exactly 1 so that quadrature preserves
    constants (keeps the Bellman operator monotone and mass-conserving).
    """
    t, w = np.polynomial.hermite.hermgauss(n)
    w = w / w.sum()
    w[np.argmax(w)] += 1.0 - w.sum()   # absorb the last-ulp residual
    w.setflags(write=False)
    return math.sqrt(2.0) * t, w


@dataclass(frozen=True)
class Grid:
    """Uniform spatial grid shared by all regimes, plus the Bellman step."""

    x_lo: float
    x_hi: float
    n_points: int
    dt: float

    def __post_init__(self):
        if not self.x_lo < self.x_hi:
            raise ValueError("x_lo must be < x_hi")
        if self.n_points < 3:
            raise ValueError("need at least 3 grid points")
        if self.dt <= 0.0:
            raise ValueError("dt must be > 0")

    @property
    def h(self) -> float:
        return (self.x_hi - self.x_lo) / (self.n_points - 1)

    @cached_property
    def points(self) -> np.ndarray:
        return np.linspace(self.x_lo, self.x_hi, self.n_points)

    def expanded(self, margin_lo: float, margin_hi: float) -> "Grid":
        """Wider grid with identical spacing; margins round up to steps."""
        h = self.h
        k_lo = max(0, math.ceil(margin_lo / h - 1e-9))
        k_hi = max(0, math.ceil(margin_hi / h - 1e-9))
        return Grid(self.x_lo - k_lo * h, self.x_hi + k_hi * h,
                    self.n_points + k_lo + k_hi, self.dt)

    def nearest_index(self, x: float) -> int:
        idx = int(round((x - self.x_lo) / self.h))
        return min(max(idx, 0), self.n_points - 1)


@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-7
    max_iter: int = 20000
    n_gh: int = 21          # quadrature nodes for the Euler step
    n_gh_jump: int = 21     # quadrature nodes for kernel integrals
    n_scan: int = 33        # jump-mean scan resolution
    golden_iters: int = 20  # bracket refinements after the scan
    epsilon: float | None = None  # region extraction; default 10 * tol

    @property
    def region_epsilon(self) -> float:
        return 10.0 * self.tol if self.epsilon is None else self.epsilon


class TransitionTable:
    """Precomputed gather weights for one Euler step per regime.

    Row ``k`` of regime ``i`` maps a grid field ``v`` to the quadrature
    approximation of ``E[v_interp(x_k + b dt + sigma sqrt(dt) Z)]`` with
    constant extrapolation beyond the grid.  All interpolation weights lie
    in ``[0, 1]`` and each row's weights sum to 1.
    """

    def __init__(self, spec: ProblemSpec, grid: Grid, n_gh: int):
        pts, w = gauss_hermite(n_gh)
        x = grid.points
        h = grid.h
        self.weights = w
        self.idx = []
        self.frac = []
        sq = math.sqrt(grid.dt)
        for i in spec.regimes:
            b = np.asarray(spec.dynamics.b(i, x), dtype=float)
            s = np.asarray(spec.dynamics.sigma(i, x), dtype=float)
            y = x[:, None] + b[:, None] * grid.dt + s[:, None] * sq * pts[None, :]
            pos = (y - grid.x_lo) / h
            idx = np.clip(np.floor(pos).astype(np.int64), 0, grid.n_points - 2)
            frac = np.clip(pos - idx, 0.0, 1.0)
            self.idx.append(idx)
            self.frac.append(frac)

    def apply(self, i: RegimeId, v: np.ndarray) -> np.ndarray:
        idx, frac = self.idx[i], self.frac[i]
        vy = v[idx] * (1.0 - frac) + v[idx + 1] * frac
        return vy @ self.weights


@dataclass
class ValueFields:
    """Solved value surfaces on ``grid``, one row per regime."""

    grid: Grid
    settings: SolverSettings
    rho_plus: np.ndarray    # value of waiting
    m_star: np.ndarray      # best intervention value; -inf if no Gaussian member
    rho: np.ndarray         # max(rho_plus, m_star), exactly as stored
    argmax_m: np.ndarray    # optimal jump mean; nan where m_star is -inf
    argmax_j: np.ndarray    # optimal target regime (int)
    iterations: int
    residual: float
    no_impulse: np.ndarray  # never-impulse value on the same grid

    def interp(self, field: np.ndarray, i: RegimeId, x) -> np.ndarray:
        return np.interp(np.asarray(x, dtype=float), self.grid.points, field[i])


@dataclass(frozen=True)
class Region:
    """Impulse set I as closed intervals per regime; complement C.

    ``contains`` tests interval membership (endpoints included).  The grid
    bounds double as the truncation domain for path monitoring.
    """

    intervals: tuple[tuple[tuple[float, float], ...], ...]
    epsilon: float
    x_lo: float
    x_hi: float

    def contains(self, i: RegimeId, x: float) -> bool:
        return bool(self.contains_many(i, np.asarray([x]))[0])

    def contains_many(self, i: RegimeId, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        out = np.zeros(xs.shape, dtype=bool)
        for lo, hi in self.intervals[i]:
            out |= (xs >= lo) & (xs <= hi)
        return out

    def is_empty(self, i: RegimeId | None = None) -> bool:
        if i is not None:
            return not self.intervals[i]
        return all(not iv for iv in self.intervals)

    def labelled(self) -> list[tuple[int, float, float, str]]:
        """(regime, lo, hi, label) rows covering the grid; I owns endpoints."""
        rows = []
        for i, ivs in enumerate(self.intervals):
            cursor = self.x_lo
            for lo, hi in ivs:
                if lo > cursor:
                    rows.append((i, cursor, lo, "C"))
                rows.append((i, lo, hi, "I"))
                cursor = hi
            if cursor < self.x_hi or not ivs:
                rows.append((i, cursor, self.x_hi, "C"))
        return rows


def no_impulse_value(spec: ProblemSpec, grid: Grid, tol: float = 1e-9,
                     max_iter: int = 200000, n_gh: int = 21,
                     table: TransitionTable | None = None) -> np.ndarray:
    """Value of never impulsing, by fixed-point iteration per regime.

    Iterates ``v <- f w(dt) + exp(-beta dt) P_i v`` to sup-norm tolerance;
    the contraction factor is ``exp(-beta dt)``.
    """
    require_valid(spec, grid)
    if table is None:
        table = TransitionTable(spec, grid, n_gh)
    x = grid.points
    gamma = math.exp(-spec.beta * grid.dt)
    w = discount_weight(spec.beta, grid.dt)
    v = np.zeros((spec.n_regimes, grid.n_points))
    fw = np.stack([spec.profit(i, x) for i in spec.regimes]) * w
    residual = math.inf
    for _ in range(max_iter):
        new = np.stack([fw[i] + gamma * table.apply(i, v[i])
                        for i in spec.regimes])
        residual = float(np.max(np.abs(new - v)))
        v = new
        if residual < tol:
            return v
    raise NoConvergence(residual, max_iter, tol)


def interp_grid(grid: Grid, fvals: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Linear interpolation on the uniform grid, constant beyond the ends.

    Equivalent to ``np.interp`` but with direct index arithmetic.
    """
    pos = np.clip((y - grid.x_lo) / grid.h, 0.0, grid.n_points - 1.0)
    idx = np.minimum(pos.astype(np.int64), grid.n_points - 2)
    frac = pos - idx
    return fvals[idx] * (1.0 - frac) + fvals[idx + 1] * frac


def kernel_integral(phi: np.ndarray, spec: ProblemSpec, grid: Grid,
                    i: RegimeId, x, m, n_gh: int = 21):
    """Quadrature of ``sum_j p[i][j] E_{N(x+m, s^2)}[-c(i,x,j,y) + phi_j(y)]``.

    ``x`` and ``m`` broadcast together; ``phi`` holds one grid field per
    regime, linearly interpolated with constant extrapolation.  This single
    routine backs both the solver's intervention optimum and the audit's
    independent kernel checks, so stored optima can be reproduced exactly.
    """
    pts, w = gauss_hermite(n_gh)
    x = np.asarray(x, dtype=float)
    m = np.asarray(m, dtype=float)
    scalar = x.ndim == 0 and m.ndim == 0
    x, m = np.broadcast_arrays(np.atleast_1d(x), np.atleast_1d(m))
    s = spec.kernel.jump_std
    y = (x + m)[:, None] + s * pts[None, :]
    acc = np.zeros(x.shape[0])
    for j in spec.kernel.reachable(i):
        p = float(spec.kernel.matrix[i, j])
        vals = interp_grid(grid, phi[j], y)
        cost = spec.cost(i, x[:, None], j, y)
        acc += p * ((vals - cost) @ w)
    return float(acc[0]) if scalar else acc


def _per_target_values(phi, spec, grid, i, x, m, n_gh):
    """E_{N(x+m,s^2)}[-c + phi_j] for each reachable j (unweighted)."""
    pts, w = gauss_hermite(n_gh)
    s = spec.kernel.jump_std
    y = (np.asarray(x) + np.asarray(m))[:, None] + s * pts[None, :]
    out = {}
    for j in spec.kernel.reachable(i):
        vals = interp_grid(grid, phi[j], y)
        cost = spec.cost(i, np.asarray(x)[:, None], j, y)
        out[j] = (vals - cost) @ w
    return out


def _intervention_row(phi, spec, grid, settings, i, x):
    """Vectorized best intervention over the jump-mean box at states ``x``.

    Scans ``n_scan`` equispaced means (first maximum wins, so ties resolve
    toward the smallest mean), then refines the bracketing interval by
    golden-section, appraising candidates with the same quadrature.
    """
    kf = spec.kernel
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if not kf.has_gaussian or not kf.reachable(i):
        return (np.full(n, NEG_INF), np.full(n, np.nan),
                np.full(n, i, dtype=np.int64))

    ngh = settings.n_gh_jump
    if kf.m_hi - kf.m_lo <= 0.0:
        best_m = np.full(n, kf.m_lo)
        best_v = kernel_integral(phi, spec, grid, i, x, best_m, ngh)
    else:
        ms = np.linspace(kf.m_lo, kf.m_hi, settings.n_scan)
        x_tiled = np.broadcast_to(x, (settings.n_scan, n)).ravel()
        m_tiled = np.repeat(ms, n)
        scan = kernel_integral(phi, spec, grid, i, x_tiled, m_tiled,
                               ngh).reshape(settings.n_scan, n)
        k = np.argmax(scan, axis=0)  # first occurrence: smallest mean
        best_v = scan[k, np.arange(n)]
        best_m = ms[k]
        a = ms[np.maximum(k - 1, 0)]
        b = ms[np.minimum(k + 1, len(ms) - 1)]
        x_pair = np.concatenate([x, x])
        for _ in range(settings.golden_iters):
            span = b - a
            x1 = b - _GOLDEN * span
            x2 = a + _GOLDEN * span
            f12 = kernel_integral(phi, spec, grid, i, x_pair,
                                  np.concatenate([x1, x2]), ngh)
            keep_left = f12[:n] >= f12[n:]  # ties shrink toward smaller mean
            b = np.where(keep_left, x2, b)
            a = np.where(keep_left, a, x1)
        mid = 0.5 * (a + b)
        vmid = kernel_integral(phi, spec, grid, i, x, mid, ngh)
        better = vmid > best_v
        best_v = np.where(better, vmid, best_v)
        best_m = np.where(better, mid, best_m)

    per_j = _per_target_values(phi, spec, grid, i, x, best_m, ngh)
    targets = list(per_j)
    stackj = np.stack([per_j[j] for j in targets])
    best_j = np.asarray(targets, dtype=np.int64)[np.argmax(stackj, axis=0)]
    return best_v, best_m, best_j


def intervention_field(phi: np.ndarray, spec: ProblemSpec, grid: Grid,
                       settings: SolverSettings):
    """Best intervention value, jump mean and target at every grid state."""
    rows = [_intervention_row(phi, spec, grid, settings, i, grid.points)
            for i in spec.regimes]
    m_star = np.stack([r[0] for r in rows])
    argmax_m = np.stack([r[1] for r in rows])
    argmax_j = np.stack([r[2] for r in rows])
    return m_star, argmax_m, argmax_j


def intervention_value(phi: np.ndarray, spec: ProblemSpec, grid: Grid,
                       i: RegimeId, x: float,
                       settings: SolverSettings | None = None):
    """Best one-impulse value at a single state; ``(value, best_m, best_j)``.

    Returns ``-inf`` with ``nan`` mean when the family has no Gaussian
    member (only the do-nothing Dirac remains).
    """
    settings = settings or SolverSettings()
    v, m, j = _intervention_row(phi, spec, grid, settings, i,
                                np.asarray([float(x)]))
    return float(v[0]), float(m[0]), int(j[0])


def bellman_sweep(fields: ValueFields, spec: ProblemSpec, grid: Grid,
                  table: TransitionTable | None = None) -> np.ndarray:
    """One value update from stored ``rho_plus`` and current ``m_star``."""
    if table is None:
        table = TransitionTable(spec, grid, fields.settings.n_gh)
    return _sweep(fields.rho_plus, fields.m_star, spec, grid, table)


def _sweep(rho_plus, m_star, spec, grid, table):
    x = grid.points
    gamma = math.exp(-spec.beta * grid.dt)
    w = discount_weight(spec.beta, grid.dt)
    rho = np.maximum(rho_plus, m_star)
    return np.stack([
        spec.profit(i, x) * w + gamma * table.apply(i, rho[i])
        for i in spec.regimes
    ])


def expansion_margins(spec: ProblemSpec, grid: Grid) -> tuple[float, float]:
    """Widening needed so boundary truncation cannot pollute the window.

    Bounded profit saturates, so constant extrapolation is already benign
    and no margin is added.  For the exponential form the boundary deficit
    decays into the interior like ``exp(-(theta - 1) d)`` above and
    ``exp(-(theta_dn + 1) d)`` below, where ``theta`` solves the discounted
    hitting-time exponent; validation guarantees ``theta > 1``.
    """
    if spec.profit.bounded:
        return 0.0, 0.0
    target = 6.0  # decades of decay: e^-6 of the boundary deficit
    up = dn = 0.0
    for i in spec.regimes:
        for x_edge, upper in ((grid.x_hi, True), (grid.x_lo, False)):
            b = float(np.asarray(spec.dynamics.b(i, x_edge)))
            s = float(np.asarray(spec.dynamics.sigma(i, x_edge)))
            if s <= 0.0:
                continue
            root = math.sqrt(b * b + 2.0 * spec.beta * s * s)
            if upper:
                rate = (-b + root) / (s * s) - 1.0
                up = max(up, target / max(rate, 0.05))
            else:
                rate = (b + root) / (s * s) + 1.0
                dn = max(dn, target / max(rate, 0.05))
    cap = 8.0 * (grid.x_hi - grid.x_lo)
    return min(dn, cap), min(up, cap)


def solve(spec: ProblemSpec, grid: Grid,
          settings: SolverSettings | None = None,
          auto_expand: bool = True) -> ValueFields:
    """Fixed-point solve of the switching problem on ``grid``.

    Alternates recomputing the intervention field from the current
    ``rho_plus`` with one Bellman sweep until the sup-norm change drops
    below ``settings.tol``.  Iteration starts from the no-impulse value, so
    the sweep sequence is pointwise nondecreasing.  With ``auto_expand``
    the working domain is widened for unbounded profit (fields are
    returned on the widened grid, recorded in ``ValueFields.grid``).
    """
    settings = settings or SolverSettings()
    require_valid(spec, grid)
    if auto_expand:
        dn, up = expansion_margins(spec, grid)
        if dn > 0.0 or up > 0.0:
            grid = grid.expanded(dn, up)

    table = TransitionTable(spec, grid, settings.n_gh)
    baseline = no_impulse_value(spec, grid, tol=min(settings.tol, 1e-9),
                                max_iter=settings.max_iter * 40, table=table)
    rho_plus = baseline.copy()

    intervene = spec.kernel.has_gaussian
    residual = 0.0
    iterations = 0
    if intervene:
        residual = math.inf
        for iterations in range(1, settings.max_iter + 1):
            m_star, _, _ = intervention_field(rho_plus, spec, grid, settings)
            new = _sweep(rho_plus, m_star, spec, grid, table)
            residual = float(np.max(np.abs(new - rho_plus)))
            rho_plus = new
            if residual < settings.tol:
                break
        else:
            raise NoConvergence(residual, settings.max_iter, settings.tol)

    # final intervention field from the converged value, for exact storage
    m_star, argmax_m, argmax_j = intervention_field(rho_plus, spec, grid,
                                                    settings)
    rho = np.maximum(rho_plus, m_star)
    return ValueFields(grid=grid, settings=settings, rho_plus=rho_plus,
                       m_star=m_star, rho=rho, argmax_m=argmax_m,
                       argmax_j=argmax_j, iterations=iterations,
                       residual=residual, no_impulse=baseline)


def extract_regions(fields: ValueFields, epsilon: float | None = None) -> Region:
    """Impulse set where ``rho - m_star <= epsilon``, as closed intervals."""
    if epsilon is None:
        epsilon = fields.settings.region_epsilon
    x = fields.grid.points
    intervals = []
    for i in range(fields.rho.shape[0]):
        gap = fields.rho[i] - fields.m_star[i]   # +inf where m_star is -inf
        mask = gap <= epsilon
        ivs = []
        start = None
        for k, flag in enumerate(mask):
            if flag and start is None:
                start = k
            elif not flag and start is not None:
                ivs.append((float(x[start]), float(x[k - 1])))
                start = None
        if start is not None:
            ivs.append((float(x[start]), float(x[-1])))
        intervals.append(tuple(ivs))
    return Region(tuple(intervals), float(epsilon),
                  fields.grid.x_lo, fields.grid.x_hi)


def structural_checks(fields: ValueFields, spec: ProblemSpec,
                      region: Region | None = None) -> dict:
    """Residuals of the stored-solution identities; see keys in the result.

    ``max_identity_gap`` must be exactly 0 (``rho`` is stored as the
    pointwise maximum), ``dominance_gap``/``complementarity`` stay within
    ``10 * tol``, ``min_rho_plus`` is positive for nonzero profit, and the
    Dirac member reproduces ``rho_plus`` exactly at grid points.
    """
    grid = fields.grid
    table = TransitionTable(spec, grid, fields.settings.n_gh)
    cont = _sweep(fields.rho_plus, fields.m_star, spec, grid, table)
    a = fields.rho - cont                 # continuation difference
    b = fields.rho - fields.m_star        # intervention difference
    comp = np.minimum(a, b)
    region = region or extract_regions(fields)
    covered = True
    rows = region.labelled()
    for i in spec.regimes:
        segs = [(lo, hi) for (r, lo, hi, _) in rows if r == i]
        cursor = grid.x_lo
        for lo, hi in segs:
            if abs(lo - cursor) > 1e-12 or hi < lo:
                covered = False
            cursor = hi
        if abs(cursor - grid.x_hi) > 1e-12:
            covered = False
    # Dirac member: integrand -c(i,x,i,x) + rho_plus(i,x) == rho_plus(i,x)
    dirac_gap = 0.0
    for i in spec.regimes:
        lhs = -spec.cost(i, grid.points, i, grid.points) + fields.rho_plus[i]
        dirac_gap = max(dirac_gap, float(np.max(np.abs(lhs - fields.rho_plus[i]))))
    return {
        "max_identity_gap": float(np.max(np.abs(
            fields.rho - np.maximum(fields.rho_plus, fields.m_star)))),
        "dominance_gap": float(np.min(fields.rho_plus - fields.no_impulse)),
        "min_rho_plus": float(np.min(fields.rho_plus)),
        "complementarity_abs": float(np.max(np.abs(comp))),
        "min_continuation_diff": float(np.min(a)),
        "min_intervention_diff": float(np.min(np.where(np.isfinite(b), b, 0.0))),
        "dirac_gap": dirac_gap,
        "partition_covers_grid": covered,
        "tol_c": 10.0 * fields.settings.tol,
    }
