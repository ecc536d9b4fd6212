"""Problem instances for the technology-switching control problem.

A firm runs one technology ``i`` out of a finite set ``{0, .., n_regimes-1}``.
The log of the firm value diffuses with regime-dependent drift ``b(i, x)``
and volatility ``sigma(i, x)``, earns a running profit ``f(i, x)`` discounted
at rate ``beta``, and may at any time switch technology and jump the state,
paying a cost ``c(i, x, j, y)``.  The post-impulse law is drawn from a
parametric family of transition kernels: a fixed row-stochastic switch matrix
tensored with a Gaussian mean-shift ``N(x + m, jump_std^2)`` for
``m`` in a closed box, plus the do-nothing Dirac member which is always
admissible and costs nothing.

Profit, cost, drift and volatility are closed-form families rather than
arbitrary callables so that boundedness, Lipschitz/growth bounds and the
integrability condition for the exponential profit can all be checked
symbolically from coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ParameterOutOfBox, SpecValidationError

RegimeId = int

HALF_PI = math.pi / 2.0

_STOCHASTIC_TOL = 1e-12


@dataclass(frozen=True)
class DynamicsSpec:
    """Per-regime drift and volatility, each affine: ``coef0 + coef1 * x``.

    A constant form is the ``coef1 = 0`` special case.  ``lipschitz_bound``
    is the declared constant K for the Lipschitz and sub-linear growth
    conditions; leave it ``None`` to have validation derive the tight value
    from the coefficients.
    """

    drift: tuple[tuple[float, float], ...]
    volatility: tuple[tuple[float, float], ...]
    lipschitz_bound: float | None = None

    @classmethod
    def constant(cls, b: Sequence[float], sigma: Sequence[float],
                 lipschitz_bound: float | None = None) -> "DynamicsSpec":
        return cls(
            drift=tuple((float(v), 0.0) for v in b),
            volatility=tuple((float(v), 0.0) for v in sigma),
            lipschitz_bound=lipschitz_bound,
        )

    @property
    def n_regimes(self) -> int:
        return len(self.drift)

    def is_constant(self) -> bool:
        return all(s == 0.0 for _, s in self.drift) and \
            all(s == 0.0 for _, s in self.volatility)

    def b(self, i: RegimeId, x):
        c0, c1 = self.drift[i]
        return c0 + c1 * np.asarray(x) if c1 else _const_like(c0, x)

    def sigma(self, i: RegimeId, x):
        c0, c1 = self.volatility[i]
        return c0 + c1 * np.asarray(x) if c1 else _const_like(c0, x)

    def derived_lipschitz(self) -> float:
        """Tight K satisfying both the Lipschitz and the growth condition.

        For affine forms, |b(i,x)-b(i,y)| + |sigma(i,x)-sigma(i,y)| =
        (|b1|+|s1|)|x-y| and, by Cauchy-Schwarz,
        b(i,x)^2 + sigma(i,x)^2 <= (b0^2+b1^2+s0^2+s1^2)(1+x^2).
        """
        lip = 0.0
        growth_sq = 0.0
        for (b0, b1), (s0, s1) in zip(self.drift, self.volatility):
            lip = max(lip, abs(b1) + abs(s1))
            growth_sq = max(growth_sq, b0 * b0 + b1 * b1 + s0 * s0 + s1 * s1)
        return max(lip, math.sqrt(growth_sq))


def _const_like(value, x):
    x = np.asarray(x)
    if x.ndim == 0:
        return float(value)
    return np.full(x.shape, value, dtype=float)


@dataclass(frozen=True)
class ProfitSpec:
    """Running profit ``f(i, x)``, independent of the regime.

    Forms:
      * ``arctan``: ``arctan(x) + offset``, bounded by ``offset + pi/2``
        (nonnegative as long as ``offset >= pi/2``).
      * ``exp_scaled``: ``eta * exp(x)``, unbounded; admitted only when the
        discount rate dominates the state growth (see ``validate_spec``).
    """

    form: str
    offset: float = HALF_PI
    eta: float = 1.0

    def __post_init__(self):
        if self.form not in ("arctan", "exp_scaled"):
            raise ValueError(f"unknown profit form {self.form!r}")

    @property
    def bounded(self) -> bool:
        return self.form == "arctan"

    @property
    def sup_value(self) -> float:
        """Supremum of f over all states; inf for the exponential form."""
        if self.form == "arctan":
            return self.offset + HALF_PI
        return math.inf

    def __call__(self, i: RegimeId, x):
        x = np.asarray(x, dtype=float)
        if self.form == "arctan":
            out = np.arctan(x) + self.offset
        else:
            out = self.eta * np.exp(x)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CostSpec:
    """Switching cost ``c(i, x, j, y)``; exactly zero at the no-impulse point.

    Forms:
      * ``inverse_quadratic``: ``1 - 1/(1 + (y - x)^2)``, bounded by 1.
      * ``exp_mu``: ``exp(x + mu*(y - x))``, unbounded.

    ``(j, y) == (i, x)`` always costs exactly 0, whatever the form.
    """

    form: str
    mu: float = 0.5

    def __post_init__(self):
        if self.form not in ("inverse_quadratic", "exp_mu"):
            raise ValueError(f"unknown cost form {self.form!r}")

    @property
    def bounded(self) -> bool:
        return self.form == "inverse_quadratic"

    @property
    def sup_value(self) -> float:
        return 1.0 if self.form == "inverse_quadratic" else math.inf

    def __call__(self, i: RegimeId, x, j: RegimeId, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        d = y - x
        if self.form == "inverse_quadratic":
            out = 1.0 - 1.0 / (1.0 + d * d)
        else:
            out = np.exp(x + self.mu * d)
        if i == j:
            # no-impulse convention: zero cost at the unchanged state
            out = np.where(d == 0.0, 0.0, out)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class KernelFamily:
    """Admissible post-impulse kernels ``r(i, x; j, dy)``.

    The non-Dirac members share one row-stochastic, zero-diagonal switch
    matrix and move the state by ``N(x + m, jump_std^2)`` with the mean
    shift ``m`` ranging over the closed box ``[m_lo, m_hi]``.  The Dirac
    member (stay at ``(i, x)``) is structurally always present.  Setting
    ``has_gaussian=False`` leaves only the Dirac member, which disables
    intervention entirely.
    """

    switch_matrix: tuple[tuple[float, ...], ...]
    m_lo: float
    m_hi: float
    jump_std: float = 1.0
    has_gaussian: bool = True
    includes_dirac: bool = True  # structural; validation rejects False

    @classmethod
    def swap(cls, m_lo: float, m_hi: float, jump_std: float = 1.0) -> "KernelFamily":
        """Two-regime family that always switches to the other technology."""
        return cls(((0.0, 1.0), (1.0, 0.0)), m_lo, m_hi, jump_std)

    @classmethod
    def dirac_only(cls, n_regimes: int) -> "KernelFamily":
        """Family with no Gaussian members: impulses are never worthwhile."""
        p = tuple(
            tuple(0.0 if a == b else 1.0 / max(n_regimes - 1, 1)
                  for b in range(n_regimes))
            for a in range(n_regimes)
        )
        if n_regimes == 1:
            p = ((0.0,),)
        return cls(p, 0.0, 0.0, has_gaussian=False)

    @property
    def n_regimes(self) -> int:
        return len(self.switch_matrix)

    @property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.switch_matrix, dtype=float)

    def reachable(self, i: RegimeId) -> list[RegimeId]:
        """Regimes with positive switch probability from ``i``."""
        return [j for j, p in enumerate(self.switch_matrix[i]) if p > 0.0]

    def check_mean(self, m: float) -> None:
        if not (self.m_lo <= m <= self.m_hi):
            raise ParameterOutOfBox(
                f"jump mean {m} outside [{self.m_lo}, {self.m_hi}]")


@dataclass(frozen=True)
class ProblemSpec:
    """Full problem instance."""

    n_regimes: int
    dynamics: DynamicsSpec
    profit: ProfitSpec
    cost: CostSpec
    beta: float
    kernel: KernelFamily

    @property
    def regimes(self) -> range:
        return range(self.n_regimes)

    def growth_rate(self, i: RegimeId, x) -> float:
        """``b(i,x) + sigma(i,x)^2 / 2``, the exponential-moment growth rate."""
        b = self.dynamics.b(i, x)
        s = self.dynamics.sigma(i, x)
        return b + 0.5 * s * s


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of ``validate_spec``: empty ``violations`` means valid."""

    violations: tuple[tuple[str, str], ...] = field(default=())

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def codes(self) -> list[str]:
        return [code for code, _ in self.violations]

    def raise_for_violations(self) -> None:
        if self.violations:
            raise SpecValidationError(self.violations)


def validate_spec(spec: ProblemSpec, grid=None) -> ValidationReport:
    """Check every standing condition; return the report of violations.

    ``grid`` (anything with ``x_lo``/``x_hi``) restricts the volatility
    nonnegativity and the integrability checks for affine dynamics to the
    truncation window; constant coefficients are checked globally.
    """
    bad: list[tuple[str, str]] = []
    n = spec.n_regimes

    if spec.beta <= 0.0:
        bad.append(("NonPositiveBeta", f"beta={spec.beta} must be > 0"))

    if spec.dynamics.n_regimes != n or spec.kernel.n_regimes != n:
        bad.append(("RegimeCountMismatch",
                    "dynamics/kernel regime count differs from n_regimes"))
        return ValidationReport(tuple(bad))

    # volatility sign: affine forms checked at the window endpoints
    xs = [0.0]
    if grid is not None:
        xs = [float(grid.x_lo), float(grid.x_hi)]
    for i in spec.regimes:
        s0, s1 = spec.dynamics.volatility[i]
        if s1 == 0.0:
            neg = s0 < 0.0
        else:
            neg = grid is not None and any(s0 + s1 * x < 0.0 for x in xs)
            if grid is None and s0 < 0.0:
                neg = True
        if neg:
            bad.append(("NegativeVolatility",
                        f"sigma({i}, x) < 0 on the state window"))

    # declared Lipschitz/growth constant must dominate the derived one
    derived = spec.dynamics.derived_lipschitz()
    declared = spec.dynamics.lipschitz_bound
    if declared is not None and declared < derived - 1e-12:
        bad.append(("BadLipschitzBound",
                    f"declared K={declared} below derived {derived:.6g}"))

    # switch matrix: row-stochastic with zero diagonal
    p = spec.kernel.matrix
    if p.shape != (n, n):
        bad.append(("BadStochasticMatrix", f"switch matrix shape {p.shape}"))
    else:
        if np.any(p < -_STOCHASTIC_TOL):
            bad.append(("BadStochasticMatrix", "negative switch probability"))
        if np.any(np.abs(p.sum(axis=1) - 1.0) > _STOCHASTIC_TOL):
            bad.append(("BadStochasticMatrix",
                        "switch matrix rows must sum to 1 within 1e-12"))
        if np.any(np.abs(np.diag(p)) > _STOCHASTIC_TOL):
            bad.append(("BadStochasticMatrix",
                        "non-Dirac members need a zero diagonal"))

    if spec.kernel.m_lo > spec.kernel.m_hi:
        bad.append(("EmptyKernelBox",
                    f"m_lo={spec.kernel.m_lo} > m_hi={spec.kernel.m_hi}"))
    if spec.kernel.jump_std <= 0.0:
        bad.append(("NonPositiveJumpStd",
                    f"jump_std={spec.kernel.jump_std} must be > 0"))
    if not spec.kernel.includes_dirac:
        bad.append(("MissingDiracMember",
                    "the Dirac member is structural and cannot be removed"))

    # exponential profit needs the discount to dominate state growth;
    # for affine dynamics the rate is taken at its worst over the window
    if spec.profit.form == "exp_scaled" and spec.beta > 0.0:
        rate = -math.inf
        for i in spec.regimes:
            for x in xs:
                rate = max(rate, spec.growth_rate(i, x))
        if spec.beta <= rate:
            bad.append((
                "IntegrabilityViolation",
                f"exp profit needs beta > max_i(b_i + sigma_i^2/2) "
                f"= {rate:.6g}, got beta={spec.beta}",
            ))

    if spec.profit.form == "arctan" and spec.profit.offset < HALF_PI:
        bad.append(("NegativeProfit",
                    f"arctan profit needs offset >= pi/2, got {spec.profit.offset}"))

    return ValidationReport(tuple(bad))


def require_valid(spec: ProblemSpec, grid=None) -> ProblemSpec:
    """Return the spec unchanged, raising :class:`SpecValidationError` if invalid."""
    validate_spec(spec, grid).raise_for_violations()
    return spec


def eval_profit(spec: ProblemSpec, i: RegimeId, x):
    """Running profit ``f(i, x)``; total on the real line, nonnegative."""
    return spec.profit(i, x)


def eval_cost(spec: ProblemSpec, i: RegimeId, x, j: RegimeId, y):
    """Switching cost ``c(i, x, j, y)``; exactly 0 at ``(j, y) == (i, x)``."""
    return spec.cost(i, x, j, y)


def kernel_density(spec: ProblemSpec, m: float, i: RegimeId, x: float,
                   j: RegimeId):
    """Density in ``y`` of the Gaussian member: ``p[i][j] * N(x+m, s^2)``.

    Integrates to ``p[i][j]`` over the line; identically zero for
    unreachable targets.  ``m`` must lie in the admissible box.
    """
    spec.kernel.check_mean(m)
    weight = float(spec.kernel.matrix[i, j])
    s = spec.kernel.jump_std
    mean = x + m

    def density(y):
        y = np.asarray(y, dtype=float)
        z = (y - mean) / s
        out = weight * np.exp(-0.5 * z * z) / (s * math.sqrt(2.0 * math.pi))
        return float(out) if out.ndim == 0 else out

    return density
