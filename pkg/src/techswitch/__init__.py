"""Optimal technology switching under regime-switching log-value dynamics.

Value fields for the impulse-control problem are solved on a grid, the
impulse/continuation regions extracted, and strategies (never impulse,
fixed cadence, hitting-time) executed and audited by Monte Carlo.
"""

__version__ = "0.1.0"

from .diffusion import (NormalBuffer, PathSegment, RngStream, discount_weight,
                        euler_step, simulate_segment)
from .errors import (GridEscape, InsufficientPaths, MissingFields,
                     NoConvergence, ParameterOutOfBox, SpecValidationError,
                     StateOutOfGrid, TechSwitchError, UnboundedTailBound,
                     UnreachableRegime, UnsupportedDynamics)
from .model import (CostSpec, DynamicsSpec, KernelFamily, ProblemSpec,
                    ProfitSpec, RegimeId, eval_cost, eval_profit,
                    kernel_density, require_valid, validate_spec)
from .montecarlo import (CadenceSeries, GainEstimate, audit_optimality,
                         estimate_gain, f_series, horizon_tail_bound)
from .qvi import (Grid, Region, SolverSettings, TransitionTable, ValueFields,
                  bellman_sweep, extract_regions, intervention_value,
                  kernel_integral, no_impulse_value, solve,
                  structural_checks)
from .strategy import (FixedCadence, Impulse, NoImpulse, OptimalHitting,
                       Strategy, StrategyTrace, apply_impulse, next_action,
                       run_episode)

__all__ = [name for name in dir() if not name.startswith("_")]
