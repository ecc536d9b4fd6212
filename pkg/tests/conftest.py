import pytest

import techswitch as ts


@pytest.fixture(scope="session")
def bounded_spec():
    """Two-regime switching instance with bounded profit and cost."""
    return ts.ProblemSpec(
        n_regimes=2,
        dynamics=ts.DynamicsSpec.constant([0.1, 0.15], [0.2, 0.3]),
        profit=ts.ProfitSpec("arctan"),
        cost=ts.CostSpec("inverse_quadratic"),
        beta=0.5,
        kernel=ts.KernelFamily.swap(-1.0, 1.0),
    )


@pytest.fixture(scope="session")
def exp_spec():
    """Exponential-profit instance (analytic no-impulse value available)."""
    return ts.ProblemSpec(
        n_regimes=2,
        dynamics=ts.DynamicsSpec.constant([0.1, 0.15], [0.2, 0.3]),
        profit=ts.ProfitSpec("exp_scaled", eta=1.0),
        cost=ts.CostSpec("exp_mu", mu=0.5),
        beta=0.5,
        kernel=ts.KernelFamily.dirac_only(2),
    )


@pytest.fixture(scope="session")
def small_grid():
    return ts.Grid(-3.0, 3.0, 151, 0.02)


@pytest.fixture(scope="session")
def small_solution(bounded_spec, small_grid):
    """One modest solve shared by the unit tests (seconds, not minutes)."""
    settings = ts.SolverSettings(tol=1e-6, max_iter=5000)
    fields = ts.solve(bounded_spec, small_grid, settings)
    region = ts.extract_regions(fields)
    return fields, region
