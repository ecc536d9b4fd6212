import numpy as np
import pytest

import techswitch as ts
from techswitch import io as tsio
from techswitch.config import ConfigError, apply_overrides, load_config

MINIMAL_INI = """
[regimes]
count = 2
[dynamics]
b.0 = 0.1
b.1 = 0.15
sigma.0 = 0.2
sigma.1 = 0.3
[profit]
form = arctan
[cost]
form = inverse_quadratic
[kernel]
p.0 = 0 1
p.1 = 1 0
m_lo = -1.0
m_hi = 1.0
[discount]
beta = 0.5
[grid]
x_lo = -3.0
x_hi = 3.0
n = 121
dt = 0.02
[solve]
tol = 1e-6
[mc]
n_paths = 400
horizon = 12.0
seed = 7
"""


@pytest.fixture()
def config_file(tmp_path):
    path = tmp_path / "problem.ini"
    path.write_text(MINIMAL_INI)
    return path


class TestConfig:
    def test_roundtrip_fields(self, config_file):
        cfg = load_config(config_file)
        assert cfg.spec.n_regimes == 2
        assert cfg.spec.dynamics.drift == ((0.1, 0.0), (0.15, 0.0))
        assert cfg.spec.profit.form == "arctan"
        assert cfg.spec.kernel.switch_matrix == ((0.0, 1.0), (1.0, 0.0))
        assert cfg.grid.n_points == 121
        assert cfg.settings.tol == 1e-6
        assert cfg.mc.seed == 7
        assert ts.validate_spec(cfg.spec, cfg.grid).ok

    def test_affine_coefficients(self, tmp_path):
        text = MINIMAL_INI.replace("b.0 = 0.1", "b.0 = 0.1 -0.05")
        path = tmp_path / "affine.ini"
        path.write_text(text)
        cfg = load_config(path)
        assert cfg.spec.dynamics.drift[0] == (0.1, -0.05)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "absent.ini")

    def test_bad_value_reported(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text(MINIMAL_INI.replace("beta = 0.5", "beta = much"))
        with pytest.raises(ConfigError):
            load_config(path)

    def test_overrides(self, config_file):
        cfg = load_config(config_file)
        out = apply_overrides(cfg, tol=1e-9, n_paths=99, dt=0.01,
                              strategy="cadence", seed=None)
        assert out.settings.tol == 1e-9
        assert out.mc.n_paths == 99
        assert out.grid.dt == 0.01
        assert out.simulate.strategy == "cadence"
        assert out.mc.seed == 7  # untouched


class TestIO:
    def test_value_fields_roundtrip_exact(self, small_solution, tmp_path):
        fields, _ = small_solution
        path = tmp_path / "value_fields.csv"
        tsio.write_value_fields(path, fields, "deadbeef")
        back = tsio.read_value_fields(path)
        np.testing.assert_array_equal(back.rho_plus, fields.rho_plus)
        np.testing.assert_array_equal(back.m_star, fields.m_star)
        np.testing.assert_array_equal(back.rho, fields.rho)
        np.testing.assert_array_equal(back.argmax_m, fields.argmax_m)
        np.testing.assert_array_equal(back.argmax_j, fields.argmax_j)
        assert back.grid == fields.grid
        assert back.settings.tol == fields.settings.tol
        assert back.iterations == fields.iterations
        assert back.residual == fields.residual

    def test_header_carries_version_and_hash(self, small_solution, tmp_path):
        fields, _ = small_solution
        path = tmp_path / "value_fields.csv"
        tsio.write_value_fields(path, fields, "cafe0123")
        first = path.read_text().splitlines()[0]
        assert first.startswith("# tool=techswitch version=")
        assert "spec_hash=cafe0123" in first

    def test_spec_hash_stability(self, bounded_spec, small_grid):
        a = tsio.spec_hash(bounded_spec, small_grid)
        b = tsio.spec_hash(bounded_spec, small_grid)
        assert a == b
        other = ts.ProblemSpec(
            bounded_spec.n_regimes, bounded_spec.dynamics,
            bounded_spec.profit, bounded_spec.cost, 0.6,
            bounded_spec.kernel)
        assert tsio.spec_hash(other, small_grid) != a

    def test_regions_rows(self, small_solution, tmp_path):
        _, region = small_solution
        path = tmp_path / "regions.csv"
        tsio.write_regions(path, region, "hash")
        lines = path.read_text().splitlines()
        assert lines[1] == "regime,interval_lo,interval_hi,label"
        labels = {row.split(",")[-1] for row in lines[2:]}
        assert labels <= {"I", "C"}

    def test_path_dump_cumulative_profit(self, bounded_spec, tmp_path):
        trace = ts.run_episode(ts.FixedCadence(1.0, 0.3), (0, 0.0), 3.0,
                               0.05, ts.RngStream(2, 0), bounded_spec,
                               keep_segments=True)
        path = tmp_path / "paths.csv"
        tsio.write_path_dump(path, [trace], bounded_spec, "hash")
        rows = path.read_text().splitlines()[2:]
        last = rows[-1].split(",")
        assert float(last[4]) == pytest.approx(trace.total_profit, abs=1e-12)
        times = [float(r.split(",")[1]) for r in rows]
        assert times == sorted(times)
