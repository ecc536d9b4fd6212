"""CSV persistence and run manifests.

Every data file starts with two comment lines carrying the tool version,
the problem hash, and the numerical settings of the run that produced it,
followed by a fixed-order header row.  Floats are written with ``repr``
(shortest round-trip), so identical runs produce byte-identical files and
readers recover the exact stored values.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from .model import ProblemSpec
from .qvi import Grid, Region, SolverSettings, ValueFields

VALUE_COLUMNS = ("regime", "x", "rho_plus", "m_star", "rho",
                 "argmax_m", "argmax_j")
REGION_COLUMNS = ("regime", "interval_lo", "interval_hi", "label")
TRACE_COLUMNS = ("episode_id", "n", "tau_n", "from_regime", "from_x",
                 "to_regime", "to_x", "discounted_cost")
EPISODE_COLUMNS = ("episode_id", "gain", "n_impulses", "stopped_reason")
GAIN_COLUMNS = ("strategy", "start_regime", "start_x", "mean", "stderr",
                "n_paths", "horizon", "dt", "tail_bound")
PATH_COLUMNS = ("path_id", "t", "regime", "y", "discounted_profit_so_far")
AUDIT_COLUMNS = ("regime", "x", "kernel_violation", "maximizer_gap",
                 "rule_violation", "rule_stderr", "hitting_gap",
                 "hitting_stderr")


def spec_hash(spec: ProblemSpec, grid: Grid | None = None) -> str:
    """Stable digest of the problem instance (and optionally its grid)."""
    payload = repr(spec)
    if grid is not None:
        payload += "|" + repr(grid)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _open_writer(path: Path, header_meta: dict, columns):
    fh = open(path, "w", newline="")
    meta = " ".join(f"{k}={_fmt(v)}" for k, v in header_meta.items())
    fh.write(f"# tool=techswitch version={__version__} {meta}\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(columns)
    return fh, writer


def write_value_fields(path: str | Path, fields: ValueFields,
                       run_hash: str) -> None:
    grid, st = fields.grid, fields.settings
    meta = {
        "spec_hash": run_hash,
        "x_lo": grid.x_lo, "x_hi": grid.x_hi,
        "n_points": grid.n_points, "dt": grid.dt,
        "tol": st.tol, "max_iter": st.max_iter,
        "n_gh": st.n_gh, "n_gh_jump": st.n_gh_jump,
        "n_scan": st.n_scan, "golden_iters": st.golden_iters,
        "epsilon": st.region_epsilon,
        "iterations": fields.iterations, "residual": fields.residual,
    }
    fh, writer = _open_writer(Path(path), meta, VALUE_COLUMNS)
    with fh:
        xs = grid.points
        for i in range(fields.rho_plus.shape[0]):
            for k in range(grid.n_points):
                writer.writerow([
                    i, _fmt(xs[k]),
                    _fmt(fields.rho_plus[i, k]), _fmt(fields.m_star[i, k]),
                    _fmt(fields.rho[i, k]), _fmt(fields.argmax_m[i, k]),
                    int(fields.argmax_j[i, k]),
                ])


def read_value_fields(path: str | Path) -> ValueFields:
    """Rebuild :class:`ValueFields` from its CSV (baseline not stored)."""
    path = Path(path)
    with open(path, newline="") as fh:
        first = fh.readline()
        meta = dict(tok.split("=", 1) for tok in first.lstrip("# ").split()
                    if "=" in tok)
        reader = csv.DictReader(fh)
        rows = list(reader)
    grid = Grid(float(meta["x_lo"]), float(meta["x_hi"]),
                int(meta["n_points"]), float(meta["dt"]))
    settings = SolverSettings(
        tol=float(meta["tol"]), max_iter=int(meta["max_iter"]),
        n_gh=int(meta["n_gh"]), n_gh_jump=int(meta["n_gh_jump"]),
        n_scan=int(meta["n_scan"]), golden_iters=int(meta["golden_iters"]),
        epsilon=float(meta["epsilon"]),
    )
    n_reg = max(int(r["regime"]) for r in rows) + 1
    shape = (n_reg, grid.n_points)
    arrays = {name: np.empty(shape) for name in
              ("rho_plus", "m_star", "rho", "argmax_m")}
    argmax_j = np.empty(shape, dtype=np.int64)
    counters = [0] * n_reg
    for r in rows:
        i = int(r["regime"])
        k = counters[i]
        counters[i] += 1
        for name in arrays:
            arrays[name][i, k] = float(r[name])
        argmax_j[i, k] = int(r["argmax_j"])
    return ValueFields(grid=grid, settings=settings,
                       rho_plus=arrays["rho_plus"], m_star=arrays["m_star"],
                       rho=arrays["rho"], argmax_m=arrays["argmax_m"],
                       argmax_j=argmax_j,
                       iterations=int(meta["iterations"]),
                       residual=float(meta["residual"]),
                       no_impulse=None)


def write_regions(path: str | Path, region: Region, run_hash: str) -> None:
    meta = {"spec_hash": run_hash, "epsilon": region.epsilon}
    fh, writer = _open_writer(Path(path), meta, REGION_COLUMNS)
    with fh:
        for regime, lo, hi, label in region.labelled():
            writer.writerow([regime, _fmt(lo), _fmt(hi), label])


def write_traces(path: str | Path, traces, run_hash: str) -> None:
    fh, writer = _open_writer(Path(path), {"spec_hash": run_hash},
                              TRACE_COLUMNS)
    with fh:
        for eid, trace in enumerate(traces):
            for n, imp in enumerate(trace.impulses):
                writer.writerow([
                    eid, n, _fmt(imp.tau),
                    imp.from_state[0], _fmt(imp.from_state[1]),
                    imp.to_state[0], _fmt(imp.to_state[1]),
                    _fmt(imp.cost_paid),
                ])


def write_episode_summaries(path: str | Path, traces, run_hash: str) -> None:
    fh, writer = _open_writer(Path(path), {"spec_hash": run_hash},
                              EPISODE_COLUMNS)
    with fh:
        for eid, trace in enumerate(traces):
            writer.writerow([eid, _fmt(trace.gain), trace.n_impulses,
                             trace.stopped_reason])


def write_gain_summary(path: str | Path, estimate, strategy_name: str,
                       start, run_hash: str) -> None:
    fh, writer = _open_writer(Path(path), {"spec_hash": run_hash},
                              GAIN_COLUMNS)
    with fh:
        writer.writerow([
            strategy_name, start[0], _fmt(start[1]), _fmt(estimate.mean),
            _fmt(estimate.stderr), estimate.n_paths, _fmt(estimate.horizon),
            _fmt(estimate.dt), _fmt(estimate.tail_bound),
        ])


def write_impulse_histogram(path: str | Path, estimate, run_hash: str) -> None:
    fh, writer = _open_writer(Path(path), {"spec_hash": run_hash},
                              ("n_impulses", "count"))
    with fh:
        for k, c in estimate.impulse_count_histogram.items():
            writer.writerow([k, c])


def write_path_dump(path: str | Path, traces, spec: ProblemSpec,
                    run_hash: str) -> None:
    """Optional per-step dump of simulated paths (episodes kept segments)."""
    fh, writer = _open_writer(Path(path), {"spec_hash": run_hash},
                              PATH_COLUMNS)
    with fh:
        for pid, trace in enumerate(traces):
            running = 0.0
            for seg in trace.segments:
                cum = _cumulative_profit(seg, spec)
                for k in range(len(seg.times)):
                    writer.writerow([
                        pid, _fmt(seg.global_t0 + seg.times[k]), seg.regime,
                        _fmt(seg.values[k]), _fmt(running + cum[k]),
                    ])
                running += seg.discounted_profit


def _cumulative_profit(seg, spec: ProblemSpec) -> np.ndarray:
    """Trapezoid partial sums of the segment's discounted profit integral."""
    if len(seg.times) < 2:
        return np.zeros(len(seg.times))
    integrand = np.exp(-spec.beta * (seg.global_t0 + seg.times)) \
        * spec.profit(seg.regime, seg.values)
    steps = 0.5 * np.diff(seg.times) * (integrand[1:] + integrand[:-1])
    return np.concatenate([[0.0], np.cumsum(steps)])


def write_audit_rows(path: str | Path, report, run_hash: str) -> None:
    fh, writer = _open_writer(Path(path), {"spec_hash": run_hash,
                                           "tol_c": report.tol_c},
                              AUDIT_COLUMNS)
    with fh:
        for r in report.rows:
            writer.writerow([
                r.regime, _fmt(r.x), _fmt(r.kernel_violation),
                _fmt(r.maximizer_gap), _fmt(r.rule_violation),
                _fmt(r.rule_stderr), _fmt(r.hitting_gap),
                _fmt(r.hitting_stderr),
            ])


def write_manifest(path: str | Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_fmt)
        fh.write("\n")


def export_long_format(path: str | Path, fields: ValueFields,
                       run_hash: str) -> None:
    """Plot-ready long-format table: one (regime, x, series, value) per row."""
    fh, writer = _open_writer(Path(path), {"spec_hash": run_hash},
                              ("regime", "x", "series", "value"))
    with fh:
        xs = fields.grid.points
        series = (("rho_plus", fields.rho_plus), ("m_star", fields.m_star),
                  ("rho", fields.rho), ("argmax_m", fields.argmax_m))
        for i in range(fields.rho_plus.shape[0]):
            for name, arr in series:
                for k in range(fields.grid.n_points):
                    writer.writerow([i, _fmt(xs[k]), name, _fmt(arr[i, k])])
