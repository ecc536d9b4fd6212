"""Command-line entry point.

    techswitch solve    -c problem.ini -o outdir [overrides]
    techswitch simulate -c problem.ini -o outdir [--strategy ...] [--fields dir]
    techswitch verify   -c problem.ini -o outdir [--fields dir]
    techswitch regions  --fields dir -o outdir [--epsilon EPS]
    techswitch export   --fields dir -o outdir

Exit codes: 0 success, 1 verification failure, 2 usage or configuration
error, 3 numerical failure (no convergence, domain escape).  Errors print
one JSON record to stderr.  Identical configs and seeds give byte-identical
CSV outputs; IMPULSE_THREADS changes scheduling only, never numbers.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, apply_overrides, load_config
from .errors import (GridEscape, InsufficientPaths, MissingFields,
                     NoConvergence, SpecValidationError, TechSwitchError,
                     UnboundedTailBound, UnsupportedDynamics)
from .model import require_valid
from .montecarlo import audit_optimality, estimate_gain, f_series
from .qvi import extract_regions, solve, structural_checks
from .strategy import FixedCadence, NoImpulse, OptimalHitting
from . import io as tsio

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="techswitch",
        description="optimal technology switching: solve, simulate, verify")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("-c", "--config", required=True,
                           help="problem configuration file")
        p.add_argument("-o", "--out", required=True, help="output directory")

    p_solve = sub.add_parser("solve", help="solve the value fields")
    common(p_solve)
    p_solve.add_argument("--tol", type=float)
    p_solve.add_argument("--max-iter", dest="max_iter", type=int)
    p_solve.add_argument("--epsilon", type=float)
    p_solve.add_argument("--grid-lo", dest="x_lo", type=float)
    p_solve.add_argument("--grid-hi", dest="x_hi", type=float)
    p_solve.add_argument("--grid-n", dest="n_points", type=int)
    p_solve.add_argument("--dt", type=float)

    p_sim = sub.add_parser("simulate", help="run strategy episodes")
    common(p_sim)
    p_sim.add_argument("--strategy",
                       choices=["no_impulse", "cadence", "optimal"])
    p_sim.add_argument("--fields", help="directory of a prior solve "
                       "(required for the optimal strategy)")
    p_sim.add_argument("--cadence-t0", dest="cadence_t0", type=float)
    p_sim.add_argument("--cadence-m", dest="cadence_m", type=float)
    p_sim.add_argument("--n-paths", dest="n_paths", type=int)
    p_sim.add_argument("--horizon", type=float)
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--n-max-impulses", dest="n_max_impulses", type=int)
    p_sim.add_argument("--dump-paths", dest="dump_paths", type=int, default=0,
                       help="dump per-step paths for the first N episodes")

    p_ver = sub.add_parser("verify", help="run the audit and invariant suites")
    common(p_ver)
    p_ver.add_argument("--fields", help="verify stored fields instead of re-solving")
    p_ver.add_argument("--seed", type=int)

    p_reg = sub.add_parser("regions", help="re-extract regions from stored fields")
    common(p_reg, needs_config=False)
    p_reg.add_argument("--fields", required=True)
    p_reg.add_argument("--epsilon", type=float)

    p_exp = sub.add_parser("export", help="plot-ready long-format export")
    common(p_exp, needs_config=False)
    p_exp.add_argument("--fields", required=True)
    return parser


def _error_record(code: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": code, "message": message}) + "\n")


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    cfg = apply_overrides(cfg, **{
        k: getattr(args, k, None)
        for k in ("tol", "max_iter", "epsilon", "x_lo", "x_hi", "n_points",
                  "dt", "n_paths", "horizon", "seed", "n_max_impulses",
                  "strategy", "cadence_t0", "cadence_m")
    })
    require_valid(cfg.spec, cfg.grid)
    return cfg


def _fields_path(fields_dir: str) -> Path:
    p = Path(fields_dir)
    return p if p.is_file() else p / "value_fields.csv"


def _manifest(out: Path, command: str, run_hash: str, started: float,
              extra: dict) -> None:
    payload = {
        "command": command,
        "tool_version": __version__,
        "spec_hash": run_hash,
        "wall_time_s": time.time() - started,
    }
    payload.update(extra)
    tsio.write_manifest(out / "run_manifest.json", payload)


def cmd_solve(args) -> int:
    started = time.time()
    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run_hash = tsio.spec_hash(cfg.spec, cfg.grid)
    fields = solve(cfg.spec, cfg.grid, cfg.settings)
    region = extract_regions(fields)
    tsio.write_value_fields(out / "value_fields.csv", fields, run_hash)
    tsio.write_regions(out / "regions.csv", region, run_hash)
    _manifest(out, "solve", run_hash, started, {
        "requested_grid": vars_of(cfg.grid),
        "solved_grid": vars_of(fields.grid),
        "tol": cfg.settings.tol,
        "max_iter": cfg.settings.max_iter,
        "epsilon": fields.settings.region_epsilon,
        "iterations": fields.iterations,
        "residual": fields.residual,
    })
    print(f"solve: {fields.iterations} iterations, "
          f"residual {fields.residual:.3e} -> {out}")
    return EXIT_OK


def vars_of(grid) -> dict:
    return {"x_lo": grid.x_lo, "x_hi": grid.x_hi,
            "n_points": grid.n_points, "dt": grid.dt}


def _build_strategy(cfg: RunConfig, args):
    name = cfg.simulate.strategy
    if name == "no_impulse":
        return NoImpulse(), name
    if name == "cadence":
        return FixedCadence(cfg.simulate.cadence_t0, cfg.simulate.cadence_m,
                            max_impulses=cfg.mc.n_max_impulses), name
    if name == "optimal":
        fields_dir = getattr(args, "fields", None)
        if not fields_dir:
            raise MissingFields("optimal strategy needs --fields from a solve")
        fields = tsio.read_value_fields(_fields_path(fields_dir))
        return OptimalHitting.from_fields(
            fields, max_impulses=cfg.mc.n_max_impulses), name
    raise ConfigError(f"unknown strategy {name!r}")


def cmd_simulate(args) -> int:
    started = time.time()
    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run_hash = tsio.spec_hash(cfg.spec, cfg.grid)
    strategy, name = _build_strategy(cfg, args)
    start = (0, 0.0)
    est, traces = estimate_gain(strategy, start, cfg.mc.n_paths,
                                cfg.mc.horizon, cfg.grid.dt, cfg.mc.seed,
                                cfg.spec, keep_traces=True)
    tsio.write_traces(out / "traces.csv", traces, run_hash)
    tsio.write_episode_summaries(out / "episodes.csv", traces, run_hash)
    tsio.write_gain_summary(out / "gain_summary.csv", est, name, start,
                            run_hash)
    tsio.write_impulse_histogram(out / "impulse_histogram.csv", est, run_hash)
    if args.dump_paths > 0:
        from .diffusion import RngStream
        from .strategy import run_episode
        dumped = [run_episode(strategy, start, cfg.mc.horizon, cfg.grid.dt,
                              RngStream(cfg.mc.seed, pid), cfg.spec,
                              keep_segments=True)
                  for pid in range(min(args.dump_paths, cfg.mc.n_paths))]
        tsio.write_path_dump(out / "paths.csv", dumped, cfg.spec, run_hash)
    _manifest(out, "simulate", run_hash, started, {
        "strategy": name, "n_paths": est.n_paths, "horizon": est.horizon,
        "dt": est.dt, "seed": cfg.mc.seed, "mean": est.mean,
        "stderr": est.stderr, "tail_bound": est.tail_bound,
    })
    print(f"simulate[{name}]: mean gain {est.mean:.6f} "
          f"+/- {est.stderr:.6f} ({est.n_paths} paths) -> {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    started = time.time()
    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run_hash = tsio.spec_hash(cfg.spec, cfg.grid)
    if args.fields:
        fields = tsio.read_value_fields(_fields_path(args.fields))
    else:
        fields = solve(cfg.spec, cfg.grid, cfg.settings)
    if fields.no_impulse is None:
        from .qvi import no_impulse_value
        fields.no_impulse = no_impulse_value(
            cfg.spec, fields.grid, tol=min(fields.settings.tol, 1e-9))

    checks: list[tuple[str, bool, str]] = []
    tol = fields.settings.tol
    tol_c = 10.0 * tol
    stats = structural_checks(fields, cfg.spec)
    checks.append(("rho equals max(rho_plus, m_star) exactly",
                   stats["max_identity_gap"] == 0.0,
                   f"gap={stats['max_identity_gap']:.3e}"))
    checks.append(("rho_plus dominates the no-impulse value",
                   stats["dominance_gap"] >= -tol,
                   f"min diff={stats['dominance_gap']:.3e}"))
    checks.append(("rho_plus strictly positive",
                   stats["min_rho_plus"] > 0.0,
                   f"min={stats['min_rho_plus']:.3e}"))
    checks.append(("complementarity residual within tolerance",
                   stats["complementarity_abs"] <= tol_c
                   and stats["min_continuation_diff"] >= -tol_c
                   and stats["min_intervention_diff"] >= -tol_c,
                   f"|min(a,b)|={stats['complementarity_abs']:.3e}"))
    checks.append(("Dirac member reproduces rho_plus exactly",
                   stats["dirac_gap"] == 0.0,
                   f"gap={stats['dirac_gap']:.3e}"))
    checks.append(("impulse/continuation regions tile the grid",
                   bool(stats["partition_covers_grid"]), ""))

    seed = cfg.mc.seed if args.seed is None else args.seed
    report = audit_optimality(fields, cfg.spec, cfg.verify.n_states, seed,
                              n_paths=cfg.verify.n_paths)
    tsio.write_audit_rows(out / "audit.csv", report, run_hash)
    checks.append(("no sampled kernel beats the stored optimum",
                   (not report.kernels_checked)
                   or report.max_kernel_violation <= report.tol_c,
                   f"max violation={report.max_kernel_violation:.3e}"))
    checks.append(("stored maximizer attains the optimum",
                   (not report.kernels_checked)
                   or report.max_maximizer_gap <= report.tol_c,
                   f"max gap={report.max_maximizer_gap:.3e}"))
    checks.append(("no stopping rule beats the value of waiting",
                   report.max_rule_excess <= report.tol_c,
                   f"max excess={report.max_rule_excess:.3e}"))
    checks.append(("first-hitting rule attains the value of waiting",
                   report.max_hitting_excess <= report.tol_c,
                   f"max excess={report.max_hitting_excess:.3e}"))

    series_note = ""
    if cfg.spec.dynamics.is_constant() and cfg.spec.kernel.has_gaussian:
        m = min(max(cfg.verify.cadence_m, cfg.spec.kernel.m_lo),
                cfg.spec.kernel.m_hi)
        try:
            series = f_series(cfg.spec, cfg.verify.cadence_t0, m,
                              cfg.verify.series_terms, start=(0, 0.0))
            cadence = FixedCadence(cfg.verify.cadence_t0, m,
                                   max_impulses=cfg.mc.n_max_impulses)
            est = estimate_gain(cadence, (0, 0.0), cfg.verify.n_paths,
                                cfg.mc.horizon, cfg.grid.dt, seed, cfg.spec)
            budget = 3.0 * est.stderr + series.tail_bound + est.tail_bound
            gap = abs(est.mean - series.partial_sum)
            checks.append((f"cadence series ({series.tail_kind} tail) "
                           f"matches Monte Carlo",
                           gap <= budget, f"gap={gap:.4f} budget={budget:.4f}"))
            if series.tail_kind == "geometric":
                q = series.cycle_discount
                fbound = cfg.spec.profit.sup_value \
                    * q ** np.arange(series.order + 1)
                cbound = cfg.spec.cost.sup_value \
                    * q ** np.arange(1, series.order + 1)
                ok = bool(np.all(np.abs(series.profit_terms) <= fbound + 1e-12)
                          and np.all(np.abs(series.cost_terms) <= cbound + 1e-12))
                checks.append(("series terms under the geometric majorants",
                               ok, ""))
            else:
                series_note = (f"growth-bound tail variant: "
                               f"{series.tail_bound:.3e}")
        except UnboundedTailBound as exc:
            series_note = f"series tail unbounded for this instance: {exc}"
        except UnsupportedDynamics:
            pass

    failed = [name for name, ok, _ in checks if not ok]
    lines = []
    for name, ok, detail in checks:
        mark = "PASS" if ok else "FAIL"
        lines.append(f"[{mark}] {name}" + (f" ({detail})" if detail else ""))
    if series_note:
        lines.append(f"[NOTE] {series_note}")
    text = "\n".join(lines) + "\n"
    (out / "verify_report.txt").write_text(text)
    sys.stdout.write(text)
    _manifest(out, "verify", run_hash, started, {
        "n_checks": len(checks), "failed": failed,
    })
    return EXIT_OK if not failed else EXIT_VERIFY_FAILED


def cmd_regions(args) -> int:
    started = time.time()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fields = tsio.read_value_fields(_fields_path(args.fields))
    region = extract_regions(fields, args.epsilon)
    run_hash = f"fields:{Path(args.fields).name}"
    tsio.write_regions(out / "regions.csv", region, run_hash)
    _manifest(out, "regions", run_hash, started,
              {"epsilon": region.epsilon})
    print(f"regions: epsilon={region.epsilon:g} -> {out}")
    return EXIT_OK


def cmd_export(args) -> int:
    started = time.time()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fields = tsio.read_value_fields(_fields_path(args.fields))
    run_hash = f"fields:{Path(args.fields).name}"
    tsio.export_long_format(out / "value_long.csv", fields, run_hash)
    _manifest(out, "export", run_hash, started, {})
    print(f"export -> {out}")
    return EXIT_OK


_COMMANDS = {
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "regions": cmd_regions,
    "export": cmd_export,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        _error_record("FileNotFound", str(exc))
        return EXIT_USAGE
    except (ConfigError, SpecValidationError, MissingFields,
            InsufficientPaths, ValueError) as exc:
        _error_record(type(exc).__name__, str(exc))
        return EXIT_USAGE
    except (NoConvergence, GridEscape) as exc:
        _error_record(type(exc).__name__, str(exc))
        return EXIT_NUMERICAL
    except TechSwitchError as exc:
        _error_record(type(exc).__name__, str(exc))
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
