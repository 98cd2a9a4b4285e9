"""Experiment runner: `graddiv-ns run|presets|check`.

Emits results.csv (17 significant digits, fixed column order), rates.csv
where applicable, and one self-contained SVG per plotted figure.
Re-running a configuration reproduces results.csv byte-identically except
for the wall_time_s column, which is documented as nondeterministic.
"""

import argparse
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import checks, svgplot
from .assembly import assemble_mass
from .mesh import unit_square_mesh
from .solver import NonlinearConfig, SolverError, estimate_inf_sup, stokes_projection
from .spaces import mixed_pair
from .timestepping import SchemeConfig, run_transient
from .verification import (
    ErrorAccumulator,
    ErrorReport,
    RunMetadata,
    eval_exact_velocity,
    eval_fe_velocity,
    norm_contexts,
    paper_solution,
    velocity_error_sq,
)

EXPERIMENTS = (
    "nu_sweep",
    "refinement",
    "temporal_order",
    "inf_sup_scan",
    "stokes_projection_scan",
    "single_run",
)

RESULT_COLUMNS = (
    "level", "h_max", "nu", "mu", "dt", "scheme",
    "final_velocity_l2", "visc_grad_seminorm", "divergence_seminorm",
    "velocity_aggregate", "pressure_l2l2",
    "avg_nonlinear_iters", "max_nonlinear_iters", "wall_time_s",
)

PRESETS = {
    "nu-sweep-level6": (
        "--experiment nu_sweep --pair taylor_hood --levels 6 --dt 0.0625 "
        "--nu 1,1e-2,1e-4,1e-6 --mu 0.25 --scheme cn --t-end 5"
    ),
    "refinement-dt0.002": (
        "--experiment refinement --pair taylor_hood --levels 3..7 --dt 0.002 "
        "--nu 1e-4 --mu 0.25 --scheme cn --t-end 5"
    ),
    "refinement-dt0.001": (
        "--experiment refinement --pair taylor_hood --levels 3..7 --dt 0.001 "
        "--nu 1e-4 --mu 0.25 --scheme cn --t-end 5"
    ),
}


@dataclass
class ExperimentConfig:
    experiment: str
    pair: str = "taylor_hood"
    levels: list = field(default_factory=list)
    nu_values: list = field(default_factory=lambda: [1e-4])
    mu: float = 0.25
    dt_values: list = field(default_factory=lambda: [0.0625])
    t_end: float = 5.0
    scheme: str = "cn"
    initial: str = "interpolant"
    method: str = "picard"
    tol: float = 1e-10
    max_iter: int = 50
    output_dir: str = "."

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if not self.levels:
            raise ValueError("level list must not be empty")
        if not self.nu_values or any(nu <= 0 for nu in self.nu_values):
            raise ValueError("nu values must be positive")
        if self.experiment not in ("inf_sup_scan", "stokes_projection_scan"):
            for dt in self.dt_values:
                n = round(self.t_end / dt)
                if n < 1 or abs(n * dt - self.t_end) > 1e-12 * max(1.0, self.t_end):
                    raise ValueError(f"dt {dt} does not divide t_end {self.t_end}")


def _parse_levels(text):
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(tok) for tok in text.split(",") if tok]


def _parse_floats(text):
    return [float(tok) for tok in text.split(",") if tok]


def _g17(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (int,)) or (isinstance(value, float) and value.is_integer()
                                     and abs(value) < 1e15):
        return f"{value:.17g}"
    return f"{value:.17g}"


def _write_csv(path, header, rows):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_g17(v) for v in row) + "\n")


def _thread_count(n_rows):
    env = os.environ.get("GRADDIV_NS_THREADS")
    cap = int(env) if env else min(4, os.cpu_count() or 1)
    return max(1, min(cap, n_rows))


def _scheme_cfg(cfg, nu, dt):
    return SchemeConfig(
        scheme=cfg.scheme,
        dt=dt,
        t_end=cfg.t_end,
        nu=nu,
        mu=cfg.mu,
        initial=cfg.initial,
        nonlinear=NonlinearConfig(method=cfg.method, tol=cfg.tol, max_iter=cfg.max_iter),
    )


def transient_report(cfg, mixed, level, nu, dt, exact=None):
    """One full run reduced to an ErrorReport (used by every sweep row)."""
    exact = exact or paper_solution()
    scheme_cfg = _scheme_cfg(cfg, nu, dt)
    acc = ErrorAccumulator(mixed, exact, scheme_cfg)
    start = time.perf_counter()
    traj = run_transient(mixed, exact, scheme_cfg, observer=acc)
    wall = time.perf_counter() - start
    iters = traj.iteration_counts
    meta = RunMetadata(
        level=level, nu=nu, mu=cfg.mu, dt=dt, scheme=cfg.scheme,
        pair_tag=mixed.pair_tag, h_max=mixed.velocity.mesh.h_max,
        avg_nonlinear_iters=sum(iters) / len(iters), max_nonlinear_iters=max(iters),
        wall_time_s=wall,
    )
    return acc.report(meta)


def _report_row(r):
    m = r.metadata
    return (
        m.level, m.h_max, m.nu, m.mu, m.dt, m.scheme,
        r.final_velocity_l2, r.visc_grad_seminorm, r.divergence_seminorm,
        r.velocity_aggregate, r.pressure_l2l2,
        m.avg_nonlinear_iters, m.max_nonlinear_iters, round(m.wall_time_s, 3),
    )


def _run_rows(cfg, params, outdir):
    """Dispatch (level, nu, dt) rows to a worker pool; flush partial results
    and re-raise with the failing row identified on error."""
    meshes = {lvl: unit_square_mesh(lvl) for lvl in sorted(set(p[0] for p in params))}
    spaces = {lvl: mixed_pair(mesh, cfg.pair) for lvl, mesh in meshes.items()}
    exact = paper_solution()

    def job(param):
        level, nu, dt = param
        return transient_report(cfg, spaces[level], level, nu, dt, exact=exact)

    reports = []
    threads = _thread_count(len(params))
    try:
        if threads == 1:
            for param in params:
                reports.append(job(param))
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                for report in pool.map(job, params):
                    reports.append(report)
    except Exception as exc:
        _write_csv(outdir / "results.csv", RESULT_COLUMNS,
                   [_report_row(r) for r in reports])
        failed = params[len(reports)]
        raise SolverError(
            f"row (level={failed[0]}, nu={failed[1]}, dt={failed[2]}) failed: {exc}"
        ) from exc
    _write_csv(outdir / "results.csv", RESULT_COLUMNS, [_report_row(r) for r in reports])
    return reports


def _orders_between(reports, key_fn, columns=ErrorReport.ERROR_COLUMNS):
    rows = []
    for coarse, fine in zip(reports, reports[1:]):
        ratio = key_fn(coarse) / key_fn(fine)
        row = [key_fn(coarse), key_fn(fine)]
        for col in columns:
            ec, ef = getattr(coarse, col), getattr(fine, col)
            row.append(math.log(ec / ef) / math.log(ratio) if ec > 0 and ef > 0
                       else float("nan"))
        rows.append(row)
    return rows


def _plot_columns(reports, xs, xlabel, title, ref_slope=None):
    series = []
    for col in ErrorReport.ERROR_COLUMNS:
        ys = [getattr(r, col) for r in reports]
        if min(ys) > 0:
            series.append((col, xs, ys))
    return svgplot.log_log_plot(series, xlabel, "error", title, ref_slope=ref_slope)


def run_experiment(cfg):
    cfg.validate()
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)

    if cfg.experiment == "inf_sup_scan":
        rows = []
        for level in cfg.levels:
            est = estimate_inf_sup(mixed_pair(unit_square_mesh(level), cfg.pair))
            rows.append((est.level, est.pair_tag, est.beta_h))
        _write_csv(outdir / "results.csv", ("level", "pair", "beta_h"), rows)
        svg = svgplot.log_log_plot(
            [("beta_h", [2.0**lvl for lvl, _, _ in rows], [r[2] for r in rows])],
            "cells per side", "inf-sup constant", "discrete inf-sup stability")
        (outdir / "inf_sup.svg").write_text(svg)
        return

    if cfg.experiment == "stokes_projection_scan":
        exact = paper_solution()
        rows = []
        for level in cfg.levels:
            mixed = mixed_pair(unit_square_mesh(level), cfg.pair)
            vel_ctx, pres_ctx = norm_contexts(mixed)
            for nu in cfg.nu_values:
                s_h, l_h = stokes_projection(exact, 0.0, mixed, nu)
                vals, grads = eval_fe_velocity(s_h, vel_ctx)
                evals, egrads = eval_exact_velocity(exact, 0.0, vel_ctx)
                l2, h1, div = velocity_error_sq(vals, grads, evals, egrads, vel_ctx)
                mass_p = assemble_mass(mixed.pressure)
                lh_l2 = math.sqrt(float(l_h.coeffs @ (mass_p @ l_h.coeffs)))
                rows.append((level, mixed.velocity.mesh.h_max, nu,
                             math.sqrt(l2), math.sqrt(h1), math.sqrt(div), lh_l2))
        _write_csv(outdir / "results.csv",
                   ("level", "h_max", "nu", "err_u_l2", "err_u_h1semi", "div_s_h", "l_h_l2"),
                   rows)
        by_nu = {}
        for row in rows:
            by_nu.setdefault(row[2], []).append(row)
        series = [(f"nu={nu:g}", [r[1] for r in rs], [r[3] for r in rs])
                  for nu, rs in by_nu.items() if len(rs) >= 2]
        if series:
            (outdir / "stokes_projection.svg").write_text(
                svgplot.log_log_plot(series, "h", "|u - s_h|_0",
                                     "Stokes projection accuracy", ref_slope=3))
        return

    if cfg.experiment == "single_run":
        params = [(cfg.levels[0], cfg.nu_values[0], cfg.dt_values[0])]
        _run_rows(cfg, params, outdir)
        return

    if cfg.experiment == "nu_sweep":
        level = cfg.levels[0]
        params = [(level, nu, cfg.dt_values[0]) for nu in cfg.nu_values]
        reports = _run_rows(cfg, params, outdir)
        svg = _plot_columns(reports, [r.metadata.nu for r in reports], "nu",
                            f"errors across nu (level {level}, dt {cfg.dt_values[0]:g})")
        (outdir / "nu_sweep.svg").write_text(svg)
        return

    if cfg.experiment == "refinement":
        rate_rows = []
        for dt in cfg.dt_values:
            params = [(level, cfg.nu_values[0], dt) for level in cfg.levels]
            reports = _run_rows(cfg, params, outdir)
            rows = _orders_between(reports, lambda r: r.metadata.h_max)
            rate_rows += [[dt] + row for row in rows]
            svg = _plot_columns(reports, [r.metadata.h_max for r in reports], "h",
                                f"spatial convergence (dt {dt:g})", ref_slope=2)
            (outdir / f"refinement_dt{dt:g}.svg").write_text(svg)
        _write_csv(outdir / "rates.csv",
                   ("dt", "h_coarse", "h_fine") +
                   tuple(f"{c}_order" for c in ErrorReport.ERROR_COLUMNS),
                   rate_rows)
        return

    if cfg.experiment == "temporal_order":
        level = cfg.levels[0]
        params = [(level, cfg.nu_values[0], dt) for dt in cfg.dt_values]
        reports = _run_rows(cfg, params, outdir)
        rate_rows = _orders_between(reports, lambda r: r.metadata.dt)
        _write_csv(outdir / "rates.csv",
                   ("dt_coarse", "dt_fine") +
                   tuple(f"{c}_order" for c in ErrorReport.ERROR_COLUMNS),
                   rate_rows)
        svg = _plot_columns(reports, [r.metadata.dt for r in reports], "dt",
                            f"temporal convergence ({cfg.scheme}, level {level})",
                            ref_slope=1 if cfg.scheme == "be" else 2)
        (outdir / "temporal_order.svg").write_text(svg)
        return


def _read_config_file(path):
    values = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = val
    return values


def _build_config(args):
    raw = {}
    if args.config:
        raw.update(_read_config_file(args.config))
    for key in ("experiment", "pair", "levels", "nu", "mu", "dt", "t_end",
                "scheme", "initial", "method", "tol", "max_iter", "output_dir"):
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = val
    if "experiment" not in raw:
        raise ValueError("--experiment is required")
    cfg = ExperimentConfig(experiment=str(raw["experiment"]))
    cfg.pair = str(raw.get("pair", cfg.pair))
    if "levels" in raw:
        cfg.levels = _parse_levels(str(raw["levels"]))
    if "nu" in raw:
        cfg.nu_values = _parse_floats(str(raw["nu"]))
    if "mu" in raw:
        cfg.mu = float(raw["mu"])
    if "dt" in raw:
        cfg.dt_values = _parse_floats(str(raw["dt"]))
    if "t_end" in raw:
        cfg.t_end = float(raw["t_end"])
    cfg.scheme = str(raw.get("scheme", cfg.scheme))
    cfg.initial = str(raw.get("initial", cfg.initial))
    cfg.method = str(raw.get("method", cfg.method))
    if "tol" in raw:
        cfg.tol = float(raw["tol"])
    if "max_iter" in raw:
        cfg.max_iter = int(raw["max_iter"])
    cfg.output_dir = str(raw.get("output_dir", cfg.output_dir))
    return cfg


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="graddiv-ns",
        description="grad-div stabilized Navier-Stokes experiment runner",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment")
    run_p.add_argument("--experiment", choices=EXPERIMENTS)
    run_p.add_argument("--pair", choices=("taylor_hood", "mini"))
    run_p.add_argument("--levels", "--level", dest="levels",
                       help="e.g. 5 or 3,4,5 or 3..6")
    run_p.add_argument("--nu", help="comma-separated viscosities")
    run_p.add_argument("--mu", type=float, help="grad-div parameter")
    run_p.add_argument("--dt", help="comma-separated step sizes")
    run_p.add_argument("--t-end", dest="t_end", type=float)
    run_p.add_argument("--scheme", choices=("be", "cn"))
    run_p.add_argument("--initial", choices=("interpolant", "stokes"))
    run_p.add_argument("--method", choices=("picard", "newton"))
    run_p.add_argument("--tol", type=float, help="nonlinear tolerance")
    run_p.add_argument("--max-iter", dest="max_iter", type=int)
    run_p.add_argument("--output-dir", dest="output_dir")
    run_p.add_argument("--config", help="key=value config file; flags override")

    sub.add_parser("presets", help="list the reference-study presets")
    sub.add_parser("check", help="run the fast invariant suite")

    args = parser.parse_args(argv)

    if args.command == "presets":
        for name, flags in PRESETS.items():
            print(f"{name}:\n  graddiv-ns run {flags}")
        return 0

    if args.command == "check":
        failed = 0
        for name, ok, detail in checks.run_checks():
            status = "PASS" if ok else "FAIL"
            print(f"[{status}] {name}: {detail}")
            failed += not ok
        return 1 if failed else 0

    try:
        cfg = _build_config(args)
        cfg.validate()
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2
    try:
        run_experiment(cfg)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
