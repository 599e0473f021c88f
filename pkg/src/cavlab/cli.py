"""Command-line entry point.

Subcommands: tables, basis-check, kernel build|verify, entropy check,
solve, sweep, check, report.  Exit codes: 0 success, 1 check failure,
2 usage/configuration error.  Reports are JSON with stable key order;
tabular output is RFC-4180 CSV with a header row; field and mesh exports
are legacy ASCII VTK.  All pipelines are deterministic at a fixed worker
count, so identical configurations reproduce byte-identical reports.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import gaschart as gc
from .config import ConfigError, RunConfig, dump_config, parse_config

USAGE_ERROR = 2
CHECK_FAILED = 1


def _load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path) as fh:
        return parse_config(fh.read())


def _write_json(path_or_stream, payload) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if isinstance(path_or_stream, str):
        with open(path_or_stream, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        path_or_stream.write(text + "\n")


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x) -> str:
    return f"{float(x):.17g}"


class ArtifactStore:
    """Run directory layout; every run reproducible from config.cfg."""

    def __init__(self, run_dir: str):
        self.root = run_dir
        os.makedirs(run_dir, exist_ok=True)
        os.makedirs(os.path.join(run_dir, "kernels"), exist_ok=True)
        os.makedirs(os.path.join(run_dir, "plotdata"), exist_ok=True)

    def path(self, *parts) -> str:
        return os.path.join(self.root, *parts)

    def save_config(self, cfg: RunConfig) -> None:
        with open(self.path("config.cfg"), "w") as fh:
            fh.write(dump_config(cfg))

    def save_fields(self, mesh, sol) -> None:
        rho = sol.rho
        q = sol.q
        rows = [
            (_fmt(x), _fmt(y), _fmt(s), _fmt(t), _fmt(r), _fmt(qq),
             _fmt(wm), _fmt(wp))
            for (x, y), s, t, r, qq, wm, wp in zip(
                mesh.vertices, sol.sigma, sol.theta, rho, q,
                sol.W_minus, sol.W_plus)
        ]
        _write_csv(self.path(f"fields_eps_{sol.epsilon:g}.csv"),
                   ["x", "y", "sigma", "theta", "rho", "q", "Wminus",
                    "Wplus"], rows)

    def save_mesh(self, mesh, fields=None) -> None:
        from .meshing import write_vtk
        write_vtk(self.path("mesh.vtk"), mesh, point_fields=fields)

    def save_report(self, report_dict) -> None:
        _write_json(self.path("report.json"), report_dict)

    def save_plotdata(self, report) -> None:
        recs = report.records
        rows = [(_fmt(r["epsilon"]), _fmt(r["dissipation_integral"]),
                 _fmt(r["weak_residuals"]["mass"]),
                 _fmt(r["weak_residuals"]["curl"]),
                 _fmt(r["entropy_defect_star"]),
                 _fmt(r["compactness_star"]["D1_est"]),
                 _fmt(r["compactness_star"]["D2_L1"]))
                for r in recs]
        _write_csv(self.path("plotdata", "sweep.csv"),
                   ["epsilon", "dissipation", "mass_residual",
                    "curl_residual", "entropy_defect_star", "D1_est",
                    "D2_L1"], rows)
        ch = report.sweep["cauchy"]
        rows = [(_fmt(e1), _fmt(d)) for e1, d in
                zip(ch["epsilons"][1:], ch["l2_differences"])]
        _write_csv(self.path("plotdata", "cauchy.csv"),
                   ["epsilon", "l2_difference"], rows)


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def cmd_tables(args) -> int:
    chart = gc.GasChart(nu_star=args.nu_star) if args.nu_star else gc.GasChart()
    nus = np.geomspace(args.nu_min, chart.nu_star, args.points)
    tab = chart.table(nus)
    cols = ["nu", "rho", "q", "sigma", "k", "kprime", "kdoubleprime", "M"]
    rows = [[_fmt(tab[c][i]) for c in cols] for i in range(len(nus))]
    _write_csv(args.out, cols, rows)
    print(f"wrote {len(rows)} chart rows to {args.out}")
    return 0


def cmd_basis_check(args) -> int:
    from .kernelbasis import check_recurrences
    rep = check_recurrences()
    payload = {"max_defect": rep["max_defect"],
               "tolerance": rep["tolerance"],
               "pass": rep["pass"], "failed": rep["failed"],
               "relations": rep["relations"]}
    if args.out:
        _write_json(args.out, payload)
    else:
        _write_json(sys.stdout, payload)
    return 0 if rep["pass"] else CHECK_FAILED


def cmd_kernel_build(args) -> int:
    from .kernelengine import GridSpec, build_kernel
    chart = gc.GasChart(nu_star=args.nu_star)
    grid = GridSpec(xi_max_factor=args.xi_max)
    tr = build_kernel(args.kind, chart, grid=grid, workers=args.workers)
    tr.save(args.out)
    print(f"built {args.kind} kernel table -> {args.out} "
          f"(nu_star={tr.nu_star:g}, calibration={tr.coeffs.calibration!r})")
    return 0


def cmd_kernel_verify(args) -> int:
    from .kernelengine import (KernelTransform, huygens_leakage,
                               smooth_kernel, verify_kernel)
    tr = KernelTransform.load(args.table)
    rep = verify_kernel(tr)
    rep["huygens_leakage"] = huygens_leakage(smooth_kernel(tr))
    rep["pass"] = bool(rep["pass"] and rep["huygens_leakage"] < 1e-6)
    if args.out:
        _write_json(args.out, rep)
    else:
        _write_json(sys.stdout, rep)
    return 0 if rep["pass"] else CHECK_FAILED


def cmd_entropy_check(args) -> int:
    from . import entropy as en
    cfg = _load_config(args.config)
    chart = gc.GasChart(nu_star=cfg.kernel.nu_star)
    nu_bar = gc.nu_of_rho(gc.rho_of_q(cfg.solver.q_inf))
    gen = en.special_generator(chart, nu_bar)
    pair = en.special_pair(chart, nu_bar)
    nus = np.geomspace(1e-4, chart.nu_star * 0.99, args.points)
    ths = np.linspace(-1.0, 1.0, args.points)
    rows = []
    ok = True
    for nu in nus:
        for th in ths:
            rho = gc.rho_of_nu(nu)
            c1 = 1.0  # H*_tt - rho H*_ntt
            c2 = rho * c1  # rho c1 - |rho H*_nt + H*_ttt|
            s = gc.StatePolar(rho=float(rho), theta=float(th))
            q1, q2 = en.loewner_morawetz(gen, s)
            p1, p2 = float(pair.Q1(rho, th)), float(pair.Q2(rho, th))
            defect = max(abs(q1 - p1), abs(q2 - p2))
            ok &= defect < 1e-9
            rows.append([_fmt(nu), _fmt(th), _fmt(c1), _fmt(c2),
                         _fmt(defect)])
    _write_csv(args.out, ["nu", "theta", "margin_convexity", "margin_cross",
                          "pair_assembly_defect"], rows)
    print(f"wrote entropy margins to {args.out}")
    return 0 if ok else CHECK_FAILED


def _run_sweep(cfg: RunConfig):
    from .meshing import build_mesh
    from .solver import PicardSolver
    mesh = build_mesh(cfg.geometry)
    solver = PicardSolver(mesh, cfg.solver)
    solutions = []
    warm = None
    for eps in cfg.solver.epsilons:
        sol = solver.solve_epsilon(eps, warm_start=warm)
        solutions.append(sol)
        warm = (sol.sigma, sol.theta)
    return mesh, solutions


def cmd_solve(args) -> int:
    from .meshing import build_mesh
    from .solver import PicardSolver
    cfg = _load_config(args.config)
    eps = args.epsilon if args.epsilon else cfg.solver.epsilons[0]
    mesh = build_mesh(cfg.geometry)
    sol = PicardSolver(mesh, cfg.solver).solve_epsilon(eps)
    store = ArtifactStore(cfg.output_dir)
    store.save_config(cfg)
    store.save_mesh(mesh, fields={"rho": sol.rho, "theta": sol.theta})
    store.save_fields(mesh, sol)
    print(f"solved eps={eps:g} in {sol.iterations} iterations "
          f"(min q = {sol.q.min():.6f})")
    return 0


def cmd_sweep(args) -> int:
    from .diagnostics import run_report
    cfg = _load_config(args.config)
    mesh, solutions = _run_sweep(cfg)
    report = run_report(mesh, cfg.solver, solutions)
    store = ArtifactStore(cfg.output_dir)
    store.save_config(cfg)
    store.save_mesh(mesh, fields={"rho": solutions[-1].rho,
                                  "theta": solutions[-1].theta})
    for sol in solutions:
        store.save_fields(mesh, sol)
    store.save_report(report.to_dict())
    store.save_plotdata(report)
    print(f"sweep complete: {len(solutions)} solutions -> {cfg.output_dir}")
    return 0


def cmd_check(args) -> int:
    from .diagnostics import run_report
    cfg = _load_config(args.config)
    mesh, solutions = _run_sweep(cfg)
    report = run_report(mesh, cfg.solver, solutions)
    store = ArtifactStore(cfg.output_dir)
    store.save_config(cfg)
    store.save_report(report.to_dict())
    ok = report.ok
    print(f"check: {'PASS' if ok else 'FAIL'} "
          f"(dissipation ratio {report.sweep['dissipation_ratio']:.3g}, "
          f"trace min {report.sweep['trace_min']:.3g})")
    return 0 if ok else CHECK_FAILED


def cmd_report(args) -> int:
    with open(os.path.join(args.rundir, "report.json")) as fh:
        payload = json.load(fh)
    sweep = payload["sweep"]
    print(f"run: {args.rundir}")
    print(f"  epsilons: {[r['epsilon'] for r in payload['records']]}")
    print(f"  dissipation ratio: {sweep['dissipation_ratio']:.4g}")
    print(f"  weak-residual sqrt(eps) fits: mass C={sweep['mass_fit']['C']:.3g} "
          f"(violations {sweep['mass_fit']['violations']}), "
          f"curl C={sweep['curl_fit']['C']:.3g} "
          f"(violations {sweep['curl_fit']['violations']})")
    print(f"  entropy defect fit: C={sweep['defect_star_fit']['C']:.3g} "
          f"(violations {sweep['defect_star_fit']['violations']})")
    print(f"  obstacle trace min: {sweep['trace_min']:.3g}")
    print(f"  cauchy differences: "
          f"{[round(d, 6) for d in sweep['cauchy']['l2_differences']]}")
    for rec in payload["records"]:
        inv = rec["invariant_region"]
        print(f"  eps={rec['epsilon']:g}: iters={rec['iterations']} "
              f"min-q margin={inv['min_q_margin']:+.2e} "
              f"angle margin={inv['angle_margin']:+.2e} "
              f"{'ok' if inv['pass'] else 'VIOLATED'}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cavlab",
        description="Numerical laboratory for supersonic potential flow "
                    "with cavitation")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("tables", help="dump the coordinate chart as CSV")
    t.add_argument("--out", default="chart.csv")
    t.add_argument("--points", type=int, default=200)
    t.add_argument("--nu-min", type=float, default=1e-8)
    t.add_argument("--nu-star", type=float, default=None)
    t.set_defaults(fn=cmd_tables)

    b = sub.add_parser("basis-check",
                       help="verify the Fourier-side recurrence relations")
    b.add_argument("--out", default=None)
    b.set_defaults(fn=cmd_basis_check)

    k = sub.add_parser("kernel", help="build or verify kernel tables")
    ksub = k.add_subparsers(dest="kernel_command", required=True)
    kb = ksub.add_parser("build")
    kb.add_argument("--kind", choices=("regular", "singular"), required=True)
    kb.add_argument("--nu-star", type=float, default=gc.NU_CR / 2.0)
    kb.add_argument("--xi-max", type=float, default=200.0)
    kb.add_argument("--out", required=True)
    kb.add_argument("--workers", type=int, default=1)
    kb.set_defaults(fn=cmd_kernel_build)
    kv = ksub.add_parser("verify")
    kv.add_argument("table")
    kv.add_argument("--out", default=None)
    kv.set_defaults(fn=cmd_kernel_verify)

    e = sub.add_parser("entropy", help="entropy-pair checks")
    esub = e.add_subparsers(dest="entropy_command", required=True)
    ec = esub.add_parser("check")
    ec.add_argument("--config", default=None)
    ec.add_argument("--out", default="entropy_margins.csv")
    ec.add_argument("--points", type=int, default=12)
    ec.set_defaults(fn=cmd_entropy_check)

    sv_ = sub.add_parser("solve", help="solve at one viscosity")
    sv_.add_argument("--config", default=None)
    sv_.add_argument("--epsilon", type=float, default=None)
    sv_.set_defaults(fn=cmd_solve)

    sw = sub.add_parser("sweep", help="viscosity sweep with diagnostics")
    sw.add_argument("--config", default=None)
    sw.set_defaults(fn=cmd_sweep)

    c = sub.add_parser("check", help="sweep + diagnostics, nonzero on failure")
    c.add_argument("--config", default=None)
    c.set_defaults(fn=cmd_check)

    r = sub.add_parser("report", help="summarize a stored run")
    r.add_argument("rundir")
    r.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except Exception as exc:  # surfaced as a check failure with context
        print(f"error: {exc}", file=sys.stderr)
        return CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
