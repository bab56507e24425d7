"""``heatvp`` command line: verify, solve, convergence, bounds.

Exit codes: 0 all checks passed, 1 a check failed, 2 bad configuration,
3 numerical hard error (non-finite quadrature sum, singular solve).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from heatvp.config import (
    CheckSpec,
    ConvergenceSpec,
    ProblemFile,
    SolveSpec,
    bundled_config,
    load_problem,
)
from heatvp.holder_spaces import SamplingGrid
from heatvp.potentials import (
    PotentialEvaluator,
    b_operator,
    newtonian_ball_constant,
    newtonian_potential,
    volume_potential,
)
from heatvp.quadrature import QuadConfig, QuadratureError
from heatvp.solver import IBVPSpec, LatticeSpec, SolverError, manufactured_case, solve, solver_quad
from heatvp.verify import (
    TOLERANCES,
    CheckReport,
    interior_samples,
    min_observed_order,
    quad_ladder,
    rates_to_csv,
    reports_to_csv,
    reports_to_json,
    verify_autonomous_identity,
    verify_kernel_bound,
    verify_mapping_bound,
    verify_pde_residual,
    verify_time_derivative_identity,
    verify_vanishing,
    verify_x0_independence,
    convergence_study,
)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

DEFAULT_CONFIGS = {
    "verify": "verify_default.json",
    "solve": "solve_default.json",
    "convergence": "convergence_default.json",
    "bounds": "bounds_default.json",
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# checks


def _merge(check_id: str, reports: list[CheckReport]) -> CheckReport:
    """One report per check id; several densities are folded by the worst part."""
    if len(reports) == 1:
        return reports[0]
    tol = reports[0].tolerance
    if any(r.tolerance != tol for r in reports):
        worst = max(r.max_discrepancy / r.tolerance for r in reports)
        tol = 1.0
    else:
        worst = max(r.max_discrepancy for r in reports)
    details = []
    notes = []
    for k, r in enumerate(reports):
        details += [{"density_index": k, **d} for d in r.details]
        notes += r.notes
    return CheckReport(check_id, worst, tol, sum(r.sample_count for r in reports), details, notes, reports[0].negative_control)


def run_check(spec: CheckSpec, seed: int, quad: QuadConfig, tol_scale: float = 1.0) -> CheckReport:
    cid = spec.id
    quad = spec.quad.build(quad) if spec.quad else quad
    base_tol = spec.tolerance if spec.tolerance is not None else TOLERANCES[cid]
    tol = base_tol * tol_scale
    if cid == "bound31":
        return verify_kernel_bound(dims=tuple(spec.dims or (1, 2, 3)), count=spec.count or 10_000, tol=tol, seed=seed)
    domain = spec.domain.build()
    n = domain.n
    samples = interior_samples(domain, spec.samples, seed, tuple(spec.t_range), spec.margin)
    if cid in ("lemma31", "lemma31-no-renorm"):
        h = spec.density.build(n)
        x0 = tuple(spec.x0[0]) if spec.x0 else None
        return verify_autonomous_identity(h, domain, samples, tol, quad, x0, ablate_renormalization=cid.endswith("no-renorm"))
    if cid == "x0-independence":
        f = spec.density.build(n)
        return verify_x0_independence(f, domain, samples, [tuple(p) for p in spec.x0], tol, quad)
    fields = [d.build(n) for d in spec.density_list()]
    if cid == "lemma42":
        step = spec.step or 1e-3
        halvings = 2 if spec.halvings is None else spec.halvings
        return _merge(cid, [verify_time_derivative_identity(f, domain, samples, step, tol, quad, halvings) for f in fields])
    if cid == "lemma43":
        return _merge(cid, [verify_vanishing(f, domain, samples, tol, quad) for f in fields])
    if cid == "thm44i":
        step = spec.step or 1e-3
        halvings = 1 if spec.halvings is None else spec.halvings
        return _merge(cid, [verify_pde_residual(f, domain, samples, step, tol, quad, halvings) for f in fields])
    if cid == "thm44ii":
        g = spec.grid
        grid = SamplingGrid.regular(domain, tuple(g.t_range), g.nt, g.nx, g.pair_budget, seed) if g else SamplingGrid.regular(domain, (0.0, 1.0), 9, 9, rng_seed=seed)
        return verify_mapping_bound(fields, domain, spec.alpha or 0.5, grid, tol, quad)
    raise ConfigError(f"unknown check {cid!r}")


def _run_check_job(args) -> CheckReport:
    return run_check(*args)


def run_checks(problem: ProblemFile, seed: int, jobs: int = 1, tol_scale: float = 1.0) -> list[CheckReport]:
    """Run every configured check; results keep the config order whatever ``jobs`` is."""
    if not problem.checks:
        raise ConfigError("the problem file has no 'checks' section")
    quad = problem.quad_config()
    tasks = [(c, seed, quad, tol_scale) for c in problem.checks]
    if jobs <= 1 or len(tasks) == 1:
        return [_run_check_job(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_check_job, tasks))


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    return path


def _meta(problem: ProblemFile, seed: int, command: str) -> dict:
    return {"command": command, "seed": seed, "version": problem.version, "config": problem.model_dump(mode="json", exclude_none=True)}


def cmd_verify(problem: ProblemFile, out: Path, seed: int, jobs: int, tol_scale: float) -> int:
    reports = run_checks(problem, seed, jobs, tol_scale)
    _write(out, "report.json", reports_to_json(reports, _meta(problem, seed, "verify")))
    _write(out, "summary.csv", reports_to_csv(reports))
    for r in reports:
        print(r.line())
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def cmd_bounds(problem: ProblemFile, out: Path, seed: int, jobs: int, tol_scale: float) -> int:
    b = problem.bounds
    if b is None:
        raise ConfigError("the problem file has no 'bounds' section")
    tol = (b.tolerance if b.tolerance is not None else TOLERANCES["bound31"]) * tol_scale
    rep = verify_kernel_bound(dims=tuple(b.dims), count=b.count, tol=tol, seed=seed, stability=b.stability)
    _write(out, "report.json", reports_to_json([rep], _meta(problem, seed, "bounds")))
    _write(out, "summary.csv", reports_to_csv([rep]))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "eta", "h", "constant", "constant_4x", "change"])
    for d in rep.details:
        w.writerow([d["n"], " ".join(map(str, d["eta"])), d["h"], repr(d["constant"]), repr(d["constant_4x"]), repr(d["change"])])
    _write(out, "bounds.csv", buf.getvalue())
    print(rep.line())
    return EXIT_OK if rep.passed else EXIT_FAIL


# ---------------------------------------------------------------------------
# solve


def build_ibvp(s: SolveSpec) -> IBVPSpec:
    if s.case is not None:
        return manufactured_case(s.case, T=s.T)
    domain = s.domain.build()
    n = domain.n
    exact = s.exact_solution.build(n) if s.exact_solution else None
    return IBVPSpec(s.problem_kind, domain, s.T, s.density_f.build(n), s.boundary_data.build(n), exact, "custom")


def cmd_solve(problem: ProblemFile, out: Path, seed: int, jobs: int, tol_scale: float) -> int:
    s = problem.solve
    if s is None:
        raise ConfigError("the problem file has no 'solve' section")
    spec = build_ibvp(s)
    quad = s.quad.build(solver_quad(spec.domain.n)) if s.quad else None
    res = solve(spec, LatticeSpec(s.lattice.nx, s.lattice.nt), quad)
    diag = res.diagnostics()
    limits = {
        "max_interior_residual": s.max_interior_residual * tol_scale,
        "max_boundary_error": s.max_boundary_error * tol_scale,
    }
    if s.max_error_vs_exact is not None:
        limits["max_error_vs_exact"] = s.max_error_vs_exact * tol_scale
    ok = all(diag[k] is not None and diag[k] <= v for k, v in limits.items())
    diag.update({"case": spec.name, "problem_kind": spec.problem_kind, "thresholds": limits, "passed": ok})
    _write(out, "solution.csv", res.to_csv())
    _write(out, "diagnostics.json", json.dumps(diag, indent=2, sort_keys=True) + "\n")
    err = "n/a" if res.max_error_vs_exact is None else f"{res.max_error_vs_exact:.3e}"
    print(f"{spec.name}: {'PASS' if ok else 'FAIL'} (residual {res.max_interior_residual:.3e}, boundary {res.max_boundary_error:.3e}, error vs exact {err})")
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# convergence


def _study_target(c: ConvergenceSpec):
    domain = c.domain.build()
    f = c.density.build(domain.n)
    p = (c.t, tuple(c.x))
    if c.target == "newtonian":
        return lambda q: newtonian_potential(f, domain, c.x, q)
    if c.target == "volume-potential":
        return lambda q: volume_potential(PotentialEvaluator(domain, f, q), p)
    return lambda q: b_operator(PotentialEvaluator(domain, f, q), p)


def _closed_form(c: ConvergenceSpec) -> float:
    d = c.density
    if c.target != "newtonian" or c.domain.kind != "ball" or d.family not in ("constant", "zero"):
        raise ConfigError("closed-form references exist only for the Newtonian potential of a constant on a ball")
    if d.family == "zero":
        return 0.0
    value = float(d.params.get("value", 1.0)) * (d.scale if d.scale is not None else 1.0)
    return value * newtonian_ball_constant(c.x, len(c.domain.center), c.domain.radius, c.domain.center)


def cmd_convergence(problem: ProblemFile, out: Path, seed: int, jobs: int, tol_scale: float) -> int:
    studies = problem.convergence
    if not studies:
        raise ConfigError("the problem file has no 'convergence' section")
    chunks = []
    ok = True
    for c in studies:
        base = c.base.build() if c.base else None
        levels = quad_ladder(c.levels, base)
        ref = _closed_form(c) if c.reference == "closed-form" else None
        rows = convergence_study(_study_target(c), levels, ref)
        order = min_observed_order(rows)
        good = c.min_order is None or order >= c.min_order
        ok = ok and good
        chunks.append(rates_to_csv(rows, c.name))
        shown = "all at floor" if math.isinf(order) else f"{order:.2f}"
        print(f"{c.name}: {'PASS' if good else 'FAIL'} (min observed order {shown}, required {c.min_order})")
    # one header, rows of every study
    text = chunks[0] + "".join(ch.split("\n", 1)[1] for ch in chunks[1:])
    _write(out, "rates.csv", text)
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# entry point

COMMANDS = {"verify": cmd_verify, "solve": cmd_solve, "convergence": cmd_convergence, "bounds": cmd_bounds}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heatvp", description="Heat volume potentials: verification campaigns, convergence studies and IBVP solves.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None, help="JSON problem file (default: bundled %s)" % DEFAULT_CONFIGS[name])
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for independent checks")
        p.add_argument("--tol-scale", type=float, default=1.0, help="multiply every tolerance")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1 or not args.tol_scale > 0:
        print("error: --jobs must be >= 1 and --tol-scale positive", file=sys.stderr)
        return EXIT_CONFIG
    path = args.config or bundled_config(DEFAULT_CONFIGS[args.command])
    try:
        problem = load_problem(path)
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    seed = problem.seed if args.seed is None else args.seed
    try:
        return COMMANDS[args.command](problem, args.out, seed, args.jobs, args.tol_scale)
    except (QuadratureError, SolverError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
