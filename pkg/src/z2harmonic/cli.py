"""Command-line entry point: ``z2harmonic <subcommand> [options]``.

Every subcommand accepts ``--config FILE`` (a JSON RunConfig) and flag
overrides; flags win over the file.  Reports are written to the output
directory with a fixed float precision so identical configs give identical
bytes.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import appendix, pipeline, radial
from .cover import build_cover_spec, build_sign_cocycle, write_cover_json
from .lift import HomogeneousLift, compute_alpha, sample_points, write_point_cloud
from .local import write_modes_csv
from .mesh import build_mesh, write_polygon_mesh, write_vertex_fields
from .pipeline import ANALYSES, RunConfig


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration; flags below override its fields")
    p.add_argument("--solid", help="tetrahedron, cube-vertices, icosahedron-vertices, "
                                   "icosahedron-face-midpoints or two-points")
    p.add_argument("--level", type=int, help="refinement level in [0, 8]")
    p.add_argument("--sector", choices=pipeline.SECTORS, help="t-star (all sections) or t0 (equivariant)")
    p.add_argument("--tol", type=float, help="eigensolver residual tolerance")
    p.add_argument("--seed", type=int, help="seed for the solver start vector and lift samples")
    p.add_argument("--analyses", help="comma list from " + ",".join(ANALYSES) + " (or 'all')")
    p.add_argument("--output-dir", help="directory for reports (created if missing)")
    p.add_argument("--angle", type=float, help="two-points only: angle between the points in radians")
    p.add_argument("--n-max", type=int, help="largest |n| of the circle modes")
    p.add_argument("--lift-samples", type=int, help="number of lift sample points")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="z2harmonic", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="lowest twisted eigenpair plus the requested analyses")
    _common(p)
    p = sub.add_parser("convergence", help="eigenvalue per level with extrapolation")
    _common(p)
    p.add_argument("--levels", required=True, help="e.g. 4-7 or 4,5,6")
    p = sub.add_parser("modes", help="circle modes and exponents at every branch point")
    _common(p)
    p = sub.add_parser("ode", help="integrate the radial mode equation")
    _common(p)
    p.add_argument("--mode", type=int, default=0, help="circle mode n")
    p.add_argument("--energy", type=float, help="eigenvalue E (default (n+1/2)(n+3/2))")
    p.add_argument("--r-max", type=float, default=1.0, help="outer radius (stereographic), at most 1.5")
    p = sub.add_parser("lift", help="evaluate and verify the homogeneous lift")
    _common(p)
    p = sub.add_parser("constraints", help="coefficient relations and the two-point obstruction")
    _common(p)
    p.add_argument("--q", type=float, nargs=3, metavar=("X", "Y", "Z"),
                   help="synthetic second point: report the obstruction for the pair (north pole, q) only")
    p = sub.add_parser("check", help="run all enabled analyses and emit one verdict")
    _common(p)
    p.add_argument("--from-report", help="reuse the checks of an existing solve report")
    p.add_argument("--include-expected-fail", action="store_true",
                   help="count expected-fail controls as ordinary checks")
    p = sub.add_parser("export-cover", help="write the cover, cocycle and mesh")
    _common(p)
    return parser


def config_from_args(args) -> RunConfig:
    d = {}
    if args.config:
        d = json.loads(Path(args.config).read_text())
    for key in ("solid", "level", "sector", "tol", "seed", "output_dir", "angle", "n_max", "lift_samples"):
        v = getattr(args, key, None)
        if v is not None:
            d[key] = v
    if args.analyses is not None:
        names = [s.strip() for s in args.analyses.split(",") if s.strip()]
        d["analyses"] = list(ANALYSES) if names == ["all"] else names
    return RunConfig.from_dict(d)


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def parse_levels(text: str) -> list[int]:
    if "-" in text:
        a, b = text.split("-")
        return list(range(int(a), int(b) + 1))
    return [int(s) for s in text.split(",") if s]


def cmd_solve(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    case = pipeline.run_case(cfg)
    doc = pipeline.solve_report(case)
    analyses, checks = pipeline.analyze(case)
    doc["analyses"] = analyses
    doc["checks"] = checks
    pipeline.write_json(doc, out / f"{cfg.stem}_report.json")
    write_vertex_fields(case.mesh, {"section": case.result.section}, out / f"{cfg.stem}_section.csv")
    write_polygon_mesh(case.mesh, out / f"{cfg.stem}.mesh")
    print(f"E = {case.result.eigenvalue:.10f}  residual {case.result.residual:.2e}  "
          f"({case.mesh.n_vertices} vertices)")
    return 0


def cmd_convergence(cfg: RunConfig, levels) -> int:
    out = _outdir(cfg)
    table = pipeline.convergence_table(cfg, levels)
    stem = f"{cfg.solid}_{cfg.sector}_convergence"
    pipeline.write_json(table, out / f"{stem}.json")
    with open(out / f"{stem}.csv", "w") as fh:
        fh.write("level,n_vertices,eigenvalue,difference,ratio\n")
        for r in table["rows"]:
            d = "" if r["difference"] is None else f"{r['difference']:.10e}"
            q = "" if r["ratio"] is None else f"{r['ratio']:.6f}"
            fh.write(f"{r['level']},{r['n_vertices']},{r['eigenvalue']:.12e},{d},{q}\n")
    for r in table["rows"]:
        print(f"level {r['level']}: E = {r['eigenvalue']:.10f}")
    if table["extrapolated"] is not None:
        print(f"extrapolated E = {table['extrapolated']:.10f}")
    if not table["geometric_decay"]:
        print("error: eigenvalue differences do not decay geometrically", file=sys.stderr)
        return 1
    return 0


def cmd_modes(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    case = pipeline.run_case(cfg)
    expansions = pipeline.local_analysis(case)
    write_modes_csv(expansions, out / f"{cfg.stem}_modes.csv")
    doc = {"schema": pipeline.SCHEMA, "seed": cfg.seed, "config": cfg.report_dict(),
           "eigenvalue": case.result.eigenvalue, "branch_points": [ex.summary() for ex in expansions]}
    pipeline.write_json(doc, out / f"{cfg.stem}_modes.json")
    for ex in expansions:
        print(f"p{ex.index}: n = {ex.dominant_mode}  exponent {ex.fitted_exponent:.4f}  "
              f"differential {ex.differential_exponent:.4f}")
    return 0


def cmd_ode(cfg: RunConfig, n: int, E: float | None, r_max: float) -> int:
    out = _outdir(cfg)
    k = n if n >= 0 else -n - 1
    if E is None:
        E = (k + 0.5) * (k + 1.5)
    prof = radial.integrate_radial(n, E, r_max=r_max)
    radial.write_profile_csv(prof, out / f"ode_n{n}.csv")
    doc = {"schema": pipeline.SCHEMA, "seed": cfg.seed, "mode": n, "energy": E, "r_max": r_max,
           "value_at_r_max": prof(r_max), "frobenius": radial.frobenius_series(n, E, 10)}
    if abs(E - (k + 0.5) * (k + 1.5)) < 1e-14:
        r = np.linspace(0.05, r_max, 50)
        closed = radial.closed_form(k, r) * 2 ** -(k + 0.5)
        doc["closed_form_max_relative_error"] = float(np.max(np.abs(prof(r) / closed - 1)))
    pipeline.write_json(doc, out / f"ode_n{n}.json")
    print(f"a({r_max}) = {prof(r_max):.12f}")
    return 0


def cmd_lift(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    case = pipeline.run_case(cfg)
    doc, checks = pipeline._lift_report(case, pipeline.local_analysis(case) if cfg.solid == "two-points" else None)
    res = case.result
    lift = HomogeneousLift(compute_alpha(res.eigenvalue), res.eigenvalue, case.mesh, case.cocycle, res.section)
    write_point_cloud(lift, sample_points(lift, cfg.lift_samples, cfg.seed), out / f"{cfg.stem}_lift.csv")
    pipeline.write_json({"schema": pipeline.SCHEMA, "seed": cfg.seed, "config": cfg.report_dict(),
                         "lift": doc, "checks": checks}, out / f"{cfg.stem}_lift.json")
    h = doc["harmonic"]
    print(f"alpha {doc['alpha']:.6f}  max div {h['max_div']:.2e}  max Dirac {h['max_dirac']:.2e}")
    return 0


def cmd_constraints(cfg: RunConfig, q=None) -> int:
    out = _outdir(cfg)
    if q is not None:
        q = np.asarray(q, dtype=float)
        q /= np.linalg.norm(q)
        ob = appendix.two_point_obstruction(q)
        doc = {"schema": pipeline.SCHEMA, "seed": cfg.seed, "q": q, "rank": ob["rank"],
               "singular_values": ob["singular_values"], "u": ob["u"], "labels": ob["labels"],
               "matrix": ob["matrix"]}
        pipeline.write_json(doc, out / "obstruction.json")
        print(f"obstruction rank {ob['rank']}")
        return 0
    case = pipeline.run_case(cfg)
    doc, checks = pipeline._constraint_report(case, pipeline.local_analysis(case))
    pipeline.write_json({"schema": pipeline.SCHEMA, "seed": cfg.seed, "config": cfg.report_dict(),
                         "constraints": doc, "checks": checks}, out / f"{cfg.stem}_constraints.json")
    print("passed" if all(c["passed"] for c in checks) else "failed")
    return 0


def cmd_check(cfg: RunConfig, from_report=None, include_expected_fail=False) -> int:
    out = _outdir(cfg)
    if from_report is not None:
        path = Path(from_report)
        if not path.exists():
            print(f"error: missing report {path}", file=sys.stderr)
            return 1
        checks = json.loads(path.read_text()).get("checks")
        if checks is None:
            print(f"error: {path} has no checks", file=sys.stderr)
            return 1
    else:
        if not cfg.analyses:
            cfg = RunConfig.from_dict({**cfg.to_dict(), "analyses": list(ANALYSES)})
        case = pipeline.run_case(cfg)
        _, checks = pipeline.analyze(case)
    ok = pipeline.verdict(checks, include_expected_fail)
    doc = {"schema": pipeline.SCHEMA, "seed": cfg.seed, "config": cfg.report_dict(), "checks": checks,
           "include_expected_fail": include_expected_fail, "passed": ok}
    pipeline.write_json(doc, out / f"{cfg.stem}_verdict.json")
    for c in checks:
        good = pipeline.verdict([c], include_expected_fail)
        tag = "PASS" if good else "FAIL"
        note = " (expected fail)" if c["expected_fail"] else ""
        print(f"{tag} {c['name']}{note}")
    print("verdict:", "pass" if ok else "fail")
    return 0 if ok else 1


def cmd_export_cover(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    spec = build_cover_spec(cfg.solid, cfg.angle)
    mesh = build_mesh(spec, cfg.level)
    cocycle = build_sign_cocycle(spec, mesh)
    stem = f"{cfg.solid}_L{cfg.level}"
    write_cover_json(spec, out / f"{stem}_cover.json", cocycle)
    write_polygon_mesh(mesh, out / f"{stem}.mesh")
    print(f"wrote {stem}_cover.json and {stem}.mesh")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        parser.error(str(exc))
    if args.command == "convergence":
        levels = parse_levels(args.levels)
        if len(levels) < 3:
            parser.error("convergence needs at least three levels")
    try:
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "convergence":
            return cmd_convergence(cfg, levels)
        if args.command == "modes":
            return cmd_modes(cfg)
        if args.command == "ode":
            return cmd_ode(cfg, args.mode, args.energy, args.r_max)
        if args.command == "lift":
            return cmd_lift(cfg)
        if args.command == "constraints":
            return cmd_constraints(cfg, args.q)
        if args.command == "check":
            return cmd_check(cfg, args.from_report, args.include_expected_fail)
        return cmd_export_cover(cfg)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
