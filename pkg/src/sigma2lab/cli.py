"""Command-line harness: ``sigma2lab {verify,solve,probe,report}``.

Every run writes exactly one manifest ``manifest_<command>[_<kind>].json`` in
``--out`` listing its artifacts by path relative to that directory.  No
timestamps or absolute paths are recorded, so identical command lines give
byte-identical output.  ``--workers`` only changes wall-clock time and is
left out of the manifest for that reason.

Exit codes: 0 success, 1 violation or failed invariant, 2 usage error,
starvation or missing input, 3 solver nonconvergence, 4 ellipticity loss.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, ineq, probe, solver
from .reporting import SCHEMA_VERSION, read_json, write_columns, write_csv, write_json
from .sampling import SamplerStarvation
from .symfun import DomainError

log = logging.getLogger("sigma2lab")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NONCONV, EXIT_ELLIPTIC = 0, 1, 2, 3, 4

SUITES = {
    "lemma21": "lemma_CQ",
    "cor22": "cor_third_derivative",
    "lemma23": "lemma_shift",
    "cor24": "cor_A",
    "eps": "quadratic_form_eps",
}
DEFAULT_EPS_GRID = "0,0.01,0.02,0.03,0.04,0.049"


class _Run:
    """Collects artifacts for one invocation and writes its manifest."""

    def __init__(self, out: Path, command: str, tag: str, config: dict, seed):
        self.out = out
        self.command = command
        self.tag = tag
        self.config = config
        self.seed = seed
        self.artifacts: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        self.artifacts.append(name)
        return self.out / name

    def finish(self, code: int, summary: dict | None = None) -> int:
        name = f"manifest_{self.command}" + (f"_{self.tag}" if self.tag else "") + ".json"
        write_json(self.out / name, {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "tag": self.tag,
            "config": self.config,
            "seed": self.seed,
            "artifacts": self.artifacts,
            "tool_version": __version__,
            "exit_code": code,
            "summary": summary or {},
        })
        return code


def _config(args, drop=("func", "workers", "out", "verbose")) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in drop}


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")


# -- verify --------------------------------------------------------------------

def cmd_verify(args) -> int:
    suites = list(SUITES) if args.suite == "all" else [args.suite]
    run = _Run(args.out, "verify", args.suite, _config(args), args.seed)
    summary = {}
    total = 0
    try:
        for s in suites:
            cfg = ineq.SampleConfig(n=3 if s == "eps" else args.n, count=args.count, seed=args.seed,
                                    workers=args.workers)
            params = {"eps": 1.0 / 25.0} if s == "eps" else {}
            rep = ineq.sample_verify(SUITES[s], cfg, tol=args.tol, **params)
            write_json(run.path(f"verify_{s}.json"), rep)
            summary[s] = {"min_margin": rep.min_margin, "violations": rep.violations,
                          "evaluated": rep.evaluated, "vacuous": rep.vacuous}
            total += rep.violations
            print(f"{s:8s} evaluated={rep.evaluated} violations={rep.violations} "
                  f"min_margin={rep.min_margin:.3e}")
            if rep.violations:
                print(f"  witness: {rep.argmin_witness.get('inputs')}")
            if s == "eps":
                fcfg = ineq.SampleConfig(n=3, count=args.count, seed=args.seed, workers=args.workers)
                fr = ineq.epsilon_frontier(fcfg, args.eps_grid, tol=args.tol)
                fr.write_csv(run.path("eps_frontier.csv"))
                write_json(run.path("eps_frontier.json"), fr)
                write_columns(run.path("eps_frontier.dat"), [r.eps for r in fr.rows],
                              [r.min_margin for r in fr.rows])
                fv = sum(r.violations for r in fr.rows)
                total += fv
                summary["eps_frontier"] = {"violations": fv, "monotone": fr.is_monotone(),
                                           "largest_admissible": fr.largest_admissible()}
                for r in fr.rows:
                    print(f"  eps={r.eps:<8g} min_margin={r.min_margin:.3e} violations={r.violations}")
                if fv:
                    bad = next(r for r in fr.rows if r.violations)
                    w = ineq.sample_verify("quadratic_form_eps", fcfg, tol=args.tol, eps=bad.eps)
                    print(f"  witness at eps={bad.eps}: {w.argmin_witness.get('inputs')}")
    except SamplerStarvation as e:
        print(f"error: {e}", file=sys.stderr)
        return run.finish(EXIT_USAGE, {"error": str(e)})
    return run.finish(EXIT_OK if total == 0 else EXIT_FAIL, summary)


# -- solve ---------------------------------------------------------------------

def _parse_data(spec: str, n: int):
    """'zero', 'quadratic' (default exact solution) or 'quadratic:d1,...,dn' (diagonal Hessian)."""
    if spec == "zero":
        return None
    if spec == "quadratic":
        if n == 2:
            return solver.Quadratic(np.diag([2.0, 0.5]))
        c = math.sqrt(2.0 / (n * (n - 1)))
        return solver.Quadratic(c * np.eye(n), c=-c / 2.0)
    if spec.startswith("quadratic:"):
        d = _floats(spec.split(":", 1)[1])
        if len(d) != n:
            raise argparse.ArgumentTypeError(f"quadratic needs {n} diagonal entries")
        return solver.Quadratic(np.diag(d))
    raise argparse.ArgumentTypeError(f"unknown data {spec!r}")


def cmd_solve(args) -> int:
    lo, hi = args.box
    dom = solver.GridDomain(args.n, lo, hi, args.m)
    g = _parse_data(args.data, args.n)
    cfg = solver.SolveConfig(tol_residual=args.tol, linear_solver=args.linear_solver)
    run = _Run(args.out, "solve", "", _config(args), None)
    try:
        rep = solver.newton_solve(dom, g, cfg)
    except solver.EllipticityLossError as e:
        print(f"error: {e}", file=sys.stderr)
        write_json(run.path("solve.json"), {"error": str(e), "node": e.node, "residual_history": e.history})
        return run.finish(EXIT_ELLIPTIC, {"error": "ellipticity-loss"})
    except solver.NonConvergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        write_json(run.path("solve.json"), {"error": str(e), "residual_history": e.history})
        return run.finish(EXIT_NONCONV, {"error": "nonconvergence"})
    X = dom.mesh()
    checks = {}
    if g is None:
        w = solver.barrier_values(dom, solver.barrier_level(dom))
        u = rep.field.values
        checks["barrier_sandwich"] = bool(np.all(w <= u) and np.all(u <= 0.0))
    else:
        checks["max_error_vs_data"] = float(np.abs(rep.field.values - g(X)).max())
    solver.save_field(args.out / "field", rep.field)
    run.path("field.json")
    run.path("field.bin")
    d = rep.to_dict()
    d["checks"] = checks
    write_json(run.path("solve.json"), d)
    write_columns(run.path("residual_history.dat"), range(len(rep.residual_history)), rep.residual_history)
    ok = rep.converged and rep.gamma2_certified
    print(f"converged={rep.converged} iterations={rep.iterations} "
          f"residual={rep.residual_history[-1]:.3e} gamma2={rep.gamma2_certified} {checks}")
    summary = {"iterations": rep.iterations, "residual": rep.residual_history[-1],
               "gamma2_certified": rep.gamma2_certified, **checks}
    if not ok:
        return run.finish(EXIT_NONCONV, summary)
    return run.finish(EXIT_OK, summary)


# -- probe ---------------------------------------------------------------------

def _load_fields(paths):
    fields = []
    for p in paths or []:
        p = Path(p)
        if p.is_dir():
            p = p / "field.json"
        if not p.exists():
            raise FileNotFoundError(str(p))
        fields.append(solver.load_field(p))
    return fields


def cmd_probe(args) -> int:
    kind = args.kind
    run = _Run(args.out, "probe", kind, _config(args), args.seed)
    if kind in ("pogorelov", "diffeq"):
        if not args.field:
            print("error: this probe needs --field (a solve artifact)", file=sys.stderr)
            return run.finish(EXIT_USAGE, {"error": "missing solve artifact"})
        try:
            fields = _load_fields(args.field)
        except FileNotFoundError as e:
            print(f"error: missing solve artifact {e}", file=sys.stderr)
            return run.finish(EXIT_USAGE, {"error": "missing solve artifact"})

    if kind == "pogorelov":
        pcfg = probe.PogorelovConfig(alpha=args.alpha, variant=args.variant)
        reports = []
        for f in fields:
            try:
                pr = probe.pogorelov_quantity(f, pcfg)
                aux = probe.aux_function_field(f, pcfg)
            except DomainError as e:
                print(f"error: {e}", file=sys.stderr)
                return run.finish(EXIT_FAIL, {"error": str(e)})
            reports.append({"pogorelov": pr.to_dict(), "aux": aux.to_dict()})
        ok = all(r["pogorelov"]["finite"] and r["pogorelov"]["clamped_strictly_interior"]
                 and r["aux"]["interior_certified"] for r in reports)
        diam = [r["pogorelov"]["diameter"] for r in reports]
        vals = [r["pogorelov"]["clamped_value"] for r in reports]
        write_json(run.path("pogorelov.json"), {"schema_version": SCHEMA_VERSION, "runs": reports})
        write_columns(run.path("pogorelov.dat"), diam, vals)
        for dm, v in zip(diam, vals):
            print(f"diameter={dm:.4g} clamped_value={v:.6e}")
        return run.finish(EXIT_OK if ok else EXIT_FAIL, {"passed": ok, "values": vals, "diameters": diam})

    if kind == "diffeq":
        try:
            reps = [probe.differentiated_equation_residual(f) for f in fields]
        except ValueError as e:
            print(f"error: {e}", file=sys.stderr)
            return run.finish(EXIT_USAGE, {"error": str(e)})
        reps.sort(key=lambda r: -r.h)
        ok = all(math.isfinite(r.first_max) for r in reps)
        ok &= all(b.first_max < a.first_max for a, b in zip(reps, reps[1:]))
        write_json(run.path("diffeq.json"), {"schema_version": SCHEMA_VERSION,
                                             "runs": [r.to_dict() for r in reps]})
        write_columns(run.path("diffeq.dat"), [r.h for r in reps], [r.first_max for r in reps])
        for r in reps:
            print(f"h={r.h:.4g} first={r.first_max:.3e} second={r.second_max:.3e}")
        return run.finish(EXIT_OK if ok else EXIT_FAIL, {"passed": ok})

    if kind == "warren":
        rep = probe.warren_validate(args.count, args.seed, tuple(args.box), tol=args.tol)
        write_json(run.path("warren.json"), rep)
        print(f"max|sigma2-1|={rep.max_abs_residual:.3e} gamma2={rep.gamma2_all} "
              f"growth_violated={rep.growth_violated_all}")
        return run.finish(EXIT_OK if rep.passed else EXIT_FAIL, {"passed": rep.passed})

    if kind == "phase":
        try:
            rep = probe.phase_identity_check(args.count, args.seed)
        except SamplerStarvation as e:
            print(f"error: {e}", file=sys.stderr)
            return run.finish(EXIT_USAGE, {"error": str(e)})
        write_json(run.path("phase.json"), rep)
        print(f"max|phase-pi/2|={rep.max_phase_error:.3e} violations={rep.phase_violations}")
        return run.finish(EXIT_OK if rep.passed else EXIT_FAIL, {"passed": rep.passed})

    # rescale
    base = probe.BASES[args.base](3)
    spec = probe.RescaleSpec(base, tuple(args.R), A=args.A)
    try:
        rep = probe.rescale_family(spec, m=args.grid_m)
    except probe.ProbeError as e:
        print(f"error: {e}", file=sys.stderr)
        return run.finish(EXIT_USAGE, {"error": str(e)})
    rep.write_csv(run.path("rescale.csv"))
    write_json(run.path("rescale.json"), rep)
    write_columns(run.path("rescale_osc.dat"), [r.R for r in rep.rows], [r.osc for r in rep.rows])
    if args.base == "quad":
        ok = rep.sup_hess_spread() <= 1e-9
    else:
        ok = rep.osc_non_increasing(0.1)
    ok &= all(r.identity_error <= 1e-9 * max(1.0, r.sup_hess) for r in rep.rows)
    for r in rep.rows:
        print(f"R={r.R:g} sup_hess={r.sup_hess:.6g} osc={r.osc:.6g} nodes={r.nodes_in_mask}")
    return run.finish(EXIT_OK if ok else EXIT_FAIL, {"passed": ok})


# -- report --------------------------------------------------------------------

def _section(man: dict, base: Path) -> dict:
    sec = {"command": man["command"], "tag": man.get("tag", ""), "exit_code": man["exit_code"],
           "passed": man["exit_code"] == 0, "metrics": {}}
    for a in man["artifacts"]:
        if not (base / a).exists():
            raise FileNotFoundError(str(base / a))
    if man["command"] == "verify":
        for k, v in man["summary"].items():
            if "min_margin" in v:
                sec["metrics"][f"{k}.min_margin"] = v["min_margin"]
                sec["metrics"][f"{k}.violations"] = v["violations"]
    elif man["command"] == "solve":
        for k in ("residual", "iterations", "max_error_vs_data", "barrier_sandwich", "gamma2_certified"):
            if k in man["summary"]:
                sec["metrics"][k] = man["summary"][k]
    else:
        if "passed" in man["summary"]:
            sec["metrics"]["passed"] = man["summary"]["passed"]
    return sec


def cmd_report(args) -> int:
    run = _Run(args.out, "report", "", {"inputs": sorted(Path(p).name for p in args.inputs)}, None)
    sections = []
    for p in args.inputs:
        p = Path(p)
        if not p.exists():
            print(f"error: missing manifest {p}", file=sys.stderr)
            return run.finish(EXIT_USAGE, {"error": f"missing manifest {p.name}"})
        try:
            sections.append(_section(read_json(p), p.parent))
        except FileNotFoundError as e:
            print(f"error: missing artifact {e}", file=sys.stderr)
            return run.finish(EXIT_USAGE, {"error": "missing artifact"})
    write_json(run.path("summary.json"), {"schema_version": SCHEMA_VERSION, "sections": sections})
    rows = [(s["command"], s["tag"], k, v, s["passed"]) for s in sections for k, v in sorted(s["metrics"].items())]
    rows += [(s["command"], s["tag"], "", "", s["passed"]) for s in sections if not s["metrics"]]
    write_csv(run.path("summary.csv"), ["command", "tag", "metric", "value", "passed"], rows)
    margins = [(f"{s['tag']}:{k}", v) for s in sections if s["command"] == "verify"
               for k, v in sorted(s["metrics"].items()) if k.endswith("min_margin")]
    write_columns(run.path("summary_margins.dat"), [m[0] for m in margins], [m[1] for m in margins])
    for s in sections:
        print(f"{s['command']:7s} {s['tag']:10s} {'PASS' if s['passed'] else 'FAIL'}")
    return run.finish(EXIT_OK, {"sections": len(sections)})


# -- parser ----------------------------------------------------------------------

def _box(text: str):
    v = _floats(text)
    if len(v) != 2 or not v[0] < v[1]:
        raise argparse.ArgumentTypeError("--box must be 'lo,hi' with lo < hi")
    return v


def _eps_grid(text: str):
    v = _floats(text)
    if not v or any(not 0.0 <= e <= 0.5 for e in v):
        raise argparse.ArgumentTypeError("eps grid must be non-empty with entries in [0, 0.5]")
    return v


def _R_list(text: str):
    v = _floats(text)
    if not v or v[0] < 1 or any(b <= a for a, b in zip(v, v[1:])):
        raise argparse.ArgumentTypeError("R list must be strictly increasing and >= 1")
    return v


def _m(text: str):
    m = int(text)
    if m < 5:
        raise argparse.ArgumentTypeError(f"m={m}: need at least 5 nodes per axis")
    return m


def _positive_int(text: str):
    k = int(text)
    if k < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return k


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--workers", type=_positive_int, default=1, help="worker threads (output unchanged)")
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="sigma2lab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", parents=[common], help="sampled inequality suites")
    v.add_argument("--suite", choices=[*SUITES, "all"], default="all")
    v.add_argument("--count", type=_positive_int, default=100_000)
    v.add_argument("--n", type=int, default=3)
    v.add_argument("--tol", type=float, default=ineq.TOL)
    v.add_argument("--eps-grid", type=_eps_grid, default=_eps_grid(DEFAULT_EPS_GRID))
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("solve", parents=[common], help="Dirichlet solve on a box")
    s.add_argument("--n", type=int, choices=[2, 3], default=3)
    s.add_argument("--m", type=_m, default=17)
    s.add_argument("--box", type=_box, default=[-1.0, 1.0])
    s.add_argument("--data", default="zero", help="zero | quadratic | quadratic:d1,..,dn")
    s.add_argument("--tol", type=float, default=solver.SolveConfig.tol_residual)
    s.add_argument("--linear-solver", choices=["gmres", "direct"], default="gmres")
    s.set_defaults(func=cmd_solve)

    q = sub.add_parser("probe", parents=[common], help="proof-mechanism probes")
    q.add_argument("--kind", choices=["pogorelov", "rescale", "warren", "phase", "diffeq"], required=True)
    q.add_argument("--field", nargs="+", help="solve artifact(s): field.json or its directory")
    q.add_argument("--alpha", type=float, default=50.0)
    q.add_argument("--variant", choices=probe.VARIANTS, default="largest-eigenvalue")
    q.add_argument("--count", type=_positive_int, default=1000)
    q.add_argument("--box", type=_box, default=[-3.0, 3.0])
    q.add_argument("--base", choices=sorted(probe.BASES), default="quad_bump")
    q.add_argument("--R", type=_R_list, default=[1.0, 2.0, 4.0])
    q.add_argument("--A", type=float, default=0.0)
    q.add_argument("--grid-m", type=int, default=41)
    q.add_argument("--tol", type=float, default=1e-10)
    q.set_defaults(func=cmd_probe)

    r = sub.add_parser("report", parents=[common], help="aggregate manifests")
    r.add_argument("inputs", nargs="*", help="manifest JSON files")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "report" and not args.inputs:
        parser.error("report needs at least one manifest")
    if args.command == "solve" and args.data != "zero":
        try:
            _parse_data(args.data, args.n)
        except argparse.ArgumentTypeError as e:
            parser.error(str(e))
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
