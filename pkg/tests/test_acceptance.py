"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``PASS`` or ``FAIL`` line (visible with ``-s`` and in
the ``-v`` log) and then asserts.  Run alone with::

    pytest tests/test_acceptance.py -v -s
"""
from __future__ import annotations

import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from sigma2lab import cli, ineq, probe, solver
from sigma2lab.solver import GridDomain, Quadratic, newton_solve

SAMPLES = 1_000_000
WORKERS = min(4, os.cpu_count() or 1)


@pytest.fixture
def report(capsys):
    def emit(k: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n[criterion {k}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return emit


def test_criterion_1_inequality_suites(report):
    t0 = time.perf_counter()
    lines, ok = [], True
    for suite, name in cli.SUITES.items():
        params = {"eps": 1 / 25} if suite == "eps" else {}
        cfg = ineq.SampleConfig(n=3, count=SAMPLES, seed=2024, workers=WORKERS)
        rep = ineq.sample_verify(name, cfg, tol=1e-9, **params)
        ok &= rep.violations == 0 and rep.evaluated == SAMPLES
        if suite == "eps":
            ok &= {"discriminant", "la"} <= set(rep.part_min_margins)
        lines.append(f"{suite}={rep.violations}/{rep.evaluated} (min {rep.min_margin:.2e})")
    dt = time.perf_counter() - t0
    ok &= dt <= 120.0
    report(1, ok, "violations " + ", ".join(lines) + f"; {dt:.1f}s")


def test_criterion_2_eps_frontier(report):
    grid = [0.0, 0.01, 0.02, 0.03, 0.04, 0.049]
    fr = ineq.epsilon_frontier(ineq.SampleConfig(n=3, count=200_000, seed=11, workers=WORKERS), grid)
    margins = [r.min_margin for r in fr.rows]
    ok = all(m >= 0 for m in margins) and all(r.violations == 0 for r in fr.rows)
    ok &= fr.is_monotone() and fr.largest_admissible() == 0.049
    report(2, ok, "min margins " + ", ".join(f"{r.eps:g}:{r.min_margin:.2e}" for r in fr.rows)
           + f"; monotone={fr.is_monotone()}")


def _exact_quadratic(n):
    if n == 2:
        return Quadratic(np.diag([2.0, 0.5]), np.array([0.3, -0.1]), 0.2)
    c = 1 / math.sqrt(3)
    return Quadratic(c * np.eye(3), np.array([0.1, 0.0, -0.2]), -c / 2)


def test_criterion_3_solver_exactness(report):
    parts, ok = [], True
    for n in (2, 3):
        g = _exact_quadratic(n)
        for m in (9, 17, 33):
            dom = GridDomain.cube(n, m)
            exact = g(dom.mesh())
            a = newton_solve(dom, g, initial="data")
            b = newton_solve(dom, g, initial="barrier")
            ea = np.abs(a.field.values - exact).max()
            eb = np.abs(b.field.values - exact).max()
            ok &= ea <= 1e-9 and eb <= 1e-9 and a.iterations <= 6 and b.iterations <= 25
            parts.append(f"n={n},m={m}: err {max(ea, eb):.1e}, its {a.iterations}/{b.iterations}")
    report(3, ok, "; ".join(parts))


@pytest.fixture(scope="module")
def zero_solves():
    return {hw: newton_solve(GridDomain.cube(3, 17, half_width=hw)) for hw in (1.0, 2.0)}


def test_criterion_4_barrier_sandwich(report, zero_solves):
    rep = zero_solves[1.0]
    dom = rep.field.domain
    w = solver.barrier_values(dom, solver.barrier_level(dom))
    u = rep.field.values
    ok = bool(np.all(w <= u) and np.all(u <= 0)) and rep.converged and rep.gamma2_certified
    report(4, ok, f"min(u-w)={np.min(u - w):.3e}, max u={u.max():.1e}, "
           f"gamma2={rep.gamma2_certified}, min ellipticity {rep.min_ellipticity:.3e}")


def test_criterion_5_pogorelov(report, zero_solves):
    small, big = (probe.pogorelov_quantity(zero_solves[hw]) for hw in (1.0, 2.0))
    ok = small.finite and big.finite
    ok &= small.clamped_strictly_interior and big.clamped_strictly_interior
    ok &= math.isclose(big.diameter, 2 * small.diameter)
    report(5, ok, f"d={small.diameter:.4g}: {small.clamped_value:.4e} at {small.clamped_argmax}; "
           f"2d={big.diameter:.4g}: {big.clamped_value:.4e} at {big.clamped_argmax}")


def test_criterion_6_warren(report):
    rep = probe.warren_validate(1000, 7, (-3.0, 3.0), tol=1e-10)
    axis = all(g.witness[0] == 0 and g.witness[1] == 0 for g in rep.growth)
    ok = rep.max_abs_residual <= 1e-10 and rep.gamma2_all and rep.growth_violated_all and axis
    report(6, ok, f"max|sigma2-1|={rep.max_abs_residual:.2e}, gamma2={rep.gamma2_all}, "
           f"growth violated for {sum(not g.holds for g in rep.growth)}/{len(rep.growth)} fits, "
           f"witness t={rep.growth[0].witness[2]:g}")


def test_criterion_7_phase(report):
    rep = probe.phase_identity_check(10_000, 7)
    ok = rep.count == 10_000 and rep.max_phase_error <= 1e-10 and rep.phase_violations == 0
    report(7, ok, f"max|phase-pi/2|={rep.max_phase_error:.2e} over {rep.count} samples")


def test_criterion_8_rescaling(report):
    q = probe.rescale_family(probe.RescaleSpec(probe.quad(3), (1, 2, 4)), m=41)
    bump = probe.rescale_family(probe.RescaleSpec(probe.quad_bump(3), (1, 2, 4)), m=41)
    ok = q.sup_hess_spread() <= 1e-9 and bump.osc_non_increasing(0.1)
    report(8, ok, f"quad spread {q.sup_hess_spread():.1e}; bump osc "
           + ", ".join(f"R={r.R:g}:{r.osc:.3e}" for r in bump.rows))


def _pipeline(root: Path):
    root.mkdir()
    cwd = os.getcwd()
    os.chdir(root)
    try:
        codes = [
            cli.main(["verify", "--suite", "all", "--count", "50000", "--out", "verify"]),
            cli.main(["solve", "--n", "3", "--m", "17", "--out", "solve_a"]),
            cli.main(["solve", "--n", "3", "--m", "17", "--box=-2,2", "--out", "solve_b"]),
            cli.main(["solve", "--n", "3", "--m", "9", "--out", "solve_c"]),
            cli.main(["solve", "--n", "3", "--m", "9", "--data", "quadratic", "--out", "solve_q"]),
            cli.main(["probe", "--kind", "pogorelov", "--field", "solve_a", "solve_b", "--out", "probe"]),
            cli.main(["probe", "--kind", "diffeq", "--field", "solve_c", "solve_a", "--out", "probe"]),
            cli.main(["probe", "--kind", "warren", "--out", "probe"]),
            cli.main(["probe", "--kind", "phase", "--count", "10000", "--out", "probe"]),
            cli.main(["probe", "--kind", "rescale", "--out", "probe"]),
        ]
        manifests = sorted(str(p) for p in Path(".").glob("*/manifest_*.json"))
        codes.append(cli.main(["report", *manifests, "--out", "report"]))
    finally:
        os.chdir(cwd)
    files = {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}
    return codes, files


def test_criterion_9_determinism(report, tmp_path, capsys):
    codes1, a = _pipeline(tmp_path / "run1")
    codes2, b = _pipeline(tmp_path / "run2")
    same = a == b
    diff = sorted(k for k in set(a) | set(b) if a.get(k) != b.get(k))
    ok = same and codes1 == codes2 and all(c == 0 for c in codes1)
    report(9, ok, f"{len(a)} artifacts, byte-identical={same}, exit codes {codes1}"
           + (f", differing: {diff}" if diff else ""))
