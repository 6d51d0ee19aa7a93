"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or directly with ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import filecmp
import json
import math
import os
import subprocess
import sys
from fractions import Fraction
from math import comb

import numpy as np
import pytest

from nodalab.cli import RunConfig, sweep_rows
from nodalab.dividing import (
    DividingConfig,
    Oracle,
    check_dividing_lemma,
    check_dividing_oracle,
    class_count_formula,
    class_counts,
    run_dividing,
    series_bound,
)
from nodalab.doubling import ChartView, Cube, center_grid, doubling_index, global_doubling_bound, vanishing_order
from nodalab.field import Potential, closed_form_solution, solve_eigenpair
from nodalab.frequency import admissible, doubling_from_evals, evaluate_frequency, frequency_profile
from nodalab.geometry import DomainSpec, build_domain, straighten
from nodalab.lifted import BallRegion, QuadratureConfig, ball_integrals, lift
from nodalab.nodal import RegionDecomposition, extract_nodal, nodal_length_of

RESULTS: list[str] = []


def report(n: int, title: str, passed: bool, detail: str) -> None:
    line = f"criterion {n:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    RESULTS.append(line)
    print(line)
    assert passed, line


def _j0_zero() -> float:
    # bisection on the power series of J0, independent of the package's Bessel code
    j0 = lambda x: sum((-1) ** k * (x / 2) ** (2 * k) / math.factorial(k) ** 2 for k in range(60))
    a, b = 2.0, 3.0
    for _ in range(200):
        c = 0.5 * (a + b)
        a, b = (c, b) if j0(c) > 0 else (a, c)
    return 0.5 * (a + b)


SQUARE_MODES = [(1, 1), (2, 1), (2, 2)]
DISK_MODES = [(1, 0), (1, 1), (1, 2)]
SQ_CENTERS = [(0.5, 0.5), (0.3, 0.7), (0.2, 0.25), (0.75, 0.4), (0.12, 0.5), (0.5, 0.08)]
DISK_CENTERS = [(0.0, 0.0), (0.5, 0.3), (-0.3, -0.4), (0.0, 0.75), (0.85, 0.0), (-0.6, 0.2)]
RADII = np.linspace(0.04, 0.4, 10)


def _suite():
    """Consecutive admissible radius pairs for the six modes."""
    pairs = []
    for name, modes, centers in (("square_mode", SQUARE_MODES, SQ_CENTERS), ("disk_mode", DISK_MODES, DISK_CENTERS)):
        for mode in modes:
            lf = lift(closed_form_solution(name, *mode, mesh_h=1 / 16))
            for c in centers:
                prof = frequency_profile(lf, c, RADII)
                ev = [e for e, a in zip(prof.evals, prof.admissible) if a]
                pairs += [(f"{name}{mode}", c, a, b) for a, b in zip(ev[:-1], ev[1:])]
    return pairs


_SUITE: list = []


def suite():
    if not _SUITE:
        _SUITE.extend(_suite())
    return _SUITE


def test_frequency_anchor(harmonic):
    radii = np.geomspace(0.05, 1.5, 8)
    worst_N = worst_M = 0.0
    for k in (1, 2, 3):
        for r in radii:
            worst_N = max(worst_N, abs(evaluate_frequency(harmonic[k], (0.0, 0.0), r).N - 2 * k))
            worst_M = max(worst_M, abs(doubling_index(harmonic[k], (0.0, 0.0), r).M - 2 * k))
    report(1, "frequency anchor", worst_N <= 1e-3 and worst_M <= 1e-3, f"max |N-2k| = {worst_N:.2e}, max |M-2k| = {worst_M:.2e}")


def test_integration_by_parts_identity():
    cfg = QuadratureConfig(order=32, depth=6, rtol=1e-12, max_order=256)
    balls = []
    for name, mode, centers in (
        ("square_mode", (1, 1), [(0.5, 0.5), (0.1, 0.5), (0.05, 0.05), (0.3, 0.9), (0.7, 0.2)]),
        ("disk_mode", (1, 0), [(0.0, 0.0), (0.8, 0.0), (0.0, -0.85), (0.4, 0.4), (-0.6, 0.5)]),
    ):
        lf = lift(closed_form_solution(name, *mode, mesh_h=1 / 16))
        for c in centers:
            for r in (0.1, 0.22, 0.3, 0.45):
                if admissible(lf.domain, c, r) and len([b for b in balls if b[0] is lf]) < 10:
                    balls.append((lf, c, r))
    worst, clipped = 0.0, 0
    for lf, c, r in balls:
        bi = ball_integrals(lf, BallRegion(c, r), cfg)
        worst = max(worst, bi.mismatch / abs(bi.I_ibp.value))
        clipped += bi.H.clipped
    ok = len(balls) == 20 and clipped >= 5 and worst <= 1e-4
    report(2, "integration-by-parts identity", ok, f"{len(balls)} balls ({clipped} clipped), max rel diff = {worst:.2e}")


def test_monotonicity():
    pairs = suite()
    bad = [(m, c, a.r, b.r) for m, c, a, b in pairs if b.N - a.N < -(a.quadrature_error + b.quadrature_error)]
    report(3, "monotonicity", len(pairs) >= 200 and not bad, f"{len(pairs)} checks, {len(bad)} violations")


def test_doubling_inequalities(harmonic):
    pairs = suite()
    reps = [doubling_from_evals(a, b) for _, _, a, b in pairs]
    bad = [r for r in reps if not r.passed]
    worst = min(min(r.upper_slack, r.lower_slack) for r in reps)
    eq = 0.0
    for k in (1, 2, 3):
        a = evaluate_frequency(harmonic[k], (0.0, 0.0), 0.2)
        b = evaluate_frequency(harmonic[k], (0.0, 0.0), 0.8)
        d = doubling_from_evals(a, b)
        eq = max(eq, abs(d.upper_slack) / d.log_ratio, abs(d.lower_slack) / d.log_ratio)
    ok = len(reps) >= 200 and not bad and eq <= 1e-6
    report(4, "doubling inequalities", ok, f"{len(reps)} checks, {len(bad)} failures, min slack {worst:.3e}, harmonic equality {eq:.1e}")


def test_global_bound():
    modes = sorted(((k, m) for k in range(1, 8) for m in range(1, 8)), key=lambda p: (p[0] ** 2 + p[1] ** 2, p))[:20]
    dom = closed_form_solution("square_mode", 1, 1, mesh_h=1 / 8).domain
    grid = center_grid(dom, 1 / 8)
    Cs = []
    for k, m in modes:
        lf = lift(closed_form_solution("square_mode", k, m, mesh_h=1 / 8))
        Cs.append(global_doubling_bound(lf, grid, [0.4, 0.2, 0.1, 0.05]).C)
    ratio = max(Cs) / min(Cs)
    report(5, "global doubling bound", ratio < 2, f"M/(1+sqrt(lambda)) in [{min(Cs):.3f}, {max(Cs):.3f}], ratio {ratio:.3f} over 20 modes")


def test_vanishing_order():
    got = []
    for m in (0, 1, 2):
        lf = lift(closed_form_solution("disk_mode", 1, m, mesh_h=1 / 16))
        got.append(vanishing_order(lf, (0.0, 0.0), np.geomspace(0.01, 0.1, 6)).slope)
    ok = all(abs(g - m) <= 0.1 for m, g in zip((0, 1, 2), got))
    report(6, "vanishing order", ok, "orders " + ", ".join(f"{g:.3f}" for g in got) + " for m = 0, 1, 2")


def test_eigen_solver():
    sq = build_domain(DomainSpec.rectangle(1, 1), 512)
    exact = 2 * math.pi**2
    errs = {h: solve_eigenpair(sq, Potential.constant(0.0), 1, h).eigenvalue - exact for h in (1 / 16, 1 / 32, 1 / 64)}
    order = math.log2(abs(errs[1 / 32]) / abs(errs[1 / 64]))
    rel_sq = abs(errs[1 / 64]) / exact
    disk = build_domain(DomainSpec.unit_disk(), 512)
    j = _j0_zero()
    rel_disk = abs(solve_eigenpair(disk, Potential.constant(0.0), 1, 1 / 48).eigenvalue - j * j) / (j * j)
    ok = rel_sq <= 5e-3 and order >= 1.8 and rel_disk <= 5e-3
    report(7, "eigen-solver validation", ok, f"square rel err {rel_sq:.2e}, observed order {order:.2f}, disk rel err {rel_disk:.2e}")


def test_nodal_anchor():
    f = closed_form_solution("square_mode", 3, 2, mesh_h=1 / 64)
    L = {h: extract_nodal(f.resample(h)).total_length for h in (1 / 64, 1 / 128, 1 / 256)}
    e = [abs(L[h] - 3.0) for h in (1 / 64, 1 / 128, 1 / 256)]
    ratio = max(e[1] / e[0], e[2] / e[1])
    sq = f.domain
    circle = nodal_length_of(sq, lambda p: (p[:, 0] - 0.5) ** 2 + (p[:, 1] - 0.5) ** 2 - 0.25, 1 / 256)
    ok = e[2] <= 0.03 and abs(circle - math.pi) <= 0.01 * math.pi and ratio <= 0.6
    report(8, "nodal anchor", ok, f"length {L[1 / 256]:.4f} at h=1/256, circle {circle:.5f}, convergence ratio {ratio:.3f}")


def test_interior_bound():
    fields = [closed_form_solution("square_mode", *m, mesh_h=1 / 128) for m in [(1, 2), (2, 1), (2, 2), (1, 3), (3, 1)]]
    fields += [closed_form_solution("disk_mode", *m, mesh_h=1 / 96) for m in [(1, 1), (1, 2), (2, 0), (1, 3), (2, 1)]]
    per_domain, pooled = {}, []
    for r in (0.05, 0.1):
        for f in fields:
            lam = lift(f).lam
            L = extract_nodal(f, RegionDecomposition(r)).region_lengths["interior"]
            c = L * r / (1 + math.sqrt(lam))
            per_domain.setdefault((f.domain.kind, r), []).append(c)
            pooled.append(c)
    spreads = {k: max(v) / min(v) for k, v in per_domain.items()}
    ok = max(spreads.values()) <= 2
    detail = ", ".join(f"{k[0]} r={k[1]}: {s:.2f}" for k, s in spreads.items())
    report(9, "interior bound", ok, f"per-domain spread {detail}; pooled spread {max(pooled) / min(pooled):.2f}")


def test_nodal_length_sweep():
    cfg = RunConfig(
        domain={"kind": "rectangle", "width": 1.0, "height": 1.0},
        mesh_h=1 / 128,
        sweep={"amplitudes": [0.0, 0.5, 1.0, 2.0, 4.0], "indices": list(range(2, 11)), "frequency": 3.0},
    )
    rows = sweep_rows(cfg)
    ratios = [r[5] for r in rows]
    pooled = max(ratios) / min(ratios)
    flat = [r[6] for r in rows if r[0] == 0.0]
    branch = max(flat) / min(flat)
    per_mode = {}
    for r in rows:
        per_mode.setdefault(r[1], []).append(r[5])
    worst_mode = max(max(v) / min(v) for v in per_mode.values())
    ok = pooled <= 4 and branch <= 2
    report(
        10,
        "nodal length sweep",
        ok,
        f"pooled max/min {pooled:.3f} (need <= 4), a=0 branch {branch:.3f} (need <= 2), worst single-mode spread over a {worst_mode:.3f}",
    )


def test_dividing_combinatorics():
    notes, ok = [], True
    cfg = DividingConfig(A=3, n=2, M0=1.8, enforce_A0_gate=True)
    ok &= cfg.kappa == Fraction(17, 18)
    notes.append(f"kappa {cfg.kappa}")
    runs = 0
    for A in (3, 5, 7, 9):
        c = DividingConfig(A=A, M0=1.8, enforce_A0_gate=True)
        for oracle in ("halving", "worst_case"):
            for M_Q in (2.0, 5.0, 17.0, 100.0, 1e4):
                ok &= run_dividing(Oracle(oracle), M_Q, c, 30 if oracle == "worst_case" else 60).within_series
                runs += 1
    notes.append(f"{runs} runs within series")
    counts = class_counts(Oracle("worst_case"), 3, 2, 20)
    exact = all(c == class_count_formula(3, 2, k, j) == comb(k, j) * 8 ** (k - j) for k, row in enumerate(counts, 1) for j, c in row.items())
    ok &= exact
    notes.append(f"counting identity exact for k<=20: {exact}")
    Cs = [series_bound(DividingConfig(A=A, M0=1.8, enforce_A0_gate=True), 17.0).fitted_C for A in (3, 5, 7, 9)]
    ok &= all(C <= 2 for C in Cs)
    notes.append("fitted C " + ", ".join(f"{float(C):.3f}" for C in Cs))
    report(11, "dividing combinatorics", bool(ok), "; ".join(notes))


def test_dividing_field_check():
    lf = lift(closed_form_solution("square_mode", 2, 2, mesh_h=1 / 16))
    view = ChartView(lf, straighten(lf.domain, (0.5, 0.0), 0.2))
    rep = check_dividing_lemma(view, Cube(-0.009, 0.0, 0.018), A=3, M0=2.0)
    cex = check_dividing_oracle(Oracle("counterexample", bad_layer=2), 17.0, 3)
    minima = ", ".join(f"{l.min_M:.2f}" for l in rep.layers)
    ok = rep.passed and not cex.passed
    report(12, "dividing field check", ok, f"M(Q) = {rep.M_Q:.2f}, layer minima {minima} vs {rep.threshold:.2f}; counterexample reported {'PASS' if cex.passed else 'FAIL'}")


def test_determinism(tmp_path):
    cfg = {
        "mesh_h": 1 / 64,
        "sweep": {"amplitudes": [0.0, 0.5, 1.0, 2.0, 4.0], "indices": [2, 3, 4, 5], "frequency": 3.0},
        "seed": 11,
    }
    outs, codes = [], []
    for i, threads in enumerate(("1", "3")):
        p = tmp_path / f"c{i}.json"
        p.write_text(json.dumps({**cfg, "output": str(tmp_path / f"o{i}")}))
        # separate processes, so nothing is shared through in-memory caches;
        # the exit code reflects the sweep's own bound check, which is not at issue here
        env = {**os.environ, "NODALAB_THREADS": threads}
        codes.append(subprocess.run([sys.executable, "-m", "nodalab", "sweep", str(p)], env=env, capture_output=True).returncode)
        outs.append(tmp_path / f"o{i}" / "sweep")
    names = ["sweep.csv", "plot_bound_ratio.dat"]
    same = codes[0] == codes[1] and all(filecmp.cmp(outs[0] / n, outs[1] / n, shallow=False) for n in names)
    report(13, "determinism", same, "sweep CSVs bit-identical across repeated runs" if same else "sweep CSVs differ")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
