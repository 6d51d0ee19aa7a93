"""Command-line orchestration: ``nodalab <command> config.json``.

Commands write CSV tables, JSON summaries and columnar plot data under the
configured output directory.  The exit status is 0 only when every hard
invariant and every property check passed; failing checks are listed.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .geometry import DomainError, DomainSpec, build_domain, collar_params, straighten

THREADS_ENV = "NODALAB_THREADS"

# every check a report may cite; keys are stable identifiers
REGISTRY = {
    "monotonicity": "frequency is nondecreasing in r on certified balls",
    "star_shaped_collar": "distance certificate implies star-shaped clipped balls",
    "doubling_inequalities": "H(r2)/H(r1) lies between the two frequency powers",
    "changing_center": "frequency at a nearby center is controlled",
    "bridge_N_M": "doubling index and frequency bound each other",
    "de_giorgi": "sup bounded by the L2 norm on a larger ball",
    "almost_monotonicity": "small-radius doubling index bounded by the large-radius one",
    "global_doubling": "doubling index grows at most like sqrt(lambda)",
    "vanishing_order": "order of vanishing bounded by C(sqrt(lambda)+1)",
    "interior_nodal": "nodal length away from the boundary",
    "interior_cube_nodal": "nodal measure of cubes far from the boundary",
    "boundary_cube_nodal": "nodal measure of cubes touching the boundary",
    "smallness_propagation": "Cauchy data smallness propagates with an exponent",
    "dividing": "every layer of a subdivision contains a halved cube",
    "nodal_sweep": "total nodal length against the potential size",
}


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class DependencyError(RuntimeError):
    pass


# ------------------------------------------------------------------ config
@dataclass
class RunConfig:
    domain: dict = field(default_factory=lambda: {"kind": "rectangle", "width": 1.0, "height": 1.0})
    potential: dict = field(default_factory=lambda: {"family": "constant", "offset": 0.0})
    fields: list = field(default_factory=lambda: [{"eigen": 2}])
    mesh_h: float = 1 / 64
    centers: list = field(default_factory=list)
    radii: list = field(default_factory=lambda: [0.05, 0.1, 0.15, 0.2, 0.25, 0.3])
    dividing: dict = field(default_factory=lambda: {"A": 3, "M0": 2.0, "oracle": "halving", "M_Q": 17.0})
    sweep: dict = field(default_factory=lambda: {"amplitudes": [0.0, 0.5, 1.0, 2.0, 4.0], "indices": [2, 3, 4, 5, 6], "frequency": 3.0})
    collar_R0: float = 1.0
    gate_exponent: float = 1.0
    seed: int = 0
    output: str = "out"

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @staticmethod
    def from_dict(d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("$", "config must be an object")
        known = set(RunConfig.__dataclass_fields__)
        for k in d:
            if k not in known:
                raise ConfigError(k, "unknown field")
        cfg = RunConfig(**copy.deepcopy(d))
        cfg.validate()
        return cfg

    def validate(self) -> None:
        try:
            DomainSpec.from_dict(self.domain)
        except (DomainError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError("domain", str(exc)) from None
        fam = self.potential.get("family")
        if fam not in ("constant", "sine_product"):
            raise ConfigError("potential.family", f"unknown family {fam!r}")
        for key in ("offset", "amplitude", "frequency"):
            if key in self.potential and not isinstance(self.potential[key], (int, float)):
                raise ConfigError(f"potential.{key}", "must be a number")
        if not isinstance(self.fields, list) or not self.fields:
            raise ConfigError("fields", "must be a nonempty list")
        for i, f in enumerate(self.fields):
            if not isinstance(f, dict):
                raise ConfigError(f"fields[{i}]", "must be an object")
            if "eigen" in f:
                if not isinstance(f["eigen"], int) or f["eigen"] < 1:
                    raise ConfigError(f"fields[{i}].eigen", "must be an integer >= 1")
            elif "closed_form" in f:
                if f["closed_form"] not in ("square_mode", "disk_mode", "harmonic_poly", "constant"):
                    raise ConfigError(f"fields[{i}].closed_form", f"unknown closed form {f['closed_form']!r}")
                if not all(isinstance(a, int) for a in f.get("args", [])):
                    raise ConfigError(f"fields[{i}].args", "must be integers")
            else:
                raise ConfigError(f"fields[{i}]", "needs 'eigen' or 'closed_form'")
        if not isinstance(self.mesh_h, (int, float)) or not 0 < self.mesh_h <= 0.25:
            raise ConfigError("mesh_h", "must lie in (0, 0.25]")
        for i, c in enumerate(self.centers):
            if not (isinstance(c, list) and len(c) == 2 and all(isinstance(v, (int, float)) for v in c)):
                raise ConfigError(f"centers[{i}]", "must be a pair of numbers")
        if any(not isinstance(r, (int, float)) or not 0 < r < 1 for r in self.radii):
            raise ConfigError("radii", "entries must lie in (0, 1)")
        if sorted(self.radii) != list(self.radii) or len(set(self.radii)) != len(self.radii):
            raise ConfigError("radii", "must be strictly increasing")
        d = self.dividing
        A = d.get("A", 3)
        if not isinstance(A, int) or A < 3 or A % 2 == 0:
            raise ConfigError("dividing.A", "must be an odd integer >= 3")
        if not isinstance(d.get("M0", 2.0), (int, float)) or d.get("M0", 2.0) <= 1:
            raise ConfigError("dividing.M0", "must exceed 1")
        if d.get("oracle", "halving") not in ("halving", "worst_case", "counterexample", "field"):
            raise ConfigError("dividing.oracle", "unknown oracle")
        s = self.sweep
        if any(not isinstance(a, (int, float)) for a in s.get("amplitudes", [])):
            raise ConfigError("sweep.amplitudes", "must be numbers")
        if any(not isinstance(k, int) or k < 1 for k in s.get("indices", [])):
            raise ConfigError("sweep.indices", "must be integers >= 1")
        if not isinstance(self.seed, int):
            raise ConfigError("seed", "must be an integer")


def set_path(d: dict, path: str, value: Any) -> None:
    keys = [int(k) if k.isdigit() else k for k in path.split(".")]
    cur = d
    for k in keys[:-1]:
        try:
            cur = cur[k]
        except (KeyError, IndexError, TypeError):
            raise ConfigError(path, "no such field") from None
    if isinstance(cur, list) and not (isinstance(keys[-1], int) and keys[-1] < len(cur)):
        raise ConfigError(path, "index out of range")
    if not isinstance(cur, (dict, list)):
        raise ConfigError(path, "no such field")
    cur[keys[-1]] = value


def load_config(path: str | None, overrides: list[str] = ()) -> RunConfig:
    base = RunConfig().to_dict()
    if path:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("$", f"malformed JSON: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("$", "config must be an object")
        for k, v in user.items():
            if k not in base:
                raise ConfigError(k, "unknown field")
            base[k] = v
    for ov in overrides:
        if "=" not in ov:
            raise ConfigError(ov, "overrides take the form path=value")
        k, v = ov.split("=", 1)
        try:
            val = json.loads(v)
        except json.JSONDecodeError:
            val = v
        set_path(base, k, val)
    return RunConfig.from_dict(base)


# ------------------------------------------------------------------ reports
@dataclass
class StudyReport:
    command: str
    records: list = field(default_factory=list)
    manifest: dict = field(default_factory=dict)

    def add(self, check: str, inputs: dict, constant: Any, passed: bool, **extra) -> None:
        if check not in REGISTRY and check != "hard_invariant":
            raise KeyError(f"check {check!r} is not registered")
        self.records.append({"check": check, "inputs": inputs, "constant": constant, "passed": bool(passed), **extra})

    @property
    def failures(self) -> list:
        return [r for r in self.records if not r["passed"]]

    def write(self, out: Path) -> None:
        with open(out / "report.json", "w") as fh:
            json.dump({"command": self.command, "manifest": self.manifest, "records": self.records}, fh, indent=2, sort_keys=True, default=_jsonable)


def _jsonable(x):
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.bool_,)):
        return bool(x)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _finite(x: float):
    return x if math.isfinite(x) else repr(x)


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _pmap(fn: Callable, items: list) -> list:
    n = _threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(n) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------- builders
def _domain(cfg: RunConfig) -> DomainSpec:
    return build_domain(DomainSpec.from_dict(cfg.domain), 512)


def _potential(cfg: RunConfig):
    from .field import Potential

    p = cfg.potential
    if p["family"] == "constant":
        return Potential.constant(p.get("offset", 0.0))
    return Potential.sine_product(p.get("amplitude", 0.0), p.get("frequency", 3.0))


def _fields(cfg: RunConfig) -> list:
    from .field import closed_form_solution, solve_eigenpairs

    out, eig = [], []
    for f in cfg.fields:
        if "closed_form" in f:
            out.append(closed_form_solution(f["closed_form"], *f.get("args", []), mesh_h=cfg.mesh_h))
        else:
            eig.append(f["eigen"])
            out.append(None)
    if eig:
        solved = iter(solve_eigenpairs(_domain(cfg), _potential(cfg), eig, cfg.mesh_h))
        out = [f if f is not None else next(solved) for f in out]
    return out


def _centers(cfg: RunConfig, domain: DomainSpec) -> np.ndarray:
    if cfg.centers:
        return np.asarray(cfg.centers, dtype=float)
    xmin, xmax, ymin, ymax = domain.bounding_box
    g = np.linspace(0.2, 0.8, 3)
    pts = np.stack(np.meshgrid(xmin + g * (xmax - xmin), ymin + g * (ymax - ymin)), axis=-1).reshape(-1, 2)
    return pts[domain.contains(pts)]


def _outdir(cfg: RunConfig, name: str) -> Path:
    p = Path(cfg.output) / name
    p.mkdir(parents=True, exist_ok=True)
    return p


def _manifest(cfg: RunConfig) -> dict:
    from .lifted import QuadratureConfig

    q = QuadratureConfig()
    return {"mesh_h": cfg.mesh_h, "quadrature_order": q.order, "quadrature_depth": q.depth, "seed": cfg.seed, "config": cfg.to_dict()}


# ---------------------------------------------------------------- commands
def cmd_solve(cfg: RunConfig) -> StudyReport:
    out = _outdir(cfg, "solve")
    rep = StudyReport("solve", manifest=_manifest(cfg))
    for f in _fields(cfg):
        stem = f.name.replace("(", "_").replace(")", "").replace(",", "_")
        f.export_csv(str(out / f"{stem}.csv"))
        interior = np.max(np.abs(f.values[~f.mesh.boundary]))
        trace = float(np.max(np.abs(f.values[f.mesh.boundary]))) if f.dirichlet and f.mesh.boundary.any() else 0.0
        tol = f.mesh.h**2 * max(1.0, f.eigenvalue) if f.source == "computed" else 0.0
        rep.add("hard_invariant", {"field": f.name, "kind": "dirichlet_trace"}, trace / interior, trace <= 1e-8 * interior)
        rep.add("hard_invariant", {"field": f.name, "kind": "residual"}, f.residual, f.residual <= max(tol, 1e-12), tolerance=tol)
    rep.write(out)
    return rep


def cmd_frequency(cfg: RunConfig) -> StudyReport:
    from .frequency import (
        admissible,
        check_changing_center,
        check_monotonicity,
        doubling_from_evals,
        frequency_profile,
    )
    from .lifted import lift

    out = _outdir(cfg, "frequency")
    rep = StudyReport("frequency", manifest=_manifest(cfg))
    radii = np.asarray(cfg.radii, dtype=float)
    for f in _fields(cfg):
        lf = lift(f)
        for x0 in _centers(cfg, lf.domain):
            prof = frequency_profile(lf, x0, radii)
            prof.export_csv(str(out / f"profile_{len(rep.records)}.csv"))
            inputs = {"field": f.name, "center": x0.tolist()}
            cert_ok = all(s for a, s in zip(prof.admissible, prof.star_shaped) if a)
            rep.add("star_shaped_collar", inputs, sum(prof.admissible), cert_ok)
            if sum(prof.admissible) >= 4:
                mono = check_monotonicity(prof)
                rep.add("monotonicity", inputs, mono.worst_gap, mono.passed, violations=len(mono.violations), checks=mono.n_checks)
            adm = [e for e, a in zip(prof.evals, prof.admissible) if a]
            for e1, e2 in zip(adm[:-1], adm[1:]):
                d = doubling_from_evals(e1, e2)
                rep.add("doubling_inequalities", {**inputs, "r1": e1.r, "r2": e2.r}, min(d.upper_slack, d.lower_slack), d.passed)
            # a nearby second center inside B_{r/4}
            r = radii[len(radii) // 2]
            x1 = x0 + np.array([r / 8, 0.0])
            if lf.domain.contains(x1[None])[0] and admissible(lf.domain, x0, r):
                try:
                    cc = check_changing_center(lf, x0, x1, r, r / 2)
                    rep.add("changing_center", {**inputs, "x1": x1.tolist(), "r": r}, _finite(cc.C), math.isfinite(cc.C))
                except ValueError as exc:
                    rep.add("changing_center", {**inputs, "x1": x1.tolist(), "r": r}, None, True, skipped=str(exc))
    rep.write(out)
    return rep


def cmd_doubling(cfg: RunConfig) -> StudyReport:
    from .doubling import (
        center_grid,
        check_almost_monotonicity,
        check_bridge_N_M,
        doubling_ladder,
        global_doubling_bound,
        vanishing_order,
    )
    from .field import check_de_giorgi
    from .frequency import admissible
    from .lifted import lift

    out = _outdir(cfg, "doubling")
    rep = StudyReport("doubling", manifest=_manifest(cfg))
    radii = sorted(cfg.radii)
    for f in _fields(cfg):
        lf = lift(f)
        rows = []
        for x0 in _centers(cfg, lf.domain):
            inputs = {"field": f.name, "center": x0.tolist()}
            for ev in doubling_ladder(lf, x0, radii):
                rows.append([ev.center[0], ev.center[1], ev.r, ev.M])
            r = radii[0]
            if admissible(lf.domain, x0, 2 * r):
                b = check_bridge_N_M(lf, x0, r, 0.5)
                rep.add("bridge_N_M", {**inputs, "r": r, "eta": 0.5}, [b.C1, b.C2], math.isfinite(b.C1) and math.isfinite(b.C2))
            am = check_almost_monotonicity(lf, x0, radii[:-1], radii[-1])
            rep.add("almost_monotonicity", inputs, am.C, math.isfinite(am.C), within_hypothesis=am.within_hypothesis)
            vo = vanishing_order(lf, x0, np.geomspace(0.01, 0.1, 6))
            rep.add("vanishing_order", inputs, vo.slope, vo.slope >= -0.05, reliable=vo.reliable)
            dg = check_de_giorgi(lf, x0, radii[:2], 0.5)
            rep.add("de_giorgi", inputs, dg["C"], math.isfinite(dg["C"]))
        write_csv(out / f"M_{f.name.replace(',', '_')}.csv", ["x0", "y0", "r", "M"], rows)
        if f.dirichlet:
            g = global_doubling_bound(lf, center_grid(lf.domain, 0.125), [0.4, 0.2, 0.1, 0.05])
            rep.add("global_doubling", {"field": f.name, "lambda": lf.lam}, g.C, math.isfinite(g.C), max_M=g.max_M)
    rep.write(out)
    return rep


def _flat_chart_view(lf):
    from .doubling import ChartView

    d = lf.domain
    if d.kind != "rectangle":
        return None
    anchor = (d.width / 2, 0.0)
    return ChartView(lf, straighten(d, anchor, min(d.width, d.height) / 4))


def cmd_nodal(cfg: RunConfig) -> StudyReport:
    from .doubling import Cube
    from .field import smallness_propagation_experiment
    from .lifted import lift
    from .nodal import (
        SmallnessGateError,
        boundary_cube_nodal,
        extract_nodal,
        interior_bound_study,
        interior_cube_nodal,
    )

    out = _outdir(cfg, "nodal")
    rep = StudyReport("nodal", manifest=_manifest(cfg))
    fields = _fields(cfg)
    for f in fields:
        ns = extract_nodal(f)
        ns.export_csv(str(out / f"nodal_{f.name.replace(',', '_')}.csv"))
        rep.add("hard_invariant", {"field": f.name, "kind": "nodal_length"}, ns.total_length, True, total_length=ns.total_length, degenerate=ns.degenerate_cells)
    dir_fields = [f for f in fields if f.dirichlet]
    for r in (0.05, 0.1):
        if dir_fields:
            st = interior_bound_study(dir_fields, r)
            rep.add("interior_nodal", {"r": r, "fields": [f.name for f in dir_fields]}, st.C, math.isfinite(st.C), rows=st.rows)
    for f in dir_fields:
        lf = lift(f)
        view = _flat_chart_view(lf)
        if view is None:
            continue
        side = 0.1
        try:
            b = boundary_cube_nodal(view, Cube(-side / 2, 0.0, side), gate_exponent=cfg.gate_exponent)
            rep.add("boundary_cube_nodal", {"field": f.name, "side": side}, b.ratio, math.isfinite(b.ratio), length=b.length, M_Q=b.M_Q, odd_error=b.odd_error)
        except SmallnessGateError as exc:
            rep.add("boundary_cube_nodal", {"field": f.name, "side": side}, None, True, gate="subdivide", detail=str(exc))
        side_i = 0.005
        ic = interior_cube_nodal(view, Cube(-side_i / 2, 10 * 3 * side_i + 0.01, side_i))
        rep.add("interior_cube_nodal", {"field": f.name, "side": side_i}, ic.ratio, math.isfinite(ic.ratio) and ic.distance_ok)
    # smallness propagation on a harmonic family with shrinking Cauchy data on the bottom face
    fam = []
    for k in range(2, 7):
        c = k * math.pi
        fam.append(
            (
                lambda y, c=c: np.sin(c * y[..., 0]) * np.exp(c * (y[..., 1] - 1)),
                lambda y, c=c: np.stack(
                    [c * np.cos(c * y[..., 0]) * np.exp(c * (y[..., 1] - 1)), c * np.sin(c * y[..., 0]) * np.exp(c * (y[..., 1] - 1))],
                    axis=-1,
                ),
            )
        )
    sp = smallness_propagation_experiment(fam, (0.0, 0.0, 1.0))
    rep.add("smallness_propagation", {"family": "sin(k pi y1) exp(k pi (y2-1)), k=2..6"}, sp.alpha, sp.consistent)
    rep.write(out)
    return rep


def cmd_divide(cfg: RunConfig) -> StudyReport:
    from .dividing import (
        DividingConfig,
        Oracle,
        check_dividing_lemma,
        check_dividing_oracle,
        class_count_formula,
        class_counts,
        dump_tree,
        run_dividing,
        run_dividing_field,
        series_bound,
    )

    out = _outdir(cfg, "divide")
    rep = StudyReport("divide", manifest=_manifest(cfg))
    d = cfg.dividing
    dc = DividingConfig(A=d.get("A", 3), M0=d.get("M0", 2.0), R=d.get("R", 1.0))
    oracle = d.get("oracle", "halving")
    summary = {"kappa": str(dc.kappa), "kappa_float": float(dc.kappa), "A0_gate": dc.A0_gate}
    if oracle == "field":
        from .doubling import ChartView, Cube
        from .lifted import lift

        lf = lift(_fields(cfg)[0])
        side = d.get("side", 0.018)
        view = ChartView(lf, straighten(lf.domain, d.get("anchor", [0.5, 0.0]), d.get("chart_radius", 0.2)))
        Q = Cube(-side / 2, 0.0, side)
        lem = check_dividing_lemma(view, Q, dc.A, dc.M0)
        rep.add("dividing", {"mode": "field", "side": side}, lem.M_Q, lem.passed, layer_minima=[l.min_M for l in lem.layers])
        tree = run_dividing_field(view, Q, dc, 1)
        (out / "tree.txt").write_text("\n".join(dump_tree(tree.nodes)) + "\n")
        summary["class_sizes"] = tree.class_sizes
        rep.add("hard_invariant", {"kind": "partition_exact"}, None, tree.partition_ok)
    else:
        M_Q = d.get("M_Q", 17.0)
        lem = check_dividing_oracle(Oracle(oracle), M_Q, dc.A)
        acc = run_dividing(Oracle(oracle), M_Q, dc, d.get("max_generations", 60))
        sb = series_bound(dc, M_Q)
        rep.add("dividing", {"mode": "synthetic", "oracle": oracle, "M_Q": M_Q}, float(acc.recursion_total), lem.passed and acc.within_series, lemma_passed=lem.passed)
        rows = [[g.generation, g.slabs, g.recursed_slabs, g.charged_slabs, g.active_per_slab, g.terminal_per_slab, float(g.charge)] for g in acc.generations]
        write_csv(out / "accounting.csv", ["generation", "slabs", "recursed", "charged", "active", "terminal", "charge"], rows)
        counts = class_counts(Oracle("worst_case"), dc.A, dc.n, 20)
        k0 = dc.k0(M_Q)
        ok = all(c == class_count_formula(dc.A, dc.n, k, j) for k, row in enumerate(counts, 1) for j, c in row.items())
        rep.add("hard_invariant", {"kind": "class_counts", "generations": 20}, None, ok)
        summary.update(
            k0=k0,
            depth=acc.depth,
            partial=acc.partial,
            recursion_total=float(acc.recursion_total),
            series_total=float(acc.closed_form_total),
            fitted_C=float(sb.fitted_C),
            fitted_C_loose=float(sb.fitted_C_loose),
        )
        rep.add("hard_invariant", {"kind": "series_chain"}, float(sb.fitted_C), sb.chain_ok and acc.within_series)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    rep.manifest["summary"] = summary
    rep.write(out)
    return rep


def sweep_rows(cfg: RunConfig) -> list[list]:
    from .field import Potential, solve_eigenpairs
    from .nodal import collar_decomposition_study, collar_width

    domain = _domain(cfg)
    collar = collar_params(domain)
    s = cfg.sweep
    freq = s.get("frequency", 3.0)

    def one(a):
        fs = solve_eigenpairs(domain, Potential.sine_product(a, freq), s["indices"], cfg.mesh_h)
        rows = []
        for f in fs:
            R = collar_width(f.potential.grad_sup_norm, cfg.collar_R0, collar.r0)
            st = collar_decomposition_study(f, R, collar.r0)
            rows.append([float(a), f.params["index"], st.lam, st.grad_V, st.total_length, st.bound_ratio, st.total_length / (1 + math.sqrt(st.lam)), len(st.band_lengths)])
        return rows

    return [row for rows in _pmap(one, list(s["amplitudes"])) for row in rows]


def cmd_sweep(cfg: RunConfig) -> StudyReport:
    out = _outdir(cfg, "sweep")
    rep = StudyReport("sweep", manifest=_manifest(cfg))
    rows = sweep_rows(cfg)
    header = ["a", "index", "lambda", "grad_V", "length", "bound_ratio", "small_gradient_ratio", "bands"]
    write_csv(out / "sweep.csv", header, rows)
    by_index: dict[int, list[float]] = {}
    for r in rows:
        by_index.setdefault(r[1], []).append(r[5])
    spread = {k: max(v) / min(v) for k, v in by_index.items() if min(v) > 0}
    ratios = [r[5] for r in rows if r[5] > 0]
    pooled = max(ratios) / min(ratios) if ratios else math.inf
    rep.add("nodal_sweep", {"amplitudes": cfg.sweep["amplitudes"], "indices": cfg.sweep["indices"]}, pooled, pooled <= 4, per_index=spread)
    flat = [r[6] for r in rows if r[0] == 0 and r[6] > 0]
    if flat:
        rep.add("nodal_sweep", {"branch": "small_gradient"}, max(flat) / min(flat), max(flat) / min(flat) <= 2)
    write_csv(out / "plot_bound_ratio.dat", ["a", "index", "bound_ratio"], [[r[0], r[1], r[5]] for r in rows])
    rep.write(out)
    return rep


def cmd_report(directory: str) -> StudyReport:
    root = Path(directory)
    files = sorted(root.glob("*/report.json")) if root.is_dir() else []
    if not files:
        raise DependencyError(f"no command reports under {directory!r}; run solve/frequency/... first")
    rep = StudyReport("report")
    for p in files:
        data = json.loads(p.read_text())
        for r in data["records"]:
            rep.records.append({**r, "command": data["command"]})
    seen = sorted({r["check"] for r in rep.records} - {"hard_invariant"})
    rep.manifest = {"sources": [str(p) for p in files], "coverage": {k: k in seen for k in REGISTRY}}
    rows = [[r["command"], r["check"], json.dumps(r["inputs"], sort_keys=True), json.dumps(r["constant"], default=_jsonable), int(r["passed"])] for r in rep.records]
    write_csv(root / "summary.csv", ["command", "check", "inputs", "constant", "passed"], rows)
    plot = root / "plotdata"
    plot.mkdir(exist_ok=True)
    for p in sorted(root.glob("*/*.dat")) + sorted(root.glob("*/*.csv")):
        if p.parent != plot and p.name != "summary.csv":
            (plot / f"{p.parent.name}_{p.name}").write_bytes(p.read_bytes())
    with open(root / "report.json", "w") as fh:
        json.dump({"manifest": rep.manifest, "records": rep.records}, fh, indent=2, sort_keys=True, default=_jsonable)
    return rep


COMMANDS = {
    "solve": cmd_solve,
    "frequency": cmd_frequency,
    "doubling": cmd_doubling,
    "nodal": cmd_nodal,
    "divide": cmd_divide,
    "sweep": cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="nodalab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", nargs="?", help="JSON config file")
        p.add_argument("--set", action="append", default=[], metavar="PATH=VALUE", help="override a config field")
        p.add_argument("--output", help="output directory")
    p = sub.add_parser("report")
    p.add_argument("directory")
    args = ap.parse_args(argv)
    try:
        if args.command == "report":
            rep = cmd_report(args.directory)
        else:
            overrides = list(args.set) + ([f"output={json.dumps(args.output)}"] if args.output else [])
            cfg = load_config(args.config, overrides)
            rep = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DependencyError as exc:
        print(f"dependency error: {exc}", file=sys.stderr)
        return 3
    fails = rep.failures
    for r in fails:
        print(f"FAILED {r['check']}: {json.dumps(r['inputs'], sort_keys=True, default=_jsonable)}", file=sys.stderr)
    print(f"{args.command}: {len(rep.records)} records, {len(fails)} failed")
    return 0 if not fails else 1


if __name__ == "__main__":
    sys.exit(main())
