"""Zero sets of piecewise-linear fields, their length, and the length studies."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .doubling import DIM, ChartView, Cube, cube_doubling
from .field import SolutionField
from .geometry import DomainSpec
from .lifted import lift
from .mesh import rectangle_mesh

SNAP = 1e-12


@dataclass(frozen=True)
class RegionDecomposition:
    """Interior ``Ω_r`` plus dyadic collar bands ``(2^j - 1) R < dist <= (2^{j+1} - 1) R``.

    Bands are generated until they reach distance ``r``; the last band is cut
    at ``r`` so that the bands and the interior partition Ω.
    """

    r: float
    R: float = 0.0

    @property
    def bands(self) -> list[tuple[float, float]]:
        if self.R <= 0:
            return [(0.0, self.r)]
        if self.r / self.R > 2.0**40:
            raise ValueError("collar width too small for a dyadic band decomposition")
        out, j = [], 0
        while (2**j - 1) * self.R < self.r:
            out.append(((2**j - 1) * self.R, min((2 ** (j + 1) - 1) * self.R, self.r)))
            j += 1
        return out

    def classify(self, dist: np.ndarray) -> np.ndarray:
        """-1 for the interior, else the band index."""
        dist = np.asarray(dist, dtype=float)
        out = np.full(dist.shape, -1, dtype=int)
        for j, (lo, hi) in enumerate(self.bands):
            out[(dist > lo if j else dist >= lo) & (dist <= hi)] = j
        return out


@dataclass(frozen=True)
class NodalSet:
    segments: np.ndarray  # (S, 2, 2)
    total_length: float
    region_lengths: dict = field(default_factory=dict)
    degenerate_cells: int = 0
    excluded_boundary: int = 0

    def export_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x1", "y1", "x2", "y2"])
            for s in self.segments:
                w.writerow([repr(float(v)) for v in s.ravel()])


def zero_segments(points: np.ndarray, triangles: np.ndarray, values: np.ndarray, boundary: np.ndarray):
    """Zero level set of the P1 interpolant as a list of segments.

    Values within ``SNAP * max|u|`` of zero count as zero, and a zero counts as
    the nonnegative side.  Zero edges are emitted once, segments joining two
    boundary vertices are dropped, and triangles that vanish identically (with
    at least one interior vertex) are counted as degenerate.
    """
    v = np.asarray(values, dtype=float).copy()
    scale = np.max(np.abs(v))
    if scale == 0:
        raise ValueError("field vanishes identically")
    v[np.abs(v) <= SNAP * scale] = 0.0
    T = triangles
    tv = v[T]
    zero = tv == 0
    nz = zero.sum(axis=1)
    pos = tv > 0
    neg = tv < 0
    degenerate = int(np.sum((nz == 3) & ~np.all(boundary[T], axis=1)))
    segs = []
    excluded = 0

    # generic triangles: no zero vertex, sign change on exactly two edges
    gen = (nz == 0) & pos.any(axis=1) & neg.any(axis=1)
    for t in np.nonzero(gen)[0]:
        pts = []
        for a, b in ((0, 1), (1, 2), (2, 0)):
            va, vb = tv[t, a], tv[t, b]
            if (va > 0) != (vb > 0):
                s = va / (va - vb)
                pa, pb = points[T[t, a]], points[T[t, b]]
                pts.append(pa + s * (pb - pa))
        segs.append(pts)

    # one zero vertex with the other two on opposite sides
    one = (nz == 1) & pos.any(axis=1) & neg.any(axis=1)
    for t in np.nonzero(one)[0]:
        i = int(np.nonzero(zero[t])[0][0])
        a, b = (i + 1) % 3, (i + 2) % 3
        va, vb = tv[t, a], tv[t, b]
        s = va / (va - vb)
        pa, pb = points[T[t, a]], points[T[t, b]]
        segs.append([points[T[t, i]], pa + s * (pb - pa)])

    # zero edges, shared between neighbours, emitted once
    seen = set()
    for t in np.nonzero(nz == 2)[0]:
        i, j = (int(k) for k in np.nonzero(zero[t])[0])
        key = tuple(sorted((int(T[t, i]), int(T[t, j]))))
        if key in seen:
            continue
        seen.add(key)
        if boundary[key[0]] and boundary[key[1]]:
            excluded += 1
            continue
        segs.append([points[key[0]], points[key[1]]])

    if not segs:
        return np.zeros((0, 2, 2)), degenerate, excluded
    arr = np.asarray(segs, dtype=float)
    arr = arr[np.linalg.norm(arr[:, 1] - arr[:, 0], axis=1) > 0]
    return arr, degenerate, excluded


def extract_nodal(field: SolutionField, regions: RegionDecomposition | None = None) -> NodalSet:
    mesh = field.mesh
    segs, degen, excl = zero_segments(mesh.points, mesh.triangles, field.values, mesh.boundary)
    lengths = np.linalg.norm(segs[:, 1] - segs[:, 0], axis=1)
    region_lengths = {}
    if regions is not None and len(segs):
        mid = 0.5 * (segs[:, 0] + segs[:, 1])
        cls = regions.classify(field.domain.distance(mid))
        region_lengths["interior"] = float(lengths[cls == -1].sum())
        for j in range(len(regions.bands)):
            region_lengths[f"band{j}"] = float(lengths[cls == j].sum())
    return NodalSet(segs, float(lengths.sum()), region_lengths, degen, excl)


def nodal_length_of(domain: DomainSpec, value, h: float) -> float:
    """Zero-set length of an arbitrary scalar function on a mesh of ``domain`` (no boundary exclusion)."""
    from .mesh import domain_mesh

    mesh = domain_mesh(domain, h)
    segs, _, _ = zero_segments(mesh.points, mesh.triangles, value(mesh.points), np.zeros(mesh.n_nodes, bool))
    return float(np.linalg.norm(segs[:, 1] - segs[:, 0], axis=1).sum()) if len(segs) else 0.0


# ------------------------------------------------------------------- studies
@dataclass(frozen=True)
class InteriorBoundStudy:
    r: float
    C: float
    rows: list


def interior_bound_study(fields: Sequence[SolutionField], r: float) -> InteriorBoundStudy:
    """Fitted ``C = max length(Ω_r ∩ {u=0}) * r / (1 + sqrt λ)`` over a family."""
    rows = []
    for f in fields:
        lam = lift(f).lam
        ns = extract_nodal(f, RegionDecomposition(r))
        L = ns.region_lengths.get("interior", 0.0)
        rows.append({"name": f.name, "lambda": lam, "length": L, "ratio": L * r / (1 + math.sqrt(lam))})
    return InteriorBoundStudy(r, max(row["ratio"] for row in rows), rows)


@dataclass(frozen=True)
class CollarStudy:
    R: float
    r_interior: float
    band_lengths: list
    interior_length: float
    total_length: float
    lam: float
    grad_V: float
    band_ratio: float  # max band length / (sqrt λ + 1)
    bound_ratio: float  # total / ((1 + log(|∇V| + 1)) (sqrt λ + 1))
    single_band: bool


def collar_width(grad_V: float, R0: float, r0: float) -> float:
    """``R = R0 |∇V|^{-1/2}`` clamped to ``(0, r0/8]``."""
    cap = r0 / 8
    if grad_V <= 0:
        return cap
    return min(R0 / math.sqrt(grad_V), cap)


def collar_decomposition_study(field: SolutionField, R: float, r0: float) -> CollarStudy:
    lam = lift(field).lam
    regions = RegionDecomposition(r0 / 2, R)
    ns = extract_nodal(field, regions)
    bands = [ns.region_lengths.get(f"band{j}", 0.0) for j in range(len(regions.bands))]
    gV = field.potential.grad_sup_norm
    s = math.sqrt(lam) + 1
    return CollarStudy(
        R,
        r0 / 2,
        bands,
        ns.region_lengths.get("interior", 0.0),
        ns.total_length,
        lam,
        gV,
        max(bands) / s if bands else 0.0,
        ns.total_length / ((1 + math.log(gV + 1)) * s),
        len(bands) == 1,
    )


# ------------------------------------------------------------- boundary cubes
class SmallnessGateError(ValueError):
    """Cube too large for the smallness gate; subdivide further."""


@dataclass(frozen=True)
class BoundaryCubeNodal:
    length: float  # nodal length in Q (footprint, physical coordinates)
    reflected_length: float  # in Q ∪ Q′, Γ itself excluded
    area: float  # length times the t-side of Q
    M_Q: float
    ratio: float  # area / (M(Q) r_Q^n)
    gate: float
    odd_error: float


def reflected_values(view: ChartView, y: np.ndarray) -> np.ndarray:
    """Odd extension ``ũ(y1, -y2) = -ũ(y1, y2)``."""
    y = np.asarray(y, dtype=float)
    sgn = np.where(y[..., 1] < 0, -1.0, 1.0)
    yy = np.stack([y[..., 0], np.abs(y[..., 1])], axis=-1)
    return sgn * view.evaluate(yy)


def boundary_cube_nodal(view: ChartView, Q: Cube, h: float | None = None, gate_exponent: float = 1.0) -> BoundaryCubeNodal:
    if abs(Q.y2) > 1e-14:
        raise ValueError("the cube must have a face on the flattened boundary")
    cd = cube_doubling(view, Q)
    M = cd.M_Q
    gV = view.lf.base.potential.grad_sup_norm
    gate = (gV ** -0.5 if gV > 0 else math.inf) * (M ** (-gate_exponent * M) if M > 1 else 1.0)
    if Q.side > gate:
        raise SmallnessGateError(f"side {Q.side:.4g} exceeds gate {gate:.4g}")
    h = h or Q.side / 128
    mesh = rectangle_mesh(Q.side, 2 * Q.side, h, origin=(Q.y1, -Q.side))
    vals = reflected_values(view, mesh.points)
    on_gamma = np.abs(mesh.points[:, 1]) < 1e-14
    segs, _, _ = zero_segments(mesh.points, mesh.triangles, vals, on_gamma)
    if len(segs):
        xs = view.chart.psi(segs.reshape(-1, 2)).reshape(-1, 2, 2)
        lengths = np.linalg.norm(xs[:, 1] - xs[:, 0], axis=1)
        upper = segs[:, :, 1].mean(axis=1) > 0
        L, Lr = float(lengths[upper].sum()), float(lengths.sum())
    else:
        L = Lr = 0.0
    probe = mesh.points[mesh.points[:, 1] > 0]
    mirrored = probe * (1, -1)
    odd = float(np.max(np.abs(reflected_values(view, mirrored) + reflected_values(view, probe))))
    area = L * Q.side
    return BoundaryCubeNodal(L, Lr, area, M, area / (M * Q.side**2) if M > 0 else math.inf, gate, odd)


def write_study(path: str, study) -> None:
    with open(path, "w") as fh:
        json.dump(study.__dict__, fh, indent=2, sort_keys=True, default=float)


@dataclass(frozen=True)
class InteriorCubeNodal:
    length: float
    area: float
    M_Q: float
    ratio: float  # area / ((M(Q) + 1) r^n)
    distance_ok: bool  # cube at least 10(n+1) sides from Γ


def interior_cube_nodal(view: ChartView, Q: Cube, h: float | None = None) -> InteriorCubeNodal:
    """Nodal measure of a cube away from the flattened boundary against ``(M(Q)+1) r^n``."""
    cd = cube_doubling(view, Q)
    h = h or Q.side / 128
    mesh = rectangle_mesh(Q.side, Q.side, h, origin=(Q.y1, Q.y2))
    segs, _, _ = zero_segments(mesh.points, mesh.triangles, view.evaluate(mesh.points), np.zeros(mesh.n_nodes, bool))
    if len(segs):
        xs = view.chart.psi(segs.reshape(-1, 2)).reshape(-1, 2, 2)
        L = float(np.linalg.norm(xs[:, 1] - xs[:, 0], axis=1).sum())
    else:
        L = 0.0
    area = L * Q.side
    return InteriorCubeNodal(L, area, cd.M_Q, area / ((cd.M_Q + 1) * Q.side**2), Q.y2 >= 10 * DIM * Q.side)
