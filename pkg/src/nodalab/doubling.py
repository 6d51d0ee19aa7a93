"""Sup-norm doubling index at points and on cubes, and checks built on it."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .frequency import FLOAT_TOL, admissible, domain_collar, evaluate_frequency
from .geometry import StraightenedChart
from .lifted import DIM, BallRegion, LiftedField, QuadratureConfig, TrivialFieldError, sup_on_ball
from .quadrature import ball_rule, maximize_on_ball

LOG2E = 1 / math.log(2)


@dataclass(frozen=True)
class DoublingEval:
    center: tuple[float, float]
    r: float
    sup_outer: float
    sup_inner: float
    M: float
    error: float


def _M(outer, inner) -> tuple[float, float]:
    if inner.value <= 0 or outer.value <= 0:
        raise TrivialFieldError("sup vanishes on the inner ball")
    M = 2 * math.log2(outer.value / inner.value)
    err = 2 * LOG2E * (outer.error / outer.value + inner.error / inner.value) + FLOAT_TOL
    return M, err


def doubling_index(lf: LiftedField, x0, r: float) -> DoublingEval:
    """``M(z0, r) = log2(sup_{B_r} ū² / sup_{B_{r/2}} ū²)``."""
    x0 = np.asarray(x0, dtype=float)[:2]
    outer = sup_on_ball(lf, BallRegion(x0, r))
    inner = sup_on_ball(lf, BallRegion(x0, r / 2))
    M, err = _M(outer, inner)
    return DoublingEval(tuple(map(float, x0)), float(r), outer.value, inner.value, M, err)


def doubling_ladder(lf: LiftedField, x0, radii: Sequence[float]) -> list[DoublingEval]:
    """M at radii ``r_max 2^{-j}``, sharing every sup between neighbouring radii."""
    radii = np.sort(np.asarray(radii, dtype=float))[::-1]
    if not np.allclose(radii[1:] * 2, radii[:-1], rtol=1e-12):
        return [doubling_index(lf, x0, r) for r in radii[::-1]]
    x0 = np.asarray(x0, dtype=float)[:2]
    sups = [sup_on_ball(lf, BallRegion(x0, r)) for r in list(radii) + [radii[-1] / 2]]
    out = []
    for j, r in enumerate(radii):
        M, err = _M(sups[j], sups[j + 1])
        out.append(DoublingEval(tuple(map(float, x0)), float(r), sups[j].value, sups[j + 1].value, M, err))
    return out[::-1]


# --------------------------------------------------------------- N-M bridge
@dataclass(frozen=True)
class BridgeReport:
    r: float
    eta: float
    M: float
    N_upper: float  # N at (1+η) r
    N_lower: float  # N at (1+η) r / 2
    C1: float
    C2: float


def check_bridge_N_M(lf: LiftedField, x0, r: float, eta: float, cfg: QuadratureConfig = QuadratureConfig()) -> BridgeReport:
    """Smallest C1, C2 >= 0 in

    ``M(r) <= (1 + log2(1+η)) N((1+η) r) + C1 (1 - log2 η)`` and
    ``M(r) >= (1 - log2(1+η)) N((1+η) r / 2) - C2 (1 - log2 η)``.
    """
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    if not admissible(lf.domain, x0, 2 * r):
        raise ValueError("no star-shapedness certificate on B_{2r}")
    M = doubling_index(lf, x0, r).M
    Nu = evaluate_frequency(lf, x0, (1 + eta) * r, cfg).N
    Nl = evaluate_frequency(lf, x0, (1 + eta) * r / 2, cfg).N
    lam = 1 - math.log2(eta)
    C1 = max(0.0, (M - (1 + math.log2(1 + eta)) * Nu) / lam)
    C2 = max(0.0, ((1 - math.log2(1 + eta)) * Nl - M) / lam)
    return BridgeReport(r, eta, M, Nu, Nl, C1, C2)


# ----------------------------------------------------- almost monotonicity
@dataclass(frozen=True)
class AlmostMonotonicityReport:
    C: float
    additive_slack: float
    M_r0: float
    M_grid: list
    within_hypothesis: bool


def check_almost_monotonicity(lf: LiftedField, x0, r_grid: Sequence[float], r0: float) -> AlmostMonotonicityReport:
    """Smallest ``C >= 1`` with ``M(r) <= C M(r0) + C`` over the grid.

    ``additive_slack`` is ``max_r M(r) - M(r0)`` clipped at 0, the excess that
    a pure ``M(r) <= M(r0)`` would leave.
    """
    r_grid = np.asarray(r_grid, dtype=float)
    if np.any(r_grid <= 0) or np.any(r_grid > r0):
        raise ValueError("r_grid must lie in (0, r0]")
    collar = domain_collar(lf.domain)
    M0 = doubling_index(lf, x0, r0).M
    Ms = [doubling_index(lf, x0, r).M for r in r_grid]
    C = max(1.0, max(Ms) / (M0 + 1))
    return AlmostMonotonicityReport(C, max(0.0, max(Ms) - M0), M0, Ms, bool(r0 <= min(collar.r0, 1 / (8 * collar.C0))))


# ------------------------------------------------------------ global bound
@dataclass(frozen=True)
class GlobalBoundReport:
    C: float  # max M / (1 + sqrt λ)
    max_M: float
    argmax_center: tuple
    argmax_radius: float
    lam: float
    n_evals: int


def global_doubling_bound(lf: LiftedField, center_grid: np.ndarray, r_grid: Sequence[float]) -> GlobalBoundReport:
    if not lf.base.dirichlet:
        raise ValueError("interior test fields do not satisfy the boundary condition this bound needs")
    best = (-math.inf, None, None)
    n = 0
    for c in np.asarray(center_grid, dtype=float):
        for ev in doubling_ladder(lf, c, r_grid):
            n += 1
            if ev.M > best[0]:
                best = (ev.M, ev.center, ev.r)
    s = 1 + math.sqrt(lf.lam)
    return GlobalBoundReport(best[0] / s, best[0], best[1], best[2], lf.lam, n)


def center_grid(domain, spacing: float, include_boundary: bool = True) -> np.ndarray:
    xmin, xmax, ymin, ymax = domain.bounding_box
    nx = int(round((xmax - xmin) / spacing)) + 1
    ny = int(round((ymax - ymin) / spacing)) + 1
    X, Y = np.meshgrid(np.linspace(xmin, xmax, nx), np.linspace(ymin, ymax, ny))
    p = np.stack([X.ravel(), Y.ravel()], axis=1)
    tol = 1e-12 if include_boundary else -1e-12
    return p[domain.contains(p, tol)] if include_boundary else p[domain.distance(p) > 1e-12]


# ----------------------------------------------------------- vanishing order
@dataclass(frozen=True)
class VanishingOrderEstimate:
    x0: tuple
    slope: float  # k, half the log-log slope of the disk average of u²
    radii_used: np.ndarray
    residual: float
    reliable: bool


def vanishing_order(lf: LiftedField, x0, radii: Sequence[float], max_residual: float = 0.05) -> VanishingOrderEstimate:
    radii = np.asarray(radii, dtype=float)
    if radii.max() / radii.min() < 10 * (1 - 1e-12):
        raise ValueError("radii must span at least one decade")
    x0 = np.asarray(x0, dtype=float)[:2]
    avg = []
    for r in radii:
        rule = ball_rule(lf.domain, x0, r, 24)
        u = lf.base.evaluate(rule.points)
        avg.append(np.sum(rule.weights * u * u) / np.sum(rule.weights))
    lx, ly = np.log(radii), np.log(np.asarray(avg))
    coef, res, *_ = np.polyfit(lx, ly, 1, full=True)
    rms = float(np.sqrt(res[0] / len(radii))) if len(res) else 0.0
    return VanishingOrderEstimate(tuple(map(float, x0)), float(coef[0] / 2), radii, rms, rms <= max_residual)


# ----------------------------------------------------------- cube doubling
@dataclass(frozen=True)
class Cube:
    """Axis-aligned cube in straightened coordinates ``[y1, y1+side] x [y2, y2+side] x [t, t+side]``."""

    y1: float
    y2: float
    side: float
    t: float = 0.0

    @property
    def diam(self) -> float:
        return self.side * math.sqrt(DIM)


class _HalfPlane:
    """The straightened domain ``{y2 > 0}`` in the interface the maximizer expects."""

    def distance(self, y):
        return np.asarray(y)[..., 1]

    def corners(self):
        return np.zeros((0, 2))

    def ray_exit(self, y0, dirs, rmax):
        dy = dirs[:, 1]
        out = np.full(len(dirs), float(rmax))
        neg = dy < 0
        out[neg] = np.minimum(rmax, -y0[1] / dy[neg])
        return np.maximum(out, 0.0)

    def circle_crossings(self, y0, r):
        if abs(y0[1]) >= r:
            return np.zeros(0)
        a = math.asin(-y0[1] / r)
        return np.sort(np.array([a % (2 * math.pi), (math.pi - a) % (2 * math.pi)]))


@dataclass(frozen=True, eq=False)
class ChartView:
    """A lifted field seen through a straightening chart, ``ũ = ū ∘ Ψ``."""

    lf: LiftedField
    chart: StraightenedChart

    @property
    def flat(self) -> bool:
        return self.chart.hessian_bound == 0 and self.chart.gradient_constant == 0

    def sup(self, y0, r: float):
        y0 = np.asarray(y0, dtype=float)[:2]
        if self.flat:
            # Ψ is a rigid motion, so y-balls are physical balls clipped by Ω itself
            return sup_on_ball(self.lf, BallRegion(self.chart.psi(y0), r))
        if r > 2 * self.chart.chart_radius:
            raise ValueError("ball leaves the chart")
        u = self.lf.base.evaluate
        return maximize_on_ball(lambda y: u(self.chart.psi(y)), _HalfPlane(), y0, r, beta=self.lf.beta)

    def evaluate(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return self.lf.base.evaluate(self.chart.psi(y[..., :2]))

    def M(self, y0, r: float) -> DoublingEval:
        outer, inner = self.sup(y0, r), self.sup(y0, r / 2)
        M, err = _M(outer, inner)
        return DoublingEval(tuple(map(float, y0)), float(r), outer.value, inner.value, M, err)

    def ladder(self, y0, radii: Sequence[float]) -> list[DoublingEval]:
        sups = [self.sup(y0, r) for r in list(radii) + [radii[-1] / 2]]
        out = []
        for j, r in enumerate(radii):
            M, err = _M(sups[j], sups[j + 1])
            out.append(DoublingEval(tuple(map(float, y0)), float(r), sups[j].value, sups[j + 1].value, M, err))
        return out


@dataclass(frozen=True)
class CubeDoubling:
    cube: Cube
    M_Q: float
    error: float
    argmax_center: tuple
    argmax_radius: float
    sample_counts: dict = field(default_factory=dict)


def cube_radius_cap(cube: Cube, cap: float = 0.95) -> float:
    return min(10 * DIM * cube.diam, cap)


def cube_doubling(view: ChartView, cube: Cube, lattice: int = 9, n_radii: int = 8, cap: float = 0.95) -> CubeDoubling:
    """``M(Q) = max M(y0, r)`` over centers in Q and ``r <= 10(n+1) diam(Q)``.

    M is unchanged by translation in t, so centers are taken on one t-slice.
    A lattice of ``lattice²`` centers and ``n_radii`` dyadic radii is followed
    by one refinement pass around the maximizer.
    """
    rmax = cube_radius_cap(cube, cap)
    radii = [rmax * 2.0**-j for j in range(n_radii)]
    g = np.linspace(0, cube.side, lattice)
    best = (-math.inf, 0.0, None, None)
    count = 0
    for a in cube.y1 + g:
        for b in cube.y2 + g:
            for ev in view.ladder((a, b), radii):
                count += 1
                if ev.M > best[0]:
                    best = (ev.M, ev.error, ev.center, ev.r)
    # refinement: half-spacing lattice and quarter-octave radii around the argmax
    h = cube.side / (lattice - 1) / 2
    c0, r0 = np.array(best[2]), best[3]
    refined = 0
    for da in (-h, 0.0, h):
        for db in (-h, 0.0, h):
            y0 = c0 + (da, db)
            if not (cube.y1 <= y0[0] <= cube.y1 + cube.side and cube.y2 <= y0[1] <= cube.y2 + cube.side):
                continue
            for f in (2**-0.25, 1.0, 2**0.25):
                r = min(r0 * f, rmax)
                ev = view.M(y0, r)
                refined += 1
                if ev.M > best[0]:
                    best = (ev.M, ev.error, ev.center, ev.r)
    return CubeDoubling(cube, best[0], best[1], best[2], best[3], {"lattice": count, "refine": refined})
