"""Planar domains, collar constants, star-shape certificates and boundary charts.

Three domain families are supported: the unit disk, axis-aligned rectangles
``[0, w] x [0, h]`` and trigonometric perturbations of a disk,
``rho(theta) = radius + eps * cos(m * theta)``.  Every family is convex
(the perturbation is restricted so that the boundary curvature stays positive),
which lets ray casting from any interior point describe ``B_r(x0) ∩ Ω`` exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import brentq, minimize_scalar
from scipy.spatial import cKDTree

KINDS = ("unit_disk", "rectangle", "perturbed_disk")

# dense parameter grid used for distance queries and circle/boundary crossings
_DENSE = 8192


class DomainError(ValueError):
    """Raised for invalid domain parameters or geometry requests."""


@dataclass(frozen=True)
class BoundarySamples:
    """Boundary points ordered counterclockwise, equally spaced in arclength."""

    params: np.ndarray  # curve parameter u in [0, 1)
    points: np.ndarray  # (N, 2)
    normals: np.ndarray  # outward unit normals
    curvature: np.ndarray  # signed, positive for convex arcs
    corner: np.ndarray  # True where the boundary is not C^2 (rectangle corners)


@dataclass(frozen=True)
class DomainSpec:
    kind: str
    width: float = 1.0
    height: float = 1.0
    radius: float = 1.0
    eps: float = 0.0
    mode: int = 0
    resolution: int = 0
    samples: BoundarySamples | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise DomainError(f"unknown domain kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "rectangle" and (self.width <= 0 or self.height <= 0):
            raise DomainError("rectangle sides must be positive")
        if self.kind == "perturbed_disk":
            if self.radius <= 0:
                raise DomainError("perturbed_disk radius must be positive")
            if self.mode < 0:
                raise DomainError("perturbation mode must be a nonnegative integer")
            kmin = _min_curvature_scan(self.radius, self.eps, self.mode)
            if abs(self.eps) >= self.radius / 2 or kmin <= 0:
                raise DomainError(
                    f"perturbation too large: |eps|*m^2 = {abs(self.eps) * self.mode**2:.4g}, "
                    f"radius = {self.radius:.4g}; min curvature on dense scan = {kmin:.4g}"
                )

    # ----------------------------------------------------------- constructors
    @staticmethod
    def unit_disk() -> "DomainSpec":
        return DomainSpec("unit_disk", radius=1.0)

    @staticmethod
    def rectangle(width: float = 1.0, height: float = 1.0) -> "DomainSpec":
        return DomainSpec("rectangle", width=float(width), height=float(height))

    @staticmethod
    def perturbed_disk(radius: float, eps: float, mode: int) -> "DomainSpec":
        return DomainSpec("perturbed_disk", radius=float(radius), eps=float(eps), mode=int(mode))

    # --------------------------------------------------------- serialization
    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind == "rectangle":
            d.update(width=self.width, height=self.height)
        elif self.kind == "perturbed_disk":
            d.update(radius=self.radius, eps=self.eps, mode=self.mode)
        if self.resolution:
            d["resolution"] = self.resolution
        return d

    @staticmethod
    def from_dict(d: dict) -> "DomainSpec":
        d = dict(d)
        kind = d.pop("kind", None)
        resolution = int(d.pop("resolution", 0))
        if kind == "unit_disk":
            spec = DomainSpec.unit_disk()
        elif kind == "rectangle":
            spec = DomainSpec.rectangle(d.pop("width", 1.0), d.pop("height", 1.0))
        elif kind == "perturbed_disk":
            spec = DomainSpec.perturbed_disk(d.pop("radius", 1.0), d.pop("eps", 0.0), d.pop("mode", 0))
        else:
            raise DomainError(f"unknown domain kind {kind!r}")
        if d:
            raise DomainError(f"unexpected domain fields: {sorted(d)}")
        return build_domain(spec, resolution) if resolution else spec

    # ------------------------------------------------------------ basic shape
    @property
    def is_disk_like(self) -> bool:
        return self.kind != "rectangle"

    @property
    def center(self) -> np.ndarray:
        if self.kind == "rectangle":
            return np.array([self.width / 2, self.height / 2])
        return np.zeros(2)

    @property
    def _rad(self) -> float:
        return 1.0 if self.kind == "unit_disk" else self.radius

    @property
    def perimeter(self) -> float:
        if self.kind == "rectangle":
            return 2 * (self.width + self.height)
        u = np.linspace(0, 1, 4097)
        speed = np.linalg.norm(self.curve_derivative(u), axis=1)
        return float(trapezoid(speed, u))

    @property
    def diameter(self) -> float:
        if self.kind == "rectangle":
            return math.hypot(self.width, self.height)
        return 2 * (self._rad + abs(self.eps))

    @property
    def bounding_box(self) -> tuple[float, float, float, float]:
        if self.kind == "rectangle":
            return 0.0, self.width, 0.0, self.height
        a = self._rad + abs(self.eps)
        return -a, a, -a, a

    def corners(self) -> np.ndarray:
        if self.kind != "rectangle":
            return np.zeros((0, 2))
        w, h = self.width, self.height
        return np.array([[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]])

    # ------------------------------------------------- boundary parametrization
    def _rho(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        m, e = self.mode, (self.eps if self.kind == "perturbed_disk" else 0.0)
        r = self._rad + e * np.cos(m * theta)
        dr = -e * m * np.sin(m * theta)
        d2r = -e * m * m * np.cos(m * theta)
        return r, dr, d2r

    def curve(self, u: np.ndarray) -> np.ndarray:
        """Boundary point at parameter ``u`` (periodic with period 1, counterclockwise)."""
        u = np.asarray(u, dtype=float)
        if self.kind == "rectangle":
            return self._rect_curve(u)
        th = 2 * np.pi * u
        r, _, _ = self._rho(th)
        return np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)

    def curve_derivative(self, u: np.ndarray, order: int = 1) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.kind == "rectangle":
            if order == 2:
                return np.zeros(u.shape + (2,))
            return self._rect_tangent(u) * (2 * (self.width + self.height))
        th = 2 * np.pi * u
        c, s = np.cos(th), np.sin(th)
        r, dr, d2r = self._rho(th)
        if order == 1:
            d = np.stack([dr * c - r * s, dr * s + r * c], axis=-1)
            return d * (2 * np.pi)
        d2 = np.stack([d2r * c - 2 * dr * s - r * c, d2r * s + 2 * dr * c - r * s], axis=-1)
        return d2 * (2 * np.pi) ** 2

    def _rect_curve(self, u: np.ndarray) -> np.ndarray:
        w, h = self.width, self.height
        s = np.mod(u, 1.0) * 2 * (w + h)
        x = np.where(s < w, s, np.where(s < w + h, w, np.where(s < 2 * w + h, w - (s - w - h), 0.0)))
        y = np.where(s < w, 0.0, np.where(s < w + h, s - w, np.where(s < 2 * w + h, h, h - (s - 2 * w - h))))
        return np.stack([x, y], axis=-1)

    def _rect_tangent(self, u: np.ndarray) -> np.ndarray:
        w, h = self.width, self.height
        s = np.mod(u, 1.0) * 2 * (w + h)
        tx = np.where(s < w, 1.0, np.where(s < w + h, 0.0, np.where(s < 2 * w + h, -1.0, 0.0)))
        ty = np.where(s < w, 0.0, np.where(s < w + h, 1.0, np.where(s < 2 * w + h, 0.0, -1.0)))
        return np.stack([tx, ty], axis=-1)

    def curvature_at(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.kind == "rectangle":
            return np.zeros(u.shape)
        d1 = self.curve_derivative(u, 1)
        d2 = self.curve_derivative(u, 2)
        cross = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        return cross / np.linalg.norm(d1, axis=-1) ** 3

    def normal_at(self, u: np.ndarray) -> np.ndarray:
        d1 = self.curve_derivative(np.asarray(u, dtype=float), 1)
        t = d1 / np.linalg.norm(d1, axis=-1, keepdims=True)
        return np.stack([t[..., 1], -t[..., 0]], axis=-1)

    # --------------------------------------------------------- point queries
    def level(self, x: np.ndarray) -> np.ndarray:
        """A function that is negative inside, zero on the boundary, positive outside."""
        x = np.asarray(x, dtype=float)
        if self.kind == "rectangle":
            return -self._rect_distance(x)
        th = np.arctan2(x[..., 1], x[..., 0])
        r, _, _ = self._rho(th)
        return np.hypot(x[..., 0], x[..., 1]) - r

    def contains(self, x: np.ndarray, tol: float = 0.0) -> np.ndarray:
        return self.level(x) <= tol

    def _rect_distance(self, x: np.ndarray) -> np.ndarray:
        # signed: positive inside
        return np.minimum.reduce(
            [x[..., 0], self.width - x[..., 0], x[..., 1], self.height - x[..., 1]]
        )

    def distance(self, x: np.ndarray) -> np.ndarray:
        """Distance to the boundary, positive inside and negative outside."""
        x = np.asarray(x, dtype=float)
        if self.kind == "rectangle":
            return self._rect_distance(x)
        if self.kind == "unit_disk" or self.eps == 0.0:
            return self._rad - np.hypot(x[..., 0], x[..., 1])
        tree, pts = self._dense_tree()
        flat = x.reshape(-1, 2)
        d, _ = tree.query(flat)
        sign = np.where(self.level(flat) <= 0, 1.0, -1.0)
        return (sign * d).reshape(x.shape[:-1])

    def _dense_tree(self) -> tuple[cKDTree, np.ndarray]:
        cached = _TREE_CACHE.get(self)
        if cached is None:
            pts = self.curve(np.arange(8 * _DENSE) / (8 * _DENSE))
            cached = (cKDTree(pts), pts)
            _TREE_CACHE[self] = cached
        return cached

    def ray_exit(self, x0: np.ndarray, directions: np.ndarray, rmax: float) -> np.ndarray:
        """Distance from ``x0`` along each unit direction to the boundary, capped at ``rmax``.

        Exact for the convex families shipped here: the segment from an interior
        point leaves the domain exactly once.
        """
        x0 = np.asarray(x0, dtype=float)
        e = np.asarray(directions, dtype=float)
        if self.kind == "rectangle":
            out = np.full(e.shape[0], np.inf)
            with np.errstate(divide="ignore", invalid="ignore"):
                for k, lim in ((0, self.width), (1, self.height)):
                    d = e[:, k]
                    hit_hi = np.where(d > 0, (lim - x0[k]) / d, np.inf)
                    hit_lo = np.where(d < 0, (0.0 - x0[k]) / d, np.inf)
                    out = np.minimum(out, np.minimum(hit_hi, hit_lo))
            return np.clip(out, 0.0, rmax)
        if self.kind == "unit_disk" or self.eps == 0.0:
            R = self._rad
            b = e @ x0
            disc = b * b - (x0 @ x0 - R * R)
            out = -b + np.sqrt(np.maximum(disc, 0.0))
            return np.clip(out, 0.0, rmax)
        lo = np.zeros(e.shape[0])
        hi = np.full(e.shape[0], float(rmax))
        inside_far = self.level(x0 + hi[:, None] * e) <= 0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            ins = self.level(x0 + mid[:, None] * e) <= 0
            lo = np.where(ins, mid, lo)
            hi = np.where(ins, hi, mid)
        return np.where(inside_far, float(rmax), 0.5 * (lo + hi))

    def circle_crossings(self, x0: np.ndarray, r: float) -> np.ndarray:
        """Polar angles (about ``x0``) of boundary points at distance exactly ``r``."""
        x0 = np.asarray(x0, dtype=float)
        u = np.arange(_DENSE + 1) / _DENSE
        if self.kind == "rectangle":
            # include corner parameters so piecewise-linear sides are bracketed exactly
            P = 2 * (self.width + self.height)
            cu = np.array([0.0, self.width, self.width + self.height, 2 * self.width + self.height]) / P
            u = np.unique(np.concatenate([u, cu, [1.0]]))

        def g(s: float) -> float:
            p = self.curve(np.array(s))
            return float(np.hypot(*(p - x0)) - r)

        pts = self.curve(u)
        gv = np.hypot(pts[:, 0] - x0[0], pts[:, 1] - x0[1]) - r
        angles = []
        for i in np.nonzero(np.sign(gv[:-1]) * np.sign(gv[1:]) < 0)[0]:
            s = brentq(g, u[i], u[i + 1], xtol=1e-15, rtol=1e-15)
            p = self.curve(np.array(s))
            angles.append(math.atan2(p[1] - x0[1], p[0] - x0[0]) % (2 * np.pi))
        for i in np.nonzero(gv[:-1] == 0)[0]:
            p = pts[i]
            angles.append(math.atan2(p[1] - x0[1], p[0] - x0[0]) % (2 * np.pi))
        return np.array(sorted(angles))

    def parameter_of(self, p: np.ndarray) -> tuple[float, float]:
        """Curve parameter of the boundary point nearest to ``p`` and that distance."""
        p = np.asarray(p, dtype=float)
        u = np.arange(_DENSE) / _DENSE
        pts = self.curve(u)
        i = int(np.argmin(np.hypot(pts[:, 0] - p[0], pts[:, 1] - p[1])))
        h = 1.0 / _DENSE
        res = minimize_scalar(
            lambda s: float(np.hypot(*(self.curve(np.array(s)) - p))),
            bounds=(u[i] - h, u[i] + h),
            method="bounded",
            options={"xatol": 1e-15},
        )
        s = float(res.x)
        # Newton polish of (C(s) - p)·C'(s) = 0; the bounded search alone stalls near sqrt(eps)
        for _ in range(4):
            d = self.curve(np.array(s)) - p
            c1 = self.curve_derivative(np.array(s))
            c2 = self.curve_derivative(np.array(s), 2)
            den = float(c1 @ c1 + d @ c2)
            if den <= 0:
                break
            step = float(d @ c1) / den
            if abs(step) > h:
                break
            s -= step
        s = s % 1.0
        return s, float(np.hypot(*(self.curve(np.array(s)) - p)))


_TREE_CACHE: dict = {}


def _min_curvature_scan(radius: float, eps: float, mode: int) -> float:
    th = np.linspace(0, 2 * np.pi, 20001)
    r = radius + eps * np.cos(mode * th)
    dr = -eps * mode * np.sin(mode * th)
    d2r = -eps * mode**2 * np.cos(mode * th)
    k = (r * r + 2 * dr * dr - r * d2r) / (r * r + dr * dr) ** 1.5
    return float(k.min())


def build_domain(spec: DomainSpec, resolution: int = 256) -> DomainSpec:
    """Populate boundary samples equally spaced in arclength.

    Parameters
    ----------
    spec : DomainSpec
        Domain description; its existing samples, if any, are replaced.
    resolution : int
        Number of boundary samples, at least 64.
    """
    if resolution < 64:
        raise DomainError("resolution must be at least 64")
    if spec.kind == "rectangle":
        params = np.arange(resolution) / resolution
    else:
        # invert the cumulative arclength of a fine trapezoid table
        uf = np.linspace(0, 1, 64 * resolution + 1)
        speed = np.linalg.norm(spec.curve_derivative(uf), axis=1)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(uf))])
        targets = np.arange(resolution) / resolution * cum[-1]
        params = np.interp(targets, cum, uf)
    points = spec.curve(params)
    normals = spec.normal_at(params)
    curvature = spec.curvature_at(params)
    corner = np.zeros(resolution, dtype=bool)
    if spec.kind == "rectangle":
        for c in spec.corners():
            corner |= np.hypot(points[:, 0] - c[0], points[:, 1] - c[1]) < 1e-12
        # the outward normal at a corner is taken as the bisector of the two sides
        for i in np.nonzero(corner)[0]:
            n = np.sign(points[i] - spec.center)
            normals[i] = n / np.linalg.norm(n)
    elif curvature.min() <= 0:
        raise DomainError(f"boundary is not convex: min curvature {curvature.min():.4g}")
    samples = BoundarySamples(params, points, normals, curvature, corner)
    return replace(spec, resolution=resolution, samples=samples)


def _ensure_built(domain: DomainSpec) -> DomainSpec:
    return domain if domain.samples is not None else build_domain(domain, 512)


# ------------------------------------------------------------------ collar
@dataclass(frozen=True)
class CollarParams:
    delta: float
    r0: float
    C0: float
    safety_factor: float = 2.0
    c0_floor: float = 1.0
    max_curvature: float = 0.0
    corner_margin: float = 0.0

    def certifies(self, dist: float, r: float) -> bool:
        """Sufficient condition for ``B_r(x0) ∩ Ω`` to be star-shaped about ``x0``."""
        return bool(dist >= self.C0 * r * r)


def _inner_reach(points: np.ndarray, normals: np.ndarray) -> float:
    """Largest width for which inward normal segments of the samples do not meet.

    For each pair, the ball tangent at ``p_i`` from the inside and passing
    through ``p_j`` has radius ``|p_j-p_i|^2 / (2 |(p_j-p_i)·n_i|)``; the normal map
    stays injective up to the smallest such radius.
    """
    best = np.inf
    for start in range(0, len(points), 256):
        p = points[start : start + 256]
        n = normals[start : start + 256]
        d = points[None, :, :] - p[:, None, :]
        dn = np.einsum("ijk,ik->ij", d, n)
        d2 = np.einsum("ijk,ijk->ij", d, d)
        mask = dn < -1e-14  # p_j lies on the inner side of the tangent line at p_i
        if mask.any():
            best = min(best, float(np.min(d2[mask] / (-2 * dn[mask]))))
    return best


def collar_params(domain: DomainSpec, grid: int = 24) -> CollarParams:
    """Compute (delta, r0, C0) and shrink r0 until the certificate holds on a grid."""
    domain = _ensure_built(domain)
    s = domain.samples
    keep = ~s.corner
    margin = 0.0
    if domain.kind == "rectangle":
        margin = min(domain.width, domain.height) / 4
        for c in domain.corners():
            keep &= np.hypot(s.points[:, 0] - c[0], s.points[:, 1] - c[1]) >= margin
    delta = _inner_reach(s.points[keep], s.normals[keep])
    if domain.kind == "rectangle":
        delta = min(delta, margin)
    kmax = float(np.max(np.abs(s.curvature)))
    safety, floor = 2.0, 1.0
    C0 = max(safety * kmax, floor)
    r0 = 0.999 * delta / 10
    xmin, xmax, ymin, ymax = domain.bounding_box
    gx, gy = np.meshgrid(np.linspace(xmin, xmax, grid), np.linspace(ymin, ymax, grid))
    cand = np.stack([gx.ravel(), gy.ravel()], axis=1)
    dist = domain.distance(cand)
    cand, dist = cand[dist > 0], dist[dist > 0]
    for _ in range(40):
        ok = True
        for r in r0 * np.array([0.25, 0.5, 0.75, 1.0]):
            for x0, d in zip(cand, dist):
                if d >= C0 * r * r and not is_star_shaped(domain, x0, r)[0]:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            break
        r0 *= 0.8
    return CollarParams(delta, r0, C0, safety, floor, kmax, margin)


def is_star_shaped(domain: DomainSpec, x0: Sequence[float], r: float) -> tuple[bool, float]:
    """Check ν(x)·(x-x0) >= 0 on every boundary sample inside ``B_r(x0)``.

    Returns the verdict and the minimum of ν·(x-x0) over those samples
    (``inf`` when the ball does not reach the boundary).
    """
    domain = _ensure_built(domain)
    x0 = np.asarray(x0, dtype=float)
    if domain.distance(x0[None])[0] < -1e-12:
        raise DomainError("center lies outside the domain")
    s = domain.samples
    d = s.points - x0
    inside = np.hypot(d[:, 0], d[:, 1]) < r
    if not inside.any():
        return True, math.inf
    vals = np.einsum("ij,ij->i", s.normals[inside], d[inside])
    m = float(vals.min())
    return bool(m >= -1e-13), m


# -------------------------------------------------------------- charts
class GraphFunction:
    """A boundary graph ``x_n = gamma(x')`` with its first two derivatives (n = 2)."""

    def __init__(
        self,
        value: Callable[[np.ndarray], np.ndarray],
        d1: Callable[[np.ndarray], np.ndarray],
        d2: Callable[[np.ndarray], np.ndarray],
    ):
        self.value, self.d1, self.d2 = value, d1, d2

    @staticmethod
    def flat() -> "GraphFunction":
        z = lambda s: np.zeros_like(np.asarray(s, dtype=float))
        return GraphFunction(z, z, z)

    @staticmethod
    def polynomial(coeffs: Sequence[float]) -> "GraphFunction":
        """``gamma(s) = sum_k coeffs[k] s^k``; coeffs[0] and coeffs[1] must vanish."""
        p = np.polynomial.Polynomial(coeffs)
        return GraphFunction(p, p.deriv(1), p.deriv(2))


class _CurveGraph(GraphFunction):
    """Graph of the boundary over its tangent line at an anchor, obtained by
    inverting the exact parametrization (Newton on the tangential coordinate)."""

    def __init__(self, domain: DomainSpec, u0: float, origin: np.ndarray, e1: np.ndarray, e2: np.ndarray):
        self.domain, self.u0, self.origin, self.e1, self.e2 = domain, u0, origin, e1, e2
        self.speed = float(np.linalg.norm(domain.curve_derivative(np.array(u0))))
        super().__init__(self._value, self._d1, self._d2)

    def _param(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        u = self.u0 + s / self.speed
        for _ in range(50):
            X = (self.domain.curve(u) - self.origin) @ self.e1
            dX = self.domain.curve_derivative(u) @ self.e1
            step = (X - s) / dX
            u = u - step
            if np.all(np.abs(step) < 1e-16):
                break
        return u

    def _parts(self, s):
        u = self._param(s)
        p = self.domain.curve(u) - self.origin
        d1 = self.domain.curve_derivative(u, 1)
        d2 = self.domain.curve_derivative(u, 2)
        return p @ self.e2, d1 @ self.e1, d1 @ self.e2, d2 @ self.e1, d2 @ self.e2

    def _value(self, s):
        return self._parts(s)[0]

    def _d1(self, s):
        _, X1, Y1, _, _ = self._parts(s)
        return Y1 / X1

    def _d2(self, s):
        _, X1, Y1, X2, Y2 = self._parts(s)
        return (Y2 * X1 - Y1 * X2) / X1**3


@dataclass(frozen=True, eq=False)
class StraightenedChart:
    """Local boundary-flattening map ``y = Φ(x, t) = (x1', x2' - γ(x1'), t)``.

    Primed coordinates are taken in the frame with origin at the anchor,
    ``e1`` the counterclockwise tangent and ``e2`` the inward normal, so the
    domain is locally ``{x2' > γ(x1')}`` and ``γ(0) = γ'(0) = 0``.
    """

    anchor: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    gamma: GraphFunction
    chart_radius: float
    tau1: float
    tau2: float
    gradient_constant: float  # fitted C in |γ'(s)| <= C |s|
    hessian_bound: float

    def to_local(self, x: np.ndarray) -> np.ndarray:
        d = np.asarray(x, dtype=float)[..., :2] - self.anchor
        return np.stack([d @ self.e1, d @ self.e2], axis=-1)

    def from_local(self, xp: np.ndarray) -> np.ndarray:
        xp = np.asarray(xp, dtype=float)
        return self.anchor + xp[..., :1] * self.e1 + xp[..., 1:2] * self.e2

    def phi(self, z: np.ndarray) -> np.ndarray:
        """Map physical points (2D or (x, t)) to straightened coordinates."""
        z = np.asarray(z, dtype=float)
        xp = self.to_local(z)
        y = np.stack([xp[..., 0], xp[..., 1] - self.gamma.value(xp[..., 0])], axis=-1)
        return np.concatenate([y, z[..., 2:]], axis=-1)

    def psi(self, y: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`phi`."""
        y = np.asarray(y, dtype=float)
        xp = np.stack([y[..., 0], y[..., 1] + self.gamma.value(y[..., 0])], axis=-1)
        return np.concatenate([self.from_local(xp), y[..., 2:]], axis=-1)

    def in_chart(self, y: np.ndarray, reflected: bool = False, tol: float = 1e-12) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        ok = (np.abs(y[..., 0]) <= self.chart_radius + tol) & (np.abs(y[..., 1]) <= self.chart_radius + tol)
        if not reflected:
            ok &= y[..., 1] >= -tol
        return ok

    def export_csv(self, path: str, n: int = 21, reflected: bool = False) -> None:
        """Write a sampled table of coefficient-matrix entries over the chart."""
        ys = np.linspace(-self.chart_radius, self.chart_radius, n)
        y2s = ys if reflected else np.linspace(0, self.chart_radius, n)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["y1", "y2", "L11", "L12", "L22", "L33"])
            for a in ys:
                for b in y2s:
                    L = coefficient_matrix(self, (a, b, 0.0), reflected).entries
                    w.writerow([repr(float(a)), repr(float(b)), repr(L[0, 0]), repr(L[0, 1]), repr(L[1, 1]), repr(L[2, 2])])


def _chart_from_graph(anchor, e1, e2, gamma: GraphFunction, chart_radius: float) -> StraightenedChart:
    s = np.linspace(-2 * chart_radius, 2 * chart_radius, 2001)
    g1 = np.abs(gamma.d1(s))
    g = float(g1.max())
    if g >= 1.5:
        raise DomainError(f"chart radius {chart_radius} too large: max |γ'| = {g:.3g}")
    nz = np.abs(s) > 0
    C = float(np.max(g1[nz] / np.abs(s[nz])))
    hess = float(np.max(np.abs(gamma.d2(s))))
    sigma = (g + math.sqrt(g * g + 4)) / 2  # largest singular value of DΦ and DΨ
    slack = 1 + 1e-6
    return StraightenedChart(
        np.asarray(anchor, float), np.asarray(e1, float), np.asarray(e2, float), gamma,
        float(chart_radius), 1 / (sigma * slack), sigma * slack, C, hess,
    )


def chart_from_graph(gamma: GraphFunction, chart_radius: float) -> StraightenedChart:
    """Chart for the model half-plane ``{x2 > γ(x1)}`` anchored at the origin."""
    return _chart_from_graph(np.zeros(2), np.array([1.0, 0.0]), np.array([0.0, 1.0]), gamma, chart_radius)


def straighten(
    domain: DomainSpec,
    anchor: Sequence[float],
    chart_radius: float,
    collar: CollarParams | None = None,
    allow_corners: bool = False,
) -> StraightenedChart:
    """Build the straightening chart of ``domain`` at a boundary point.

    ``chart_radius`` must not exceed the collar radius r0 (checked when
    ``collar`` is given).  Rectangle anchors closer than ``chart_radius`` to a
    corner are refused unless ``allow_corners`` is set.
    """
    if collar is not None and chart_radius > collar.r0 * (1 + 1e-12):
        raise DomainError(f"chart_radius {chart_radius} exceeds r0 = {collar.r0}")
    anchor = np.asarray(anchor, dtype=float)
    u0, dist = domain.parameter_of(anchor)
    if dist > 1e-8:
        raise DomainError(f"anchor {anchor.tolist()} is not on the boundary (distance {dist:.3g})")
    p = domain.curve(np.array(u0))
    if domain.kind == "rectangle":
        cd = np.hypot(*(domain.corners() - p).T).min()
        if cd < chart_radius and not allow_corners:
            raise DomainError("rectangle charts must stay chart_radius away from corners")
        # the side containing p, by the tangent just after it in the orientation
        t = domain._rect_tangent(np.array(u0 + 1e-12))
        e1 = t / np.linalg.norm(t)
        e2 = np.array([-e1[1], e1[0]])
        return _chart_from_graph(p, e1, e2, GraphFunction.flat(), chart_radius)
    d1 = domain.curve_derivative(np.array(u0))
    e1 = d1 / np.linalg.norm(d1)
    e2 = np.array([-e1[1], e1[0]])  # inward for a counterclockwise curve
    return _chart_from_graph(p, e1, e2, _CurveGraph(domain, u0, p, e1, e2), chart_radius)


@dataclass(frozen=True)
class CoefficientMatrix:
    y: tuple
    reflected: bool
    entries: np.ndarray

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.entries).min())


def coefficient_matrix(chart: StraightenedChart, y: Sequence[float], reflected: bool = False) -> CoefficientMatrix:
    """Coefficient matrix of the flattened Laplacian at ``y`` (3x3, n = 2).

    ``L`` is the identity except ``L[0,1] = L[1,0] = -γ'(y1)`` and
    ``L[1,1] = 1 + γ'(y1)^2``.  The reflected variant multiplies the
    off-diagonal pair by ``sgn(y2)``.
    """
    y = tuple(float(v) for v in y)
    if len(y) == 2:
        y = y + (0.0,)
    if not chart.in_chart(np.array(y), reflected):
        raise DomainError(f"point {y} lies outside the chart")
    g = float(chart.gamma.d1(np.array(y[0])))
    off = -g * (float(np.sign(y[1])) if reflected else 1.0)
    L = np.eye(3)
    L[0, 1] = L[1, 0] = off
    L[1, 1] = 1.0 + g * g
    return CoefficientMatrix(y, reflected, L)
