"""Solution fields u with potentials V such that Δu + Vu = 0 and u = 0 on ∂Ω.

Computed fields come from the shifted Dirichlet eigenproblem
``-Δu + W u = μ u`` with P1 finite elements, after which ``V = μ - W``.
Closed-form fields (square and disk eigenmodes, homogeneous harmonic
polynomials) are evaluated exactly wherever a quadrature or search needs them.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy import special
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .geometry import DomainSpec, build_domain
from .mesh import TriMesh, assemble, domain_mesh, recover_gradient
from .quadrature import EmptyRegionError, maximize_on_ball

Evaluator = Callable[[np.ndarray], np.ndarray]


class EigenSolveError(RuntimeError):
    def __init__(self, message: str, residuals: Sequence[float] = ()):
        super().__init__(message)
        self.residuals = list(residuals)


# ------------------------------------------------------------------ potentials
def _domain_max(fn: Evaluator, domain: DomainSpec, n: int = 401) -> float:
    """Max of ``fn`` over Ω from a dense grid plus two zoom passes."""
    xmin, xmax, ymin, ymax = domain.bounding_box
    X, Y = np.meshgrid(np.linspace(xmin, xmax, n), np.linspace(ymin, ymax, n))
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    pts = pts[domain.contains(pts)]
    v = fn(pts)
    best = float(v.max())
    h = max(xmax - xmin, ymax - ymin) / (n - 1)
    for idx in np.argsort(v)[-8:]:
        c = pts[idx]
        hh = h
        for _ in range(3):
            g = np.linspace(-hh, hh, 9)
            GX, GY = np.meshgrid(c[0] + g, c[1] + g)
            q = np.stack([GX.ravel(), GY.ravel()], axis=1)
            q = q[domain.contains(q)]
            if len(q) == 0:
                break
            vq = fn(q)
            c = q[int(np.argmax(vq))]
            best = max(best, float(vq.max()))
            hh /= 4
    return best


@dataclass(frozen=True)
class Potential:
    """``V(x) = offset + amplitude * sin(f x) sin(f y)``.

    ``family`` is ``"constant"`` (amplitude 0) or ``"sine_product"``.  Norms
    are over the domain the potential was attached to with :meth:`on`.
    """

    family: str = "constant"
    offset: float = 0.0
    amplitude: float = 0.0
    frequency: float = 3.0
    sup_norm: float = float("nan")
    grad_sup_norm: float = float("nan")
    analytic: bool = True

    @staticmethod
    def constant(c: float = 0.0) -> "Potential":
        return Potential("constant", offset=float(c), sup_norm=abs(float(c)), grad_sup_norm=0.0)

    @staticmethod
    def sine_product(amplitude: float, frequency: float = 3.0) -> "Potential":
        if amplitude == 0:
            return Potential.constant(0.0)
        return Potential("sine_product", amplitude=float(amplitude), frequency=float(frequency))

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.family == "constant":
            return np.full(x.shape[:-1], self.offset)
        f = self.frequency
        return self.offset + self.amplitude * np.sin(f * x[..., 0]) * np.sin(f * x[..., 1])

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.family == "constant":
            return np.zeros(x.shape)
        f, a = self.frequency, self.amplitude
        gx = a * f * np.cos(f * x[..., 0]) * np.sin(f * x[..., 1])
        gy = a * f * np.sin(f * x[..., 0]) * np.cos(f * x[..., 1])
        return np.stack([gx, gy], axis=-1)

    def on(self, domain: DomainSpec) -> "Potential":
        """Attach sup norms measured over ``domain``."""
        if self.family == "constant":
            return replace(self, sup_norm=abs(self.offset), grad_sup_norm=0.0)
        sup = _domain_max(lambda p: np.abs(self.value(p)), domain)
        gsup = _domain_max(lambda p: np.linalg.norm(self.gradient(p), axis=-1), domain)
        return replace(self, sup_norm=sup, grad_sup_norm=gsup)

    def shifted(self, mu: float, domain: DomainSpec) -> "Potential":
        """The potential ``mu - self``."""
        return replace(self, offset=mu - self.offset, amplitude=-self.amplitude).on(domain)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "offset": self.offset,
            "amplitude": self.amplitude,
            "frequency": self.frequency,
            "sup_norm": self.sup_norm,
            "grad_sup_norm": self.grad_sup_norm,
        }


# ---------------------------------------------------------------- fields
@dataclass(frozen=True, eq=False)
class SolutionField:
    name: str
    domain: DomainSpec
    potential: Potential
    eigenvalue: float
    source: str  # "closed_form" or "computed"
    mesh: TriMesh
    values: np.ndarray
    gradient: np.ndarray
    dirichlet: bool = True
    residual: float = 0.0
    params: dict = field(default_factory=dict)
    exact: tuple[Evaluator, Evaluator] | None = None
    scale: float = 1.0

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.exact is not None:
            return self.scale * self.exact[0](x)
        return self.mesh.interpolate(self.values, x)

    def evaluate_gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.exact is not None:
            return self.scale * self.exact[1](x)
        return self.mesh.interpolate(self.gradient, x)

    def scaled(self, c: float) -> "SolutionField":
        return replace(self, values=c * self.values, gradient=c * self.gradient, scale=c * self.scale)

    def with_values(self, values: np.ndarray, name: str | None = None) -> "SolutionField":
        """A mesh-only field with new nodal values (gradient recovered again)."""
        values = np.asarray(values, dtype=float)
        return replace(
            self,
            name=name or f"{self.name}*",
            values=values,
            gradient=recover_gradient(self.mesh, values),
            source="computed",
            exact=None,
            scale=1.0,
        )

    def resample(self, h: float) -> "SolutionField":
        """Closed-form field re-sampled on a mesh of spacing ``h``."""
        if self.exact is None:
            raise ValueError("only closed-form fields can be re-sampled")
        mesh = domain_mesh(self.domain, h)
        vals = self.evaluate(mesh.points)
        if self.dirichlet:
            vals = np.where(mesh.boundary, 0.0, vals)
        return replace(self, mesh=mesh, values=vals, gradient=self.evaluate_gradient(mesh.points))

    def metadata(self) -> dict:
        return {
            "name": self.name,
            "source": self.source,
            "eigenvalue": self.eigenvalue,
            "V_sup": self.potential.sup_norm,
            "gradV_sup": self.potential.grad_sup_norm,
            "mesh_h": self.mesh.h,
            "residual": self.residual,
            "domain": self.domain.to_dict(),
            "params": self.params,
        }

    def export_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "u", "ux", "uy"])
            for p, u, g in zip(self.mesh.points, self.values, self.gradient):
                w.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(u)), repr(float(g[0])), repr(float(g[1]))])
        with open(path.rsplit(".", 1)[0] + ".json", "w") as fh:
            json.dump(self.metadata(), fh, indent=2, sort_keys=True)


# ---------------------------------------------------------- closed forms
def _xm_bessel(m: int, x: np.ndarray) -> np.ndarray:
    """``x^{-m} J_m(x)``, smooth through x = 0."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1.0
    xs = x[small]
    acc = np.zeros_like(xs)
    term = np.full_like(xs, 1.0 / (2.0**m * math.factorial(m)))
    for k in range(18):
        acc += term
        term = term * (-(xs * xs) / 4.0) / ((k + 1) * (k + 1 + m))
    out[small] = acc
    xl = x[~small]
    out[~small] = special.jv(m, xl) / xl**m
    return out


def _zpow(x: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    z = (x[..., 0] + 1j * x[..., 1]) ** k
    return z.real, z.imag


def _square_mode(k: int, m: int, w: float, h: float):
    a, b = k * math.pi / w, m * math.pi / h

    def u(x):
        return np.sin(a * x[..., 0]) * np.sin(b * x[..., 1])

    def g(x):
        return np.stack(
            [a * np.cos(a * x[..., 0]) * np.sin(b * x[..., 1]), b * np.sin(a * x[..., 0]) * np.cos(b * x[..., 1])],
            axis=-1,
        )

    return u, g, a * a + b * b


def bessel_zero(m: int, n: int) -> float:
    return float(special.jn_zeros(m, n)[-1])


def _disk_mode(n: int, m: int):
    j = bessel_zero(m, n)
    if m == 0:
        c = 1.0
    else:
        xp = float(special.jnp_zeros(m, 1)[0])
        c = abs(float(special.jv(m, xp)))

    def u(x):
        rho = np.hypot(x[..., 0], x[..., 1])
        P, _ = _zpow(x, m)
        return j**m * _xm_bessel(m, j * rho) * P / c

    def g(x):
        rho = np.hypot(x[..., 0], x[..., 1])
        P, _ = _zpow(x, m)
        if m > 0:
            re, im = _zpow(x, m - 1)
            dP = m * np.stack([re, -im], axis=-1)
        else:
            dP = np.zeros(x.shape)
        gm = _xm_bessel(m, j * rho)
        gm1 = _xm_bessel(m + 1, j * rho)
        return (j**m * gm[..., None] * dP - j ** (m + 2) * (gm1 * P)[..., None] * x) / c

    return u, g, j * j


def _harmonic(k: int):
    def u(x):
        return _zpow(x, k)[0] if k > 0 else np.ones(x.shape[:-1])

    def g(x):
        if k == 0:
            return np.zeros(x.shape)
        re, im = _zpow(x, k - 1)
        return k * np.stack([re, -im], axis=-1)

    return u, g


# a disk comfortably containing every interior test ball used with harmonic fields
HARMONIC_DOMAIN_RADIUS = 4.0


def closed_form_solution(name: str, *args: int, mesh_h: float = 1 / 64, **kw) -> SolutionField:
    """Closed-form reference solutions.

    ``square_mode(k, m)``: ``sin(kπx) sin(mπy)`` on the unit square (or a
    ``width`` x ``height`` rectangle), ``V = μ = π²(k² + m²)``.
    ``disk_mode(n, m)``: ``J_m(j_{m,n} ρ) cos(mθ)`` on the unit disk, normalized to
    sup 1, ``V = j_{m,n}²``.
    ``harmonic_poly(k)``: ``Re (x1 + i x2)^k`` with ``V = 0``; no boundary
    condition (interior-ball use only).  ``constant`` is ``harmonic_poly(0)``.
    """
    if name == "square_mode":
        k, m = args
        w, h = float(kw.get("width", 1.0)), float(kw.get("height", 1.0))
        domain = DomainSpec.rectangle(w, h)
        u, g, mu = _square_mode(k, m, w, h)
        dirichlet, params = True, {"k": k, "m": m}
    elif name == "disk_mode":
        n, m = args
        domain = DomainSpec.unit_disk()
        u, g, mu = _disk_mode(n, m)
        dirichlet, params = True, {"n": n, "m": m}
    elif name in ("harmonic_poly", "constant"):
        k = args[0] if args else 0
        domain = DomainSpec.perturbed_disk(HARMONIC_DOMAIN_RADIUS, 0.0, 0)
        u, g = _harmonic(k)
        mu, dirichlet, params = 0.0, False, {"k": k}
    else:
        raise ValueError(f"unknown closed form {name!r}")
    domain = build_domain(domain, 512)
    mesh = domain_mesh(domain, mesh_h)
    vals = u(mesh.points)
    if dirichlet:
        vals = np.where(mesh.boundary, 0.0, vals)
    label = f"{name}({','.join(str(a) for a in args)})"
    return SolutionField(
        name=label,
        domain=domain,
        potential=Potential.constant(mu),
        eigenvalue=mu,
        source="closed_form",
        mesh=mesh,
        values=vals,
        gradient=g(mesh.points),
        dirichlet=dirichlet,
        params=params,
        exact=(u, g),
    )


def analytic_field(
    domain: DomainSpec,
    value: Evaluator,
    gradient: Evaluator,
    mesh_h: float = 1 / 64,
    name: str = "analytic",
    potential: Potential | None = None,
    dirichlet: bool = False,
) -> SolutionField:
    """Wrap an arbitrary smooth scalar field (test fields that need not solve anything)."""
    domain = domain if domain.samples is not None else build_domain(domain, 512)
    mesh = domain_mesh(domain, mesh_h)
    return SolutionField(
        name=name,
        domain=domain,
        potential=potential or Potential.constant(0.0),
        eigenvalue=0.0,
        source="closed_form",
        mesh=mesh,
        values=value(mesh.points),
        gradient=gradient(mesh.points),
        dirichlet=dirichlet,
        exact=(value, gradient),
    )


# ----------------------------------------------------------- eigen-solver
@lru_cache(maxsize=32)
def _eigen_cache(domain: DomainSpec, W: Potential, mesh_h: float, nev: int):
    mesh = domain_mesh(domain, mesh_h)
    K, M, Wm = assemble(mesh, None if W.family == "constant" and W.offset == 0 else W.value)
    free = np.nonzero(~mesh.boundary)[0]
    A = (K + Wm)[free][:, free].tocsc()
    B = M[free][:, free].tocsc()
    wmin = -W.sup_norm if np.isfinite(W.sup_norm) else -abs(W.offset) - abs(W.amplitude)
    try:
        # a fixed start vector; ARPACK's default is random, which breaks bit-reproducibility
        v0 = np.random.default_rng(0).standard_normal(len(free))
        vals, vecs = eigsh(A, k=nev, M=B, sigma=wmin - 1.0, which="LM", v0=v0)
    except ArpackNoConvergence as exc:
        res = []
        for lam, v in zip(exc.eigenvalues, exc.eigenvectors.T):
            res.append(float(np.linalg.norm(A @ v - lam * (B @ v)) / max(np.linalg.norm(A @ v), 1e-300)))
        raise EigenSolveError(f"eigen-iteration did not converge ({len(res)} of {nev} pairs)", res) from exc
    order = np.argsort(vals)
    return mesh, free, vals[order], vecs[:, order], K, M, Wm


def solve_eigenpairs(domain: DomainSpec, W: Potential, indices: Sequence[int], mesh_h: float) -> list[SolutionField]:
    if min(indices) < 1:
        raise ValueError("eigen indices start at 1")
    domain = domain if domain.samples is not None else build_domain(domain, 512)
    W = W.on(domain) if not np.isfinite(W.sup_norm) else W
    nev = max(indices) + 2
    mesh, free, vals, vecs, K, M, Wm = _eigen_cache(domain, W, float(mesh_h), nev)
    lumped = np.asarray(M.sum(axis=1)).ravel()
    out = []
    for k in indices:
        mu = float(vals[k - 1])
        u = np.zeros(mesh.n_nodes)
        u[free] = vecs[:, k - 1]
        u /= u[int(np.argmax(np.abs(u)))]
        # strong-form residual with the lumped Laplacian, at interior nodes
        lap = -(K @ u)[free] / lumped[free]
        wv = W.value(mesh.points[free])
        r = lap + (mu - wv) * u[free]
        scale = np.sqrt(np.sum(lumped[free] * (mu * u[free]) ** 2))
        residual = float(np.sqrt(np.sum(lumped[free] * r * r)) / scale)
        V = W.shifted(mu, domain)
        out.append(
            SolutionField(
                name=f"eigen({k})",
                domain=domain,
                potential=V,
                eigenvalue=mu,
                source="computed",
                mesh=mesh,
                values=u,
                gradient=recover_gradient(mesh, u),
                dirichlet=True,
                residual=residual,
                params={"index": k, "W": W.to_dict(), "mesh_h": mesh_h},
            )
        )
    return out


def solve_eigenpair(domain: DomainSpec, W: Potential, k: int, mesh_h: float) -> SolutionField:
    """k-th Dirichlet eigenpair of ``-Δ + W``; the returned field carries ``V = μ - W``."""
    return solve_eigenpairs(domain, W, [k], mesh_h)[0]


# --------------------------------------------------------------- sup norms
def _region(region) -> tuple[np.ndarray, float]:
    if hasattr(region, "radius"):
        return np.asarray(region.center, dtype=float)[:2], float(region.radius)
    x0, r = region
    return np.asarray(x0, dtype=float), float(r)


def sup_norm_on_region(field: SolutionField, region) -> float:
    """max |u| over ``B_r(x0) ∩ Ω``; ``region`` is a ``BallRegion`` or ``(x0, r)``."""
    x0, r = _region(region)
    if field.domain.distance(x0[None])[0] < -r:
        raise EmptyRegionError("region does not meet the domain")
    return maximize_on_ball(field.evaluate, field.domain, x0, r).value


def check_de_giorgi(lf, x0, radii: Sequence[float], theta: float = 0.5) -> dict:
    """Fitted constant in ``sup_{B_{θr}} |ū| <= C ((1-θ) r)^{-3/2} ||ū||_{L²(B_r)}``."""
    from .lifted import BallRegion, integral_H, sup_on_ball

    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    rows = []
    for r in radii:
        sup = sup_on_ball(lf, BallRegion(x0, theta * r)).value
        H = integral_H(lf, BallRegion(x0, r)).value
        ratio = sup * ((1 - theta) * r) ** 1.5 / math.sqrt(H)
        rows.append({"r": float(r), "sup": sup, "L2": math.sqrt(H), "ratio": ratio})
    return {"C": max(row["ratio"] for row in rows), "theta": theta, "rows": rows}


# ------------------------------------------------------ smallness propagation
@dataclass(frozen=True)
class SmallnessReport:
    alpha: float
    eps: list
    sup_half: list
    side: float
    consistent: bool
    note: str = ""


def smallness_propagation_experiment(
    family: Sequence[tuple[Evaluator, Evaluator]],
    cube: tuple[float, float, float],
    n: int = 129,
) -> SmallnessReport:
    """Exponent α in ``sup_{½Q} |ũ| <= C ε^α`` for a family of chart-local solutions.

    ``cube = (a, b, side)`` is the square ``[a, a+side] x [b, b+side]`` in
    straightened coordinates; the face ``F`` is its bottom edge ``y2 = b``.  For
    each member ``(value, gradient)``, ``ε = max(sup_F |ũ|, side * sup_F |∇ũ|)``.
    """
    if len(family) < 3:
        raise ValueError("need at least 3 family members")
    a, b, s = cube
    g = np.linspace(0, 1, n)
    Y1, Y2 = np.meshgrid(a + s * g, b + s * g)
    Q = np.stack([Y1.ravel(), Y2.ravel()], axis=1)
    F = np.stack([a + s * g, np.full(n, b)], axis=1)
    H1, H2 = np.meshgrid(a + s * (0.25 + 0.5 * g), b + s * (0.25 + 0.5 * g))
    half = np.stack([H1.ravel(), H2.ravel()], axis=1)
    eps, sups = [], []
    for value, grad in family:
        if np.max(np.abs(value(Q))) > 1 + 1e-9:
            raise ValueError("family member exceeds 1 on Q; normalize first")
        e = max(float(np.max(np.abs(value(F)))), s * float(np.max(np.linalg.norm(grad(F), axis=-1))))
        eps.append(e)
        sups.append(float(np.max(np.abs(value(half)))))
    e_arr, s_arr = np.array(eps), np.array(sups)
    ok = (e_arr > 0) & (s_arr > 0)
    if ok.sum() < 3:
        trivial = bool(np.all(s_arr[e_arr == 0] == 0))
        return SmallnessReport(float("nan"), eps, sups, s, trivial, "zero Cauchy data; any α is consistent")
    alpha = float(np.polyfit(np.log(e_arr[ok]), np.log(s_arr[ok]), 1)[0])
    return SmallnessReport(alpha, eps, sups, s, bool(0 < alpha <= 1 + 0.05))


def w_bound_threshold(n: int = 12, target: float = 0.5) -> float:
    """Largest ``s = R * sqrt(v)`` for which ``Δw - v w = 0`` on a cube of side R with
    ``w = 1`` on its faces keeps ``max |w - 1| <= target``.

    By the comparison principle the constant potential ``-v = -||Ṽ||_∞`` is the
    worst case for a flat chart, so a cube of side ``R <= s / sqrt(||Ṽ||_∞)``
    satisfies the bound.  Solved by 7-point finite differences on the unit cube.
    """
    h = 1.0 / (n + 1)
    e = np.ones(n)
    D = sp.diags([e[:-1], -2 * e, e[:-1]], [-1, 0, 1]) / h**2
    I = sp.identity(n)
    L = sp.kron(sp.kron(D, I), I) + sp.kron(sp.kron(I, D), I) + sp.kron(sp.kron(I, I), D)
    # boundary values w = 1 enter through the neighbours of face-adjacent nodes
    rhs1 = np.zeros((n, n, n))
    for axis in range(3):
        for end in (0, n - 1):
            sl = [slice(None)] * 3
            sl[axis] = end
            rhs1[tuple(sl)] -= 1.0 / h**2
    rhs = rhs1.ravel()
    from scipy.sparse.linalg import spsolve

    def wbar(s: float) -> float:
        w = spsolve((L - s * s * sp.identity(n**3)).tocsc(), rhs)
        return float(np.max(1 - w))

    lo, hi = 0.0, 1.0
    while wbar(hi) < target:
        hi *= 2
    for _ in range(24):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if wbar(mid) < target else (lo, mid)
    return lo
