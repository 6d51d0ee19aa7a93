"""The lift ``ū(x, t) = u(x) e^{βt}`` with ``β = sqrt(λ)`` and its ball integrals.

Every integral over ``B_r(z0) ∩ Ω̃`` with ``z0 = (x0, 0)`` is an integral over
the planar disk ``B_r(x0) ∩ Ω`` against a closed-form kernel in ``t``, taken
over ``|t| <= τ(x) = sqrt(r² - |x - x0|²)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .field import SolutionField
from .quadrature import SupResult, ball_rule, maximize_on_ball

DIM = 3  # n + 1 for planar domains


class TrivialFieldError(ValueError):
    """H vanishes to within quadrature tolerance."""


class QuadratureMismatch(RuntimeError):
    pass


# ------------------------------------------------------------------ kernels
def _f(x: np.ndarray) -> np.ndarray:
    """``(x cosh x - sinh x) / x³``, with a series near zero."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 0.5
    xs2 = x[small] ** 2
    acc = np.zeros_like(xs2)
    term = np.full_like(xs2, 1.0 / 3.0)  # k = 1 term: 2/3!
    for k in range(1, 12):
        acc += term
        # ratio of consecutive terms 2(k+1)/(2k+3)! over 2k/(2k+1)!
        term = term * xs2 * (k + 1) / (k * (2 * k + 2) * (2 * k + 3))
    out[small] = acc
    xl = x[~small]
    out[~small] = (xl * np.cosh(xl) - np.sinh(xl)) / xl**3
    return out


def _g(x: np.ndarray) -> np.ndarray:
    """``sinh(x) / x``."""
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    nz = x != 0
    out[nz] = np.sinh(x[nz]) / x[nz]
    return out


def k0(beta: float, tau: np.ndarray) -> np.ndarray:
    """``∫_{-τ}^{τ} e^{2βt} dt``."""
    tau = np.asarray(tau, dtype=float)
    return 2 * tau * _g(2 * beta * tau)


def k1(beta: float, tau: np.ndarray) -> np.ndarray:
    """``∫_{-τ}^{τ} t e^{2βt} dt``."""
    tau = np.asarray(tau, dtype=float)
    x = 2 * beta * tau
    return 2 * tau**2 * x * _f(x)


def k2(beta: float, tau: np.ndarray) -> np.ndarray:
    """``∫_{-τ}^{τ} (τ² - t²) e^{2βt} dt``."""
    tau = np.asarray(tau, dtype=float)
    return 4 * tau**3 * _f(2 * beta * tau)


# --------------------------------------------------------------- lifted field
@dataclass(frozen=True, eq=False)
class LiftedField:
    base: SolutionField
    lam: float
    R: float = 2.0

    @property
    def beta(self) -> float:
        return math.sqrt(self.lam)

    @property
    def domain(self):
        return self.base.domain

    @property
    def residual(self) -> float:
        # Δū + V̄ū = (Δu + Vu) e^{βt}, so the relative residual carries over
        return self.base.residual

    def vbar(self, x: np.ndarray) -> np.ndarray:
        return self.base.potential.value(x) - self.lam

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return self.base.evaluate(z[..., :2]) * np.exp(self.beta * z[..., 2])

    def gradient(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        e = np.exp(self.beta * z[..., 2])
        gx = self.base.evaluate_gradient(z[..., :2]) * e[..., None]
        gt = self.beta * self.base.evaluate(z[..., :2]) * e
        return np.concatenate([gx, gt[..., None]], axis=-1)

    def scaled(self, c: float) -> "LiftedField":
        return LiftedField(self.base.scaled(c), self.lam, self.R)

    def check_vbar(self, n: int = 101) -> float:
        """Largest sampled value of ``V̄ + |∇V̄|`` (nonpositive by construction)."""
        xmin, xmax, ymin, ymax = self.domain.bounding_box
        X, Y = np.meshgrid(np.linspace(xmin, xmax, n), np.linspace(ymin, ymax, n))
        p = np.stack([X.ravel(), Y.ravel()], axis=1)
        p = p[self.domain.contains(p)]
        g = np.linalg.norm(self.base.potential.gradient(p), axis=1)
        return float(np.max(self.vbar(p) + g))


def lift(field: SolutionField, R: float = 2.0) -> LiftedField:
    if R <= 1:
        raise ValueError("slab half-width must exceed 1")
    V = field.potential
    return LiftedField(field, float(V.sup_norm + V.grad_sup_norm), float(R))


@dataclass(frozen=True)
class BallRegion:
    """``B_r(z0)`` with ``z0 = (x0, 0)``."""

    center: tuple[float, float]
    radius: float

    def __init__(self, center, radius: float):
        c = np.asarray(center, dtype=float).ravel()
        if len(c) == 3 and c[2] != 0:
            raise ValueError("centers must lie on the t = 0 slice")
        object.__setattr__(self, "center", (float(c[0]), float(c[1])))
        object.__setattr__(self, "radius", float(radius))
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    @property
    def x0(self) -> np.ndarray:
        return np.array(self.center)

    def clipped(self, domain) -> bool:
        return bool(domain.distance(self.x0[None])[0] < self.radius)


# ------------------------------------------------------------------ quadrature
@dataclass(frozen=True)
class QuadratureConfig:
    order: int = 16
    depth: int = 6
    rtol: float = 1e-10
    max_order: int = 128


@dataclass(frozen=True)
class IntegralResult:
    value: float
    error: float
    n_points: int
    order: int
    clipped: bool


@dataclass(frozen=True)
class BallIntegrals:
    H: IntegralResult
    I_def: IntegralResult
    I_ibp: IntegralResult

    @property
    def N(self) -> float:
        return self.I_ibp.value / self.H.value

    @property
    def N_def(self) -> float:
        return self.I_def.value / self.H.value

    @property
    def mismatch(self) -> float:
        return abs(self.I_def.value - self.I_ibp.value)

    @property
    def N_error(self) -> float:
        """Error bar on N: quadrature estimates plus the two-form disagreement."""
        h = self.H.value
        return (self.I_ibp.error + abs(self.N) * self.H.error + self.mismatch) / h


def _raw(lf: LiftedField, region: BallRegion, order: int):
    rule = ball_rule(lf.domain, region.x0, region.radius, order)
    beta = lf.beta
    u = lf.base.evaluate(rule.points)
    gu = lf.base.evaluate_gradient(rule.points)
    V = lf.base.potential.value(rule.points)
    K0 = k0(beta, rule.tau)
    K1 = k1(beta, rule.tau)
    K2 = k2(beta, rule.tau)
    w = rule.weights
    H = np.sum(w * u * u * K0)
    I_def = np.sum(w * (np.sum(gu * gu, axis=1) + (2 * lf.lam - V) * u * u) * K2)
    radial = np.sum(gu * (rule.points - region.x0), axis=1)
    I_ibp = 2 * np.sum(w * (u * radial * K0 + beta * u * u * K1))
    return np.array([H, I_def, I_ibp]), len(w), rule.clipped


def ball_integrals(lf: LiftedField, region: BallRegion, cfg: QuadratureConfig = QuadratureConfig()) -> BallIntegrals:
    """H, I (definition form) and I (integrated-by-parts form) on one ball.

    The rule order doubles until successive values agree to ``rtol`` or the
    depth or order limit is reached; the last difference is the error estimate.
    """
    if region.radius >= lf.R:
        raise ValueError("radius must stay below the slab half-width")
    order = cfg.order
    prev, npts, clipped = _raw(lf, region, order)
    err = np.full(3, np.inf)
    for _ in range(cfg.depth):
        nxt = min(2 * order, cfg.max_order)
        if nxt == order:
            break
        cur, npts, clipped = _raw(lf, region, nxt)
        err = np.abs(cur - prev)
        order, prev = nxt, cur
        if np.all(err <= cfg.rtol * np.maximum(np.abs(cur), 1e-300)):
            break
    scale = np.abs(prev) + abs(prev[0])
    err = np.maximum(err, 1e-13 * scale)
    if not np.all(np.isfinite(err)):
        err = 1e-8 * scale
    if prev[0] <= 10 * err[0]:
        raise TrivialFieldError("H vanishes within tolerance")
    res = [IntegralResult(float(v), float(e), npts, order, clipped) for v, e in zip(prev, err)]
    return BallIntegrals(*res)


def integral_H(lf: LiftedField, region: BallRegion, cfg: QuadratureConfig = QuadratureConfig()) -> IntegralResult:
    return ball_integrals(lf, region, cfg).H


def integral_I_def(lf: LiftedField, region: BallRegion, cfg: QuadratureConfig = QuadratureConfig()) -> IntegralResult:
    return ball_integrals(lf, region, cfg).I_def


def integral_I_ibp(lf: LiftedField, region: BallRegion, cfg: QuadratureConfig = QuadratureConfig()) -> IntegralResult:
    return ball_integrals(lf, region, cfg).I_ibp


def sup_on_ball(lf: LiftedField, region: BallRegion) -> SupResult:
    """sup of ``|ū|`` over the clipped 3D ball; the t-maximizer is ``t = τ(x)``."""
    return maximize_on_ball(lf.base.evaluate, lf.domain, region.x0, region.radius, beta=lf.beta)
