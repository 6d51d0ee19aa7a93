"""Quadrature and maximization over a planar disk clipped by the domain.

Points of ``B_r(x0) ∩ Ω`` are written in polar form about ``x0`` with the
radial substitution ``rho = r sin(s)``, so that ``tau = sqrt(r^2 - rho^2) =
r cos(s)`` and ``dA = r^2 sin(s) cos(s) ds dphi``.  The angle range is split
at every direction where the circle of radius ``r`` meets the boundary (and at
rectangle corners); on each panel either the full radius is available or the
radial range ends on the boundary, and both cases are smooth in ``(phi, s)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import DomainSpec

TWO_PI = 2 * math.pi


class EmptyRegionError(ValueError):
    """The disk does not meet the domain."""


@dataclass(frozen=True)
class BallRule:
    points: np.ndarray
    weights: np.ndarray  # area weights
    tau: np.ndarray  # half-height of the 3D ball above each point
    clipped: bool
    n_panels: int
    order: int


def _gauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def breakpoints(domain: DomainSpec, x0: np.ndarray, r: float) -> np.ndarray:
    angles = list(domain.circle_crossings(x0, r))
    for c in domain.corners():
        d = c - x0
        if 0 < math.hypot(*d) < r:
            angles.append(math.atan2(d[1], d[0]) % TWO_PI)
    return np.unique(np.round(np.array(angles, dtype=float), 15))


def panels(domain: DomainSpec, x0: np.ndarray, r: float, max_width: float = math.pi / 4):
    """Angular panels ``(a, b, clipped)`` covering the full turn."""
    bps = breakpoints(domain, x0, r)
    if len(bps) == 0:
        edges = np.array([0.0, TWO_PI])
    else:
        edges = np.concatenate([bps, [bps[0] + TWO_PI]])
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a < 1e-14:
            continue
        k = max(1, int(math.ceil((b - a) / max_width)))
        sub = np.linspace(a, b, k + 1)
        out.extend(zip(sub[:-1], sub[1:]))
    mids = np.array([(a + b) / 2 for a, b in out])
    dirs = np.stack([np.cos(mids), np.sin(mids)], axis=1)
    exits = domain.ray_exit(x0, dirs, r)
    clipped = exits < r * (1 - 1e-12)
    return [(a, b, bool(c)) for (a, b), c in zip(out, clipped)]


def ball_rule(domain: DomainSpec, x0, r: float, order: int = 16) -> BallRule:
    """Tensor Gauss rule on ``B_r(x0) ∩ Ω`` with ``order`` nodes per direction and panel."""
    x0 = np.asarray(x0, dtype=float)
    pans = panels(domain, x0, r)
    xg, wg = _gauss(order)
    phis, wphis, smaxs = [], [], []
    clip_any = False
    for a, b, clipped in pans:
        if clipped:
            # cosine clustering towards both panel ends, where the radial limit
            # has a square-root singularity as it meets the circle
            v = 0.5 * math.pi * (xg + 1)
            phi = a + (b - a) * 0.5 * (1 - np.cos(v))
            wphi = wg * (b - a) * 0.25 * math.pi * np.sin(v)
            clip_any = True
        else:
            phi = a + (b - a) * 0.5 * (xg + 1)
            wphi = wg * (b - a) * 0.5
        phis.append(phi)
        wphis.append(wphi)
        smaxs.append(np.full(order, np.nan) if not clipped else None)
    phi = np.concatenate(phis)
    wphi = np.concatenate(wphis)
    dirs = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    need = np.concatenate([np.zeros(order, bool) if s is not None else np.ones(order, bool) for s in smaxs])
    smax = np.full(phi.shape, 0.5 * math.pi)
    if need.any():
        ex = domain.ray_exit(x0, dirs[need], r)
        smax[need] = np.arcsin(np.clip(ex / r, 0.0, 1.0))
    s = smax[:, None] * 0.5 * (xg[None, :] + 1)
    ws = smax[:, None] * 0.5 * wg[None, :]
    rho = r * np.sin(s)
    tau = r * np.cos(s)
    pts = x0 + rho[..., None] * dirs[:, None, :]
    w = (r * r) * np.sin(s) * np.cos(s) * ws * wphi[:, None]
    keep = w > 0
    return BallRule(pts[keep], w[keep], tau[keep], clip_any, len(pans), order)


@dataclass(frozen=True)
class SupResult:
    value: float
    point: np.ndarray
    error: float


def _grid_points(domain, x0, r, phi, sigma):
    dirs = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    rmax = domain.ray_exit(x0, dirs.reshape(-1, 2), r).reshape(phi.shape)
    rho = sigma * rmax
    pts = x0 + rho[..., None] * dirs
    tau = np.sqrt(np.maximum(r * r - rho * rho, 0.0))
    return pts, tau


def maximize_on_ball(
    fn: Callable[[np.ndarray], np.ndarray],
    domain: DomainSpec,
    x0,
    r: float,
    beta: float = 0.0,
    n_phi: int = 96,
    n_sigma: int = 25,
    rounds: int = 7,
    candidates: int = 4,
) -> SupResult:
    """Maximize ``|fn(x)| * exp(beta * tau(x))`` over ``B_r(x0) ∩ Ω``.

    A polar sample grid is followed by zoomed re-sampling around the best
    candidates; the last round's improvement serves as the error estimate.
    """
    x0 = np.asarray(x0, dtype=float)
    if domain.distance(x0[None])[0] < -r:
        raise EmptyRegionError("ball does not meet the domain")
    phi0 = np.concatenate([np.arange(n_phi) * TWO_PI / n_phi, breakpoints(domain, x0, r)])
    sig0 = np.linspace(0.0, 1.0, n_sigma)
    P, S = np.meshgrid(phi0, sig0, indexing="ij")
    pts, tau = _grid_points(domain, x0, r, P, S)
    val = np.abs(fn(pts.reshape(-1, 2))).reshape(P.shape) * np.exp(beta * tau)
    if not np.isfinite(val).all():
        raise FloatingPointError("non-finite values while maximizing")
    order = np.argsort(val, axis=None)[::-1]
    dphi, dsig = TWO_PI / n_phi, 1.0 / (n_sigma - 1)
    picked: list[tuple[float, float]] = []
    for flat in order:
        i, j = np.unravel_index(flat, val.shape)
        c = (P[i, j], S[i, j])
        if all(abs((c[0] - q[0] + math.pi) % TWO_PI - math.pi) > 2 * dphi or abs(c[1] - q[1]) > 2 * dsig for q in picked):
            picked.append(c)
        if len(picked) == candidates:
            break
    best_val, best_pt, err = float(val.max()), pts.reshape(-1, 2)[int(np.argmax(val))], 0.0
    zoom = np.linspace(-1.0, 1.0, 7)
    for pc, sc in picked:
        hp, hs = dphi, dsig
        cur = -1.0
        last_gain = 0.0
        for _ in range(rounds):
            P2, S2 = np.meshgrid(pc + hp * zoom, np.clip(sc + hs * zoom, 0.0, 1.0), indexing="ij")
            p2, t2 = _grid_points(domain, x0, r, P2, S2)
            v2 = np.abs(fn(p2.reshape(-1, 2))).reshape(P2.shape) * np.exp(beta * t2)
            k = int(np.argmax(v2))
            i, j = np.unravel_index(k, v2.shape)
            last_gain = max(0.0, float(v2[i, j]) - cur) if cur >= 0 else 0.0
            if v2[i, j] > cur:
                cur, pc, sc = float(v2[i, j]), P2[i, j], S2[i, j]
                cand_pt = p2[i, j]
            hp, hs = hp / 3, hs / 3
        if cur > best_val:
            best_val, best_pt = cur, cand_pt
            err = last_gain
    err = max(err, 1e-12 * best_val)
    return SupResult(best_val, np.asarray(best_pt), err)
