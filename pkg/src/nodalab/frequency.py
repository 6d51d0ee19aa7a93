"""The frequency ``N = I / H`` and tolerance-aware checks of its properties."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .geometry import CollarParams, DomainSpec, collar_params, is_star_shaped
from .lifted import DIM, BallRegion, LiftedField, QuadratureConfig, ball_integrals

# floor on comparison tolerances, relative to the size of the compared quantity
FLOAT_TOL = 1e-9


@lru_cache(maxsize=16)
def domain_collar(domain: DomainSpec) -> CollarParams:
    return collar_params(domain)


@dataclass(frozen=True)
class FrequencyEval:
    center: tuple[float, float]
    r: float
    H: float
    I_def: float
    I_ibp: float
    N: float
    quadrature_error: float
    H_error: float = 0.0

    @property
    def I(self) -> float:
        return self.I_ibp

    @property
    def N_def(self) -> float:
        return self.I_def / self.H


def evaluate_frequency(lf: LiftedField, x0, r: float, cfg: QuadratureConfig = QuadratureConfig()) -> FrequencyEval:
    bi = ball_integrals(lf, BallRegion(x0, r), cfg)
    N = bi.N
    err = (bi.I_ibp.error + abs(N) * bi.H.error) / bi.H.value
    return FrequencyEval(
        tuple(float(c) for c in np.asarray(x0, dtype=float)[:2]),
        float(r),
        bi.H.value,
        bi.I_def.value,
        bi.I_ibp.value,
        N,
        err + FLOAT_TOL * max(1.0, abs(N)),
        bi.H.error,
    )


@dataclass(frozen=True)
class RadiusProfile:
    center: tuple[float, float]
    radii: np.ndarray
    evals: list
    admissible: list  # distance certificate dist(x0, ∂Ω) >= C0 r²
    star_shaped: list  # direct boundary-normal scan

    def N(self) -> np.ndarray:
        return np.array([e.N for e in self.evals])

    def export_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "admissible", "H", "I_def", "I_ibp", "N", "err"])
            for e, a in zip(self.evals, self.admissible):
                w.writerow([repr(e.r), int(a), repr(e.H), repr(e.I_def), repr(e.I_ibp), repr(e.N), repr(e.quadrature_error)])


def admissible(domain: DomainSpec, x0, r: float, collar: CollarParams | None = None) -> bool:
    collar = collar or domain_collar(domain)
    d = float(domain.distance(np.asarray(x0, dtype=float)[None, :2])[0])
    return r < 1 and collar.certifies(d, r)


def frequency_profile(
    lf: LiftedField,
    x0,
    radii: Sequence[float],
    cfg: QuadratureConfig = QuadratureConfig(),
    collar: CollarParams | None = None,
) -> RadiusProfile:
    radii = np.asarray(radii, dtype=float)
    if np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be strictly increasing")
    if radii[0] <= 0 or radii[-1] >= 1:
        raise ValueError("radii must lie in (0, 1)")
    x0 = np.asarray(x0, dtype=float)[:2]
    evals = [evaluate_frequency(lf, x0, r, cfg) for r in radii]
    adm = [admissible(lf.domain, x0, r, collar) for r in radii]
    star = [is_star_shaped(lf.domain, x0, r)[0] for r in radii]
    return RadiusProfile(tuple(map(float, x0)), radii, evals, adm, star)


@dataclass(frozen=True)
class MonotonicityReport:
    n_checks: int
    violations: list = field(default_factory=list)  # (r1, r2, gap, tolerance)
    worst_gap: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.violations


def check_monotonicity(profile: RadiusProfile, min_admissible: int = 4) -> MonotonicityReport:
    """``N(r_{i+1}) - N(r_i) >= -(combined error)`` over consecutive admissible radii."""
    ev = [e for e, a in zip(profile.evals, profile.admissible) if a]
    if len(ev) < min_admissible:
        raise ValueError(f"need at least {min_admissible} admissible radii, got {len(ev)}")
    violations = []
    worst = math.inf
    for a, b in zip(ev[:-1], ev[1:]):
        gap = b.N - a.N
        tol = a.quadrature_error + b.quadrature_error
        worst = min(worst, gap)
        if gap < -tol:
            violations.append((a.r, b.r, gap, tol))
    return MonotonicityReport(len(ev) - 1, violations, worst)


@dataclass(frozen=True)
class DoublingReport:
    r1: float
    r2: float
    log_ratio: float  # log(H(r2)/H(r1))
    upper_slack: float  # (N(r2)+n+1) log(r2/r1) - log_ratio
    lower_slack: float  # log_ratio - (N(r1)+n+1) log(r2/r1)
    error: float

    @property
    def upper_ok(self) -> bool:
        return self.upper_slack >= -self.error

    @property
    def lower_ok(self) -> bool:
        return self.lower_slack >= -self.error

    @property
    def passed(self) -> bool:
        return self.upper_ok and self.lower_ok


def doubling_from_evals(e1: FrequencyEval, e2: FrequencyEval) -> DoublingReport:
    q = math.log(e2.r / e1.r)
    lr = math.log(e2.H / e1.H)
    err = e1.H_error / e1.H + e2.H_error / e2.H + (e1.quadrature_error + e2.quadrature_error) * q
    err += FLOAT_TOL * max(1.0, abs(lr))
    return DoublingReport(e1.r, e2.r, lr, (e2.N + DIM) * q - lr, lr - (e1.N + DIM) * q, err)


def check_doubling(lf: LiftedField, x0, r1: float, r2: float, cfg: QuadratureConfig = QuadratureConfig()) -> DoublingReport:
    """Both bounds ``(r2/r1)^{N(r1)+n+1} <= H(r2)/H(r1) <= (r2/r1)^{N(r2)+n+1}`` in log form."""
    if not 0 < r1 < r2:
        raise ValueError("need 0 < r1 < r2")
    return doubling_from_evals(evaluate_frequency(lf, x0, r1, cfg), evaluate_frequency(lf, x0, r2, cfg))


@dataclass(frozen=True)
class ChangingCenterReport:
    a: float
    r: float
    rho: float
    N0: float
    N1: float
    C: float
    error: float


def check_changing_center(
    lf: LiftedField, x0, x1, r: float, rho: float, cfg: QuadratureConfig = QuadratureConfig(), collar=None
) -> ChangingCenterReport:
    """Smallest ``C >= 0`` with ``N(x1, ρ) <= (1 + C a/r) N(x0, r) + C a/r``, ``a = |x1 - x0|``."""
    x0 = np.asarray(x0, dtype=float)[:2]
    x1 = np.asarray(x1, dtype=float)[:2]
    a = float(np.linalg.norm(x1 - x0))
    collar = collar or domain_collar(lf.domain)
    failed = []
    if a > r / 4:
        failed.append("x1 outside B_{r/4}(x0)")
    if rho > r / 2:
        failed.append("rho > r/2")
    if not collar.certifies(float(lf.domain.distance(x1[None])[0]), r - a):
        failed.append("dist(x1, boundary) < C0 (r-a)^2")
    if failed:
        raise ValueError("inadmissible geometry: " + "; ".join(failed))
    e0 = evaluate_frequency(lf, x0, r, cfg)
    e1 = evaluate_frequency(lf, x1, rho, cfg)
    err = e0.quadrature_error + e1.quadrature_error
    excess = e1.N - e0.N
    if excess <= err:
        C = 0.0
    elif a == 0:
        C = math.inf
    else:
        C = excess / ((a / r) * (e0.N + 1))
    return ChangingCenterReport(a, r, rho, e0.N, e1.N, C, err)


@dataclass(frozen=True)
class DerivativeCheck:
    r: float
    dH: float
    predicted: float
    rel_error: float


def check_derivative_identity(
    lf: LiftedField, x0, r: float, h: float = 1e-3, cfg: QuadratureConfig = QuadratureConfig()
) -> DerivativeCheck:
    """Central difference of H against ``((n+1) H + I) / r``."""
    Hp = ball_integrals(lf, BallRegion(x0, r + h), cfg).H.value
    Hm = ball_integrals(lf, BallRegion(x0, r - h), cfg).H.value
    bi = ball_integrals(lf, BallRegion(x0, r), cfg)
    dH = (Hp - Hm) / (2 * h)
    pred = (DIM * bi.H.value + bi.I_ibp.value) / r
    return DerivativeCheck(r, dH, pred, abs(dH - pred) / abs(pred))
