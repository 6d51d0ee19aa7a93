import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from nodalab.lifted import BallRegion, TrivialFieldError, ball_integrals, k0, k1, k2, lift


@pytest.mark.parametrize("beta", [0.0, 0.3, 5.0, 30.0])
@pytest.mark.parametrize("tau", [1e-3, 0.05, 0.2, 0.9])
def test_kernels_match_direct_integration(beta, tau):
    e = lambda t: math.exp(2 * beta * t)
    o0 = quad(e, -tau, tau, epsabs=0, epsrel=1e-13)[0]
    o2 = quad(lambda t: (tau * tau - t * t) * e(t), -tau, tau, epsabs=0, epsrel=1e-13)[0]
    assert k0(beta, np.array([tau]))[0] == pytest.approx(o0, rel=1e-11)
    assert k2(beta, np.array([tau]))[0] == pytest.approx(o2, rel=1e-11)
    if beta:
        o1 = 2 * quad(lambda t: t * math.sinh(2 * beta * t), 0, tau, epsabs=0, epsrel=1e-13)[0]  # odd part only
        assert k1(beta, np.array([tau]))[0] == pytest.approx(o1, rel=1e-10)
    else:
        assert k1(beta, np.array([tau]))[0] == 0


@pytest.mark.parametrize("r", [0.3, 1.0, 1.7])
def test_linear_moment_exact(harmonic, r):
    # H for u = x1 on a 3-ball is the second moment (4/15) π r^5
    H = ball_integrals(harmonic[1], BallRegion((0.0, 0.0), r)).H.value
    assert H == pytest.approx(4 * math.pi * r**5 / 15, rel=1e-12)


def test_H_matches_monte_carlo_on_clipped_square_ball(square11):
    x0, r = np.array([0.1, 0.3]), 0.25
    rng = np.random.default_rng(7)
    n = 400_000
    z = rng.uniform(-r, r, size=(n, 3))
    keep = np.linalg.norm(z, axis=1) < r
    pts = z + np.array([x0[0], x0[1], 0.0])
    keep &= (pts[:, 0] > 0) & (pts[:, 0] < 1) & (pts[:, 1] > 0) & (pts[:, 1] < 1)
    vals = np.where(keep, square11.evaluate(pts) ** 2, 0.0)
    vol = (2 * r) ** 3
    mc, se = vol * vals.mean(), vol * vals.std() / math.sqrt(n)
    H = ball_integrals(square11, BallRegion(x0, r)).H
    assert H.clipped
    assert abs(H.value - mc) < 4 * se


@pytest.mark.parametrize("x0, r", [((0.5, 0.5), 0.3), ((0.1, 0.2), 0.3), ((0.02, 0.5), 0.12), ((0.9, 0.9), 0.6)])
def test_two_forms_agree_on_square(square11, x0, r):
    bi = ball_integrals(square11, BallRegion(x0, r))
    assert bi.mismatch / abs(bi.I_ibp.value) < 1e-8


@pytest.mark.parametrize("x0, r", [((0.0, 0.0), 0.5), ((0.7, 0.1), 0.25), ((-0.2, -0.9), 0.09)])
def test_two_forms_agree_on_disk(disk10, x0, r):
    bi = ball_integrals(disk10, BallRegion(x0, r))
    assert bi.mismatch / abs(bi.I_ibp.value) < 1e-8


@pytest.mark.parametrize("k", [1, 2, 3])
def test_homogeneous_harmonic_frequency(harmonic, k):
    for r in (0.1, 0.5, 1.5):
        assert ball_integrals(harmonic[k], BallRegion((0.0, 0.0), r)).N == pytest.approx(2 * k, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(0.05, 0.45))
def test_frequency_invariant_under_scaling(square11, c, r):
    a = ball_integrals(square11, BallRegion((0.4, 0.45), r)).N
    b = ball_integrals(square11.scaled(c), BallRegion((0.4, 0.45), r)).N
    assert b == pytest.approx(a, rel=1e-9)


def test_lift_constants(square11):
    assert square11.lam == pytest.approx(2 * math.pi**2)
    assert square11.beta == pytest.approx(math.sqrt(2) * math.pi)
    assert square11.check_vbar() <= 1e-9


def test_lifted_field_solves_homogeneous_equation(square11):
    # Δ_x ū + ∂_t² ū + V̄ ū with V̄ = V - λ and ∂_t² ū = λ ū gives zero
    z = np.array([[0.3, 0.6, 0.4]])
    h = 1e-4
    lap = sum(
        (square11.evaluate(z + h * e) - 2 * square11.evaluate(z) + square11.evaluate(z - h * e)) / h**2 for e in np.eye(3)
    )
    res = lap + square11.vbar(z[:, :2]) * square11.evaluate(z)
    assert abs(res[0]) < 1e-5 * abs(square11.evaluate(z)[0]) * square11.lam


def test_errors(square11):
    with pytest.raises(ValueError):
        lift(square11.base, R=1.0)
    with pytest.raises(ValueError):
        ball_integrals(square11, BallRegion((0.5, 0.5), 2.0))
    with pytest.raises(TrivialFieldError):
        ball_integrals(square11.scaled(0.0), BallRegion((0.5, 0.5), 0.2))
