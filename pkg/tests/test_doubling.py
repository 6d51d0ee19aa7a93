import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nodalab.doubling import (
    ChartView,
    Cube,
    center_grid,
    check_almost_monotonicity,
    check_bridge_N_M,
    cube_doubling,
    cube_radius_cap,
    doubling_index,
    doubling_ladder,
    global_doubling_bound,
    vanishing_order,
)
from nodalab.field import closed_form_solution
from nodalab.geometry import straighten
from nodalab.lifted import BallRegion, lift, sup_on_ball


@pytest.mark.parametrize("k", [1, 2, 3])
def test_homogeneous_doubling_index(harmonic, k):
    for r in (0.1, 0.4, 1.2):
        assert doubling_index(harmonic[k], (0.0, 0.0), r).M == pytest.approx(2 * k, abs=1e-6)


def test_sup_matches_dense_grid(square11):
    x0, r = np.array([0.3, 0.2]), 0.25
    g = np.linspace(-r, r, 161)
    X, Y, T = np.meshgrid(g, g, g, indexing="ij")
    z = np.stack([X.ravel() + x0[0], Y.ravel() + x0[1], T.ravel()], axis=1)
    inside = (np.linalg.norm(z - [x0[0], x0[1], 0], axis=1) <= r) & (z[:, 0] > 0) & (z[:, 1] > 0)
    grid_max = np.max(np.abs(square11.evaluate(z[inside])))
    got = sup_on_ball(square11, BallRegion(x0, r)).value
    # Lipschitz bound of ū on the ball times the grid half-diagonal
    lip = (math.sqrt(2) * math.pi + square11.beta) * math.exp(square11.beta * r)
    assert grid_max <= got * (1 + 1e-9)
    assert got <= grid_max + lip * (g[1] - g[0]) * math.sqrt(3) / 2


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.floats(0.02, 0.3), st.floats(1.05, 2.0))
def test_sup_monotone_under_inclusion(square11, x, y, r, q):
    a = sup_on_ball(square11, BallRegion((x, y), r))
    b = sup_on_ball(square11, BallRegion((x, y), q * r))
    assert a.value <= b.value + a.error + b.error + 1e-12


@settings(max_examples=20, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_doubling_index_invariant_under_scaling(square11, c):
    a = doubling_index(square11, (0.35, 0.6), 0.2).M
    b = doubling_index(square11.scaled(c), (0.35, 0.6), 0.2).M
    assert b == pytest.approx(a, rel=1e-9, abs=1e-12)


def test_ladder_matches_single_evaluations(square11):
    radii = [0.05, 0.1, 0.2, 0.4]
    lad = doubling_ladder(square11, (0.5, 0.4), radii)
    for ev, r in zip(lad, radii):
        assert ev.M == pytest.approx(doubling_index(square11, (0.5, 0.4), r).M, rel=1e-9)


def test_bridge_constants_finite(square11):
    rep = check_bridge_N_M(square11, (0.5, 0.5), 0.1, 0.5)
    assert math.isfinite(rep.C1) and math.isfinite(rep.C2)
    with pytest.raises(ValueError):
        check_bridge_N_M(square11, (0.02, 0.5), 0.3, 0.5)


def test_almost_monotonicity(square11):
    rep = check_almost_monotonicity(square11, (0.5, 0.5), [0.02, 0.05, 0.1], 0.2)
    assert rep.C >= 1
    assert max(rep.M_grid) <= rep.C * rep.M_r0 + rep.C


def test_global_bound_rejects_interior_fields(harmonic):
    with pytest.raises(ValueError):
        global_doubling_bound(harmonic[1], np.zeros((1, 2)), [0.1])


def test_center_grid_covers_closure():
    dom = closed_form_solution("square_mode", 1, 1, mesh_h=1 / 8).domain
    assert len(center_grid(dom, 0.25)) == 25
    assert len(center_grid(dom, 0.25, include_boundary=False)) == 9


@pytest.mark.parametrize("k", [0, 1, 2])
def test_vanishing_order_of_homogeneous_fields(harmonic, k):
    vo = vanishing_order(harmonic[k], (0.0, 0.0), np.geomspace(0.01, 0.1, 6))
    assert vo.slope == pytest.approx(k, abs=1e-6)
    assert vo.reliable


def test_vanishing_order_needs_a_decade(harmonic):
    with pytest.raises(ValueError):
        vanishing_order(harmonic[1], (0.0, 0.0), [0.02, 0.05])


def test_flat_chart_view_agrees_with_physical_sup():
    lf = lift(closed_form_solution("square_mode", 2, 1, mesh_h=1 / 16))
    view = ChartView(lf, straighten(lf.domain, (0.5, 0.0), 0.2))
    assert view.flat
    a = view.sup((0.01, 0.05), 0.04).value
    b = sup_on_ball(lf, BallRegion((0.51, 0.05), 0.04)).value
    assert a == pytest.approx(b, rel=1e-12)


def test_cube_doubling_on_flat_chart():
    lf = lift(closed_form_solution("square_mode", 2, 1, mesh_h=1 / 16))
    view = ChartView(lf, straighten(lf.domain, (0.5, 0.0), 0.2))
    Q = Cube(-0.01, 0.0, 0.02)
    cd = cube_doubling(view, Q, lattice=5, n_radii=4)
    assert cube_radius_cap(Q) == pytest.approx(min(30 * 0.02 * math.sqrt(3), 0.95))
    assert cd.argmax_radius <= cube_radius_cap(Q)
    assert cd.M_Q > 0
