import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nodalab.geometry import (
    DomainError,
    DomainSpec,
    build_domain,
    coefficient_matrix,
    collar_params,
    is_star_shaped,
    straighten,
)

SQUARE = build_domain(DomainSpec.rectangle(1.0, 1.0), 512)
DISK = build_domain(DomainSpec.unit_disk(), 512)
BUMPY = build_domain(DomainSpec.perturbed_disk(1.0, 0.05, 3), 512)


def test_distance_sign_and_values():
    d = SQUARE.distance(np.array([[0.5, 0.5], [0.1, 0.7], [1.2, 0.5]]))
    assert d == pytest.approx([0.5, 0.1, -0.2])
    assert DISK.distance(np.array([[0.3, 0.4]]))[0] == pytest.approx(0.5)


def test_perimeter_of_rectangle_and_disk():
    assert SQUARE.perimeter == pytest.approx(4.0)
    assert DISK.perimeter == pytest.approx(2 * math.pi, rel=1e-6)


def test_config_round_trip():
    for d in (SQUARE, DISK, BUMPY):
        assert DomainSpec.from_dict(d.to_dict()).to_dict() == d.to_dict()


def test_bad_domain_rejected():
    with pytest.raises(DomainError):
        DomainSpec.from_dict({"kind": "rectangle", "width": -1.0, "height": 1.0})


def test_collar_parameters():
    c = collar_params(SQUARE)
    assert c.C0 == 1.0
    assert c.r0 == pytest.approx(0.024975)
    cd = collar_params(DISK)
    assert cd.C0 == pytest.approx(2.0, rel=1e-6)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.02, 0.98), st.floats(0.02, 0.98), st.floats(0.01, 0.9))
def test_certificate_implies_star_shaped_square(x, y, r):
    c = collar_params(SQUARE)
    d = float(SQUARE.distance(np.array([[x, y]]))[0])
    if c.certifies(d, r):
        assert is_star_shaped(SQUARE, (x, y), r)[0]


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 2 * math.pi), st.floats(0.0, 0.95), st.floats(0.01, 0.9))
def test_certificate_implies_star_shaped_bumpy(theta, rho, r):
    c = collar_params(BUMPY)
    x0 = np.array([rho * math.cos(theta), rho * math.sin(theta)])
    d = float(BUMPY.distance(x0[None])[0])
    if d > 0 and c.certifies(d, r):
        assert is_star_shaped(BUMPY, x0, r)[0]


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.05, 0.05), st.floats(0.0, 0.05))
def test_chart_round_trip_disk(y1, y2):
    chart = straighten(DISK, (1.0, 0.0), 0.1)
    y = np.array([y1, y2])
    assert np.allclose(chart.phi(chart.psi(y)), y, atol=1e-10)


def test_chart_maps_boundary_to_hyperplane():
    chart = straighten(BUMPY, BUMPY.curve(np.array(0.1)), 0.08)
    y = np.stack([np.linspace(-0.05, 0.05, 11), np.zeros(11)], axis=1)
    assert np.max(np.abs(BUMPY.level(chart.psi(y)))) < 1e-9
    inner = chart.psi(np.array([[0.0, 0.03]]))
    assert BUMPY.distance(inner)[0] > 0


def test_flat_chart_has_identity_coefficients():
    chart = straighten(SQUARE, (0.5, 0.0), 0.2)
    L = coefficient_matrix(chart, (0.01, 0.02))
    assert np.allclose(L.entries, np.eye(3))


def test_reflected_coefficients_flip_off_diagonal():
    chart = straighten(DISK, (1.0, 0.0), 0.1)
    up = coefficient_matrix(chart, (0.03, 0.02)).entries
    down = coefficient_matrix(chart, (0.03, -0.02), reflected=True).entries
    assert up[0, 1] != 0
    assert down[0, 1] == pytest.approx(-up[0, 1])
    assert down[1, 1] == pytest.approx(up[1, 1])


def test_anchor_must_be_on_boundary():
    with pytest.raises(DomainError):
        straighten(SQUARE, (0.5, 0.1), 0.1)


def test_corner_anchor_refused():
    with pytest.raises(DomainError):
        straighten(SQUARE, (0.05, 0.0), 0.1)
