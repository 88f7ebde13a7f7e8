import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frenet_sdg.geometry import (
    FrenetPoint,
    GeometryError,
    TubeError,
    circle,
    curvature,
    curvature_derivative,
    edge_intersection,
    frenet_frame,
    laplacian_coeffs,
    line,
    pull_back,
    push_forward,
    star,
)


def test_circle_frame_at_zero():
    fr = frenet_frame(circle(0.5), np.array([0.0]))
    np.testing.assert_allclose(fr.tangent[0], [0, 1], atol=1e-15)
    np.testing.assert_allclose(fr.normal[0], [1, 0], atol=1e-15)
    assert fr.curvature[0] == pytest.approx(2.0, rel=1e-14)


def test_line_has_zero_curvature():
    xi = np.linspace(-3, 3, 11)
    assert np.all(curvature(line(), xi) == 0)
    assert np.all(curvature_derivative(line(), xi) == 0)


@pytest.mark.parametrize("c", [circle(0.5), star()], ids=["circle", "star"])
def test_frame_is_orthonormal(c):
    fr = frenet_frame(c, np.linspace(0, 2 * np.pi, 97))
    np.testing.assert_allclose(np.linalg.norm(fr.tangent, axis=1), 1, atol=1e-14)
    np.testing.assert_allclose(np.linalg.norm(fr.normal, axis=1), 1, atol=1e-14)
    np.testing.assert_allclose(np.sum(fr.tangent * fr.normal, 1), 0, atol=1e-14)


def test_star_curvature_matches_polar_formula():
    # independent oracle: kappa = (r^2 + 2 r'^2 - r r'') / (r^2 + r'^2)^(3/2)
    b, r0 = 0.3, math.pi / 3
    th = np.linspace(0, 2 * np.pi, 41)
    h = 1e-4

    def r(t):
        return r0 ** 0.25 / np.sqrt(1 + b * np.sin(6 * t))

    r1 = (r(th + h) - r(th - h)) / (2 * h)
    r2 = (r(th + h) - 2 * r(th) + r(th - h)) / h ** 2
    k = (r(th) ** 2 + 2 * r1 ** 2 - r(th) * r2) / (r(th) ** 2 + r1 ** 2) ** 1.5
    np.testing.assert_allclose(curvature(star(), th), k, rtol=1e-5)


def test_curvature_derivative_against_difference_quotient():
    c = star()
    xi = np.linspace(0.1, 6.0, 23)
    h = 1e-5
    fd = (curvature(c, xi + h) - curvature(c, xi - h)) / (2 * h)
    np.testing.assert_allclose(curvature_derivative(c, xi), fd, rtol=1e-6, atol=1e-6)


def test_push_forward_parallel_circle():
    x = push_forward(circle(0.5), FrenetPoint(np.array(0.1), np.array(0.0)))
    np.testing.assert_allclose(x, [0.6, 0.0], atol=1e-15)


def test_push_forward_zero_offset_is_curve():
    c = star()
    xi = np.linspace(0, 6, 13)
    np.testing.assert_allclose(push_forward(c, FrenetPoint(np.zeros_like(xi), xi)), c.g(xi), atol=0)


def test_push_forward_jacobian_against_difference_quotients():
    c = star()
    rng = np.random.default_rng(1)
    eta, xi = rng.uniform(-0.05, 0.05, 20), rng.uniform(0, 2 * np.pi, 20)
    _, J = push_forward(c, FrenetPoint(eta, xi), jacobian=True)
    h = 1e-6
    de = (push_forward(c, FrenetPoint(eta + h, xi)) - push_forward(c, FrenetPoint(eta - h, xi))) / (2 * h)
    dx = (push_forward(c, FrenetPoint(eta, xi + h)) - push_forward(c, FrenetPoint(eta, xi - h))) / (2 * h)
    np.testing.assert_allclose(J[..., 0], de, rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(J[..., 1], dx, rtol=1e-6, atol=1e-8)


def test_push_forward_outside_tube_raises():
    with pytest.raises(TubeError):
        push_forward(circle(0.5), FrenetPoint(np.array(-0.49), np.array(0.0)))


def test_pull_back_circle_closed_form():
    p = pull_back(circle(0.5), np.array([0.6, 0.0]))
    assert float(p.eta) == pytest.approx(0.1, abs=1e-14)
    assert abs(float(np.angle(np.exp(1j * float(p.xi))))) < 1e-14


def test_pull_back_circle_random_points_vs_polar():
    rng = np.random.default_rng(2)
    r = rng.uniform(0.3, 0.7, 200)
    th = rng.uniform(-np.pi, np.pi, 200)
    X = np.c_[r * np.cos(th), r * np.sin(th)]
    p = pull_back(circle(0.5), X)
    np.testing.assert_allclose(p.eta, r - 0.5, atol=1e-13)
    np.testing.assert_allclose(np.angle(np.exp(1j * (p.xi - th))), 0, atol=1e-12)


def test_pull_back_on_curve_gives_zero_eta():
    c = star()
    xi = np.linspace(0, 2 * np.pi, 50, endpoint=False)
    p = pull_back(c, c.g(xi))
    assert np.abs(p.eta).max() < 1e-12


def test_pull_back_sign_matches_level_set():
    c = star()
    rng = np.random.default_rng(3)
    p = FrenetPoint(rng.uniform(-0.05, 0.05, 300), rng.uniform(0, 2 * np.pi, 300))
    X = push_forward(c, p)
    keep = np.abs(p.eta) > 1e-6
    np.testing.assert_array_equal(np.sign(pull_back(c, X).eta[keep]), c.side(X[:, 0], X[:, 1])[keep])


@settings(max_examples=60, deadline=None)
@given(eta=st.floats(-0.04, 0.04), xi=st.floats(0, 2 * math.pi))
def test_roundtrip_property(eta, xi):
    c = star()
    q = pull_back(c, push_forward(c, FrenetPoint(np.array(eta), np.array(xi))))
    assert abs(float(q.eta) - eta) < 1e-12
    assert abs(np.angle(np.exp(1j * (float(q.xi) - xi)))) < 1e-12


def test_roundtrip_thousand_points():
    c = circle(0.5)
    rng = np.random.default_rng(4)
    p = FrenetPoint(rng.uniform(-0.2, 0.2, 1000), rng.uniform(0, 2 * np.pi, 1000))
    q = pull_back(c, push_forward(c, p))
    assert np.abs(q.eta - p.eta).max() < 1e-12
    assert np.abs(np.angle(np.exp(1j * (q.xi - p.xi)))).max() < 1e-12


def test_laplacian_coeffs_on_circle():
    co = laplacian_coeffs(circle(0.5), FrenetPoint(np.zeros(5), np.linspace(0, 6, 5)))
    np.testing.assert_allclose(co.psi[0], 1.0, atol=0)
    np.testing.assert_allclose(co.J0[0], 4.0, rtol=1e-14)
    np.testing.assert_allclose(co.J1[0], 2.0, rtol=1e-14)
    np.testing.assert_allclose(co.J2[0], 0.0, atol=1e-13)


def test_psi_is_one_on_the_curve():
    co = laplacian_coeffs(star(), FrenetPoint(np.zeros(9), np.linspace(0, 6, 9)))
    assert np.all(co.psi[0] == 1.0)


def test_laplacian_identity_for_radius_squared():
    # w = x^2 + y^2 becomes (r0 + eta)^2 on the circle, Laplacian 4
    c = circle(0.5)
    rng = np.random.default_rng(5)
    eta = rng.uniform(-0.2, 0.2, 40)
    co = laplacian_coeffs(c, FrenetPoint(eta, rng.uniform(0, 6, 40)))
    L = 2.0 + co.J1[0] * 2 * (0.5 + eta)
    np.testing.assert_allclose(L, 4.0, rtol=1e-8)


def test_laplacian_coeff_eta_derivatives():
    c = star()
    eta, xi = np.array([0.01, -0.02]), np.array([0.3, 2.0])
    h = 1e-5
    co = laplacian_coeffs(c, FrenetPoint(eta, xi), order=2)
    up = laplacian_coeffs(c, FrenetPoint(eta + h, xi))
    dn = laplacian_coeffs(c, FrenetPoint(eta - h, xi))
    for name in ("psi", "J0", "J1", "J2"):
        a = getattr(co, name)
        fd1 = (getattr(up, name)[0] - getattr(dn, name)[0]) / (2 * h)
        fd2 = (getattr(up, name)[0] - 2 * a[0] + getattr(dn, name)[0]) / h ** 2
        np.testing.assert_allclose(a[1], fd1, rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose(a[2], fd2, rtol=1e-3, atol=1e-4)


def test_laplacian_coeffs_negative_order():
    with pytest.raises(ValueError):
        laplacian_coeffs(circle(), FrenetPoint(np.zeros(1), np.zeros(1)), -1)


@pytest.mark.parametrize("a,b,point", [((0.4, 0.0), (0.6, 0.0), (0.5, 0.0)),
                                       ((0.0, 0.4), (0.0, 0.6), (0.0, 0.5))])
def test_edge_intersection_circle(a, b, point):
    rec = edge_intersection(circle(0.5), np.array(a), np.array(b))
    np.testing.assert_allclose(rec.point, point, atol=1e-13)
    assert rec.t == pytest.approx(0.5, abs=1e-12)
    np.testing.assert_allclose(circle(0.5).g(rec.xi), point, atol=1e-12)


def test_edge_intersection_none_when_inside():
    assert edge_intersection(circle(0.5), np.array([0.0, 0.0]), np.array([0.2, 0.1])) is None


def test_edge_intersection_star_on_level_set():
    c = star()
    rec = edge_intersection(c, np.array([0.5, 0.0]), np.array([1.5, 0.0]))
    assert abs(c.level_set(*rec.point)) < 1e-13
    assert rec.point[0] == pytest.approx((math.pi / 3) ** 0.25, rel=1e-12)


def test_degenerate_parametrization_rejected():
    c = line(direction=(1.0, 0.0))
    with pytest.raises(GeometryError):
        type(c)(c.g, lambda xi: np.zeros(np.shape(xi) + (2,)), c.ddg, c.param_domain, False, c.level_set)
