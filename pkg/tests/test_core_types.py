import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.optimize import fsolve

from elastonp.core_types import (
    EllipseGeometry,
    FocalSegmentError,
    LameParams,
    cartesian_to_elliptic,
    curve_from_parametrization,
    elliptic_to_cartesian,
    make_disk_curve,
    make_ellipse_curve,
)


class TestLameParams:
    def test_derived_constants(self):
        p = LameParams(1.0, 1.0)
        assert p.alpha1 == pytest.approx(0.5 * (1 + 1 / 3))
        assert p.alpha2 == pytest.approx(0.5 * (1 - 1 / 3))
        assert p.kappa == pytest.approx(2.0)
        assert p.k0 == pytest.approx(1 / 6)

    @pytest.mark.parametrize("lam,mu", [(1.0, 0.0), (1.0, -1.0), (-2.0, 1.0), (-1.0, 1.0), (math.nan, 1.0)])
    def test_strong_convexity_rejected(self, lam, mu):
        with pytest.raises(ValueError):
            LameParams(lam, mu)

    @settings(max_examples=200, deadline=None)
    @given(mu=st.floats(1e-3, 1e3), t=st.floats(-0.999, 1e3))
    def test_k0_strictly_inside(self, mu, t):
        p = LameParams(t * mu, mu)
        assert 0 < p.k0 < 0.5
        assert p.alpha1 > 0 and p.alpha2 >= 0

    def test_contrast_inverts_k(self):
        p = LameParams(1.0, 1.0)
        for k in (p.k0, -p.k0, -0.3):
            c = p.contrast_for(k)
            assert (c + 1) / (2 * (c - 1)) == pytest.approx(k, abs=1e-15)


class TestEllipticCoordinates:
    def test_focal_axis_point(self):
        g = EllipseGeometry.from_focal(1.0, 0.5)
        assert np.allclose(elliptic_to_cartesian(g, 0.0, 0.0), [1.0, 0.0])

    def test_minor_vertex(self):
        g = EllipseGeometry.from_focal(1.0, 0.5)
        assert np.allclose(elliptic_to_cartesian(g, g.rho0, np.pi / 2), [0.0, g.b], atol=1e-15)

    def test_forward_against_scalar_math(self):
        g = EllipseGeometry.from_focal(2.0, 0.7)
        x = elliptic_to_cartesian(g, 1.0, np.pi / 4)
        assert x[0] == pytest.approx(2 * math.cosh(1) * math.cos(math.pi / 4), rel=1e-15)
        assert x[1] == pytest.approx(2 * math.sinh(1) * math.sin(math.pi / 4), rel=1e-15)

    def test_on_axis_inverse(self):
        g = EllipseGeometry.from_focal(1.0, 0.5)
        rho, om = cartesian_to_elliptic(g, np.array([math.cosh(1.0), 0.0]))
        assert rho == pytest.approx(1.0, abs=1e-14)
        assert om == pytest.approx(0.0, abs=1e-14)

    def test_round_trip_grid(self):
        g = EllipseGeometry(2.0, 1.0)
        rho, om = np.meshgrid(np.linspace(0.05, 3.0, 10), np.linspace(0.0, 2 * np.pi, 10, endpoint=False))
        x = elliptic_to_cartesian(g, rho, om)
        r2, o2 = cartesian_to_elliptic(g, x)
        back = elliptic_to_cartesian(g, r2, o2)
        assert np.allclose(back, x, rtol=1e-12, atol=1e-12)
        assert np.all((o2 >= 0) & (o2 < 2 * np.pi))

    def test_root_finder_oracle(self):
        g = EllipseGeometry.from_focal(2.0, 0.6)
        target = np.array([3.0, 1.0])
        rho, om = cartesian_to_elliptic(g, target)

        def eqs(v):
            return [2 * math.cosh(v[0]) * math.cos(v[1]) - 3.0, 2 * math.sinh(v[0]) * math.sin(v[1]) - 1.0]

        ref = fsolve(eqs, [1.0, 0.5], xtol=1e-15)
        assert rho == pytest.approx(ref[0], rel=1e-12)
        assert om == pytest.approx(ref[1], rel=1e-12)

    def test_focal_segment_rejected(self):
        g = EllipseGeometry.from_focal(1.0, 0.5)
        with pytest.raises(FocalSegmentError):
            cartesian_to_elliptic(g, np.array([0.3, 0.0]))

    def test_degenerate_ellipse_rejected(self):
        with pytest.raises(ValueError, match="degenerate"):
            EllipseGeometry(1.0, 1.0)


class TestCurves:
    def test_odd_nodes_rejected(self):
        with pytest.raises(ValueError):
            make_ellipse_curve(EllipseGeometry(2, 1), 33)
        with pytest.raises(ValueError):
            make_disk_curve(1.0, 14)

    def test_ellipse_perimeter_against_adaptive_quadrature(self):
        a, b = 2.0, 1.0
        c = make_ellipse_curve(EllipseGeometry(a, b), 64)
        ref, _ = quad(lambda t: math.hypot(a * math.sin(t), b * math.cos(t)), 0, 2 * math.pi, epsabs=1e-13, epsrel=1e-13, limit=200)
        assert c.perimeter == pytest.approx(ref, abs=1e-10)

    def test_perimeter_converges_geometrically(self):
        a, b = 3.0, 1.0
        ref, _ = quad(lambda t: math.hypot(a * math.sin(t), b * math.cos(t)), 0, 2 * math.pi, epsabs=1e-13, epsrel=1e-13, limit=200)
        errs = [abs(make_ellipse_curve(EllipseGeometry(a, b), n).perimeter - ref) for n in (16, 24, 32)]
        assert errs[1] < 0.5 * errs[0] and errs[2] < 0.5 * errs[1]

    def test_ellipse_normals_and_weights(self):
        g = EllipseGeometry(2.0, 1.0)
        c = make_ellipse_curve(g, 64)
        assert np.array_equal(c.normals[0], [1.0, 0.0])
        assert np.allclose(np.linalg.norm(c.normals, axis=1), 1.0, atol=1e-12)
        assert np.allclose(c.weights, g.h0(c.t) * 2 * np.pi / 64, rtol=1e-14)

    def test_disk_weights(self):
        c = make_disk_curve(1.0, 16)
        assert np.allclose(c.weights, 2 * np.pi / 16, rtol=1e-15)
        assert make_disk_curve(1.0, 64).perimeter == pytest.approx(2 * np.pi, abs=1e-14)
        c = make_disk_curve(1.0, 64)
        assert np.allclose(c.normals[16], [0.0, 1.0], atol=1e-15)

    def test_clockwise_rejected(self):
        def cw(t):
            g = np.stack([np.cos(t), -np.sin(t)], -1)
            return g, np.stack([-np.sin(t), -np.cos(t)], -1), -g

        with pytest.raises(ValueError, match="counter-clockwise"):
            curve_from_parametrization(cw, 32)

    def test_arrays_read_only(self):
        c = make_disk_curve(1.0, 16)
        with pytest.raises(ValueError):
            c.nodes[0, 0] = 5.0
