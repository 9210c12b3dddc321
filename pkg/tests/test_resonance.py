import warnings

import numpy as np
import pytest

from elastonp.core_types import EllipseGeometry, LameParams, elliptic_to_cartesian
from elastonp.kernels import kelvin_matrix
from elastonp.resonance import (
    CalrProblem,
    DipoleSource,
    DiskGeometry,
    TruncationWarning,
    boundedness_check,
    calr_contrast,
    default_n_max,
    dipole_field,
    dipole_gradient,
    energy_sweep,
    field_map,
    fit_exponent,
    k_delta,
    k_delta_minus_kc,
    k_of_contrast,
    solve_direct,
    solve_spectral,
    spectral_coefficients,
    nominal_log_power,
)

P = LameParams(1.0, 1.0)
G = EllipseGeometry(2.0, 1.0)
R0 = G.rho0
A = np.array([[1.0, 0.3], [-0.2, 0.7]])


def _fd(f, x, h=1e-6):
    return np.stack([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(2)], -1)


class TestSource:
    def test_field_is_directional_derivative_in_source_point(self):
        # F(x) = sum_ik A_ik d/dz_k Gamma(x - z)[i, :]
        src = DipoleSource([3.0, 1.0], A)
        x = np.array([-0.5, 2.0])
        dz = _fd(lambda z: kelvin_matrix(P, x, z), src.z)  # dz[i, j, k]
        ref = np.einsum("ik,ijk->j", A, dz)
        assert np.allclose(dipole_field(P, src, x), ref, atol=1e-8)

    def test_gradient_matches_fd(self):
        src = DipoleSource([3.0, 1.0], A)
        x = np.array([-0.5, 2.0])
        assert np.allclose(dipole_gradient(P, src, x), _fd(lambda s: dipole_field(P, src, s), x), atol=1e-8)

    def test_read_only(self):
        src = DipoleSource([3.0, 1.0], A)
        with pytest.raises(ValueError):
            src.A[0, 0] = 2.0

    def test_generic_flag(self):
        assert DipoleSource([3, 0], A).calr_generic()
        # a1 = U(-pi/2) a2
        assert not DipoleSource([3, 0], [[0.7, 0.2], [-0.2, 0.7]]).calr_generic()


class TestContrast:
    def test_k_delta_gap_identity(self):
        for c in (-3.0, -0.5, calr_contrast(P, 1)):
            for d in (1e-1, 1e-6):
                assert k_delta_minus_kc(c, d) == pytest.approx(k_delta(c, d) - k_of_contrast(c), rel=1e-9)

    @pytest.mark.parametrize("lam,mu", [(1.0, 1.0), (3.0, 0.5), (-0.5, 2.0)])
    def test_calr_contrasts(self, lam, mu):
        p = LameParams(lam, mu)
        assert k_of_contrast(calr_contrast(p, +1)) == pytest.approx(p.k0, abs=1e-15)
        assert k_of_contrast(calr_contrast(p, -1)) == pytest.approx(-p.k0, abs=1e-15)
        assert nominal_log_power(p, calr_contrast(p, +1)) == 1.0
        assert nominal_log_power(p, calr_contrast(p, -1)) == 3.0
        assert nominal_log_power(p, -3.0) == 0.0

    def test_default_truncation(self):
        assert default_n_max(1e-8, R0) == int(np.ceil(abs(np.log(1e-8)) / (2 * R0))) + 20


class TestProblemValidation:
    src = DipoleSource.at_elliptic(G, 2 * R0, 0.7, A)

    @pytest.mark.parametrize("c,d", [(0.5, 1e-3), (-1.0, 0.0), (-1.0, -1e-3), (-1.0, 1e-200)])
    def test_rejects(self, c, d):
        with pytest.raises(ValueError):
            CalrProblem(P, G, c, d, self.src)

    def test_interior_source(self):
        with pytest.raises(ValueError):
            CalrProblem(P, G, -2.0, 1e-3, DipoleSource([0.5, 0.1], A))
        with pytest.raises(ValueError):
            CalrProblem(P, DiskGeometry(1.0), -2.0, 1e-3, DipoleSource([0.5, 0.1], A))


class TestSolvers:
    def test_spectral_matches_direct_off_spectrum(self):
        pb = CalrProblem(P, G, -3.0, 0.1, DipoleSource.at_elliptic(G, 1.5 * R0, 0.7, A))
        s, d = solve_spectral(pb), solve_direct(pb)
        assert s.energy == pytest.approx(d.energy, rel=1e-8)
        x = elliptic_to_cartesian(G, np.array([3 * R0, 4 * R0]), np.array([0.2, 2.5]))
        assert np.allclose(s.field(x), d.field(x), rtol=1e-7, atol=1e-12)

    def test_zero_dipole(self):
        pb = CalrProblem(P, G, calr_contrast(P), 1e-4, DipoleSource.at_elliptic(G, 1.5 * R0, 0.7, np.zeros((2, 2))))
        sol = solve_spectral(pb)
        assert sol.energy == 0.0
        assert np.all(spectral_coefficients(P, G, pb.source, 10).alpha == 0.0)
        assert np.abs(sol.field(np.array([[5.0, 0.0]]))).max() == 0.0

    def test_reflection_symmetry(self):
        M = np.diag([1.0, -1.0])
        c = calr_contrast(P)
        e1 = solve_spectral(CalrProblem(P, G, c, 1e-5, DipoleSource.at_elliptic(G, 1.5 * R0, 0.7, A))).energy
        e2 = solve_spectral(CalrProblem(P, G, c, 1e-5, DipoleSource.at_elliptic(G, 1.5 * R0, -0.7, M @ A @ M))).energy
        assert e1 == pytest.approx(e2, rel=1e-10)

    def test_bitwise_reproducible(self):
        pb = CalrProblem(P, G, calr_contrast(P), 1e-6, DipoleSource.at_elliptic(G, 1.5 * R0, 0.7, A))
        assert solve_spectral(pb).energy == solve_spectral(pb).energy

    def test_short_truncation_warns(self):
        pb = CalrProblem(P, G, calr_contrast(P), 1e-8, DipoleSource.at_elliptic(G, 1.5 * R0, 0.7, A), n_max=5)
        with pytest.warns(TruncationWarning):
            solve_spectral(pb)

    def test_disk_direct_energy_positive(self):
        pb = CalrProblem(P, DiskGeometry(1.0), -2.0, 1e-2, DipoleSource([1.5, 0.4], A))
        assert solve_direct(pb, n_nodes=64).energy > 0


class TestSweeps:
    def test_fit_exponent_synthetic(self):
        d = np.logspace(-2, -7, 6)
        E = 3.0 * d**-1.3 * np.abs(np.log(d)) ** 2
        s, _, res = fit_exponent(d, E, log_power=2)
        assert s == pytest.approx(-1.3, abs=1e-12)
        assert np.abs(res).max() < 1e-12

    def test_fit_needs_five_points(self):
        with pytest.raises(ValueError):
            fit_exponent([1e-2, 1e-3, 1e-4], [1, 2, 3])

    def test_disk_orthogonal_source_stays_bounded(self):
        # (A grad)^T grad log|x| vanishes for A = I, so the radial mode is not excited
        p = LameParams(2.0, 1.0)
        c = p.contrast_for(p.disk_radial_eigenvalue)
        pb = CalrProblem(p, DiskGeometry(1.0), c, 1e-2, DipoleSource([1.5, 0.4], np.eye(2)))
        sw = energy_sweep(pb, np.logspace(-2, -5, 5), method="direct", n_nodes=64)
        assert sw.energies.max() / sw.energies.min() < 1.01

    def test_boundedness_rejects_inner_ring(self):
        pb = CalrProblem(P, G, calr_contrast(P), 1e-3, DipoleSource.at_elliptic(G, 1.5 * R0, 0.7, A))
        with pytest.raises(ValueError):
            boundedness_check(pb, np.logspace(-3, -5, 5), 2.0 * R0)


class TestFieldMap:
    def test_masks(self):
        src = DipoleSource.at_elliptic(G, 1.5 * R0, 0.7, A)
        pb = CalrProblem(P, G, calr_contrast(P), 1e-3, src)
        xs = np.linspace(-4, 4, 9)
        out = field_map(pb, xs, xs)
        assert out["mask"][4, 4]  # origin is inside
        assert np.isnan(out["scattered"][4, 4])
        assert np.all(np.isfinite(out["scattered"][~out["mask"]]))

    def test_zero_source(self):
        src = DipoleSource.at_elliptic(G, 1.5 * R0, 0.7, np.zeros((2, 2)))
        pb = CalrProblem(P, G, calr_contrast(P), 1e-3, src)
        xs = np.linspace(-4, 4, 5)
        out = field_map(pb, xs, xs)
        assert np.nanmax(out["total"]) == 0.0

    def test_symmetric_geometry_symmetric_map(self):
        # a source on the minor axis with mirror-symmetric A gives a mirror-symmetric |u - F|
        src = DipoleSource([0.0, 3.0], np.diag([1.0, 0.5]))
        pb = CalrProblem(P, G, -3.0, 1e-2, src)
        xs = np.linspace(-4, 4, 9)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            out = field_map(pb, xs, np.array([-3.5, 1.5, 4.0]))
        s = out["scattered"]
        assert np.allclose(s, s[:, ::-1], rtol=1e-10, equal_nan=True)
