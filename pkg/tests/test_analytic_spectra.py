import mpmath as mp
import numpy as np
import pytest

from elastonp.analytic_spectra import (
    CATALOG_VERSION,
    disk_spectrum,
    dipole_coupling,
    ellipse_eigenfunction,
    ellipse_eigenvalues,
    ellipse_single_layer_exterior,
    ellipse_single_layer_gradient,
    ellipse_spectrum,
    half_eigenfunctions,
    kelvin_expansion,
    orthogonal_pair_identity,
    psi_density,
    transfer_matrix,
    u_tilde_elliptic,
    u_tilde_matrix,
)
from elastonp.core_types import EllipseGeometry, LameParams, elliptic_to_cartesian
from elastonp.discrete_np import single_layer_at, single_layer_gradient_at
from elastonp.kernels import kelvin_matrix


@pytest.fixture(scope="module")
def spec():
    return ellipse_spectrum(LameParams(1.0, 1.0), EllipseGeometry(2.0, 1.0))


def _mp_offsets(spec, n):
    """Eigenvalue offsets from ``+-k0`` of the transfer matrices in extended precision."""
    # the -k0 offsets are O(eps^2); carry enough digits to resolve them
    mp.mp.dps = 40 + int(4 * n * spec.geom.rho0 / np.log(10))
    p = spec.params
    lam, mu = mp.mpf(p.lam), mp.mpf(p.mu)
    k0 = mu / (2 * (2 * mu + lam))
    a1 = (1 / mu + 1 / (lam + 2 * mu)) / 2
    a2 = (1 / mu - 1 / (lam + 2 * mu)) / 2
    rho0 = mp.atanh(mp.mpf(spec.geom.b) / spec.geom.a)
    s = mp.sinh(2 * rho0)
    e = mp.e ** (-2 * n * rho0)
    out = {}
    for pair, sign in ((13, -1), (24, 1)):
        A = k0 + sign * 2 * n * mu * a2 * s * e
        B, C = mu * a2 * e, mu * a1 * e
        tr, det = A - k0, -A * k0 - B * C
        disc = mp.sqrt(tr**2 - 4 * det)
        hi, lo = (tr + disc) / 2, (tr - disc) / 2
        # the upper root sits near +k0, the lower one near -k0
        out[pair] = (hi - k0, lo + k0)
    return out


class TestEllipseCatalog:
    def test_version_string(self):
        assert CATALOG_VERSION.count(".") == 2

    @pytest.mark.parametrize("n", [1, 2, 5, 15, 40, 80, 150])
    def test_offsets_against_extended_precision(self, spec, n):
        ref = _mp_offsets(spec, n)
        got = {13: (spec.offset(1, n), spec.offset(3, n)), 24: (spec.offset(2, n), spec.offset(4, n))}
        for pair in (13, 24):
            for g, r in zip(got[pair], ref[pair]):
                assert float(g) == pytest.approx(float(r), rel=1e-10, abs=0)

    def test_literal_formula_agrees_at_moderate_n(self, spec):
        n = np.arange(1, 9)
        for j in (1, 3, 4):
            assert np.allclose(spec.k_direct(j, n), spec.k(j, n), rtol=0, atol=1e-15)
        assert np.allclose(spec.k_direct(2, n[1:]), spec.k(2, n[1:]), rtol=0, atol=1e-15)

    def test_half_eigenvalue_exact(self, spec):
        assert spec.k(2, 1) == 0.5
        assert ellipse_eigenvalues(spec.params, spec.geom, 3)[1, 0] == 0.5

    def test_literal_form_at_half_mode(self, spec):
        assert float(spec.k_direct(2, 1)) == pytest.approx(0.5, abs=1e-14)

    def test_spectrum_inside_interval(self, spec):
        T = ellipse_eigenvalues(spec.params, spec.geom, 200)
        assert np.all(np.abs(T) <= 0.5)
        assert np.all(np.isfinite(T))

    def test_accumulation(self, spec):
        k0 = spec.params.k0
        T = ellipse_eigenvalues(spec.params, spec.geom, 200)
        assert np.abs(T[:2, -1] - k0).max() < 1e-100
        assert np.abs(T[2:, -1] + k0).max() < 1e-100

    def test_minus_k0_branches_from_below(self, spec):
        n = np.arange(1, 40)
        assert np.all(spec.offset(3, n) < 0)
        assert np.all(spec.offset(4, n) < 0)

    def test_invalid_indices(self, spec):
        with pytest.raises(ValueError):
            spec.coefficients(2, 1)
        with pytest.raises(ValueError):
            spec.coefficients(5, 1)
        with pytest.raises(ValueError):
            spec.coefficients(1, 0)


class TestTransferMatrices:
    @pytest.mark.parametrize("n", [1, 3, 12])
    def test_eigenvectors(self, spec, n):
        for pair, js in ((13, (1, 3)), (24, (2, 4))):
            M = transfer_matrix(spec, pair, n)
            for j in js:
                if (j, n) == (2, 1):
                    continue
                c = np.array(spec.coefficients(j, n))
                assert np.allclose(M @ c, spec.k(j, n) * c, atol=1e-15)

    def test_star_orthogonality_within_pair(self, spec):
        for n in (2, 5):
            assert spec.star_inner(1, 3, n) == pytest.approx(0.0, abs=1e-14)
            assert spec.star_inner(2, 4, n) == pytest.approx(0.0, abs=1e-14)

    def test_cross_pair_inner_is_zero(self, spec):
        assert spec.star_inner(1, 2, 3) == 0.0


class TestAgainstDiscreteOperators:
    @pytest.fixture
    def disc(self, ellipse_np256):
        return ellipse_np256

    @pytest.mark.parametrize("j,n", [(1, 1), (3, 1), (4, 1), (1, 4), (2, 4), (3, 4), (4, 4)])
    def test_eigenpairs(self, spec, disc, j, n):
        phi = ellipse_eigenfunction(spec, j, n)(disc.curve.t).reshape(-1)
        r = disc.Kstar_h @ phi - spec.k(j, n) * phi
        assert np.abs(r).max() < 1e-10 * np.abs(phi).max()

    @pytest.mark.parametrize("j,n", [(1, 2), (4, 3)])
    def test_star_norm_matches_gram(self, spec, disc, j, n):
        phi = ellipse_eigenfunction(spec, j, n)(disc.curve.t).reshape(-1)
        assert disc.star_inner(phi, phi).real == pytest.approx(spec.star_norm(j, n) ** 2, rel=1e-10)

    def test_half_eigenfunctions(self, spec, disc):
        for f in half_eigenfunctions(spec):
            phi = f(disc.curve.t).reshape(-1)
            assert np.abs(disc.Kstar_h @ phi - 0.5 * phi).max() < 1e-10

    @pytest.mark.parametrize("j,n", [("psi1", 2), ("psi2", 1), ("psi3", 3), ("psi4", 2), (1, 4), (4, 4)])
    def test_exterior_single_layer(self, spec, disc, j, n):
        x = elliptic_to_cartesian(spec.geom, np.array([0.8, 1.2, 2.0]), np.array([0.3, 2.0, 4.0]))
        t = disc.curve.t
        if isinstance(j, str):
            dens = psi_density(spec.geom, int(j[-1]), n, t)
        else:
            dens = ellipse_eigenfunction(spec, j, n)(t)
        dens = dens.reshape(-1)
        num = single_layer_at(spec.params, disc.curve, dens, x, n_fine=4096)
        assert np.allclose(ellipse_single_layer_exterior(spec, j, n, x), num, atol=1e-11)
        gnum = single_layer_gradient_at(spec.params, disc.curve, dens, x, n_fine=4096)
        assert np.allclose(ellipse_single_layer_gradient(spec, j, n, x), gnum, atol=1e-10)

    def test_boundary_trace_matches_matrix(self, spec, disc):
        dens = psi_density(spec.geom, 1, 3, disc.curve.t).reshape(-1)
        an = ellipse_single_layer_exterior(spec, "psi1", 3, disc.curve.nodes).reshape(-1)
        assert np.abs(disc.S_h @ dens - an).max() < 1e-12


class TestUTilde:
    def test_vanishes_on_boundary(self, spec):
        w = np.linspace(0, 2 * np.pi, 50)
        U = u_tilde_elliptic(spec.geom, spec.geom.rho0, w)
        assert np.abs(U).max() < 1e-14

    def test_nonsingular_off_boundary(self, spec):
        z = elliptic_to_cartesian(spec.geom, 1.7 * spec.geom.rho0, 1.1)
        U, det = u_tilde_matrix(spec.geom, z)
        assert abs(det) > 0
        assert det == pytest.approx(np.linalg.det(U), rel=1e-12)


class TestOrthogonalPair:
    def test_random_inputs(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            a1, a2 = rng.normal(size=(2, 2))
            n = int(rng.integers(1, 30))
            om = rng.uniform(0, 2 * np.pi)
            b = rng.normal(size=2)
            lhs, rhs = orthogonal_pair_identity(a1, a2, n, om, b)
            assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


class TestDipoleCoupling:
    def test_zero_dipole(self, spec):
        z = elliptic_to_cartesian(spec.geom, 2 * spec.geom.rho0, 0.4)
        ex, le = dipole_coupling(spec, 1, 3, z, np.zeros((2, 2)))
        assert ex == 0.0 and le == 0.0

    def test_leading_term_dominates_for_first_pair(self, spec):
        # for j = 3, 4 the remainder is only O(1/n) smaller than the leading term
        A = np.array([[1.0, 0.3], [-0.2, 0.7]])
        z = elliptic_to_cartesian(spec.geom, 3 * spec.geom.rho0, 0.4)
        for j in (1, 2):
            ex, le = dipole_coupling(spec, j, 6, z, A)
            assert abs(ex - le) < 1e-2 * abs(ex)

    def test_interior_source_rejected(self, spec):
        with pytest.raises(ValueError):
            dipole_coupling(spec, 1, 2, np.array([0.1, 0.1]), np.eye(2))


class TestExpansion:
    def test_center_source(self, spec):
        x = elliptic_to_cartesian(spec.geom, 2 * spec.geom.rho0, 0.9)
        got = kelvin_expansion(spec, x, np.zeros(2), 40)
        assert np.allclose(got, kelvin_matrix(spec.params, x, np.zeros(2)), atol=1e-10)

    def test_divergent_truncation_warns(self, spec):
        x = elliptic_to_cartesian(spec.geom, 1.01 * spec.geom.rho0, 0.9)
        y = elliptic_to_cartesian(spec.geom, spec.geom.rho0, 1.0)
        with pytest.warns(RuntimeWarning):
            kelvin_expansion(spec, x, y, 5, y_on_boundary=True)


class TestDisk:
    def test_unit_lame(self):
        d = disk_spectrum(LameParams(1.0, 1.0))
        vals = dict((v, m) for v, m in d.eigenvalues)
        assert vals[0.5] == 3
        assert d.radial_coincides_with_minus_k0

    def test_radial_value_general(self):
        p = LameParams(2.0, 1.0)
        d = disk_spectrum(p)
        assert not d.radial_coincides_with_minus_k0
        assert any(v == pytest.approx(-0.25) for v, _ in d.eigenvalues)

    def test_eigenfunctions_against_discrete(self, disk_np128):
        d = disk_spectrum(LameParams(1.0, 1.0))
        t = disk_np128.curve.t
        for v, _ in d.eigenvalues:
            phi = d.eigenfunction(v, 0, 2)(t).reshape(-1) if v != 0.5 else d.eigenfunction(v, 0)(t).reshape(-1)
            assert np.abs(disk_np128.Kstar_h @ phi - v * phi).max() < 1e-10
