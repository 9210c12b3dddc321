"""Closed-form NP spectra on disks and ellipses.

Ellipse eigenfunctions are built from the densities

    psi_1 = h0^-1 ( cos nw,  sin nw)     psi_2 = h0^-1 (-sin nw, cos nw)
    psi_3 = h0^-1 ( cos nw, -sin nw)     psi_4 = h0^-1 ( sin nw, cos nw)

``K*`` maps span{psi_1, psi_3} and span{psi_2, psi_4} into themselves, so
every eigenfunction is a two-term combination.  Exterior single layers of
``psi_j`` are closed forms in elliptic coordinates; gradients are taken
analytically and pushed through ``grad = (R / h^2) C (d_rho, d_w)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core_types import (
    EllipseGeometry,
    LameParams,
    cartesian_to_elliptic,
    make_ellipse_curve,
)

__all__ = [
    "CATALOG_VERSION",
    "DiskSpectrum",
    "EllipseSpectrum",
    "disk_spectrum",
    "ellipse_spectrum",
    "ellipse_eigenvalues",
    "ellipse_eigenfunction",
    "half_eigenfunctions",
    "psi_density",
    "ellipse_star_norms",
    "ellipse_single_layer_exterior",
    "ellipse_single_layer_gradient",
    "dipole_coupling",
    "rotation",
    "b_vector",
    "u_tilde_matrix",
    "u_tilde_elliptic",
    "transfer_matrix",
    "kelvin_expansion",
    "ExpansionFamily",
    "orthogonal_pair_identity",
]

CATALOG_VERSION = "1.0.0"


def rotation(theta):
    """Counter-clockwise rotation ``U(theta)``; broadcasts over ``theta``."""
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


# --- disk ---------------------------------------------------------------------


@dataclass(frozen=True)
class DiskSpectrum:
    """Disk catalog.  Multiplicity ``None`` means infinite."""

    params: LameParams
    radius: float

    @property
    def eigenvalues(self):
        p = self.params
        return [(0.5, 3), (p.disk_radial_eigenvalue, 1), (p.k0, None), (-p.k0, None)]

    @property
    def radial_coincides_with_minus_k0(self) -> bool:
        return bool(np.isclose(self.params.disk_radial_eigenvalue, -self.params.k0, rtol=0, atol=1e-15))

    def merged_eigenvalues(self):
        """Distinct values; the radial entry is folded into ``-k0`` when they coincide."""
        ev = self.eigenvalues
        if self.radial_coincides_with_minus_k0:
            return [ev[0], ev[2], (ev[3][0], None)]
        return ev

    def eigenfunction(self, value: float, index: int, m: int = 1):
        """Callable ``theta -> (..., 2)`` for an eigenfunction of ``value``.

        ``index`` picks one of the (at most three) listed families; ``m``
        is the angular order for the ``+-k0`` families.
        """
        r, p = self.radius, self.params

        def vec(a, b):
            return lambda th: np.stack([a(np.asarray(th, float)), b(np.asarray(th, float))], -1)

        if value == 0.5:
            fams = [
                vec(lambda th: np.ones_like(th), lambda th: np.zeros_like(th)),
                vec(lambda th: np.zeros_like(th), lambda th: np.ones_like(th)),
                vec(lambda th: r * np.sin(th), lambda th: -r * np.cos(th)),
            ]
            return fams[index]
        if value == p.disk_radial_eigenvalue and index == 0 and m == 1 and not self.radial_coincides_with_minus_k0:
            return vec(lambda th: r * np.cos(th), lambda th: r * np.sin(th))
        if value == p.k0:
            if m < 2:
                raise ValueError("+k0 eigenfunctions start at m = 2")
            fams = [
                vec(lambda th: np.cos(m * th), lambda th: np.sin(m * th)),
                vec(lambda th: -np.sin(m * th), lambda th: np.cos(m * th)),
            ]
            return fams[index]
        if value == -p.k0:
            fams = [
                vec(lambda th: np.cos(m * th), lambda th: -np.sin(m * th)),
                vec(lambda th: np.sin(m * th), lambda th: np.cos(m * th)),
            ]
            if self.radial_coincides_with_minus_k0 and index == 2:
                return vec(lambda th: r * np.cos(th), lambda th: r * np.sin(th))
            return fams[index]
        raise ValueError(f"{value} is not a disk eigenvalue")


def disk_spectrum(params: LameParams, radius: float = 1.0) -> DiskSpectrum:
    if not radius > 0:
        raise ValueError("radius must be positive")
    return DiskSpectrum(params, float(radius))


# --- ellipse catalog ----------------------------------------------------------


@dataclass(frozen=True)
class EllipseSpectrum:
    """Eigenvalue and eigenfunction catalog of ``K*`` on an ellipse.

    All quantities are evaluated in forms scaled by ``eps = exp(-2 n rho0)``
    so nothing overflows for large ``n``, and the differences ``k - (+-k0)``
    are computed without cancellation.
    """

    params: LameParams
    geom: EllipseGeometry

    @property
    def q(self) -> float:
        return (self.params.lam + self.params.mu) * np.sinh(2.0 * self.geom.rho0)

    @property
    def P(self) -> float:
        lam, mu = self.params.lam, self.params.mu
        return (lam + mu) * (lam + 3.0 * mu)

    def eps(self, n):
        return np.exp(-2.0 * np.asarray(n, dtype=float) * self.geom.rho0)

    def gamma_scaled(self, n, sign: int):
        """``gamma_n^{+-} exp(-2 n rho0)``."""
        n = np.asarray(n, dtype=float)
        e, mu, q = self.eps(n), self.params.mu, self.q
        return np.sqrt(mu**2 + self.P * e**2 + n * q * e * (sign * 2.0 * mu + n * q * e))

    def gamma(self, n, sign: int):
        """``gamma_n^{+-}`` itself; overflows only where ``exp(2 n rho0)`` does."""
        n = np.asarray(n, dtype=float)
        return self.gamma_scaled(n, sign) * np.exp(2.0 * n * self.geom.rho0)

    def offset(self, j: int, n):
        """``k(j, n) - k0`` for ``j = 1, 2`` and ``k(j, n) + k0`` for ``j = 3, 4``."""
        n = np.asarray(n, dtype=float)
        e, mu, q, P = self.eps(n), self.params.mu, self.q, self.P
        L2 = 2.0 * (self.params.lam + 2.0 * mu)
        if j == 1:
            g = self.gamma_scaled(n, -1)
            return (P * e**2 - 4.0 * n * q * mu * e) / ((g + mu + q * n * e) * L2)
        if j == 2:
            g = self.gamma_scaled(n, +1)
            return (P * e**2 + 4.0 * n * q * mu * e) / ((g + mu - q * n * e) * L2)
        if j == 3:
            g = self.gamma_scaled(n, -1)
            return -P * e**2 / ((g + mu - q * n * e) * L2)
        if j == 4:
            g = self.gamma_scaled(n, +1)
            return -P * e**2 / ((g + mu + q * n * e) * L2)
        raise ValueError(f"j must be 1..4, got {j}")

    def k_direct(self, j: int, n):
        """Literal transcription ``e^{-2n rho0}(+-qn +- gamma)/(2(lam + 2mu))``, no special cases."""
        n = np.asarray(n, dtype=float)
        e, q = self.eps(n), self.q
        L2 = 2.0 * (self.params.lam + 2.0 * self.params.mu)
        sgn_q, sgn_g, s = {1: (-1, 1, -1), 2: (1, 1, 1), 3: (-1, -1, -1), 4: (1, -1, 1)}[j]
        return (sgn_q * q * n * e + sgn_g * self.gamma_scaled(n, s)) / L2

    def k(self, j: int, n):
        """Eigenvalue ``k(j, n)``; ``k(2, 1)`` is exactly ``1/2``."""
        if j == 2 and np.any(np.asarray(n) == 1):
            n = np.asarray(n)
            out = np.where(n == 1, 0.5, self.k(2, np.where(n == 1, 2, n)))
            return float(out) if out.ndim == 0 else out
        base = self.params.k0 if j in (1, 2) else -self.params.k0
        return base + self.offset(j, n)

    def p(self, n):
        return (0.5 - self.params.k0) * self.eps(n)

    def coefficients(self, j: int, n: int):
        """``(c_a, c_b)`` with ``phi_{j,n} = c_a psi_a + c_b psi_b`` and ``(a, b) = (1, 3)`` or ``(2, 4)``."""
        _check_index(j, n)
        k0 = self.params.k0
        if j in (1, 2):
            return 1.0, float(self.p(n) / (k0 + self.k(j, n)))
        # (k0 + k_{3|4,n}) / p_n with the offset taken from the stable form
        return float(self.offset(j, n) / self.p(n)), 1.0

    def pair(self, j: int):
        return (1, 3) if j in (1, 3) else (2, 4)

    # --- *-inner products -----------------------------------------------

    def psi_gram(self, j: int, n: int) -> np.ndarray:
        """2x2 Gram of ``(psi_a, psi_b)`` in ``(.,.)_*`` for the pair containing ``j``."""
        a1, a2 = self.params.alpha1, self.params.alpha2
        s = np.sinh(2.0 * self.geom.rho0)
        e = float(self.eps(n))
        sign = -1.0 if j in (1, 3) else 1.0
        g11 = np.pi * (a1 / n + sign * 2.0 * a2 * s * e)
        g22 = np.pi * self.params.kappa * a2 / n
        g12 = np.pi * a1 * e / n
        return np.array([[g11, g12], [g12, g22]])

    def star_inner(self, j1: int, j2: int, n: int) -> float:
        if self.pair(j1) != self.pair(j2):
            return 0.0
        G = self.psi_gram(j1, n)
        c1, c2 = np.array(self.coefficients(j1, n)), np.array(self.coefficients(j2, n))
        return float(c1 @ G @ c2)

    def star_norm(self, j: int, n: int) -> float:
        return float(np.sqrt(self.star_inner(j, j, n)))


def _check_index(j: int, n: int):
    if j not in (1, 2, 3, 4) or int(n) != n or n < 1:
        raise ValueError(f"invalid eigenfunction index (j={j}, n={n})")
    if j == 2 and n == 1:
        raise ValueError("(j=2, n=1) belongs to the 1/2 eigenspace; use half_eigenfunctions")


def ellipse_spectrum(params: LameParams, geom: EllipseGeometry) -> EllipseSpectrum:
    return EllipseSpectrum(params, geom)


def ellipse_eigenvalues(params: LameParams, geom: EllipseGeometry, n_max: int) -> np.ndarray:
    """Table ``T[j - 1, n - 1] = k(j, n)`` for ``j = 1..4``, ``n = 1..n_max`` (``T[1, 0] = 1/2``)."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    spec = EllipseSpectrum(params, geom)
    n = np.arange(1, n_max + 1)
    return np.array([np.atleast_1d(spec.k(j, n)) for j in (1, 2, 3, 4)], dtype=float)


def transfer_matrix(spec: EllipseSpectrum, pair: int, n: int) -> np.ndarray:
    """Matrix of ``K*`` on coefficient vectors in span{psi_1, psi_3} (pair 13) or span{psi_2, psi_4} (pair 24)."""
    p = spec.params
    e = float(spec.eps(n))
    s = np.sinh(2.0 * spec.geom.rho0)
    sign = -1.0 if pair == 13 else 1.0
    A = p.k0 + sign * 2.0 * n * p.mu * p.alpha2 * s * e  # psi_a -> psi_a
    B = p.mu * p.alpha2 * e  # psi_a -> psi_b
    C = p.mu * p.alpha1 * e  # psi_b -> psi_a
    return np.array([[A, C], [B, -p.k0]])


# --- densities ----------------------------------------------------------------


def psi_density(geom: EllipseGeometry, j: int, n: int, omega) -> np.ndarray:
    w = np.asarray(omega, dtype=float)
    c, s = np.cos(n * w), np.sin(n * w)
    comps = {1: (c, s), 2: (-s, c), 3: (c, -s), 4: (s, c)}[j]
    return np.stack(comps, -1) / geom.h0(w)[..., None]


def ellipse_eigenfunction(spec: EllipseSpectrum, j: int, n: int):
    """Evaluator ``omega -> phi_{j,n}(omega)`` (unnormalized)."""
    ca, cb = spec.coefficients(j, n)
    a, b = spec.pair(j)

    def phi(omega):
        return ca * psi_density(spec.geom, a, n, omega) + cb * psi_density(spec.geom, b, n, omega)

    return phi


def half_eigenfunctions(spec: EllipseSpectrum):
    """Three evaluators spanning the ``1/2`` eigenspace."""
    lam, mu, r0 = spec.params.lam, spec.params.mu, spec.geom.rho0
    A = (lam + mu) * np.exp(-2.0 * r0) - (lam + 3.0 * mu)
    B = (lam + mu) * np.exp(-2.0 * r0) + (lam + 3.0 * mu)
    h0 = spec.geom.h0

    def e1(w):
        w = np.asarray(w, float)
        return np.stack([1.0 / h0(w), 0.0 * w], -1)

    def e2(w):
        w = np.asarray(w, float)
        return np.stack([0.0 * w, 1.0 / h0(w)], -1)

    def rot(w):
        w = np.asarray(w, float)
        return np.stack([A * np.sin(w), B * np.cos(w)], -1) / h0(w)[..., None]

    return [e1, e2, rot]


def ellipse_star_norms(spec: EllipseSpectrum, j: int, n: int) -> float:
    """Exact ``||phi_{j,n}||_*``."""
    _check_index(j, n)
    return spec.star_norm(j, n)


# --- exterior single layers ---------------------------------------------------

# psi_j <-> (beta, signed index): psi_1 = (1, +n), psi_2 = (i, +n), psi_3 = (1, -n), psi_4 = (i, -n)
_PSI_KEYS = {1: (1.0 + 0j, +1), 2: (1j, +1), 3: (1.0 + 0j, -1), 4: (1j, -1)}


def _complex_single_layer(spec: EllipseSpectrum, j: int, n: int, rho, nu, derivs: bool):
    """``S[psi_{j,n}]`` as ``u1 + i u2`` at ``(rho, nu)``, optionally with ``d/drho`` and ``d/dnu``."""
    beta, s = _PSI_KEYS[j]
    p, R, r0 = spec.params, spec.geom.R, spec.geom.rho0
    a1, a2, kap = p.alpha1, p.alpha2, p.kappa
    ein = np.exp(1j * n * nu)
    ein_m = np.exp(-1j * n * nu)
    # first bracket: amplitudes of e^{-in nu} and e^{in nu}
    amp_m = kap * a2 * np.exp(-n * (rho + s * r0))
    amp_p = a1 * np.exp(-n * (rho - s * r0))
    T1 = -beta / (2 * n) * (amp_m * ein_m + amp_p * ein)
    # second bracket
    pref = np.exp(-n * (rho + s * r0))
    sh = np.sinh(2.0 * (rho + s * r0))
    c1 = 0.5 * (np.exp(-2.0 * s * r0) - np.exp(2.0 * rho))
    c2 = 0.5 * (np.exp(-2.0 * rho) - np.exp(2.0 * s * r0))
    e_up = np.exp(1j * (n + 2) * nu)
    e_dn = np.exp(1j * (n - 2) * nu)
    g = pref * (ein * sh + c1 * e_up + c2 * e_dn)
    h2 = R**2 * (np.sinh(rho) ** 2 + np.sin(nu) ** 2)
    k2 = np.conj(beta) * a2 * R**2 / 4.0
    val = T1 + k2 * g / h2
    if not derivs:
        return val
    dT1_r = -beta / (2 * n) * (-n * amp_m * ein_m - n * amp_p * ein)
    dT1_v = -beta / (2 * n) * (-1j * n * amp_m * ein_m + 1j * n * amp_p * ein)
    g_r = -n * g + pref * (2.0 * np.cosh(2.0 * (rho + s * r0)) * ein - np.exp(2.0 * rho) * e_up - np.exp(-2.0 * rho) * e_dn)
    g_v = pref * (1j * n * sh * ein + 1j * (n + 2) * c1 * e_up + 1j * (n - 2) * c2 * e_dn)
    h2_r = R**2 * np.sinh(2.0 * rho)
    h2_v = R**2 * np.sin(2.0 * nu)
    d_r = dT1_r + k2 * (g_r / h2 - g * h2_r / h2**2)
    d_v = dT1_v + k2 * (g_v / h2 - g * h2_v / h2**2)
    return val, d_r, d_v


def _elliptic(spec, x, allow_boundary=True):
    rho, nu = cartesian_to_elliptic(spec.geom, x)
    tol = 1e-12 * max(1.0, spec.geom.rho0)
    if np.any(rho < spec.geom.rho0 - tol):
        raise ValueError("point inside the ellipse; the closed forms hold for rho >= rho0 only")
    return np.maximum(rho, spec.geom.rho0) if allow_boundary else rho, nu


def _combo(spec, j, n):
    """List of ``(psi index, coefficient)`` for ``phi_{j,n}``; ``j`` may be ``'psi1'`` etc."""
    if isinstance(j, str):
        return [(int(j[-1]), 1.0)]
    ca, cb = spec.coefficients(j, n)
    a, b = spec.pair(j)
    return [(a, ca), (b, cb)]


def ellipse_single_layer_exterior(spec: EllipseSpectrum, j, n: int, x, *, elliptic=None) -> np.ndarray:
    """``S[phi_{j,n}](x)`` for ``rho(x) >= rho0``.

    ``j`` in 1..4 selects the eigenfunction ``phi_{j,n}``; ``'psi1'`` ..
    ``'psi4'`` select the bare densities.  Pass ``elliptic=(rho, nu)`` to
    skip the coordinate inversion.
    """
    if elliptic is None:
        rho, nu = _elliptic(spec, x)
    else:
        rho, nu = (np.asarray(v, float) for v in elliptic)
        if np.any(rho < spec.geom.rho0 - 1e-12):
            raise ValueError("point inside the ellipse")
    u = 0j
    for jj, c in _combo(spec, j, n):
        u = u + c * _complex_single_layer(spec, jj, n, rho, nu, False)
    return np.stack([u.real, u.imag], -1)


def ellipse_single_layer_gradient(spec: EllipseSpectrum, j, n: int, x, *, elliptic=None) -> np.ndarray:
    """``out[..., i, k] = d S[phi_{j,n}]_i / d x_k`` outside the ellipse."""
    if elliptic is None:
        rho, nu = _elliptic(spec, x)
    else:
        rho, nu = (np.asarray(v, float) for v in elliptic)
    d_r = d_v = 0j
    for jj, c in _combo(spec, j, n):
        _, a, b = _complex_single_layer(spec, jj, n, rho, nu, True)
        d_r = d_r + c * a
        d_v = d_v + c * b
    R = spec.geom.R
    h2 = R**2 * (np.sinh(rho) ** 2 + np.sin(nu) ** 2)
    C11 = np.cos(nu) * np.sinh(rho)
    C12 = -np.sin(nu) * np.cosh(rho)
    C21 = np.sin(nu) * np.cosh(rho)
    f = R / h2
    dx1 = f * (C11 * d_r + C12 * d_v)
    dx2 = f * (C21 * d_r + C11 * d_v)
    # rows: components (real, imag); columns: x1, x2
    return np.stack([np.stack([dx1.real, dx2.real], -1), np.stack([dx1.imag, dx2.imag], -1)], -2)


def b_vector(rho, omega) -> np.ndarray:
    return np.stack([np.cos(omega) * np.sinh(rho), np.sin(omega) * np.cosh(rho)], -1)


def u_tilde_elliptic(geom: EllipseGeometry, rho, omega) -> np.ndarray:
    """``U~`` at elliptic coordinates; broadcasts to ``(..., 2, 2)``."""
    rho = np.asarray(rho, float)
    omega = np.asarray(omega, float)
    r0 = geom.rho0
    a = (np.exp(2 * (rho - r0)) - np.exp(-2 * (rho - r0)))[..., None, None]
    b = (np.exp(2 * r0) - np.exp(2 * rho))[..., None, None]
    c = (np.exp(-2 * rho) - np.exp(-2 * r0))[..., None, None]
    return a * np.eye(2) + b * rotation(-2 * omega) + c * rotation(2 * omega)


def u_tilde_matrix(geom: EllipseGeometry, z):
    """``(U~(z), det U~(z))`` for a Cartesian point ``z`` outside the ellipse."""
    rho, om = cartesian_to_elliptic(geom, z)
    if np.any(rho <= geom.rho0):
        raise ValueError("z must lie strictly outside the ellipse")
    U = u_tilde_elliptic(geom, rho, om)
    return U, np.linalg.det(U)


def orthogonal_pair_identity(a1, a2, n: int, omega: float, b):
    """Both sides of ``|<v+, U b>|^2 + |<v-, U b>|^2 = |v+|^2 |b|^2``.

    ``v+ = a1 + U(pi/2) a2``, ``v- = U(-pi/2) a1 + a2 = U(-pi/2) v+`` and
    ``U = U(n omega)``; the identity holds because ``v+`` and ``v-`` are
    orthogonal and of equal length.
    """
    a1, a2, b = (np.asarray(v, float) for v in (a1, a2, b))
    vp = a1 + rotation(np.pi / 2) @ a2
    vm = rotation(-np.pi / 2) @ a1 + a2
    Ub = rotation(n * omega) @ b
    return float((vp @ Ub) ** 2 + (vm @ Ub) ** 2), float((vp @ vp) * (b @ b))


def _leading_coupling(spec: EllipseSpectrum, j: int, n: int, rho, om, A) -> float:
    p, R, r0 = spec.params, spec.geom.R, spec.geom.rho0
    a1, a2 = A[0], A[1]
    h2 = R**2 * (np.sinh(rho) ** 2 + np.sin(om) ** 2)
    Ub = rotation(n * om) @ b_vector(rho, om)
    e = np.exp(-n * (rho - r0))
    v_plus = a1 + rotation(np.pi / 2) @ a2
    v_minus = rotation(-np.pi / 2) @ a1 + a2
    if j == 1:
        return R * p.alpha1 * e / (2 * h2) * (v_plus @ Ub)
    if j == 2:
        return R * p.alpha1 * e / (2 * h2) * (v_minus @ Ub)
    Ut = u_tilde_elliptic(spec.geom, rho, om)
    if j == 3:
        return -n * p.alpha2 * R**3 * e / (8 * h2**2) * ((Ut @ v_plus) @ Ub)
    return n * p.alpha2 * R**3 * e / (8 * h2**2) * ((Ut @ v_minus) @ Ub)


def dipole_coupling(spec: EllipseSpectrum, j, n: int, z, A, *, which: str = "psi"):
    """``(A grad)^T S[.](z)``: exact value and leading-order value.

    Parameters
    ----------
    j : int
        1..4.
    which : {"psi", "phi"}
        Couple to the bare density ``psi_{j,n}`` or to the eigenfunction
        ``phi_{j,n}``.  For ``phi`` the leading value is that of the
        dominant ``psi`` term.

    Returns
    -------
    exact, leading : float
    """
    A = np.asarray(A, dtype=float).reshape(2, 2)
    rho, om = cartesian_to_elliptic(spec.geom, z)
    if rho <= spec.geom.rho0:
        raise ValueError("z must lie strictly outside the ellipse")
    key = f"psi{j}" if which == "psi" else j
    grad = ellipse_single_layer_gradient(spec, key, n, None, elliptic=(rho, om))
    exact = float(np.einsum("ik,ik->", A, grad))
    if which == "psi":
        lead = _leading_coupling(spec, j, n, rho, om, A)
    else:
        lead = _leading_coupling(spec, j, n, rho, om, A)
        ca, cb = spec.coefficients(j, n)
        lead = lead * (ca if j in (1, 2) else cb)
    return exact, float(lead)


# --- addition formula -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ExpansionFamily:
    """Star-orthonormal eigenfunctions ``phi^_{j,n}`` and the rigid-motion W-term.

    ``coeffs[(j, n)]`` holds the coefficients of ``phi^_{j,n}`` on the pair
    ``(psi_a, psi_b)``; each pair block is orthonormalized with its exact
    2x2 Gram.
    """

    spec: EllipseSpectrum
    n_trunc: int
    n_nodes: int

    @cached_property
    def coeffs(self):
        out = {}
        for n in range(1, self.n_trunc + 1):
            for lo, hi in ((1, 3), (2, 4)):
                js = [j for j in (lo, hi) if not (j == 2 and n == 1)]
                G = self.spec.psi_gram(lo, n)
                V = np.array([self.spec.coefficients(j, n) for j in js], dtype=float)  # rows
                M = V @ G @ V.T
                L = np.linalg.cholesky(M)
                Vo = np.linalg.solve(L, V)
                for j, row in zip(js, Vo):
                    out[(j, n)] = row
        return out

    @cached_property
    def cross_terms(self):
        """Relative ``(phi_1, phi_3)_*`` and ``(phi_2, phi_4)_*`` before orthonormalization."""
        s = self.spec
        out = {}
        for n in range(1, self.n_trunc + 1):
            out[(1, 3, n)] = s.star_inner(1, 3, n) / (s.star_norm(1, n) * s.star_norm(3, n))
            if n >= 2:
                out[(2, 4, n)] = s.star_inner(2, 4, n) / (s.star_norm(2, n) * s.star_norm(4, n))
        return out

    @cached_property
    def _w_data(self):
        from .discrete_np import assemble

        curve = make_ellipse_curve(self.spec.geom, self.n_nodes)
        np_ = assemble(self.spec.params, curve)
        F = np_.psi_basis
        raw = np.zeros_like(F)
        raw[0::2, 0] = 1.0
        raw[1::2, 1] = 1.0
        raw[0::2, 2] = curve.nodes[:, 1]
        raw[1::2, 2] = -curve.nodes[:, 0]
        T = np.linalg.lstsq(raw, F, rcond=None)[0]  # F = raw @ T
        return curve, np_.w_basis, T

    def _density(self, j, n, omega):
        a, b = self.spec.pair(j)
        ca, cb = self.coeffs[(j, n)]
        g = self.spec.geom
        return ca * psi_density(g, a, n, omega) + cb * psi_density(g, b, n, omega)

    def single_layer(self, j, n, x, *, elliptic=None):
        """``S[phi^_{j,n}](x)`` outside (closed form)."""
        a, b = self.spec.pair(j)
        ca, cb = self.coeffs[(j, n)]
        S = ellipse_single_layer_exterior
        return ca * S(self.spec, f"psi{a}", n, x, elliptic=elliptic) + cb * S(self.spec, f"psi{b}", n, x, elliptic=elliptic)

    def single_layer_inside(self, j, n, y, n_quad: int = 1024):
        """``S[phi^_{j,n}](y)`` at interior points by the trapezoid rule."""
        from .discrete_np import single_layer_at

        curve = make_ellipse_curve(self.spec.geom, n_quad)
        dens = self._density(j, n, curve.t).reshape(-1)
        return single_layer_at(self.spec.params, curve, dens, y)

    def indices(self, n_max=None):
        n_max = self.n_trunc if n_max is None else n_max
        for n in range(1, n_max + 1):
            for j in (1, 2, 3, 4):
                if not (j == 2 and n == 1):
                    yield j, n

    def w_term(self, x, y):
        """``sum_i S[phi^(i)](x) f^(i)(y)^T`` with ``f`` orthonormal rigid motions."""
        from .discrete_np import single_layer_at

        curve, Phi, T = self._w_data
        x = np.atleast_2d(x)
        y = np.atleast_2d(y)
        Sx = np.stack([single_layer_at(self.spec.params, curve, Phi[:, i], x)[0] for i in range(3)], 1)  # (2, 3)
        raw_y = np.array([[1.0, 0.0, y[0, 1]], [0.0, 1.0, -y[0, 0]]])
        fy = raw_y @ T  # (2, 3)
        return Sx @ fy.T


def kelvin_expansion(spec: EllipseSpectrum, x, y, N_trunc: int, *, n_nodes: int = 256, n_quad: int = 1024,
                     y_on_boundary: bool = False, return_partials: bool = False, divergence_tol: float = 1e-3):
    """Truncated spectral expansion of ``Gamma(x - y)``.

    ``x`` must lie outside the ellipse and ``y`` inside (or on the boundary
    with ``y_on_boundary=True``, where the closed forms are used for
    ``S[phi^](y)``).  With ``return_partials`` the partial sums after each
    ``n`` are returned as an array ``(N_trunc, 2, 2)``.
    """
    fam = ExpansionFamily(spec, int(N_trunc), int(n_nodes))
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    rx, _ = cartesian_to_elliptic(spec.geom, x)
    if rx <= spec.geom.rho0:
        raise ValueError("x must lie outside the ellipse")
    tail = np.exp(-N_trunc * (rx - spec.geom.rho0))
    if tail > divergence_tol:
        warnings.warn(
            f"x is close to the boundary for N_trunc={N_trunc}: expected tail ~{tail:.1e}",
            RuntimeWarning,
            stacklevel=2,
        )
    if not y_on_boundary:
        try:
            ry, _ = cartesian_to_elliptic(spec.geom, y)
        except ValueError:
            ry = 0.0
        if ry >= spec.geom.rho0:
            raise ValueError("y must lie inside the ellipse (or pass y_on_boundary=True)")
    total = fam.w_term(x, y)
    partials = []
    for n in range(1, fam.n_trunc + 1):
        for j in (1, 2, 3, 4):
            if j == 2 and n == 1:
                continue
            sx = fam.single_layer(j, n, x)
            sy = fam.single_layer(j, n, y) if y_on_boundary else fam.single_layer_inside(j, n, y[None, :], n_quad)[0]
            total = total - np.outer(sx, sy)
        partials.append(total.copy())
    return np.array(partials) if return_partials else total
